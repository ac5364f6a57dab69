/** Explorer wiring: seed picking, direction sliders, epsilon comparison,
 * traversal filmstrips and history replay over the serve API. */

import { ApiClient, DirectionInfo, ModelInfo } from './api.js';
import { latestWins, Scheduler } from './debounce.js';
import { formatProbability, pngDataUrl } from './render.js';
import {
  applyEdit,
  composeLatent,
  deserializeHistory,
  Edit,
  filmstripAlphas,
  initialState,
  replayHistory,
  serializeHistory,
  SessionState,
} from './session.js';

const DEBOUNCE_MS = 150;

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Deterministic standard-normal latent from an integer seed (Box-Muller). */
export function latentFromSeed(seed: number, dim: number): number[] {
  const rand = mulberry32(seed);
  const out: number[] = [];
  while (out.length < dim) {
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    const r = Math.sqrt(-2 * Math.log(u));
    out.push(r * Math.cos(2 * Math.PI * v));
    if (out.length < dim) out.push(r * Math.sin(2 * Math.PI * v));
  }
  return out.slice(0, dim);
}

export class ExplorerApp {
  state: SessionState = initialState([]);
  info!: ModelInfo;
  directions = new Map<string, DirectionInfo>();
  private readonly imagePanel: Scheduler;
  private readonly epsilonPanel: Scheduler;
  private readonly stripPanel: Scheduler;

  constructor(
    readonly api: ApiClient,
    readonly dom: Document,
    debounceMs = DEBOUNCE_MS,
  ) {
    this.imagePanel = latestWins(debounceMs);
    this.epsilonPanel = latestWins(debounceMs);
    this.stripPanel = latestWins(debounceMs);
  }

  private el<T extends HTMLElement>(id: string): T {
    const node = this.dom.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
  }

  async start(): Promise<void> {
    this.info = await this.api.modelInfo();
    for (const dir of await this.api.directions()) {
      this.directions.set(dir.id, dir);
    }
    this.el('model-meta').textContent =
      `latent ${this.info.latent_dim}, image ${this.info.image_shape.join('x')}, ` +
      `step ${this.info.step}, digest ${this.info.config_digest.slice(0, 10)}`;
    this.buildSliders();
    const select = this.el<HTMLSelectElement>('strip-direction');
    select.textContent = '';
    for (const dir of this.directions.values()) {
      const option = this.dom.createElement('option');
      option.value = dir.id;
      option.textContent = dir.name;
      select.append(option);
    }
    this.bindControls();
    this.record({ kind: 'set-base', latent: latentFromSeed(this.currentSeed(), this.info.latent_dim) });
  }

  currentSeed(): number {
    return Number((this.el<HTMLInputElement>('seed')).value || '0');
  }

  private buildSliders(): void {
    const holder = this.el('sliders');
    holder.textContent = '';
    for (const dir of this.directions.values()) {
      const row = this.dom.createElement('div');
      row.className = 'slider-row';
      const label = this.dom.createElement('label');
      label.textContent = `${dir.name} (${dir.source})`;
      const input = this.dom.createElement('input');
      input.type = 'range';
      input.min = '-3';
      input.max = '3';
      input.step = '0.1';
      input.value = '0';
      input.id = `slider-${dir.id}`;
      const value = this.dom.createElement('span');
      value.textContent = '0.0';
      input.addEventListener('input', () => {
        value.textContent = Number(input.value).toFixed(1);
        this.record({ kind: 'slider', directionId: dir.id, alpha: Number(input.value) });
      });
      row.append(label, input, value);
      holder.append(row);
    }
  }

  private bindControls(): void {
    this.el('randomize').addEventListener('click', () => {
      const seedBox = this.el<HTMLInputElement>('seed');
      seedBox.value = String(Math.floor(Math.random() * 1_000_000));
      this.resetBase();
    });
    this.el<HTMLInputElement>('seed').addEventListener('change', () => this.resetBase());
    this.el('reset-sliders').addEventListener('click', () => {
      this.record({ kind: 'reset-sliders' });
      this.syncSliderInputs();
    });
    this.el('epsilon-run').addEventListener('click', () => this.refreshEpsilon());
    this.el('strip-run').addEventListener('click', () => this.refreshStrip());
    this.el('replay').addEventListener('click', () => void this.replay());
    this.el('export-history').addEventListener('click', () => this.exportHistory());
  }

  private resetBase(): void {
    for (const id of Object.keys(this.state.sliders)) {
      const input = this.dom.getElementById(`slider-${id}`) as HTMLInputElement | null;
      if (input) input.value = '0';
    }
    this.record({ kind: 'set-base', latent: latentFromSeed(this.currentSeed(), this.info.latent_dim) });
  }

  private syncSliderInputs(): void {
    for (const dir of this.directions.keys()) {
      const input = this.dom.getElementById(`slider-${dir}`) as HTMLInputElement | null;
      if (input) input.value = String(this.state.sliders[dir] ?? 0);
    }
  }

  /** Append an edit and schedule exactly one debounced re-render. */
  record(edit: Edit): void {
    this.state = applyEdit(this.state, edit);
    this.el('history-count').textContent = String(this.state.history.length);
    this.scheduleImage();
  }

  private scheduleImage(): void {
    this.imagePanel.schedule(async (signal) => {
      try {
        const latent = composeLatent(this.state, this.directions);
        const payload = await this.api.generate(latent, undefined, signal);
        this.el<HTMLImageElement>('current-image').src = pngDataUrl(payload);
      } catch (err) {
        this.banner(err);
      }
    });
  }

  private refreshEpsilon(): void {
    const sigma = Number(this.el<HTMLInputElement>('epsilon-sigma').value);
    const seed = Number(this.el<HTMLInputElement>('epsilon-seed').value || '0');
    this.epsilonPanel.schedule(async (signal) => {
      try {
        const pair = await this.api.epsilonPair(sigma, seed, undefined, signal);
        this.el<HTMLImageElement>('epsilon-a').src = pngDataUrl(pair.image_a);
        this.el<HTMLImageElement>('epsilon-b').src = pngDataUrl(pair.image_b);
        this.el('epsilon-prob').textContent = formatProbability(pair.aux_same_prob);
      } catch (err) {
        this.banner(err);
      }
    });
  }

  private refreshStrip(): void {
    const ids = [...this.directions.keys()];
    const select = this.el<HTMLSelectElement>('strip-direction');
    const directionId = select.value || ids[0];
    const range = Number(this.el<HTMLInputElement>('strip-range').value || '3');
    const steps = Number(this.el<HTMLInputElement>('strip-steps').value || '7');
    this.stripPanel.schedule(async (signal) => {
      try {
        const latent = composeLatent(this.state, this.directions);
        const alphas = filmstripAlphas(range, steps);
        const resp = await this.api.traverse(latent, directionId, alphas, signal);
        const holder = this.el('strip');
        holder.textContent = '';
        resp.images.forEach((img, i) => {
          const tile = this.dom.createElement('img');
          tile.src = pngDataUrl(img);
          tile.title = `alpha ${alphas[i].toFixed(2)}`;
          if (alphas[i] === 0) tile.className = 'center-tile';
          holder.append(tile);
        });
      } catch (err) {
        this.banner(err);
      }
    });
  }

  /** Re-issue every frame of the recorded history in order; the server's
   * determinism makes the replayed images byte-identical. */
  async replay(): Promise<number> {
    const recorded = this.state.history;
    if (recorded.length === 0) return 0;
    const base = recorded[0].kind === 'set-base' ? recorded[0].latent : this.state.base;
    const states = replayHistory(base, recorded);
    let frames = 0;
    for (const state of states) {
      const latent = composeLatent(state, this.directions);
      const payload = await this.api.generate(latent);
      this.el<HTMLImageElement>('current-image').src = pngDataUrl(payload);
      frames += 1;
    }
    return frames;
  }

  private exportHistory(): void {
    const blob = new Blob([serializeHistory(this.state.base, this.state.history)],
                          { type: 'application/json' });
    const anchor = this.dom.createElement('a');
    anchor.href = URL.createObjectURL(blob);
    anchor.download = 'session-history.json';
    anchor.click();
  }

  importHistory(text: string): void {
    const { base, history } = deserializeHistory(text);
    this.state = initialState(base);
    for (const edit of history) this.state = applyEdit(this.state, edit);
    this.syncSliderInputs();
    this.scheduleImage();
  }

  private banner(err: unknown): void {
    if (err instanceof DOMException && err.name === 'AbortError') return;
    const box = this.el('banner');
    box.textContent = String(err);
    box.classList.add('visible');
    setTimeout(() => box.classList.remove('visible'), 4000);
  }
}
