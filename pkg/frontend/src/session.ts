/** Explorer session state: latent composition, edit history, replay.
 *
 * All state transitions are pure so a recorded history can be replayed
 * against a fixed checkpoint and must reproduce every frame byte for
 * byte (the server is deterministic).
 */

import type { DirectionInfo } from './api.js';

export type Edit =
  | { kind: 'set-base'; latent: number[] }
  | { kind: 'slider'; directionId: string; alpha: number }
  | { kind: 'reset-sliders' };

export interface SessionState {
  base: number[];
  sliders: Record<string, number>;
  history: Edit[];
}

export function initialState(base: number[]): SessionState {
  return { base: [...base], sliders: {}, history: [] };
}

export function applyEdit(state: SessionState, edit: Edit): SessionState {
  const next: SessionState = {
    base: [...state.base],
    sliders: { ...state.sliders },
    history: [...state.history, edit],
  };
  switch (edit.kind) {
    case 'set-base':
      next.base = [...edit.latent];
      next.sliders = {};
      break;
    case 'slider':
      next.sliders[edit.directionId] = edit.alpha;
      break;
    case 'reset-sliders':
      next.sliders = {};
      break;
  }
  return next;
}

/** The latent the displayed image must correspond to: base + sum(alpha_i v_i). */
export function composeLatent(
  state: SessionState,
  directions: Map<string, DirectionInfo>,
): number[] {
  const out = [...state.base];
  for (const [id, alpha] of Object.entries(state.sliders)) {
    if (alpha === 0) continue;
    const dir = directions.get(id);
    if (!dir || !dir.vector) {
      throw new Error(`direction ${id} has no vector; cannot compose latent`);
    }
    for (let i = 0; i < out.length; i++) {
      out[i] += alpha * dir.vector[i];
    }
  }
  return out;
}

/** Replay a recorded history from a base latent; returns the state after
 * every step (frame i corresponds to the latent of states[i]). */
export function replayHistory(base: number[], history: Edit[]): SessionState[] {
  let state = initialState(base);
  const states: SessionState[] = [];
  for (const edit of history) {
    state = applyEdit(state, edit);
    states.push(state);
  }
  return states;
}

export function serializeHistory(base: number[], history: Edit[]): string {
  return JSON.stringify({ base, history });
}

export function deserializeHistory(text: string): { base: number[]; history: Edit[] } {
  const parsed = JSON.parse(text) as { base: number[]; history: Edit[] };
  if (!Array.isArray(parsed.base) || !Array.isArray(parsed.history)) {
    throw new Error('not a recorded session');
  }
  return parsed;
}

/** Alphas for a filmstrip: symmetric around zero, center tile is alpha 0. */
export function filmstripAlphas(range: number, steps: number): number[] {
  if (steps < 3 || steps % 2 === 0) {
    throw new Error('filmstrip needs an odd step count >= 3');
  }
  const half = (steps - 1) / 2;
  const out: number[] = [];
  for (let i = -half; i <= half; i++) {
    out.push((i / half) * range);
  }
  return out;
}
