/** DOM-free helpers for turning API payloads into displayable values. */

import type { ImagePayload } from './api.js';

export function pngDataUrl(payload: ImagePayload): string {
  if (!payload.image) {
    throw new Error('payload carries no PNG (multi-channel model?)');
  }
  return `data:image/png;base64,${payload.image}`;
}

/** Clamp a probability for display; the API guarantees [0, 1] but the
 * panel must never render outside it. */
export function displayProbability(p: number): number {
  return Math.min(1, Math.max(0, p));
}

export function formatProbability(p: number): string {
  return displayProbability(p).toFixed(3);
}

/** Oracle-style quick readout of a raw image: mean intensity in [0, 1]. */
export function meanIntensity(payload: ImagePayload): number {
  if (payload.raw.length === 0) return 0;
  const sum = payload.raw.reduce((acc, v) => acc + (v + 1) / 2, 0);
  return sum / payload.raw.length;
}

export function parseApiBase(query: string, fallback = 'http://127.0.0.1:8765'): string {
  const params = new URLSearchParams(query);
  const api = params.get('api');
  return api ? api.replace(/\/$/, '') : fallback;
}
