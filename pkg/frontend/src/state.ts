/** Canvas session state and its pure update functions.
 *
 * Invariants: at most one keypoint per part; every stored coordinate is in
 * [0,1] (out-of-canvas interactions are clamped before they get here); the
 * caption survives mode switches; pinned locations feed interpolation.
 */

import type { Box, CompletedKeypoint, Keypoint, Location } from "./types.js";
import { clamp01 } from "./geometry.js";

export type Mode = "bbox" | "keypoints";

export interface CanvasState {
  caption: string;
  mode: Mode;
  keypoints: Keypoint[];
  bbox: Box | null;
  /** Ghost markers from the last completion response (unobserved parts). */
  ghosts: CompletedKeypoint[];
  /** Up to two pinned locations; interpolation sweeps pins[0] -> pins[1]. */
  pins: Location[];
  lastSeed: number | null;
  fixedSeed: boolean;
}

export function initialState(): CanvasState {
  return {
    caption: "",
    mode: "keypoints",
    keypoints: [],
    bbox: null,
    ghosts: [],
    pins: [],
    lastSeed: null,
    fixedSeed: false,
  };
}

/** Place the part if absent, otherwise move it; coordinates are clamped. */
export function placeOrDragPart(
  state: CanvasState,
  part: string,
  x: number,
  y: number,
): CanvasState {
  const kp = { part, x: clamp01(x), y: clamp01(y) };
  const rest = state.keypoints.filter((k) => k.part !== part);
  return { ...state, keypoints: [...rest, kp] };
}

export function clearParts(state: CanvasState): CanvasState {
  return { ...state, keypoints: [], ghosts: [] };
}

/** Mode switches preserve everything else, including the caption. */
export function setMode(state: CanvasState, mode: Mode): CanvasState {
  return { ...state, mode };
}

export function setBox(state: CanvasState, bbox: Box | null): CanvasState {
  return { ...state, bbox };
}

export function setGhosts(
  state: CanvasState,
  completed: CompletedKeypoint[],
): CanvasState {
  const observed = new Set(state.keypoints.map((k) => k.part));
  return {
    ...state,
    ghosts: completed.filter((k) => k.v === 1 && !observed.has(k.part)),
  };
}

/** Current location in request form, or null if none is set. */
export function currentLocation(state: CanvasState): Location | null {
  if (state.mode === "bbox") {
    return state.bbox ? { bbox: state.bbox } : null;
  }
  return state.keypoints.length ? { keypoints: state.keypoints } : null;
}

/** Pin the current location; the two most recent pins are kept. */
export function pinCurrent(state: CanvasState): CanvasState {
  const loc = currentLocation(state);
  if (!loc) return state;
  return { ...state, pins: [...state.pins, loc].slice(-2) };
}

/**
 * What the main action button does: image generation when a location is
 * set, unconditional pose sampling when the keypoint canvas is empty.
 */
export function mainAction(state: CanvasState): "generate" | "unconditional-pose" {
  return currentLocation(state) === null && state.mode === "keypoints"
    ? "unconditional-pose"
    : "generate";
}

/** Seed to send: the remembered one when the fixed-seed toggle is on. */
export function seedForRequest(state: CanvasState): number | undefined {
  return state.fixedSeed && state.lastSeed !== null ? state.lastSeed : undefined;
}

export function rememberSeed(state: CanvasState, seed: number): CanvasState {
  return { ...state, lastSeed: seed };
}
