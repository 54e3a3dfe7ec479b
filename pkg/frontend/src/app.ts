/** Pose canvas application: DOM wiring around the pure state module.
 *
 * The UI only collects captions, boxes, and part positions and displays
 * what the service returns; every model computation happens server-side.
 * A context factory can be injected so tests run without a real canvas.
 */

import { ApiClient, ApiError, Superseded } from "./api.js";
import {
  dragToBox,
  toNormalized,
  type SurfaceRect,
} from "./geometry.js";
import { decodePpmBase64, type RgbaImage } from "./ppm.js";
import {
  defaultContextFactory,
  drawImage,
  drawScene,
  type ContextFactory,
} from "./render.js";
import {
  clearParts,
  currentLocation,
  initialState,
  mainAction,
  pinCurrent,
  placeOrDragPart,
  rememberSeed,
  seedForRequest,
  setBox,
  setGhosts,
  setMode,
  type CanvasState,
} from "./state.js";
import type {
  CompletedKeypoint,
  CompleteKeypointsRequest,
  GenerateRequest,
  Keypoint,
  Manifest,
} from "./types.js";

const CSS_SIZE = 320;

export interface AppOptions {
  api: ApiClient;
  dpr?: number;
  getContext?: ContextFactory;
}

export interface App {
  readonly root: HTMLElement;
  readonly state: CanvasState;
  readonly manifest: Manifest;
  readonly lastImages: RgbaImage[];
  readonly lastCompletions: CompletedKeypoint[][];
  refresh(): void;
  /** Resolves once no request is in flight; tests await this. */
  whenIdle(): Promise<void>;
}

const TEMPLATE = `
  <div class="controls">
    <input id="caption" type="text" placeholder="a red bird facing right">
    <label><input id="mode-keypoints" type="radio" name="mode" value="keypoints" checked> keypoints</label>
    <label><input id="mode-bbox" type="radio" name="mode" value="bbox"> box</label>
    <select id="part-select"></select>
    <button id="clear">clear</button>
    <label><input id="fixed-seed" type="checkbox"> fixed seed</label>
    <button id="generate" data-action="generate">generate</button>
    <button id="complete">complete pose</button>
    <button id="pin">pin</button>
    <input id="steps" type="number" value="3" min="2">
    <button id="interpolate">interpolate</button>
  </div>
  <canvas id="canvas"></canvas>
  <div id="error" role="alert"></div>
  <div id="samples"></div>
`;

type Drag =
  | { kind: "kp"; part: string; wasExisting: boolean }
  | { kind: "box"; anchor: { x: number; y: number } }
  | null;

export async function createApp(
  root: HTMLElement,
  opts: AppOptions,
): Promise<App> {
  const api = opts.api;
  const dpr = opts.dpr ?? (globalThis.devicePixelRatio || 1);
  const ctxFactory = opts.getContext ?? defaultContextFactory;

  root.innerHTML = TEMPLATE;
  const byId = <T extends HTMLElement>(id: string): T => {
    const el = root.querySelector(`#${id}`);
    if (!el) throw new Error(`missing element #${id}`);
    return el as T;
  };
  const captionEl = byId<HTMLInputElement>("caption");
  const modeKpEl = byId<HTMLInputElement>("mode-keypoints");
  const modeBoxEl = byId<HTMLInputElement>("mode-bbox");
  const partSel = byId<HTMLSelectElement>("part-select");
  const clearBtn = byId<HTMLButtonElement>("clear");
  const seedEl = byId<HTMLInputElement>("fixed-seed");
  const genBtn = byId<HTMLButtonElement>("generate");
  const completeBtn = byId<HTMLButtonElement>("complete");
  const pinBtn = byId<HTMLButtonElement>("pin");
  const stepsEl = byId<HTMLInputElement>("steps");
  const interpBtn = byId<HTMLButtonElement>("interpolate");
  const canvas = byId<HTMLCanvasElement>("canvas");
  const errorEl = byId<HTMLElement>("error");
  const samplesEl = byId<HTMLElement>("samples");

  const deviceSize = Math.round(CSS_SIZE * dpr);
  canvas.width = deviceSize;
  canvas.height = deviceSize;
  canvas.style.width = `${CSS_SIZE}px`;
  canvas.style.height = `${CSS_SIZE}px`;
  const ctx = ctxFactory(canvas);

  const manifest = await api.manifest();
  for (const part of manifest.parts) {
    const option = document.createElement("option");
    option.value = part;
    option.textContent = part;
    partSel.appendChild(option);
  }

  let state = initialState();
  let drag: Drag = null;
  let lastImages: RgbaImage[] = [];
  let lastCompletions: CompletedKeypoint[][] = [];
  let pending = 0;
  let idleResolvers: Array<() => void> = [];

  function run(task: () => Promise<void>): void {
    pending += 1;
    task()
      .catch((err: unknown) => showError(err))
      .finally(() => {
        pending -= 1;
        if (pending === 0) idleResolvers.splice(0).forEach((r) => r());
      });
  }

  function showError(err: unknown): void {
    if (err instanceof Superseded) return;
    if (err instanceof ApiError) {
      errorEl.textContent = err.field
        ? `${err.field}: ${err.message}`
        : err.message;
      return;
    }
    errorEl.textContent = err instanceof Error ? err.message : String(err);
  }

  function clearError(): void {
    errorEl.textContent = "";
  }

  function surfaceRect(): SurfaceRect {
    const r = canvas.getBoundingClientRect();
    if (r.width > 0 && r.height > 0) {
      return { left: r.left, top: r.top, width: r.width, height: r.height };
    }
    return { left: 0, top: 0, width: CSS_SIZE, height: CSS_SIZE };
  }

  function pointerPos(ev: Event): { x: number; y: number } {
    const m = ev as MouseEvent;
    return toNormalized(m.clientX, m.clientY, surfaceRect());
  }

  function refresh(): void {
    captionEl.value = state.caption;
    modeKpEl.checked = state.mode === "keypoints";
    modeBoxEl.checked = state.mode === "bbox";
    seedEl.checked = state.fixedSeed;
    const action = mainAction(state);
    genBtn.dataset["action"] = action;
    genBtn.textContent = action === "generate" ? "generate" : "unconditional pose";
    completeBtn.disabled = state.mode !== "keypoints";
    partSel.disabled = state.mode !== "keypoints";
    interpBtn.disabled = state.pins.length !== 2;
    if (ctx) {
      drawScene(ctx, deviceSize, deviceSize, {
        keypoints: state.mode === "keypoints" ? state.keypoints : [],
        ghosts: state.mode === "keypoints" ? state.ghosts : [],
        box: state.mode === "bbox" ? state.bbox : null,
        selectedPart: partSel.value || null,
      });
    }
  }

  function renderImages(images: RgbaImage[]): void {
    samplesEl.innerHTML = "";
    for (const img of images) {
      const cell = document.createElement("canvas");
      cell.className = "sample";
      cell.width = img.width;
      cell.height = img.height;
      const cctx = ctxFactory(cell);
      if (cctx) drawImage(cctx, img);
      samplesEl.appendChild(cell);
    }
  }

  function renderPoses(sets: CompletedKeypoint[][]): void {
    samplesEl.innerHTML = "";
    for (const set of sets) {
      const cell = document.createElement("canvas");
      cell.className = "pose";
      cell.width = 96;
      cell.height = 96;
      const cctx = ctxFactory(cell);
      if (cctx) {
        drawScene(cctx, 96, 96, {
          keypoints: set.filter((k) => k.v === 1),
          ghosts: [],
          box: null,
          selectedPart: null,
        });
      }
      samplesEl.appendChild(cell);
    }
  }

  function requestCompletion(observed: Keypoint[]): void {
    run(async () => {
      const req: CompleteKeypointsRequest = {
        captions: [state.caption],
        observed,
        num_samples: 4,
      };
      const seed = seedForRequest(state);
      if (seed !== undefined) req.seed = seed;
      const resp = await api.completeKeypoints(req);
      state = rememberSeed(state, resp.seed);
      lastCompletions = resp.keypoint_sets;
      state = setGhosts(state, resp.keypoint_sets[0] ?? []);
      renderPoses(resp.keypoint_sets);
      clearError();
      refresh();
    });
  }

  function doGenerate(): void {
    if (mainAction(state) === "unconditional-pose") {
      requestCompletion([]);
      return;
    }
    run(async () => {
      const req: GenerateRequest = { captions: [state.caption], num_samples: 4 };
      const loc = currentLocation(state);
      if (loc?.bbox) req.bbox = loc.bbox;
      if (loc?.keypoints) req.keypoints = loc.keypoints;
      const seed = seedForRequest(state);
      if (seed !== undefined) req.seed = seed;
      const resp = await api.generate(req);
      state = rememberSeed(state, resp.seed);
      lastImages = resp.images.map(decodePpmBase64);
      renderImages(lastImages);
      clearError();
      refresh();
    });
  }

  function doInterpolate(): void {
    const [from, to] = state.pins;
    if (!from || !to) return;
    const steps = Math.max(2, Math.trunc(Number(stepsEl.value)) || 2);
    run(async () => {
      const req: GenerateRequest = {
        captions: [state.caption],
        num_samples: 1,
        interpolate: { steps, from_location: from, to_location: to },
      };
      const seed = seedForRequest(state);
      if (seed !== undefined) req.seed = seed;
      const resp = await api.generate(req);
      state = rememberSeed(state, resp.seed);
      lastImages = resp.images.map(decodePpmBase64);
      renderImages(lastImages);
      clearError();
      refresh();
    });
  }

  captionEl.addEventListener("input", () => {
    state = { ...state, caption: captionEl.value };
  });
  modeKpEl.addEventListener("change", () => {
    if (modeKpEl.checked) {
      state = setMode(state, "keypoints");
      refresh();
    }
  });
  modeBoxEl.addEventListener("change", () => {
    if (modeBoxEl.checked) {
      state = setMode(state, "bbox");
      refresh();
    }
  });
  seedEl.addEventListener("change", () => {
    state = { ...state, fixedSeed: seedEl.checked };
  });
  clearBtn.addEventListener("click", () => {
    state = setBox(clearParts(state), null);
    refresh();
  });
  pinBtn.addEventListener("click", () => {
    state = pinCurrent(state);
    refresh();
  });
  genBtn.addEventListener("click", doGenerate);
  completeBtn.addEventListener("click", () => {
    requestCompletion(state.keypoints);
  });
  interpBtn.addEventListener("click", doInterpolate);

  canvas.addEventListener("pointerdown", (ev) => {
    const pos = pointerPos(ev);
    if (state.mode === "bbox") {
      drag = { kind: "box", anchor: pos };
      state = setBox(state, dragToBox(pos, pos));
    } else {
      const rect = surfaceRect();
      const hitRadius = 10 / Math.min(rect.width, rect.height);
      const hit = state.keypoints.find(
        (k) => Math.hypot(k.x - pos.x, k.y - pos.y) <= hitRadius,
      );
      const part = hit ? hit.part : partSel.value;
      if (!part) return;
      drag = { kind: "kp", part, wasExisting: Boolean(hit) };
      state = placeOrDragPart(state, part, pos.x, pos.y);
    }
    refresh();
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!drag) return;
    const pos = pointerPos(ev);
    if (drag.kind === "box") {
      state = setBox(state, dragToBox(drag.anchor, pos));
    } else {
      state = placeOrDragPart(state, drag.part, pos.x, pos.y);
    }
    refresh();
  });
  canvas.addEventListener("pointerup", () => {
    if (!drag) return;
    const reissue = drag.kind === "kp" && drag.wasExisting;
    drag = null;
    if (reissue && state.keypoints.length > 0) {
      requestCompletion(state.keypoints);
    }
    refresh();
  });

  refresh();
  return {
    root,
    get state() {
      return state;
    },
    manifest,
    get lastImages() {
      return lastImages;
    },
    get lastCompletions() {
      return lastCompletions;
    },
    refresh,
    whenIdle() {
      return pending === 0
        ? Promise.resolve()
        : new Promise<void>((resolve) => idleResolvers.push(resolve));
    },
  };
}
