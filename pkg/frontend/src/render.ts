/** Canvas drawing helpers behind a structural 2d-context interface, so
 * tests can substitute a recording context where no real one exists. */

import type { RgbaImage } from "./ppm.js";
import type { Box, CompletedKeypoint, Keypoint } from "./types.js";

export interface Context2dLike {
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  globalAlpha: number;
  clearRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  stroke(): void;
  putImageData(data: unknown, dx: number, dy: number): void;
}

export type ContextFactory = (canvas: HTMLCanvasElement) => Context2dLike | null;

export const defaultContextFactory: ContextFactory = (canvas) =>
  canvas.getContext("2d") as Context2dLike | null;

/** ImageData when the runtime provides it, a plain carrier otherwise. */
export function newImageData(img: RgbaImage): unknown {
  const ctor = (globalThis as { ImageData?: new (
    data: Uint8ClampedArray,
    w: number,
    h: number,
  ) => unknown }).ImageData;
  if (ctor) return new ctor(img.rgba, img.width, img.height);
  return { width: img.width, height: img.height, data: img.rgba };
}

export function drawImage(ctx: Context2dLike, img: RgbaImage): void {
  ctx.putImageData(newImageData(img), 0, 0);
}

export interface SceneMarkers {
  keypoints: Keypoint[];
  ghosts: CompletedKeypoint[];
  box: Box | null;
  selectedPart: string | null;
}

/** Redraw the interaction layer: box outline, part markers, ghost markers. */
export function drawScene(
  ctx: Context2dLike,
  deviceWidth: number,
  deviceHeight: number,
  scene: SceneMarkers,
): void {
  ctx.globalAlpha = 1;
  ctx.clearRect(0, 0, deviceWidth, deviceHeight);
  if (scene.box) {
    ctx.strokeStyle = "#2a6";
    ctx.lineWidth = 2;
    ctx.strokeRect(
      scene.box.x0 * deviceWidth,
      scene.box.y0 * deviceHeight,
      scene.box.w * deviceWidth,
      scene.box.h * deviceHeight,
    );
  }
  ctx.globalAlpha = 0.45;
  ctx.fillStyle = "#888";
  for (const g of scene.ghosts) {
    ctx.beginPath();
    ctx.arc(g.x * deviceWidth, g.y * deviceHeight, 5, 0, Math.PI * 2);
    ctx.fill();
  }
  ctx.globalAlpha = 1;
  for (const kp of scene.keypoints) {
    ctx.fillStyle = kp.part === scene.selectedPart ? "#d33" : "#36c";
    ctx.beginPath();
    ctx.arc(kp.x * deviceWidth, kp.y * deviceHeight, 6, 0, Math.PI * 2);
    ctx.fill();
  }
}
