/** Canvas <-> normalized coordinate transforms.
 *
 * Normalized coordinates are in [0,1] with the origin at the top-left of the
 * drawing surface, matching the service's keypoint and box convention. The
 * round trip canvas -> normalized -> canvas is exact in floating point and
 * stays within one device pixel even after snapping to the integer device
 * grid, which the tests assert as a property.
 */

export interface SurfaceRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

export function clamp01(v: number): number {
  return v < 0 ? 0 : v > 1 ? 1 : v;
}

/** Client (CSS pixel) position -> normalized [0,1]^2, clamped to bounds. */
export function toNormalized(
  clientX: number,
  clientY: number,
  rect: SurfaceRect,
): { x: number; y: number } {
  return {
    x: clamp01((clientX - rect.left) / rect.width),
    y: clamp01((clientY - rect.top) / rect.height),
  };
}

/** Normalized -> client (CSS pixel) position. */
export function toClient(
  x: number,
  y: number,
  rect: SurfaceRect,
): { clientX: number; clientY: number } {
  return { clientX: rect.left + x * rect.width, clientY: rect.top + y * rect.height };
}

/** Normalized -> integer device pixel on a surface of CSS size times dpr. */
export function toDevicePixel(
  v: number,
  cssSize: number,
  dpr: number,
): number {
  return Math.round(v * cssSize * dpr);
}

/** Integer device pixel -> normalized. */
export function fromDevicePixel(
  px: number,
  cssSize: number,
  dpr: number,
): number {
  return clamp01(px / (cssSize * dpr));
}

/** Normalize a drag from anchor to cursor into a service Box, clamped. */
export function dragToBox(
  anchor: { x: number; y: number },
  cursor: { x: number; y: number },
): { x0: number; y0: number; w: number; h: number } {
  const x0 = Math.min(anchor.x, cursor.x);
  const y0 = Math.min(anchor.y, cursor.y);
  return {
    x0,
    y0,
    w: Math.max(Math.abs(cursor.x - anchor.x), 1e-3),
    h: Math.max(Math.abs(cursor.y - anchor.y), 1e-3),
  };
}
