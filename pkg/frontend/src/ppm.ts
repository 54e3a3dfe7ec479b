/** Decoder for the binary PPM (P6) images the service returns as base64. */

export interface RgbaImage {
  width: number;
  height: number;
  /** RGBA, row-major, 4 bytes per pixel, alpha always 255. */
  rgba: Uint8ClampedArray;
}

function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  // node fallback (tests)
  return new Uint8Array(Buffer.from(b64, "base64"));
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

/**
 * Parse a binary P6 stream: "P6", whitespace-separated width, height, and
 * max value (with # comments allowed), one whitespace byte, then raw RGB.
 */
export function decodePpm(bytes: Uint8Array): RgbaImage {
  const fields: string[] = [];
  let pos = 0;
  while (fields.length < 4) {
    while (pos < bytes.length && isSpace(bytes[pos]!)) pos++;
    if (pos < bytes.length && bytes[pos] === 0x23 /* # */) {
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos++;
      continue;
    }
    const start = pos;
    while (pos < bytes.length && !isSpace(bytes[pos]!)) pos++;
    if (pos === start) throw new Error("truncated PPM header");
    fields.push(String.fromCharCode(...bytes.subarray(start, pos)));
  }
  pos++; // single whitespace byte after the max value
  const [magic, w, h, maxVal] = fields as [string, string, string, string];
  if (magic !== "P6") throw new Error(`not a binary PPM: magic ${magic}`);
  const width = Number(w);
  const height = Number(h);
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new Error(`bad PPM dimensions ${w} x ${h}`);
  }
  if (Number(maxVal) !== 255) throw new Error(`unsupported max value ${maxVal}`);
  const need = width * height * 3;
  if (bytes.length - pos < need) {
    throw new Error(`PPM payload short: ${bytes.length - pos} of ${need} bytes`);
  }
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    rgba[i * 4] = bytes[pos + i * 3]!;
    rgba[i * 4 + 1] = bytes[pos + i * 3 + 1]!;
    rgba[i * 4 + 2] = bytes[pos + i * 3 + 2]!;
    rgba[i * 4 + 3] = 255;
  }
  return { width, height, rgba };
}

export function decodePpmBase64(b64: string): RgbaImage {
  return decodePpm(base64ToBytes(b64));
}
