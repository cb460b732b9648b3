import { RleMask, decodeRle } from "./rle.js";

/** Foreground tint, RGB. */
export const TINT: [number, number, number] = [46, 204, 64];

/**
 * Composite a foreground tint over an RGBA image buffer.
 *
 * Returns a new buffer; the input is never mutated. Background pixels are
 * copied through unchanged, foreground pixels are alpha-blended with the
 * tint color. Alpha must lie in [0, 1].
 */
export function renderOverlay(
  image: Uint8ClampedArray,
  h: number,
  w: number,
  mask: RleMask,
  alpha: number,
): Uint8ClampedArray {
  if (alpha < 0 || alpha > 1 || !Number.isFinite(alpha)) {
    throw new Error(`alpha must be in [0, 1], got ${alpha}`);
  }
  if (image.length !== h * w * 4) {
    throw new Error(`image buffer length ${image.length} != ${h}x${w}x4`);
  }
  if (mask.h !== h || mask.w !== w) {
    throw new Error(`mask is ${mask.h}x${mask.w}, image is ${h}x${w}`);
  }
  const bits = decodeRle(mask);
  const out = new Uint8ClampedArray(image);
  for (let i = 0; i < bits.length; i++) {
    if (bits[i] === 0) continue;
    const o = i * 4;
    out[o] = (1 - alpha) * image[o] + alpha * TINT[0];
    out[o + 1] = (1 - alpha) * image[o + 1] + alpha * TINT[1];
    out[o + 2] = (1 - alpha) * image[o + 2] + alpha * TINT[2];
  }
  return out;
}
