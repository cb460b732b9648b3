/** Canvas-to-image coordinate mapping under integer-free zoom factors. */

export interface PixelCoord {
  row: number;
  col: number;
}

/**
 * Map canvas-local (x, y) to the image pixel under the cursor.
 *
 * The canvas renders the image scaled by `zoom` with no offset, so the
 * pixel is floor(y / zoom), floor(x / zoom). Returns null when the cursor
 * lies outside the image (possible when the canvas is larger than the
 * scaled image).
 */
export function canvasToImage(
  x: number,
  y: number,
  zoom: number,
  h: number,
  w: number,
): PixelCoord | null {
  if (zoom <= 0 || !Number.isFinite(zoom)) {
    throw new Error(`zoom must be positive, got ${zoom}`);
  }
  const row = Math.floor(y / zoom);
  const col = Math.floor(x / zoom);
  if (row < 0 || row >= h || col < 0 || col >= w) return null;
  return { row, col };
}
