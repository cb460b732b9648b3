/** Run-length mask codec matching the service wire format. */

export interface RleMask {
  h: number;
  w: number;
  /** Alternating run lengths, starting with background (possibly 0). */
  runs: number[];
}

/** Decode into a flat row-major Uint8Array of 0/1, length h*w. */
export function decodeRle(rle: RleMask): Uint8Array {
  const total = rle.h * rle.w;
  const out = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const run of rle.runs) {
    if (run < 0 || !Number.isInteger(run)) {
      throw new Error(`invalid run length ${run}`);
    }
    if (value === 1) {
      out.fill(1, pos, pos + run);
    }
    pos += run;
    value = 1 - value;
  }
  if (pos !== total) {
    throw new Error(`run lengths sum to ${pos}, expected ${total} (${rle.h}x${rle.w})`);
  }
  return out;
}

export function encodeRle(mask: Uint8Array, h: number, w: number): RleMask {
  if (mask.length !== h * w) {
    throw new Error(`mask length ${mask.length} != ${h}x${w}`);
  }
  const runs: number[] = [];
  let value = 0;
  let run = 0;
  for (const px of mask) {
    const bit = px === 0 ? 0 : 1;
    if (bit === value) {
      run += 1;
    } else {
      runs.push(run);
      value = bit;
      run = 1;
    }
  }
  runs.push(run);
  return { h, w, runs };
}

export function masksEqual(a: Uint8Array, b: Uint8Array): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    if ((a[i] === 0) !== (b[i] === 0)) return false;
  }
  return true;
}
