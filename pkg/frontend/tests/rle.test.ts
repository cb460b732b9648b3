import { describe, expect, it } from "vitest";
import { decodeRle, encodeRle, masksEqual } from "../src/rle.js";

describe("decodeRle", () => {
  it("decodes an all-background mask", () => {
    const m = decodeRle({ h: 2, w: 3, runs: [6] });
    expect(Array.from(m)).toEqual([0, 0, 0, 0, 0, 0]);
  });

  it("decodes an all-foreground mask with a zero leading run", () => {
    const m = decodeRle({ h: 2, w: 2, runs: [0, 4] });
    expect(Array.from(m)).toEqual([1, 1, 1, 1]);
  });

  it("decodes alternating runs row-major", () => {
    const m = decodeRle({ h: 2, w: 3, runs: [1, 2, 2, 1] });
    expect(Array.from(m)).toEqual([0, 1, 1, 0, 0, 1]);
  });

  it("rejects run sums that do not cover the image", () => {
    expect(() => decodeRle({ h: 2, w: 2, runs: [3] })).toThrow(/sum/);
    expect(() => decodeRle({ h: 2, w: 2, runs: [5] })).toThrow(/sum/);
  });

  it("rejects negative runs", () => {
    expect(() => decodeRle({ h: 1, w: 2, runs: [3, -1] })).toThrow(/invalid/);
  });
});

describe("encodeRle round trip", () => {
  it("survives random masks", () => {
    let state = 12345;
    const rand = () => (state = (state * 1103515245 + 12345) & 0x7fffffff) / 0x7fffffff;
    for (let trial = 0; trial < 200; trial++) {
      const h = 1 + Math.floor(rand() * 8);
      const w = 1 + Math.floor(rand() * 8);
      const mask = new Uint8Array(h * w).map(() => (rand() < 0.5 ? 0 : 1));
      const decoded = decodeRle(encodeRle(mask, h, w));
      expect(masksEqual(decoded, mask)).toBe(true);
    }
  });
});
