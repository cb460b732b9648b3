import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import { renderOverlay, TINT } from "../src/overlay.js";
import { RleMask } from "../src/rle.js";

const fixture = JSON.parse(
  readFileSync(new URL("./fixtures/service_mask.json", import.meta.url), "utf8"),
) as RleMask & { pixels: number[] };

function grayImage(h: number, w: number, value = 100): Uint8ClampedArray {
  const buf = new Uint8ClampedArray(h * w * 4);
  for (let i = 0; i < h * w; i++) {
    buf[i * 4] = value;
    buf[i * 4 + 1] = value;
    buf[i * 4 + 2] = value;
    buf[i * 4 + 3] = 255;
  }
  return buf;
}

describe("renderOverlay", () => {
  it("leaves the image untouched for an empty mask", () => {
    const img = grayImage(4, 4);
    const out = renderOverlay(img, 4, 4, { h: 4, w: 4, runs: [16] }, 0.5);
    expect(Array.from(out)).toEqual(Array.from(img));
  });

  it("tints every pixel for an all-foreground mask", () => {
    const out = renderOverlay(grayImage(2, 2), 2, 2, { h: 2, w: 2, runs: [0, 4] }, 0.5);
    const expected = [
      Math.round(0.5 * 100 + 0.5 * TINT[0]),
      Math.round(0.5 * 100 + 0.5 * TINT[1]),
      Math.round(0.5 * 100 + 0.5 * TINT[2]),
    ];
    for (let i = 0; i < 4; i++) {
      expect(out[i * 4]).toBe(expected[0]);
      expect(out[i * 4 + 1]).toBe(expected[1]);
      expect(out[i * 4 + 2]).toBe(expected[2]);
      expect(out[i * 4 + 3]).toBe(255);
    }
  });

  it("does not mutate its input", () => {
    const img = grayImage(2, 2);
    renderOverlay(img, 2, 2, { h: 2, w: 2, runs: [0, 4] }, 1.0);
    expect(img[0]).toBe(100);
  });

  it("matches a service-encoded fixture mask pixel for pixel", () => {
    const { h, w, runs, pixels } = fixture;
    const alpha = 0.45;
    const out = renderOverlay(grayImage(h, w), h, w, { h, w, runs }, alpha);
    for (let i = 0; i < h * w; i++) {
      const expected = pixels[i]
        ? [
            Math.round((1 - alpha) * 100 + alpha * TINT[0]),
            Math.round((1 - alpha) * 100 + alpha * TINT[1]),
            Math.round((1 - alpha) * 100 + alpha * TINT[2]),
          ]
        : [100, 100, 100];
      expect([out[i * 4], out[i * 4 + 1], out[i * 4 + 2]]).toEqual(expected);
    }
  });

  it("rejects dimension mismatches", () => {
    expect(() =>
      renderOverlay(grayImage(4, 4), 4, 4, { h: 2, w: 2, runs: [4] }, 0.5),
    ).toThrow(/mask is 2x2/);
  });

  it("rejects out-of-range alpha", () => {
    expect(() =>
      renderOverlay(grayImage(2, 2), 2, 2, { h: 2, w: 2, runs: [4] }, 1.5),
    ).toThrow(/alpha/);
  });
});
