"""Binary mask geometry and morphology.

Masks are plain numpy arrays:

* binary mask  -- 2D uint8 array with values in {0, 1}
* tri mask     -- 2D int8 array with values in {-1, 0, 1}; -1 marks pixels
                  that are ignored during loss computation
* prob map     -- 2D float64 array with values in [0, 1]

All functions are pure and never mutate their inputs.
"""
from __future__ import annotations

import numpy as np

IGNORE = -1


class MaskError(ValueError):
    """Raised on malformed masks or incompatible dimensions."""


def as_binary_mask(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2:
        raise MaskError(f"binary mask must be 2D, got shape {a.shape}")
    out = a.astype(np.uint8, copy=True)
    if not np.isin(out, (0, 1)).all():
        raise MaskError("binary mask values must be in {0, 1}")
    return out


def as_tri_mask(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2:
        raise MaskError(f"tri mask must be 2D, got shape {a.shape}")
    out = a.astype(np.int8, copy=True)
    if not np.isin(out, (-1, 0, 1)).all():
        raise MaskError("tri mask values must be in {-1, 0, 1}")
    return out


def as_prob_map(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise MaskError(f"prob map must be 2D, got shape {a.shape}")
    if not np.isfinite(a).all() or a.min() < 0.0 or a.max() > 1.0:
        raise MaskError("prob map values must be finite and within [0, 1]")
    return a


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise MaskError(f"dimension mismatch: {a.shape} vs {b.shape}")


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks.

    Two all-zero masks agree vacuously and score 1.0.
    """
    _check_same_shape(a, b)
    a_on = a != 0
    b_on = b != 0
    union = np.logical_or(a_on, b_on).sum()
    if union == 0:
        return 1.0
    inter = np.logical_and(a_on, b_on).sum()
    return float(inter) / float(union)


def squared_distance_transform(region: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest out-of-region pixel.

    Pixels outside the image count as out-of-region, so distances are
    bounded by the image border. Returns int64; out-of-region pixels map
    to 0. Two passes: per-row 1D scan, then a column-wise minimization
    over (row offset)^2 + (row distance)^2, which is exact.
    """
    region = np.asarray(region)
    h, w = region.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = region != 0
    ph, pw = padded.shape

    # Row pass: distance along the row to the nearest out-of-region pixel.
    # The padded border guarantees a zero at both ends of every row.
    big = ph + pw
    g = np.where(padded, big, 0).astype(np.int64)
    for j in range(1, pw):
        np.minimum(g[:, j], g[:, j - 1] + 1, out=g[:, j])
    for j in range(pw - 2, -1, -1):
        np.minimum(g[:, j], g[:, j + 1] + 1, out=g[:, j])

    # Column pass: minimize over all source rows.
    g2 = g * g
    rows = np.arange(ph, dtype=np.int64)
    d2 = np.full((ph, pw), np.iinfo(np.int64).max, dtype=np.int64)
    for i0 in range(ph):
        cand = (rows[:, None] - i0) ** 2 + g2[i0][None, :]
        np.minimum(d2, cand, out=d2)
    return d2[1:-1, 1:-1]


def distance_transform(region: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance field of a binary region (float64)."""
    return np.sqrt(squared_distance_transform(region).astype(np.float64))


def erode(mask: np.ndarray) -> np.ndarray:
    """One erosion with the 3x3 cross structuring element.

    Pixels outside the image are 0, so the set erodes at image borders.
    """
    m = np.asarray(mask).astype(bool)
    out = m.copy()
    out[1:, :] &= m[:-1, :]
    out[:-1, :] &= m[1:, :]
    out[:, 1:] &= m[:, :-1]
    out[:, :-1] &= m[:, 1:]
    # border pixels lose their outside neighbor, so they always erode
    out[0, :] = False
    out[-1, :] = False
    out[:, 0] = False
    out[:, -1] = False
    return out.astype(np.uint8)


def erode_k(mask: np.ndarray, k: int) -> np.ndarray:
    """k successive cross erosions; k = 0 returns the input unchanged."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    out = np.asarray(mask).astype(np.uint8, copy=True)
    for _ in range(k):
        out = erode(out)
    return out


def erosion_trimask(mask: np.ndarray, k: int) -> np.ndarray:
    """Prune boundary-adjacent labels by k-fold erosion of both classes.

    Pixels surviving foreground erosion keep label 1, pixels surviving
    erosion of the complement keep label 0, and the eroded fringe becomes
    the ignore label.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    m = as_binary_mask(mask)
    fg = erode_k(m, k)
    bg = erode_k(1 - m, k)
    out = np.full(m.shape, IGNORE, dtype=np.int8)
    out[fg != 0] = 1
    out[bg != 0] = 0
    return out


def confidence_trimask(p: np.ndarray, delta: float) -> np.ndarray:
    """Keep only pixels whose probability is at least delta from 0.5."""
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must be in (0, 0.5), got {delta}")
    p = as_prob_map(p)
    # tolerance keeps the boundary inclusive despite float rounding of
    # expressions like 0.5 - 0.45
    keep = np.abs(p - 0.5) >= delta - 1e-12
    out = np.full(p.shape, IGNORE, dtype=np.int8)
    out[keep & (p > 0.5)] = 1
    out[keep & (p <= 0.5)] = 0
    return out


def binarize(p: np.ndarray, thr: float = 0.5) -> np.ndarray:
    """Threshold a probability map; ties at exactly thr go to foreground."""
    if not 0.0 < thr < 1.0:
        raise ValueError(f"thr must be in (0, 1), got {thr}")
    p = np.asarray(p, dtype=np.float64)
    return (p >= thr).astype(np.uint8)


def sparse_mask_from_clicks(clicks, height: int, width: int) -> np.ndarray:
    """Sparse click label mask: 1 at positive clicks, 0 at negative, -1 else.

    When the same pixel carries conflicting clicks the most recent one wins.
    """
    out = np.full((height, width), IGNORE, dtype=np.int8)
    for c in clicks:
        if not (0 <= c.row < height and 0 <= c.col < width):
            raise MaskError(
                f"click ({c.row}, {c.col}) outside {height}x{width} image"
            )
        out[c.row, c.col] = 1 if c.positive else 0
    return out
