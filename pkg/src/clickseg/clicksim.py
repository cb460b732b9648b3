"""Simulated user: deterministic corrective clicks from ground truth.

The simulated user always clicks the pole of inaccessibility of the larger
error region: the pixel of the false-positive or false-negative area that
is farthest from that area's boundary.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .masks import MaskError, squared_distance_transform


@dataclass(frozen=True)
class Click:
    row: int
    col: int
    positive: bool

    @property
    def label(self) -> str:
        return "pos" if self.positive else "neg"


ClickHistory = Sequence[Click]


class NoErrorRegion(ValueError):
    """Raised when prediction already equals ground truth."""


def error_regions(gt: np.ndarray, pred: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """False-positive and false-negative areas of a prediction."""
    if gt.shape != pred.shape:
        raise MaskError(f"dimension mismatch: {gt.shape} vs {pred.shape}")
    gt_on = gt != 0
    pred_on = pred != 0
    fp = (pred_on & ~gt_on).astype(np.uint8)
    fn = (gt_on & ~pred_on).astype(np.uint8)
    return fp, fn


def _argmax_rowmajor(field: np.ndarray) -> tuple[int, int]:
    # np.argmax on the flattened row-major array picks the first maximum,
    # i.e. smallest row, then smallest column
    idx = int(np.argmax(field))
    return idx // field.shape[1], idx % field.shape[1]


def next_click(gt: np.ndarray, pred: np.ndarray, history: ClickHistory = ()) -> Click:
    """Place the next corrective click at the deeper error region's center.

    Compares the maxima of the two error-region distance transforms; the
    false-positive region wins only on a strictly larger maximum, so ties
    produce a positive click. Repeat coordinates are allowed; ``history``
    is accepted for interface symmetry.
    """
    fp, fn = error_regions(gt, pred)
    if not fp.any() and not fn.any():
        raise NoErrorRegion("prediction equals ground truth; nothing to correct")
    d2_fp = squared_distance_transform(fp)
    d2_fn = squared_distance_transform(fn)
    max_fp = int(d2_fp.max())
    max_fn = int(d2_fn.max())
    if max_fp > max_fn:
        r, c = _argmax_rowmajor(d2_fp)
        return Click(r, c, positive=False)
    r, c = _argmax_rowmajor(d2_fn)
    return Click(r, c, positive=True)


def first_click(gt: np.ndarray) -> Click:
    """First click on an untouched image: always positive."""
    if not np.asarray(gt).any():
        raise NoErrorRegion("ground truth is empty; no first click exists")
    return next_click(gt, np.zeros_like(gt), ())
