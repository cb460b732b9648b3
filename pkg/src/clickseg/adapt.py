"""Online test-time adaptation: losses, Adam, and the update policies.

Three adaptation channels exist:

* click adaptation (CA) -- gradient steps on the sparse click loss during a
  session, on a transient optimizer; "reset" reverts them after each image,
  "continuous" keeps them.
* click mask (CM) -- one persistent update per image using all of that
  image's accumulated clicks as a sparse label mask.
* result mask (RM) -- one persistent update per image using the session's
  final mask as a dense pseudo label, either untreated, erosion-filtered,
  or confidence-thresholded.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import masks
from .model import DecoderParams, ImageFeatures, encode_prompts, loss_gradients, predict

log = logging.getLogger(__name__)

_EPS = 1e-7

CA_MODES = ("off", "reset", "continuous")
RM_MODES = ("off", "untreated", "erosion", "confidence")

# learning-rate presets; the tiny sam/hqsam values are tuned to
# transformer-scale decoders and are far too small for the built-in model
LR_PRESETS = {"toy": 1e-4, "sam": 5e-8, "hqsam": 1e-6}


class AllIgnoreError(ValueError):
    """Raised when a loss target contains no labeled pixels."""


@dataclass
class AdaptationConfig:
    ca_mode: str = "off"
    rm_mode: str = "off"
    cm_enabled: bool = False
    lr: float = LR_PRESETS["toy"]
    erosion_k: int = 5
    delta: float = 0.45
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    steps_per_event: int = 1
    iou_threshold: float = 0.85
    max_clicks: int = 20
    sigma: float = 10.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.ca_mode not in CA_MODES:
            raise ValueError(f"ca_mode must be one of {CA_MODES}, got {self.ca_mode!r}")
        if self.rm_mode not in RM_MODES:
            raise ValueError(f"rm_mode must be one of {RM_MODES}, got {self.rm_mode!r}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 < self.delta < 0.5:
            raise ValueError(f"delta must be in (0, 0.5), got {self.delta}")
        if self.rm_mode == "erosion" and self.erosion_k < 1:
            raise ValueError("erosion_k must be >= 1 when rm_mode is 'erosion'")
        if self.steps_per_event < 1:
            raise ValueError("steps_per_event must be >= 1")
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if self.max_clicks < 1:
            raise ValueError("max_clicks must be >= 1")

    def label(self) -> str:
        """Compact configuration tag, e.g. 'R+E+CM' or 'baseline'."""
        parts = []
        if self.ca_mode != "off":
            parts.append("R" if self.ca_mode == "reset" else "C")
        if self.rm_mode != "off":
            parts.append({"untreated": "U", "erosion": "E", "confidence": "CT"}[self.rm_mode])
        if self.cm_enabled:
            parts.append("CM")
        return "+".join(parts) if parts else "baseline"

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AdaptationConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ValueError(f"line {lineno}: unknown config key {key!r}")
            kwargs[key] = _parse_value(types[key], value)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "AdaptationConfig":
        return cls.from_text(Path(path).read_text())


def _parse_value(typ: str, value: str):
    if typ == "bool":
        if value.lower() in ("true", "1", "yes", "on"):
            return True
        if value.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if typ == "int":
        return int(value)
    if typ == "float":
        return float(value)
    return value


@dataclass
class OptimizerState:
    """Adam moment accumulators, shape-matched to the decoder parameters."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: DecoderParams) -> "OptimizerState":
        arrays = params.arrays()
        return cls(
            m={k: np.zeros_like(a) for k, a in arrays.items()},
            v={k: np.zeros_like(a) for k, a in arrays.items()},
        )

    def copy(self) -> "OptimizerState":
        return OptimizerState(
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
            step=self.step,
        )

    def load_(self, other: "OptimizerState") -> None:
        for k in self.m:
            self.m[k][...] = other.m[k]
            self.v[k][...] = other.v[k]
        self.step = other.step


def adam_step(
    params: DecoderParams,
    grads: DecoderParams,
    state: OptimizerState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[DecoderParams, OptimizerState]:
    """Standard Adam update with bias correction; mutates params and state."""
    grad_arrays = grads.arrays()
    for g in grad_arrays.values():
        if not np.isfinite(g).all():
            raise ValueError("non-finite gradient")
    state.step += 1
    t = state.step
    updates = {}
    for k, g in grad_arrays.items():
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        m_hat = state.m[k] / (1.0 - beta1**t)
        v_hat = state.v[k] / (1.0 - beta2**t)
        updates[k] = lr * m_hat / (np.sqrt(v_hat) + eps)
    params.w1 -= updates["w1"]
    params.b1 -= updates["b1"]
    params.w2 -= updates["w2"]
    params.b2 = float(params.b2 - updates["b2"][0])
    return params, state


def sparse_bce(pred: np.ndarray, target: np.ndarray) -> float:
    """Class-balanced BCE over the labeled pixels of a tri mask.

    Mean BCE over target-1 pixels plus mean BCE over target-0 pixels; a
    class with no labeled pixels contributes nothing. Probabilities are
    clamped to [1e-7, 1 - 1e-7] before the log.
    """
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target).reshape(-1)
    pc = np.clip(p, _EPS, 1.0 - _EPS)
    pos = t == 1
    neg = t == 0
    n1 = int(pos.sum())
    n0 = int(neg.sum())
    if n1 == 0 and n0 == 0:
        raise AllIgnoreError("loss target has no labeled pixels")
    loss = 0.0
    if n1 > 0:
        loss += float(-np.log(pc[pos]).mean())
    if n0 > 0:
        loss += float(-np.log(1.0 - pc[neg]).mean())
    return loss


# the dense pseudo-label loss is the same class-balanced formula applied to
# a filtered dense tri mask instead of a sparse click mask
dense_pseudo_bce = sparse_bce


def build_pseudo_trimask(result_probmap: np.ndarray, config: AdaptationConfig) -> np.ndarray:
    """Turn the session's final probability map into a pseudo-label tri mask."""
    if config.rm_mode == "untreated":
        return masks.binarize(result_probmap, 0.5).astype(np.int8)
    if config.rm_mode == "erosion":
        return masks.erosion_trimask(masks.binarize(result_probmap, 0.5), config.erosion_k)
    if config.rm_mode == "confidence":
        return masks.confidence_trimask(result_probmap, config.delta)
    raise ValueError(f"rm_mode {config.rm_mode!r} produces no pseudo label")


class AdaptationEngine:
    """Owns the decoder parameters and applies the CA/CM/RM policies.

    Two optimizers are kept strictly apart: the transient one drives click
    adaptation (its moments are discarded on reset), the persistent one
    drives the per-image CM/RM updates. Requires exclusive access during
    mutation; see the concurrency notes in the service module.
    """

    def __init__(self, params: DecoderParams, config: AdaptationConfig):
        self.params = params
        self.config = config
        self.transient_state = OptimizerState.for_params(params)
        self.persistent_state = OptimizerState.for_params(params)
        self._image_snapshot: DecoderParams | None = None
        self.skipped_updates = 0

    def begin_image(self) -> DecoderParams | None:
        """Capture the pre-image snapshot needed for CA resets.

        Returns the snapshot so callers juggling several sessions can pass
        it back to :meth:`finish_image` explicitly.
        """
        if self.config.ca_mode == "reset":
            self._image_snapshot = self.params.copy()
            return self._image_snapshot
        return None

    def click_adapt_step(
        self,
        features: ImageFeatures,
        clicks,
        prev_mask: np.ndarray,
    ) -> np.ndarray:
        """CA: fit the sparse click mask, then re-predict with the new params.

        The re-predicted mask is the one shown to the user and evaluated.
        """
        cfg = self.config
        if cfg.ca_mode == "off":
            raise ValueError("click adaptation is disabled")
        if not clicks:
            raise ValueError("click adaptation needs at least one click")
        h, w = features.height, features.width
        target = masks.sparse_mask_from_clicks(clicks, h, w)
        prompts = encode_prompts(clicks, prev_mask, cfg.sigma)
        for _ in range(cfg.steps_per_event):
            _, grads = loss_gradients(features, prompts, self.params, target)
            adam_step(self.params, grads, self.transient_state, cfg.lr,
                      cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        return predict(features, prompts, self.params)

    def _persistent_step(self, features, prompts, target) -> None:
        cfg = self.config
        for _ in range(cfg.steps_per_event):
            _, grads = loss_gradients(features, prompts, self.params, target)
            adam_step(self.params, grads, self.persistent_state, cfg.lr,
                      cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    def finish_image(
        self,
        features: ImageFeatures,
        clicks,
        prev_mask: np.ndarray,
        result_probmap: np.ndarray,
        snapshot: DecoderParams | None = None,
    ) -> None:
        """End-of-image policy: reset first, then CM, then RM.

        The reset reverts transient click-adaptation drift before any
        persistent update, so CM/RM always apply to the reverted
        parameters. Degenerate (all-ignore) updates are skipped and
        counted, never fatal.
        """
        cfg = self.config
        if snapshot is None:
            snapshot = self._image_snapshot
        if cfg.ca_mode == "reset" and snapshot is not None:
            self.params.load_(snapshot)
            self.transient_state = OptimizerState.for_params(self.params)
            self._image_snapshot = None

        h, w = features.height, features.width
        prompts = None
        if cfg.cm_enabled:
            if clicks:
                target = masks.sparse_mask_from_clicks(clicks, h, w)
                prompts = encode_prompts(clicks, prev_mask, cfg.sigma)
                self._persistent_step(features, prompts, target)
            else:
                self.skipped_updates += 1
                log.info("CM update skipped: no clicks recorded")

        if cfg.rm_mode != "off":
            pseudo = build_pseudo_trimask(result_probmap, cfg)
            if (pseudo != masks.IGNORE).any():
                if prompts is None:
                    prompts = encode_prompts(clicks, prev_mask, cfg.sigma)
                self._persistent_step(features, prompts, pseudo)
            else:
                self.skipped_updates += 1
                log.info("RM update skipped: pseudo label is all-ignore")
