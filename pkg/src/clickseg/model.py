"""Small differentiable interactive segmentation model.

The model follows the encode-once contract: a fixed, hand-crafted image
encoder runs once per image, a prompt encoder turns clicks and the previous
mask into three extra channels, and a trainable two-layer per-pixel decoder
maps the concatenated channels to a foreground probability. Only the
decoder has parameters; adaptation touches nothing else.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clicksim import Click, ClickHistory

FEATURE_CHANNELS = 9
PROMPT_CHANNELS = 3
HIDDEN = 16
DEFAULT_SIGMA = 10.0

PARAMS_FORMAT = "clickseg-decoder"
PARAMS_VERSION = 1

_EPS = 1e-7


@dataclass(frozen=True)
class ImageFeatures:
    """Per-pixel feature stack, a deterministic function of the image."""

    data: np.ndarray  # (H, W, FEATURE_CHANNELS) float64

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class DecoderParams:
    """Weights of the per-pixel decoder; the only adaptable state."""

    w1: np.ndarray  # (FEATURE_CHANNELS + PROMPT_CHANNELS, HIDDEN)
    b1: np.ndarray  # (HIDDEN,)
    w2: np.ndarray  # (HIDDEN,)
    b2: float

    def copy(self) -> "DecoderParams":
        return DecoderParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), float(self.b2))

    def load_(self, other: "DecoderParams") -> None:
        """In-place overwrite, keeping existing array identities."""
        self.w1[...] = other.w1
        self.b1[...] = other.b1
        self.w2[...] = other.w2
        self.b2 = float(other.b2)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2,
                "b2": np.array([self.b2], dtype=np.float64)}

    def equals(self, other: "DecoderParams") -> bool:
        return (
            np.array_equal(self.w1, other.w1)
            and np.array_equal(self.b1, other.b1)
            and np.array_equal(self.w2, other.w2)
            and self.b2 == other.b2
        )

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.w1).all()
            and np.isfinite(self.b1).all()
            and np.isfinite(self.w2).all()
            and np.isfinite(self.b2)
        )


def init_params(seed: int = 0) -> DecoderParams:
    """Zero-mean uniform initialization scaled by fan-in, seeded."""
    rng = np.random.default_rng(seed)
    c = FEATURE_CHANNELS + PROMPT_CHANNELS
    lim1 = 1.0 / np.sqrt(c)
    lim2 = 1.0 / np.sqrt(HIDDEN)
    return DecoderParams(
        w1=rng.uniform(-lim1, lim1, size=(c, HIDDEN)),
        b1=np.zeros(HIDDEN),
        w2=rng.uniform(-lim2, lim2, size=HIDDEN),
        b2=0.0,
    )


def save_params(params: DecoderParams, path: str | Path) -> None:
    doc = {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "channels": FEATURE_CHANNELS + PROMPT_CHANNELS,
        "hidden": HIDDEN,
        "w1": params.w1.tolist(),
        "b1": params.b1.tolist(),
        "w2": params.w2.tolist(),
        "b2": params.b2,
    }
    Path(path).write_text(json.dumps(doc))


def load_params(path: str | Path) -> DecoderParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != PARAMS_FORMAT:
        raise ValueError(f"not a {PARAMS_FORMAT} file: {path}")
    if doc.get("version") != PARAMS_VERSION:
        raise ValueError(f"unsupported version {doc.get('version')} in {path}")
    return DecoderParams(
        w1=np.asarray(doc["w1"], dtype=np.float64),
        b1=np.asarray(doc["b1"], dtype=np.float64),
        w2=np.asarray(doc["w2"], dtype=np.float64),
        b2=float(doc["b2"]),
    )


def _box_blur(gray: np.ndarray, radius: int) -> np.ndarray:
    """Mean filter over a (2r+1)^2 window with edge-clamped borders."""
    padded = np.pad(gray, radius, mode="edge")
    c = np.cumsum(np.cumsum(padded, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    k = 2 * radius + 1
    h, w = gray.shape
    total = (
        c[k : k + h, k : k + w]
        - c[0:h, k : k + w]
        - c[k : k + h, 0:w]
        + c[0:h, 0:w]
    )
    return total / (k * k)


def encode_image(image: np.ndarray) -> ImageFeatures:
    """Fixed feature stack: RGB, gradient magnitude, 3 blur scales, coords."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got shape {image.shape}")
    h, w = image.shape[:2]
    if h < 8 or w < 8:
        raise ValueError(f"image too small: {h}x{w} (need at least 8x8)")
    rgb = image.astype(np.float64)
    if rgb.max() > 1.0:
        rgb = rgb / 255.0
    gray = rgb.mean(axis=2)
    gy, gx = np.gradient(gray)
    grad = np.sqrt(gx * gx + gy * gy)
    rows = np.repeat(np.linspace(0.0, 1.0, h)[:, None], w, axis=1)
    cols = np.repeat(np.linspace(0.0, 1.0, w)[None, :], h, axis=0)
    channels = [
        rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2],
        grad,
        _box_blur(gray, 1), _box_blur(gray, 3), _box_blur(gray, 7),
        rows, cols,
    ]
    return ImageFeatures(np.stack(channels, axis=2))


def encode_prompts(
    clicks: ClickHistory,
    prev_mask: np.ndarray,
    sigma: float = DEFAULT_SIGMA,
) -> np.ndarray:
    """Click heatmaps plus the previous mask as a (H, W, 3) stack.

    Each heatmap pixel holds the max over same-label clicks of a Gaussian
    kernel centered on the click; no clicks means a zero channel.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    prev = np.asarray(prev_mask, dtype=np.float64)
    h, w = prev.shape
    pos = np.zeros((h, w))
    neg = np.zeros((h, w))
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    for c in clicks:
        d2 = (rows - c.row) ** 2 + (cols - c.col) ** 2
        heat = np.exp(-d2 / (2.0 * sigma * sigma))
        if c.positive:
            np.maximum(pos, heat, out=pos)
        else:
            np.maximum(neg, heat, out=neg)
    return np.stack([pos, neg, prev], axis=2)


def _forward(features: ImageFeatures, prompts: np.ndarray, params: DecoderParams):
    h, w = features.height, features.width
    x = np.concatenate([features.data, prompts], axis=2).reshape(h * w, -1)
    hidden = np.tanh(x @ params.w1 + params.b1)
    z = hidden @ params.w2 + params.b2
    p = 1.0 / (1.0 + np.exp(-z))
    return x, hidden, z, p


def predict(features: ImageFeatures, prompts: np.ndarray, params: DecoderParams) -> np.ndarray:
    """Per-pixel foreground probability map in (0, 1)."""
    if not params.is_finite():
        raise ValueError("decoder parameters contain non-finite values")
    _, _, _, p = _forward(features, prompts, params)
    return p.reshape(features.height, features.width)


def loss_gradients(
    features: ImageFeatures,
    prompts: np.ndarray,
    params: DecoderParams,
    target: np.ndarray,
) -> tuple[float, DecoderParams]:
    """Class-balanced BCE on non-ignored pixels and its exact decoder gradients.

    The loss is the mean BCE over target-1 pixels plus the mean BCE over
    target-0 pixels; a class with no labeled pixels contributes nothing.
    """
    x, hidden, _, p = _forward(features, prompts, params)
    t = np.asarray(target).reshape(-1)
    pos = t == 1
    neg = t == 0
    n1 = int(pos.sum())
    n0 = int(neg.sum())
    if n1 == 0 and n0 == 0:
        raise ValueError("target has no labeled (non-ignore) pixels")

    pc = np.clip(p, _EPS, 1.0 - _EPS)
    loss = 0.0
    dz = np.zeros_like(p)
    if n1 > 0:
        loss += float(-np.log(pc[pos]).sum() / n1)
        dz[pos] = (p[pos] - 1.0) / n1
    if n0 > 0:
        loss += float(-np.log(1.0 - pc[neg]).sum() / n0)
        dz[neg] += p[neg] / n0

    dw2 = hidden.T @ dz
    db2 = float(dz.sum())
    dhidden = dz[:, None] * params.w2[None, :]
    dpre = dhidden * (1.0 - hidden * hidden)
    dw1 = x.T @ dpre
    db1 = dpre.sum(axis=0)
    return loss, DecoderParams(w1=dw1, b1=db1, w2=dw2, b2=db2)


@dataclass
class ParamSnapshot:
    """Bit-exact copy of decoder parameters and, optionally, optimizer state."""

    params: DecoderParams
    optimizer_state: object | None = None


def snapshot(params: DecoderParams, optimizer_state=None) -> ParamSnapshot:
    state_copy = optimizer_state.copy() if optimizer_state is not None else None
    return ParamSnapshot(params.copy(), state_copy)


def restore(snap: ParamSnapshot, params: DecoderParams, optimizer_state=None) -> None:
    """Overwrite ``params`` (and optimizer state, when captured) in place."""
    params.load_(snap.params)
    if snap.optimizer_state is not None and optimizer_state is not None:
        optimizer_state.load_(snap.optimizer_state)


def sample_training_clicks(gt: np.ndarray, rng: np.random.Generator) -> list[Click]:
    """Random positive clicks on the object and negative clicks off it."""
    fg = np.argwhere(gt != 0)
    bg = np.argwhere(gt == 0)
    clicks: list[Click] = []
    n_pos = int(rng.integers(1, 4))
    for idx in rng.integers(0, len(fg), size=min(n_pos, len(fg))):
        r, c = fg[idx]
        clicks.append(Click(int(r), int(c), positive=True))
    if len(bg) > 0:
        n_neg = int(rng.integers(0, 4))
        for idx in rng.integers(0, len(bg), size=n_neg):
            r, c = bg[idx]
            clicks.append(Click(int(r), int(c), positive=False))
    return clicks


def pretrain_base(
    dataset,
    epochs: int = 5,
    lr: float = 1e-2,
    seed: int = 0,
    sigma: float = DEFAULT_SIGMA,
) -> DecoderParams:
    """Train the decoder with dense class-balanced BCE on (image, gt) pairs.

    ``dataset`` is a sequence of (image, mask) pairs. Clicks are sampled
    from the ground truth; the whole procedure is deterministic given the
    seed. Zero epochs return the seeded initialization unchanged.
    """
    from .adapt import OptimizerState, adam_step

    items = list(dataset)
    if not items:
        raise ValueError("pretraining dataset is empty")
    rng = np.random.default_rng(seed)
    params = init_params(seed)
    state = OptimizerState.for_params(params)
    cached = [(encode_image(img), np.asarray(gt)) for img, gt in items]
    for _ in range(epochs):
        order = rng.permutation(len(cached))
        for i in order:
            features, gt = cached[i]
            clicks = sample_training_clicks(gt, rng)
            prompts = encode_prompts(clicks, np.zeros(gt.shape), sigma)
            target = gt.astype(np.int8)  # dense: fg=1, bg=0, nothing ignored
            _, grads = loss_gradients(features, prompts, params, target)
            adam_step(params, grads, state, lr)
    return params
