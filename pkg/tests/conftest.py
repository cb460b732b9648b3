import numpy as np
import pytest

from clickseg import dataio, model


def brute_squared_dt(region: np.ndarray) -> np.ndarray:
    """All-pairs nearest-out-pixel search; image border is out-of-region."""
    h, w = region.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = region != 0
    zeros = np.argwhere(~padded)
    inside = np.argwhere(padded)
    out = np.zeros((h + 2, w + 2), dtype=np.int64)
    if len(inside):
        d2 = ((inside[:, None, :] - zeros[None, :, :]) ** 2).sum(axis=2)
        out[inside[:, 0], inside[:, 1]] = d2.min(axis=1)
    return out[1:-1, 1:-1]


def brute_erode(mask: np.ndarray) -> np.ndarray:
    """Single cross erosion by direct neighborhood inspection."""
    h, w = mask.shape
    out = np.zeros_like(mask)
    for i in range(h):
        for j in range(w):
            keep = True
            for di, dj in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if not (0 <= ii < h and 0 <= jj < w) or mask[ii, jj] == 0:
                    keep = False
                    break
            out[i, j] = 1 if keep else 0
    return out


def random_mask(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    density = rng.uniform(0.1, 0.9)
    return (rng.random((h, w)) < density).astype(np.uint8)


@pytest.fixture(scope="session")
def pretrained_params():
    """Decoder pretrained on unshifted synthetic disks."""
    train = dataio.synth_dataset(
        seed=100, n_instances=80, shape_family="disk", domain_shift="none"
    )
    pairs = [(img, gt) for inst in train.values() for _, img, gt in inst]
    return model.pretrain_base(pairs, epochs=5, lr=1e-2, seed=0)
