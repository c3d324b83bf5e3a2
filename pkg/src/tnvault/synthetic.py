"""Synthetic stand-ins for image data used by the benchmarks and tests."""
from __future__ import annotations

import numpy as np


def spectral_image(
    height: int = 600,
    width: int = 600,
    channels: int = 3,
    decay: float = 1.0,
    seed: int | None = 0,
) -> np.ndarray:
    """Random ``height x width x channels`` image with power-law spectrum.

    Each channel is ``U diag(k^-decay) Vᵀ`` with Haar-random ``U`` and ``V``;
    the channels share a common component so they are correlated the way
    colour channels are.  Values are scaled to ``[0, 255]``.
    """
    rng = np.random.default_rng(seed)
    r = min(height, width)
    s = np.arange(1, r + 1, dtype=np.float64) ** (-decay)

    def haar(n: int) -> np.ndarray:
        q, rr = np.linalg.qr(rng.standard_normal((n, r)))
        return q * np.sign(np.diag(rr))

    shared = (haar(height) * s) @ haar(width).T
    out = np.empty((height, width, channels))
    for c in range(channels):
        own = (haar(height) * s) @ haar(width).T
        out[:, :, c] = 0.7 * shared + 0.3 * own
    lo, hi = out.min(), out.max()
    return (out - lo) / (hi - lo) * 255.0


def image_set(count: int, height: int = 64, width: int = 64, channels: int = 3,
              decay: float = 1.0, seed: int = 0) -> list[np.ndarray]:
    """``count`` independent spectral images with seeds derived from ``seed``."""
    ss = np.random.SeedSequence(seed)
    return [
        spectral_image(height, width, channels, decay, int(child.generate_state(1)[0]))
        for child in ss.spawn(count)
    ]
