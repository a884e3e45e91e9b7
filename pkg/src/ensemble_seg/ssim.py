"""Volumetric (3D) multi-scale structural similarity."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MsSsimConfig:
    window: int = 7
    sigma: float = 1.5
    scales: int = 3
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ConfigError(f"window must be odd and >= 3, got {self.window}", field="window")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}", field="sigma")
        if self.scales < 1:
            raise ConfigError(f"scales must be >= 1, got {self.scales}", field="scales")
        if not (self.k1 > 0 and self.k2 > 0):
            raise ConfigError("k1 and k2 must be positive", field="k1")
        if not self.data_range > 0:
            raise ConfigError("data_range must be positive", field="data_range")

    def effective_scales(self, dims) -> int:
        """Largest scale count <= ``scales`` with ``min(dims) >= window * 2**(s-1)``."""
        smallest = min(dims)
        if smallest < self.window:
            raise ConfigError(
                f"volume dims {tuple(dims)} are smaller than the SSIM window {self.window}",
                field="window",
            )
        s = self.scales
        while smallest < self.window * 2 ** (s - 1):
            s -= 1
        return s


def gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    coords = np.arange(window, dtype=np.float64) - window // 2
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    return g / g.sum()


def _blur(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable 'valid' correlation, no padding
    for axis in range(3):
        x = sliding_window_view(x, g.size, axis=axis) @ g
    return x


def _pool2(x: np.ndarray) -> np.ndarray:
    nx, ny, nz = (d // 2 for d in x.shape)
    x = x[: 2 * nx, : 2 * ny, : 2 * nz]
    return x.reshape(nx, 2, ny, 2, nz, 2).mean(axis=(1, 3, 5))


def _ssim_terms(x, y, g, c1, c2) -> tuple[float, float]:
    mu_x, mu_y = _blur(x, g), _blur(y, g)
    sxx = _blur(x * x, g) - mu_x * mu_x
    syy = _blur(y * y, g) - mu_y * mu_y
    sxy = _blur(x * y, g) - mu_x * mu_y
    cs_map = (2.0 * sxy + c2) / (sxx + syy + c2)
    lum = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    return float(np.mean(lum * cs_map)), float(np.mean(cs_map))


def ms_ssim(x: np.ndarray, y: np.ndarray, cfg: MsSsimConfig = MsSsimConfig()) -> float:
    """MS-SSIM of two equally shaped 3D fields.

    Each scale contributes with exponent ``1/S``; contrast-structure terms are
    clamped at zero before exponentiation so the product stays real.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 3:
        raise ValueError(f"ms_ssim needs two equal 3D arrays, got {x.shape} and {y.shape}")
    scales = cfg.effective_scales(x.shape)
    if scales < cfg.scales:
        log.debug("MS-SSIM scales reduced from %d to %d for dims %s", cfg.scales, scales, x.shape)
    g = gaussian_kernel(cfg.window, cfg.sigma)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    weight = 1.0 / scales
    result = 1.0
    for s in range(scales):
        ssim, cs = _ssim_terms(x, y, g, c1, c2)
        term = ssim if s == scales - 1 else cs
        result *= max(term, 0.0) ** weight
        if s < scales - 1:
            x, y = _pool2(x), _pool2(y)
    return result
