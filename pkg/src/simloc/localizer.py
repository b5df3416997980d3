"""Position recovery from a channel estimate.

The gain/phase pair is a nuisance: for any candidate p the best-fitting
complex amplitude has a closed form, so the concentrated likelihood reduces
to the normalized correlation |a(p)^H h_hat|^2 / (K ||h_hat||^2). The search
runs a coarse grid over the prior region's bounding box followed by
shrinking grid refinements around the running best point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .channel import steering_matrix
from .errors import ConfigurationError, EstimationError
from .geometry import ArrayGeometry, UncertaintyRegion


@dataclass(frozen=True)
class LocalizerConfig:
    coarse_grid: int = 64
    refine_iters: int = 6
    refine_shrink: float = 0.5

    def __post_init__(self) -> None:
        if self.coarse_grid < 2:
            raise ConfigurationError("need at least 2 grid points per axis")
        if not (0.0 < self.refine_shrink < 1.0):
            raise ConfigurationError("refine_shrink must lie in (0, 1)")


def _grid(center: Tuple[float, float], half: Tuple[float, float], n: int) -> np.ndarray:
    xs = np.linspace(center[0] - half[0], center[0] + half[0], n)
    ys = np.linspace(center[1] - half[1], center[1] + half[1], n)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def correlation_scores(
    geometry: ArrayGeometry, points: np.ndarray, h_hat: np.ndarray
) -> np.ndarray:
    """Concentrated-likelihood score of each candidate point, in [0, 1]."""
    a = steering_matrix(geometry, points)  # (K, n)
    k = a.shape[0]
    num = np.abs(a.conj().T @ h_hat) ** 2
    return num / (k * float(np.vdot(h_hat, h_hat).real))


def localize(
    h_hat: np.ndarray,
    geometry: ArrayGeometry,
    region: UncertaintyRegion,
    cfg: LocalizerConfig = LocalizerConfig(),
) -> Tuple[np.ndarray, float]:
    """Maximum-correlation position estimate within the prior region.

    Returns ``(p_hat, score)``; the score is invariant to any nonzero
    complex scaling of the channel estimate.
    """
    h_hat = np.asarray(h_hat, dtype=complex).ravel()
    if float(np.vdot(h_hat, h_hat).real) == 0.0:
        raise EstimationError("cannot localize an all-zero channel estimate")
    if region.diameter <= 0.0:
        raise ConfigurationError("prior region is degenerate")

    x_lo, x_hi, y_lo, y_hi = region.bounding_box()
    center = ((x_lo + x_hi) / 2.0, (y_lo + y_hi) / 2.0)
    half = ((x_hi - x_lo) / 2.0, (y_hi - y_lo) / 2.0)

    best_p = np.array(center)
    best_score = -1.0
    for _ in range(cfg.refine_iters + 1):
        pts = _grid(center, half, cfg.coarse_grid)
        scores = correlation_scores(geometry, pts, h_hat)
        i = int(np.argmax(scores))
        if scores[i] > best_score:
            best_score = float(scores[i])
            best_p = pts[i]
        center = (float(best_p[0]), float(best_p[1]))
        half = (half[0] * cfg.refine_shrink, half[1] * cfg.refine_shrink)
    return best_p, best_score
