"""Mismatch metrics, the perturbation analysis of the reduced observation
operator, and the Fisher-information position error bound.

The projection error Delta = V - U^H is summarized by the relative
Frobenius mismatch delta_rel = ||Delta||_F / sqrt(L) and the effective
subspace mismatch delta_U = ||Delta U||_2. The reduced operator Gram matrix
G(V) = (V U)^H (V U) = I + E has all eigenvalues inside
[1 - (2 delta_U + delta_U^2), 1 + (2 delta_U + delta_U^2)], which bounds the
least-squares MSE degradation of an energy-preserving projection by
1 / (1 - (2 delta_U + delta_U^2)).

Localization bounds treat the channel estimate as h(eps) + noise with
eps = [x, y, G, theta]; the position error bound comes from the position
block of the inverse Fisher information matrix. Throughout this stage,
sigma_n^2 is the noise variance per real component of the observation
(the convention under which I = Re{J^H J} / sigma_n^2 is the exact
information matrix, and the theta-theta entry equals K G^2 / sigma_n^2).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError
from .estimation import EstimationReport
from .geometry import ArrayGeometry

_ROW_ORTHO_TOL = 1e-6
_PINV_CONDITION = 1e12


@dataclass(frozen=True)
class MismatchMetrics:
    delta_rel: float
    delta_u: float
    e_norm: float
    eig_box: Tuple[float, float]
    mse_ratio_bound: float

    @property
    def box_halfwidth(self) -> float:
        return 2.0 * self.delta_u + self.delta_u**2


def mismatch_metrics(v: np.ndarray, u: np.ndarray) -> MismatchMetrics:
    """Projection mismatch summary of V against the ideal U^H."""
    v = np.asarray(v, dtype=complex)
    u = np.asarray(u, dtype=complex)
    l = u.shape[1]
    if v.shape != (l, u.shape[0]):
        raise ConfigurationError(
            f"projection shape {v.shape} incompatible with subspace {u.shape}"
        )
    delta = v - u.conj().T
    delta_u_mat = delta @ u
    delta_rel = float(np.linalg.norm(delta, "fro") / np.sqrt(l))
    delta_u = float(np.linalg.norm(delta_u_mat, 2))
    e = delta_u_mat + delta_u_mat.conj().T + delta_u_mat.conj().T @ delta_u_mat
    e_norm = float(np.linalg.norm(e, 2))
    half = 2.0 * delta_u + delta_u**2
    bound = 1.0 / (1.0 - half) if half < 1.0 else np.inf
    return MismatchMetrics(
        delta_rel=delta_rel,
        delta_u=delta_u,
        e_norm=e_norm,
        eig_box=(1.0 - half, 1.0 + half),
        mse_ratio_bound=bound,
    )


def reduced_gram(v: np.ndarray, u: np.ndarray) -> np.ndarray:
    """G(V) = (V U)^H (V U), the Gram matrix of the reduced operator."""
    a = np.asarray(v, dtype=complex) @ np.asarray(u, dtype=complex)
    return a.conj().T @ a


@dataclass(frozen=True)
class MseRatioCheck:
    actual_ratio: float
    bound: float
    holds: bool
    applicable: bool


def mse_ratio_check(
    v: np.ndarray,
    u: np.ndarray,
    sigma_z2: float = 1.0,
    row_ortho_tol: float = _ROW_ORTHO_TOL,
) -> MseRatioCheck:
    """Compare the actual least-squares MSE inflation against its bound.

    The bound assumes the projection preserves energy (V V^H = I), so when
    the row-orthonormality gap exceeds ``row_ortho_tol`` the check is
    reported as inapplicable rather than falsified. The ratio
    tr(G^{-1}) / L is independent of the noise level.
    """
    v = np.asarray(v, dtype=complex)
    l = v.shape[0]
    gap = float(np.linalg.norm(v @ v.conj().T - np.eye(l), 2))
    metrics = mismatch_metrics(v, u)
    if gap > row_ortho_tol:
        return MseRatioCheck(
            actual_ratio=np.nan, bound=metrics.mse_ratio_bound, holds=True, applicable=False
        )
    g = reduced_gram(v, u)
    actual_mse = sigma_z2 * float(np.real(np.trace(np.linalg.inv(g))))
    ratio = actual_mse / (sigma_z2 * l)
    holds = ratio <= metrics.mse_ratio_bound + 1e-9
    return MseRatioCheck(
        actual_ratio=ratio, bound=metrics.mse_ratio_bound, holds=holds, applicable=True
    )


# -- Fisher information and the position error bound -------------------------


def channel_jacobian(geometry: ArrayGeometry, eps: np.ndarray) -> np.ndarray:
    """K x 4 Jacobian of h(x, y, G, theta) over the input layer.

    Columns: d h/d x = -j (2 pi / lambda) (x - x_k)/d_k * h,
    d h/d y analogous, d h/d G = h / G, d h/d theta = j h.
    """
    x, y, g, theta = (float(t) for t in np.asarray(eps, dtype=float))
    if g <= 0:
        raise ConfigurationError("gain must be positive")
    pos = geometry.first_layer_positions
    p = np.array([x, y, 0.0])
    diff = p[None, :] - pos
    d = np.sqrt((diff**2).sum(axis=1))
    if np.any(d == 0.0):
        raise ConfigurationError("transmitter coincides with an array element")
    lam = geometry.wavelength
    h = g * np.exp(1j * theta) * np.exp(-2j * np.pi * d / lam)
    jac = np.empty((len(pos), 4), dtype=complex)
    jac[:, 0] = -2j * np.pi / lam * (diff[:, 0] / d) * h
    jac[:, 1] = -2j * np.pi / lam * (diff[:, 1] / d) * h
    jac[:, 2] = h / g
    jac[:, 3] = 1j * h
    return jac


@dataclass(frozen=True)
class PebReport:
    fim: np.ndarray
    crlb: np.ndarray
    peb: float
    condition_flag: bool
    eps: np.ndarray


def fim_peb(
    geometry: ArrayGeometry,
    eps: np.ndarray,
    sigma_n2: float,
    error_covariance: Optional[np.ndarray] = None,
) -> PebReport:
    """Fisher information over [x, y, G, theta] and the position error bound.

    White residual noise gives I = Re{J^H J} / sigma_n^2; passing an error
    covariance instead whitens the Jacobian against it (pseudo-inverse on
    its significant eigenspace). The inverse is evaluated through an SVD of
    the real-stacked Jacobian, whose condition number is the square root of
    the information matrix's, so geometries near the observability limit
    stay accurate; ``condition_flag`` marks information matrices with
    condition beyond 1e12, where truly vanishing directions are truncated
    pseudo-inverse style instead of being silently amplified.
    """
    if sigma_n2 <= 0:
        raise ConfigurationError("noise variance must be positive")
    x, y, g, _ = (float(t) for t in np.asarray(eps, dtype=float))
    # every Jacobian column carries the factor e^{j theta}, which cancels in
    # J^H J; evaluating at theta = 0 makes the invariance exact in floats
    jac = channel_jacobian(geometry, np.array([x, y, g, 0.0]))
    if error_covariance is None:
        jw = jac / np.sqrt(sigma_n2)
    else:
        c = np.asarray(error_covariance, dtype=complex)
        vals, vecs = np.linalg.eigh(0.5 * (c + c.conj().T))
        floor = max(float(vals.max()), 0.0) * 1e-12
        inv_sqrt = np.where(vals > floor, 1.0 / np.sqrt(np.clip(vals, floor, None)), 0.0)
        jw = (inv_sqrt[:, None] * vecs.conj().T) @ jac
    jr = np.vstack([jw.real, jw.imag])
    fim = jr.T @ jr
    fim = 0.5 * (fim + fim.T)

    _, s, vt = np.linalg.svd(jr, full_matrices=False)
    if s[0] == 0.0:
        return PebReport(
            fim=fim, crlb=np.full((4, 4), np.inf), peb=np.inf, condition_flag=True,
            eps=np.asarray(eps, dtype=float),
        )
    flag = bool(s[-1] == 0.0 or (s[0] / s[-1]) ** 2 > _PINV_CONDITION)
    keep = s > s[0] * 1e-13
    inv_s2 = np.zeros_like(s)
    inv_s2[keep] = s[keep] ** -2.0
    crlb = (vt.T * inv_s2[None, :]) @ vt
    peb = float(np.sqrt(max(crlb[0, 0] + crlb[1, 1], 0.0)))
    return PebReport(
        fim=fim, crlb=crlb, peb=peb, condition_flag=flag, eps=np.asarray(eps, dtype=float)
    )


def effective_noise_from_estimation(report: EstimationReport) -> float:
    """White-equivalent per-element residual variance of a channel estimate."""
    if report.scalar_mse is None or report.scalar_mse < 0:
        raise ConfigurationError("estimation report carries no usable scalar MSE")
    k = report.h_hat.shape[0] if report.h_hat is not None else report.error_covariance.shape[0]
    return float(report.scalar_mse) / k
