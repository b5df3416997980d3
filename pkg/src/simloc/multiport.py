"""Multiport impedance model of the stacked surface.

Each unit cell of each layer is an antenna pair (input/output port) loaded
with a tunable reactance, so a Q-layer surface with K cells per layer is a
2QK-port network. A static complex-symmetric impedance matrix Z_ss carries
mutual coupling between all ports (including the non-unilateral layer-to-
layer interactions); the tunable phases eta enter through a diagonal,
purely reactive load matrix Z_s(eta). The input/output behavior is governed
by T(eta) = inv(Z_ss + Z_s(eta)), which is never materialized: all products
with T go through a cached LU factorization.

Ports sit on the two faces of their layer: the input port of a cell at
x - port_offset/2, the output port at x + port_offset/2. Mutual coupling
decays with the true port separation, which gives adjacent layers a strong
forward (output-face to input-face) path.

Signal path: the incident field drives the first-layer input ports (columns
of E_in); the receiver observes the open-circuit voltages that the port
currents induce on its antennas (rows of C_out), giving the effective
K -> M projection V(eta) = C_out @ T(eta) @ E_in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import ConditioningError, ConfigurationError
from .geometry import ArrayGeometry

DEFAULT_Z_SELF = 73.0 + 42.5j  # half-wave-dipole-style self impedance, ohms
DEFAULT_BETA = 60.0  # mutual coupling amplitude, ohms
DEFAULT_GAMMA = 20.0  # intra-cell input/output coupling, ohms
DEFAULT_X0 = 50.0  # load reactance scale, ohms
DEFAULT_PORT_OFFSET = 0.375  # input/output face separation, wavelengths


@dataclass(frozen=True)
class ImpedanceParams:
    """Parameters of the analytic impedance provider."""

    z_self: complex = DEFAULT_Z_SELF
    beta: float = DEFAULT_BETA
    gamma: complex = DEFAULT_GAMMA
    x0: float = DEFAULT_X0
    port_offset_wavelengths: float = DEFAULT_PORT_OFFSET

    def __post_init__(self) -> None:
        if complex(self.z_self).real <= 0:
            raise ConfigurationError("self impedance must have positive real part")
        if self.x0 <= 0:
            raise ConfigurationError("load reactance scale must be positive")
        if self.port_offset_wavelengths < 0:
            raise ConfigurationError("port offset must be nonnegative")


def port_index(layer: int, element: int, side: str, elements_per_layer: int) -> int:
    """Flat port index for (layer, element, side), side in {'in', 'out'}."""
    base = 2 * (layer * elements_per_layer + element)
    if side == "in":
        return base
    if side == "out":
        return base + 1
    raise ConfigurationError(f"unknown port side {side!r}")


def cell_ports(cell: int) -> tuple[int, int]:
    """(input, output) port indices of flat cell index q*K + k."""
    return 2 * cell, 2 * cell + 1


def port_positions(geometry: ArrayGeometry, params: ImpedanceParams) -> np.ndarray:
    """(2QK, 3) port coordinates: input faces interleaved with output faces."""
    off = params.port_offset_wavelengths * geometry.wavelength
    if geometry.layers > 1 and off >= geometry.layer_spacing:
        raise ConfigurationError(
            "port offset must be smaller than the layer spacing"
        )
    pos = geometry.positions
    out = np.empty((2 * len(pos), 3))
    out[0::2] = pos - np.array([off / 2.0, 0.0, 0.0])
    out[1::2] = pos + np.array([off / 2.0, 0.0, 0.0])
    return out


def mutual_coupling(distance: np.ndarray, beta: float, wavelength: float) -> np.ndarray:
    """Radiative mutual impedance beta * exp(-j*2*pi*d/lam) / (2*pi*d/lam)."""
    kd = 2.0 * np.pi * np.asarray(distance, dtype=float) / wavelength
    return beta * np.exp(-1j * kd) / kd


def build_impedance(geometry: ArrayGeometry, params: ImpedanceParams) -> np.ndarray:
    """Static impedance matrix of the stacked surface (analytic provider).

    Diagonal entries are the self impedance, the two ports of one cell
    couple through gamma, and every other port pair couples through the
    distance-decaying mutual term.
    """
    ppos = port_positions(geometry, params)
    n_ports = len(ppos)
    diff = ppos[:, None, :] - ppos[None, :, :]
    d = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(d, 1.0)  # placeholder, intra-cell entries overwritten below
    z = mutual_coupling(d, params.beta, geometry.wavelength)
    for c in range(n_ports // 2):
        i, o = cell_ports(c)
        z[i, i] = params.z_self
        z[o, o] = params.z_self
        z[i, o] = params.gamma
        z[o, i] = params.gamma
    return z


def validate_static_impedance(z: np.ndarray, n_ports: int) -> np.ndarray:
    """Checks applied to a file-loaded static impedance matrix."""
    z = np.asarray(z, dtype=complex)
    if z.shape != (n_ports, n_ports):
        raise ConfigurationError(
            f"static impedance must be {n_ports}x{n_ports}, got {z.shape}"
        )
    scale = max(float(np.abs(z).max()), 1e-300)
    if float(np.abs(z - z.T).max()) > 1e-9 * scale:
        raise ConfigurationError("static impedance matrix must be symmetric")
    return z


def build_output_coupling(
    receiver: ArrayGeometry, geometry: ArrayGeometry, params: ImpedanceParams
) -> np.ndarray:
    """Receiver observation matrix: mutual terms from last-layer output ports
    to each receiver element, zero on all other ports (Thevenin pickup,
    receiver back-action neglected)."""
    ppos = port_positions(geometry, params)
    k = geometry.elements_per_layer
    last = geometry.layers - 1
    out_ports = np.array([port_index(last, e, "out", k) for e in range(k)])
    diff = receiver.positions[:, None, :] - ppos[None, out_ports, :]
    d = np.sqrt((diff**2).sum(axis=2))
    m = mutual_coupling(d, params.beta, geometry.wavelength)
    c_out = np.zeros((len(receiver.positions), 2 * geometry.total_elements), dtype=complex)
    c_out[:, out_ports] = m
    return c_out


def load_reactance(eta: np.ndarray, x0: float) -> np.ndarray:
    """Per-cell load reactance X(eta) = x0 * tan(eta / 2)."""
    return x0 * np.tan(np.asarray(eta, dtype=float) / 2.0)


def load_reactance_slope(eta: np.ndarray, x0: float) -> np.ndarray:
    """d X / d eta = x0/2 * (1 + tan^2(eta/2))."""
    t = np.tan(np.asarray(eta, dtype=float) / 2.0)
    return 0.5 * x0 * (1.0 + t**2)


def wrap_phase(eta: np.ndarray) -> np.ndarray:
    """Wrap phases into (-pi, pi]."""
    w = (np.asarray(eta, dtype=float) + np.pi) % (2.0 * np.pi) - np.pi
    w[w == -np.pi] = np.pi
    return w


class SimNetwork:
    """Stacked-surface network with a cached factorization of Z_ss + Z_s(eta).

    Immutable except for phase updates through :meth:`set_eta`, which
    invalidate the factorization. Solves against a fixed configuration are
    read-only and safe to share.
    """

    def __init__(
        self,
        z_ss: np.ndarray,
        c_out: np.ndarray,
        n_cells: int,
        elements_per_layer: int,
        eta: Optional[np.ndarray] = None,
        x0: float = DEFAULT_X0,
        cond_threshold: float = 1e12,
    ):
        n_ports = 2 * n_cells
        self.z_ss = validate_static_impedance(z_ss, n_ports)
        c_out = np.asarray(c_out, dtype=complex)
        if c_out.shape[1] != n_ports:
            raise ConfigurationError("output coupling has wrong port count")
        self.c_out = c_out
        self.n_cells = n_cells
        self.elements_per_layer = elements_per_layer
        self.x0 = float(x0)
        self.cond_threshold = float(cond_threshold)
        self._eta = np.zeros(n_cells) if eta is None else wrap_phase(np.asarray(eta, float))
        if self._eta.shape != (n_cells,):
            raise ConfigurationError("eta must have one entry per cell")
        self._fact = None

    # -- configuration ----------------------------------------------------

    @property
    def n_ports(self) -> int:
        return 2 * self.n_cells

    @property
    def n_inputs(self) -> int:
        return self.elements_per_layer

    @property
    def n_outputs(self) -> int:
        return self.c_out.shape[0]

    @property
    def eta(self) -> np.ndarray:
        return self._eta.copy()

    def set_eta(self, eta: np.ndarray) -> None:
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (self.n_cells,):
            raise ConfigurationError("eta must have one entry per cell")
        self._eta = wrap_phase(eta)
        self._fact = None

    def input_port_indices(self) -> np.ndarray:
        """Ports driven by the incident field: first-layer input ports."""
        k = self.elements_per_layer
        return np.array([port_index(0, e, "in", k) for e in range(k)])

    def load_diagonal(self) -> np.ndarray:
        """Diagonal of Z_s(eta): both ports of cell c carry j*X(eta_c)."""
        x = load_reactance(self._eta, self.x0)
        return 1j * np.repeat(x, 2)

    def total_impedance(self) -> np.ndarray:
        z = self.z_ss.copy()
        z[np.diag_indices_from(z)] += self.load_diagonal()
        return z

    # -- solves ------------------------------------------------------------

    def _factorization(self):
        if self._fact is None:
            z = self.total_impedance()
            anorm = np.linalg.norm(z, 1)
            lu, piv = sla.lu_factor(z, check_finite=False)
            rcond = _rcond_from_lu(lu, anorm)
            if not np.isfinite(rcond) or rcond < 1.0 / self.cond_threshold:
                raise ConditioningError(
                    "total impedance matrix is numerically singular "
                    f"(reciprocal condition {rcond:.3e}, max |eta| = "
                    f"{np.abs(self._eta).max():.6f})"
                )
            self._fact = (lu, piv)
        return self._fact

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """T(eta) @ rhs through the cached factorization."""
        lu, piv = self._factorization()
        return sla.lu_solve((lu, piv), rhs, check_finite=False)

    def transfer_matrix(self) -> np.ndarray:
        """Dense T(eta); intended for small test instances only."""
        return self.solve(np.eye(self.n_ports, dtype=complex))


def _rcond_from_lu(lu: np.ndarray, anorm: float) -> float:
    gecon = sla.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0:
        return 0.0
    return float(rcond)


def build_sim_network(
    geometry: ArrayGeometry,
    receiver: ArrayGeometry,
    params: Optional[ImpedanceParams] = None,
    z_ss: Optional[np.ndarray] = None,
    eta: Optional[np.ndarray] = None,
    cond_threshold: float = 1e12,
) -> SimNetwork:
    """Assemble the network from geometry, analytically or from a given Z_ss."""
    params = params or ImpedanceParams()
    if z_ss is None:
        z_ss = build_impedance(geometry, params)
    c_out = build_output_coupling(receiver, geometry, params)
    return SimNetwork(
        z_ss=z_ss,
        c_out=c_out,
        n_cells=geometry.total_elements,
        elements_per_layer=geometry.elements_per_layer,
        eta=eta,
        x0=params.x0,
        cond_threshold=cond_threshold,
    )


# -- effective projection ---------------------------------------------------


def input_embedding(net: SimNetwork) -> np.ndarray:
    """E_in: canonical unit columns selecting first-layer input ports."""
    e = np.zeros((net.n_ports, net.n_inputs), dtype=complex)
    e[net.input_port_indices(), np.arange(net.n_inputs)] = 1.0
    return e


def effective_projection_matrix(net: SimNetwork) -> np.ndarray:
    """V(eta) = C_out @ T(eta) @ E_in via one solve per input column."""
    t_cols = net.solve(input_embedding(net))
    return net.c_out @ t_cols


def effective_projection_rowsolve(net: SimNetwork) -> np.ndarray:
    """Same matrix computed through network reciprocity.

    Z total is symmetric, so T is too, and V^T = E_in^T @ T @ C_out^T;
    this costs one solve per receiver chain instead of per input element.
    """
    b = net.solve(net.c_out.T)  # T @ C_out^T, plain transpose
    return b[net.input_port_indices(), :].T


@dataclass(frozen=True)
class Projection:
    """Effective projection with optional mismatch bookkeeping against a target.

    ``scale`` is the concentrated complex gain c minimizing
    ||c*V - target||_F; mismatch metrics are evaluated on the scaled matrix
    ``v_scaled = scale * v``.
    """

    v: np.ndarray
    target: Optional[np.ndarray] = None
    scale: complex = 1.0 + 0.0j
    delta_rel: Optional[float] = None
    delta_u: Optional[float] = None

    @property
    def v_scaled(self) -> np.ndarray:
        return self.scale * self.v


def concentrated_scale(v: np.ndarray, target: np.ndarray) -> complex:
    """Closed-form least-squares complex gain c for ||c*V - target||_F."""
    denom = np.vdot(v, v).real
    if denom == 0.0:
        return 1.0 + 0.0j
    return complex(np.vdot(v, target) / denom)


def effective_projection(
    net: SimNetwork,
    target: Optional[np.ndarray] = None,
    concentrate_scale: bool = True,
) -> Projection:
    """Compute V(eta); when a target U^H is given, attach mismatch metrics."""
    v = effective_projection_matrix(net)
    if target is None:
        return Projection(v=v)
    target = np.asarray(target, dtype=complex)
    if target.shape != v.shape:
        raise ConfigurationError(
            f"target shape {target.shape} does not match projection {v.shape}"
        )
    c = concentrated_scale(v, target) if concentrate_scale else 1.0 + 0.0j
    delta = c * v - target
    l = target.shape[0]
    # target rows are orthonormal, so ||target||_F = sqrt(L)
    delta_rel = float(np.linalg.norm(delta, "fro") / np.sqrt(l))
    u = target.conj().T
    delta_u = float(np.linalg.norm(delta @ u, 2))
    return Projection(v=v, target=target, scale=c, delta_rel=delta_rel, delta_u=delta_u)


def row_orthonormality_gap(v: np.ndarray) -> float:
    """Spectral-norm distance of V V^H from the identity."""
    v = np.asarray(v, dtype=complex)
    gram = v @ v.conj().T
    return float(np.linalg.norm(gram - np.eye(v.shape[0]), 2))
