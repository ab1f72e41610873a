"""Induced-current beamforming, radiated-power normalization and SNR.

The couplers are loaded passive dipoles, so their currents follow from the
active current through the coupler block of the impedance matrix. The
received SNR normalizes the active current so that the coupled array radiates
exactly the transmit power budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    ChannelRealization,
    PatternNormalization,
    channel_matrix,
    effective_channels,
    path_directions,
    pattern_normalization,
    steering_matrix,
)
from .em_coupling import (
    ImpedanceMatrix,
    MutualImpedanceSolver,
    WireParameters,
    assemble_many,
    default_solver,
)
from .errors import IllConditionedError, ModelViolationError
from .geometry import ElementGeometry, SphericalCap, as_axis_matrix, feasible_mask, is_feasible

MAX_CONDITION = 1e12
RESIDUAL_TOL = 1e-10
# stands in for ln(0) so that Armijo comparisons stay finite
NULL_OBJECTIVE = -1e300


@dataclass(frozen=True)
class BeamformingResult:
    w: np.ndarray
    w_e: np.ndarray
    i0_squared: float
    effective_gain: float


def solve_beamforming_many(Z, loads):
    """Batched induced-current solve. ``Z`` is ``(K, N+1, N+1)``; returns ``(w, w_e)``."""
    Z = np.asarray(Z, dtype=complex)
    K, n1 = Z.shape[0], Z.shape[1]
    N = n1 - 1
    loads = np.asarray(loads, dtype=complex).reshape(-1)
    if loads.size != N:
        raise ValueError(f"expected {N} load impedances, got {loads.size}")
    w_e = np.ones((K, n1), dtype=complex)
    if N == 0:
        return np.zeros((K, 0), dtype=complex), w_e
    A = Z[:, 1:, 1:] + np.diag(loads)
    z_bar = Z[:, 1:, 0]
    cond = np.linalg.cond(A)
    bad = ~np.isfinite(cond) | (cond >= MAX_CONDITION)
    if bad.any():
        raise IllConditionedError("coupler impedance plus load matrix is singular", float(np.max(cond)))
    w = np.linalg.solve(A, z_bar[..., None])[..., 0]
    res = np.linalg.norm(np.einsum("kij,kj->ki", A, w) - z_bar, axis=1)
    ref = np.maximum(np.linalg.norm(z_bar, axis=1), np.finfo(float).tiny)
    if np.any(res > RESIDUAL_TOL * ref):
        raise IllConditionedError("induced-current solve did not reach its residual target", float(np.max(cond)))
    w_e[:, 1:] = -w
    return w, w_e


def solve_beamforming(Z: ImpedanceMatrix, loads):
    """Coupler currents ``w = (Z_E + X)^-1 z_bar`` and ``w_e = [1, -w]``."""
    w, w_e = solve_beamforming_many(Z.entries[None], loads)
    return w[0], w_e[0]


def _power_quadratic_many(Z, w_e):
    R = np.real(np.asarray(Z))
    return np.real(np.einsum("ki,kij,kj->k", np.conj(w_e), R, w_e))


def gain_terms_from(Z, H, loads):
    """Numerator ``|h^T w_e|^2`` and denominator ``w_e^H Re{Z} w_e`` for stacks of ``Z`` and ``h``."""
    _, w_e = solve_beamforming_many(Z, loads)
    num = np.abs(np.sum(H * w_e, axis=1)) ** 2
    den = _power_quadratic_many(Z, w_e)
    if np.any(~(den > 0.0)):
        raise ModelViolationError(f"radiated power quadratic form is not positive ({float(np.min(den))!r})")
    return num, den


def transmit_power_quadratic(Z: ImpedanceMatrix, w_e) -> float:
    """Radiated power per unit ``|i0|^2``: ``w_e^H Re{Z} w_e``."""
    w_e = np.asarray(w_e, dtype=complex)
    val = float(_power_quadratic_many(Z.entries[None], w_e[None])[0])
    if not val > 0.0:
        raise ModelViolationError(f"radiated power quadratic form is not positive ({val!r})")
    return val


@dataclass
class Scenario:
    """Everything needed to evaluate the SNR of one coupler configuration.

    Parameters
    ----------
    geometry, wire : element layout and wire parameters
    channel : ChannelRealization
    loads : (N,) complex load impedances in ohms
    cap : SphericalCap
        Rotation range shared by all couplers.
    transmit_power, noise_power : float
        Linear power budget and noise variance (W).
    omnidirectional : bool
        Model coupler patterns as omnidirectional instead of dipole-shaped.
    """

    geometry: ElementGeometry
    wire: WireParameters
    channel: ChannelRealization
    loads: np.ndarray
    cap: SphericalCap
    transmit_power: float
    noise_power: float
    omnidirectional: bool = False
    solver: MutualImpedanceSolver | None = None
    norm: PatternNormalization | None = field(default=None)

    def __post_init__(self):
        self.loads = np.asarray(self.loads, dtype=complex).reshape(-1)
        if self.loads.size != self.geometry.n_couplers:
            raise ValueError("one load impedance per coupler is required")
        if not (self.transmit_power > 0 and self.noise_power > 0):
            raise ValueError("transmit and noise power must be positive")
        if self.solver is None:
            self.solver = default_solver(self.wire)
        if self.norm is None:
            self.norm = pattern_normalization(self.wire)

    @property
    def n_couplers(self) -> int:
        return self.geometry.n_couplers

    def fixed_axes(self) -> np.ndarray:
        return self.geometry.fixed_axes()

    def is_feasible(self, U) -> bool:
        return is_feasible(U, self.cap, self.geometry)

    def feasible_many(self, Us) -> np.ndarray:
        return feasible_mask(Us, self.cap, self.geometry)

    def impedance(self, U) -> ImpedanceMatrix:
        U = as_axis_matrix(U, self.n_couplers)
        return ImpedanceMatrix(assemble_many(U[None], self.geometry, self.wire, self.solver)[0])

    def channels(self, Us) -> np.ndarray:
        if self.omnidirectional:
            A = steering_matrix(self.channel.directions, self.geometry, self.wire) @ self.channel.gains
            h = math.sqrt(self.wire.eta / math.pi) * A
            return np.broadcast_to(h, (Us.shape[0], h.size))
        return effective_channels(Us, self.channel, self.geometry, self.wire, self.norm)

    def gain_terms(self, Us):
        """Numerator ``|h^T w_e|^2`` and denominator ``w_e^H Re{Z} w_e`` for a stack of ``U``."""
        Us = np.asarray(Us, dtype=float)
        if Us.ndim == 2:
            Us = Us[None]
        Z = assemble_many(Us, self.geometry, self.wire, self.solver)
        return gain_terms_from(Z, self.channels(Us), self.loads)

    def normalized_gain_many(self, Us) -> np.ndarray:
        num, den = self.gain_terms(Us)
        return num / den

    def objective_many(self, Us) -> np.ndarray:
        omega = self.normalized_gain_many(Us)
        with np.errstate(divide="ignore"):
            phi = np.log(omega)
        return np.where(omega > 0.0, phi, NULL_OBJECTIVE)

    def objective(self, U) -> float:
        return float(self.objective_many(as_axis_matrix(U, self.n_couplers)[None])[0])

    def snr_many(self, Us) -> np.ndarray:
        return self.transmit_power / self.noise_power * self.normalized_gain_many(Us)

    def snr(self, U) -> float:
        return float(self.snr_many(as_axis_matrix(U, self.n_couplers)[None])[0])

    def rate(self, U) -> float:
        return achievable_rate_from_snr(self.snr(U))


def snr(U, scenario: Scenario) -> float:
    """Received SNR (linear) with the radiated power held at the budget."""
    return scenario.snr(U)


def normalized_gain(U, scenario: Scenario) -> float:
    """SNR gain with ``P / sigma^2`` divided out."""
    return float(scenario.normalized_gain_many(as_axis_matrix(U, scenario.n_couplers)[None])[0])


def objective(U, scenario: Scenario) -> float:
    """Log of the normalized SNR gain; an exact null maps to ``NULL_OBJECTIVE``."""
    return scenario.objective(U)


def achievable_rate_from_snr(r) -> float:
    return float(np.log2(1.0 + r))


def achievable_rate(U, scenario: Scenario) -> float:
    """``log2(1 + SNR)`` in bits/s/Hz."""
    return achievable_rate_from_snr(scenario.snr(U))


def beamforming_result(U, scenario: Scenario) -> BeamformingResult:
    Z = scenario.impedance(U)
    w, w_e = solve_beamforming(Z, scenario.loads)
    p = transmit_power_quadratic(Z, w_e)
    return BeamformingResult(w=w, w_e=w_e, i0_squared=scenario.transmit_power / p,
                             effective_gain=normalized_gain(U, scenario))


def beampattern(U, scenario: Scenario, psi_fixed: float, phi_grid) -> np.ndarray:
    """Normalized array power pattern (dB, 0 dB peak) over azimuth at fixed zenith.

    Each direction is probed with a unit-gain single path, so the response is
    ``|g(psi, phi)^T w_e(U)|^2``.
    """
    phi_grid = np.asarray(phi_grid, dtype=float).reshape(-1)
    if phi_grid.size == 0:
        raise ValueError("azimuth grid must not be empty")
    U = as_axis_matrix(U, scenario.n_couplers)
    _, w_e = solve_beamforming(scenario.impedance(U), scenario.loads)
    f = path_directions(np.full_like(phi_grid, psi_fixed), phi_grid)
    if scenario.omnidirectional:
        G = math.sqrt(scenario.wire.eta / math.pi) * steering_matrix(f, scenario.geometry, scenario.wire)
    else:
        G = channel_matrix(U, f, scenario.geometry, scenario.wire, scenario.norm)
    power = np.abs(w_e @ G) ** 2
    peak = np.max(power)
    if not peak > 0.0:
        raise ModelViolationError("array response vanishes over the whole grid")
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(power / peak)
