"""Seeded channels, scenario construction, the proposed scheme and its baselines.

Every scheme reports a normalized gain ``Omega = SNR / (P / sigma^2)`` so that
the rate at any transmit power follows without re-optimizing: the optimized
configuration does not depend on ``P``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..beamforming import Scenario, achievable_rate_from_snr, gain_terms_from
from ..channel import ChannelRealization, path_directions
from ..em_coupling import WireParameters, assemble_stack
from ..errors import ConfigurationError
from ..geometry import U0, ElementGeometry, SphericalCap
from ..optimizer import OptimizationTrace, OptimizerParams, cross_entropy_search, optimize
from .config import SystemConfig, coupler_positions, dbm_to_watts

RCA = "rca"
FIXED = "fixed-rotation"
ACTIVE = "active-array"
FLEXIBLE = "flexible-position (stand-in)"
SCHEMES = (RCA, FIXED, ACTIVE, FLEXIBLE)

FLEX_GRID = 16
FLEX_REGION = 0.8  # side of the square movement region, in wavelengths
FLEX_MARGIN = 0.01  # extra center spacing beyond 2a, in wavelengths


def seed_streams(config: SystemConfig, seed: int, n: int = 3):
    """Independent generators for the channel, the optimizer and the baselines."""
    ss = np.random.SeedSequence([int(config.rng_seed), int(seed)])
    return [np.random.default_rng(s) for s in ss.spawn(n)]


def generate_channel(config: SystemConfig, seed: int, num_paths: int | None = None) -> ChannelRealization:
    """Random multipath channel for ``seed``.

    Departure directions are uniform on the sphere and the path gains are
    circularly-symmetric complex Gaussian with variance ``beta / L``, ``beta``
    being the free-space path gain at the reference distance. Paths are drawn
    one at a time, so realizations with the same seed but different ``L``
    share their leading paths (up to the gain scaling).
    """
    L = config.num_paths if num_paths is None else int(num_paths)
    if L < 1:
        raise ValueError("a channel needs at least one path")
    rng = seed_streams(config, seed)[0]
    draws = rng.random((L, 4))
    psi = np.arccos(1.0 - 2.0 * draws[:, 0])
    phi = -math.pi + 2.0 * math.pi * draws[:, 1]
    # Box-Muller keeps the per-path draw count fixed
    mag = np.sqrt(-np.log1p(-draws[:, 2]))
    g = mag * np.exp(2j * math.pi * draws[:, 3])
    gains = math.sqrt(config.pathloss / L) * g
    return ChannelRealization.from_arrays(psi, phi, gains)


def wire_parameters(config: SystemConfig) -> WireParameters:
    return WireParameters.from_wavelength(config.wavelength, config.dipole_length, config.dipole_radius)


def build_scenario(config: SystemConfig, channel: ChannelRealization, N: int | None = None,
                   theta_max: float | None = None, omnidirectional: bool = False) -> Scenario:
    N = config.N if N is None else int(N)
    wp = wire_parameters(config)
    geom = ElementGeometry.on_x_axis(coupler_positions(config, N), wp.length, wp.radius)
    return Scenario(
        geometry=geom,
        wire=wp,
        channel=channel,
        loads=np.full(N, config.load_impedance),
        cap=SphericalCap(config.theta_max if theta_max is None else theta_max),
        transmit_power=dbm_to_watts(config.transmit_power),
        noise_power=dbm_to_watts(config.noise_power),
        omnidirectional=omnidirectional,
    )


@dataclass
class SchemeRun:
    """One scheme on one seeded scenario."""

    scheme: str
    seed: int
    gain: float
    iterations: int = 0
    wall_time: float = 0.0
    trace: OptimizationTrace | None = None
    detail: dict = field(default_factory=dict)

    def rate(self, snr_scale: float) -> float:
        """Rate at ``P / sigma^2 = snr_scale`` (linear)."""
        return achievable_rate_from_snr(snr_scale * self.gain)


@dataclass
class ExperimentResult:
    """Per-seed rates of one scheme at one sweep point."""

    scheme: str
    seeds: list
    rates: np.ndarray
    iterations: list = field(default_factory=list)
    traces: list = field(default_factory=list)

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        if np.any(self.rates < 0):
            raise ValueError("rates must be nonnegative")

    @property
    def mean_rate(self) -> float:
        return float(np.mean(self.rates))


def _snr_scale(scenario: Scenario) -> float:
    return scenario.transmit_power / scenario.noise_power


def run_rca(scenario: Scenario, params: OptimizerParams, rng) -> SchemeRun:
    t0 = time.perf_counter()
    trace = optimize(scenario, params, rng)
    gain = float(scenario.normalized_gain_many(trace.U_star[None])[0])
    return SchemeRun(RCA, -1, gain, trace.iterations, time.perf_counter() - t0, trace,
                     {"U": trace.U_star, "stop_reason": trace.stop_reason, "init": trace.init_source})


def baseline_fixed_rotation(scenario: Scenario) -> SchemeRun:
    """All couplers parallel to the active dipole, no optimization."""
    t0 = time.perf_counter()
    U = scenario.fixed_axes()
    if not scenario.is_feasible(U):
        raise ConfigurationError("the all-parallel coupler configuration is infeasible")
    gain = float(scenario.normalized_gain_many(U[None])[0])
    return SchemeRun(FIXED, -1, gain, 0, time.perf_counter() - t0, detail={"U": U})


def active_array_geometry(N: int, wp: WireParameters) -> np.ndarray:
    """Centers of ``N + 1`` elements at half-wavelength spacing on the x axis."""
    centers = np.zeros((N + 1, 3))
    centers[:, 0] = 0.5 * wp.wavelength * np.arange(N + 1)
    return centers


def active_array_gain(channel: ChannelRealization, N: int, wp: WireParameters, beamformer: str = "matched",
                      solver=None):
    """Normalized gain and weights of a fully active z-aligned array.

    Every element has an omnidirectional baseband response. ``"matched"``
    uses ``w = conj(h)``; ``"optimal"`` maximizes ``|h^T w|^2 / w^H Re{Z} w``
    with ``w = Re{Z}^-1 conj(h)``. Radiated power accounts for coupling
    through the same impedance model as the coupler antenna.
    """
    centers = active_array_geometry(N, wp)
    axes = np.tile(U0, (N + 1, 1))
    Z = assemble_stack(centers[None], axes[None], wp, solver)[0]
    R = Z.real
    h = math.sqrt(wp.eta / math.pi) * np.exp(1j * wp.wavenumber * (centers @ channel.directions.T)) @ channel.gains
    if beamformer == "matched":
        w = np.conj(h)
    elif beamformer == "optimal":
        w = np.linalg.solve(R, np.conj(h))
    else:
        raise ValueError(f"unknown beamformer {beamformer!r}")
    den = float(np.real(np.conj(w) @ R @ w))
    if den <= 0.0:
        return 0.0, w
    return float(abs(h @ w) ** 2 / den), w


def baseline_active_array(scenario: Scenario, beamformer: str = "matched") -> SchemeRun:
    t0 = time.perf_counter()
    gain, w = active_array_gain(scenario.channel, scenario.n_couplers, scenario.wire, beamformer, scenario.solver)
    return SchemeRun(ACTIVE, -1, gain, 0, time.perf_counter() - t0, detail={"w": w})


def flexible_grid(wp: WireParameters, n: int = FLEX_GRID, side: float = FLEX_REGION) -> np.ndarray:
    """``(n*n, 3)`` candidate centers on a square of ``side`` wavelengths centered on the active dipole."""
    g = np.linspace(-0.5 * side, 0.5 * side, n) * wp.wavelength
    X, Y = np.meshgrid(g, g, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), np.zeros(n * n)], axis=1)


class _FlexibleProblem:
    def __init__(self, scenario: Scenario, grid: np.ndarray):
        self.scenario = scenario
        self.grid = grid
        wp = scenario.wire
        self.min_spacing = 2 * wp.radius + FLEX_MARGIN * wp.wavelength
        self.A = np.exp(1j * wp.wavenumber * (grid @ scenario.channel.directions.T)) @ scenario.channel.gains
        self.h0 = complex(np.sum(scenario.channel.gains))
        self.scale = math.sqrt(wp.eta / math.pi)

    def centers(self, K):
        K = np.asarray(K)
        out = np.zeros((K.shape[0], K.shape[1] + 1, 3))
        out[:, 1:] = self.grid[K]
        return out

    def feasible(self, K):
        C = self.centers(K)
        d = np.linalg.norm(C[:, :, None, :] - C[:, None, :, :], axis=-1)
        M = C.shape[1]
        iu = np.triu_indices(M, 1)
        return np.all(d[:, iu[0], iu[1]] >= self.min_spacing, axis=1)

    def gains(self, K):
        K = np.asarray(K)
        sc = self.scenario
        C = self.centers(K)
        axes = np.broadcast_to(U0, C.shape)
        Z = assemble_stack(C, axes, sc.wire, sc.solver)
        H = np.empty((K.shape[0], K.shape[1] + 1), dtype=complex)
        H[:, 0] = self.h0
        H[:, 1:] = self.A[K]
        num, den = gain_terms_from(Z, self.scale * H, sc.loads)
        return num / den

    def objective(self, K):
        g = self.gains(K)
        with np.errstate(divide="ignore"):
            return np.where(g > 0, np.log(g), -1e300)

    def default_choice(self, xs):
        """Grid points nearest the given x positions, skipping taken or too-close points."""
        chosen = []
        for x in xs:
            order = np.argsort(np.hypot(self.grid[:, 0] - x, self.grid[:, 1]), kind="stable")
            for idx in order:
                trial = np.array([chosen + [int(idx)]])
                if self.feasible(trial)[0]:
                    chosen.append(int(idx))
                    break
        return np.array(chosen, dtype=np.intp)


def baseline_flexible_position(scenario: Scenario, params: OptimizerParams, rng) -> SchemeRun:
    """Stand-in for a movable-coupler scheme: z-aligned couplers placed on a grid.

    Couplers keep the omnidirectional baseband response and move over a
    16 x 16 grid covering a 0.8 x 0.8 wavelength square around the active
    dipole, with centers at least ``2a + lambda/100`` apart. Placement is
    searched with the same cross-entropy machinery as the rotation codebook,
    or exhaustively when the grid has no more combinations than the sampling
    budget. The default placement (grid points nearest the coupler antenna's
    own positions) is always a candidate.
    """
    t0 = time.perf_counter()
    grid = flexible_grid(scenario.wire)
    prob = _FlexibleProblem(scenario, grid)
    N = scenario.n_couplers
    G = grid.shape[0]
    if N == 0:
        gain = float(abs(prob.scale * prob.h0) ** 2 / scenario.solver.z_s.real)
        return SchemeRun(FLEXIBLE, -1, gain, 0, time.perf_counter() - t0)
    best_K, best_val, iters = None, -np.inf, 0
    if G ** N <= params.S_C * params.T_C:
        K = np.array(np.unravel_index(np.arange(G ** N), (G,) * N)).T
        K = K[prob.feasible(K)]
        if K.shape[0]:
            vals = prob.objective(K)
            m = int(np.argmax(vals))
            best_K, best_val = K[m], float(vals[m])
    else:
        state = cross_entropy_search(prob.objective, prob.feasible, N, G, params, rng)
        iters = state.iterations
        if not state.empty:
            best_K, best_val = state.best()
    default = prob.default_choice(coupler_positions_of(scenario))
    if default.size == N:
        val = float(prob.objective(default[None])[0])
        if best_K is None or val > best_val:
            best_K, best_val = default, val
    if best_K is None:
        raise ConfigurationError("no feasible coupler placement on the flexible-position grid")
    gain = float(prob.gains(np.asarray(best_K)[None])[0])
    return SchemeRun(FLEXIBLE, -1, gain, iters, time.perf_counter() - t0,
                     detail={"centers": prob.centers(np.asarray(best_K)[None])[0]})


def coupler_positions_of(scenario: Scenario) -> np.ndarray:
    return scenario.geometry.centers[1:, 0]


def run_scheme(name: str, scenario: Scenario, config: SystemConfig, seed: int) -> SchemeRun:
    """Run ``name`` on ``scenario`` with the seed-derived random streams."""
    _, opt_rng, flex_rng = seed_streams(config, seed)
    if name == RCA:
        run = run_rca(scenario, config.optimizer, opt_rng)
    elif name == FIXED:
        run = baseline_fixed_rotation(scenario)
    elif name == ACTIVE:
        run = baseline_active_array(scenario, config.active_array_beamformer)
    elif name == FLEXIBLE:
        flex = build_scenario(config, scenario.channel, scenario.n_couplers, scenario.cap.theta_max,
                              omnidirectional=True)
        run = baseline_flexible_position(flex, config.optimizer, flex_rng)
    else:
        raise ValueError(f"unknown scheme {name!r}; expected one of {SCHEMES}")
    run.seed = int(seed)
    return run


def beam_directions(psi_deg: float, phi_deg) -> np.ndarray:
    phi = np.deg2rad(np.asarray(phi_deg, dtype=float))
    phi = np.where(phi >= math.pi, phi - 2 * math.pi, phi)
    return path_directions(np.full_like(phi, math.radians(psi_deg)), phi)


def active_array_pattern(w, N: int, wp: WireParameters, psi_deg: float, phi_deg) -> np.ndarray:
    """Normalized power pattern (dB) of the active array with weights ``w``."""
    centers = active_array_geometry(N, wp)
    G = np.exp(1j * wp.wavenumber * (centers @ beam_directions(psi_deg, phi_deg).T))
    p = np.abs(w @ G) ** 2
    with np.errstate(divide="ignore"):
        return 10 * np.log10(p / np.max(p))
