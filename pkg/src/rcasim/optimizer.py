"""Coupler rotation optimization.

A cross-entropy search over a Fibonacci codebook on the rotation cap picks a
feasible starting point, which a conditional-gradient (Frank-Wolfe) ascent then
refines over the continuous caps. Gradients come from finite differences in the
tangent plane of each coupler axis; steps are chosen by Armijo backtracking
that checks physical feasibility before the sufficient-increase test.

The routines only need a *problem* object with

* ``n_couplers``: int
* ``cap``: :class:`~rcasim.geometry.SphericalCap`
* ``objective_many(Us) -> (K,)`` for a stack of axis matrices ``(K, N, 3)``
* ``feasible_many(Us) -> (K,) bool``
* ``fixed_axes() -> (N, 3)``

which :class:`~rcasim.beamforming.Scenario` provides. The optimizer never
evaluates the objective at an infeasible matrix.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigurationError
from .geometry import SphericalCap, tangent_basis

GOLDEN_RATIO = 0.5 * (1.0 + math.sqrt(5.0))


@dataclass(frozen=True)
class OptimizerParams:
    """Step sizes, tolerances and CEM settings.

    Attributes
    ----------
    eps_fd : float
        Finite-difference step along each tangent direction (radians).
    alpha, beta : float
        Armijo sufficient-increase parameter and backtracking shrink factor.
    rho_min : float
        Smallest step tried before refinement stops.
    T_max : int
        Maximum number of refinement iterations.
    eps_stop : float
        Tolerance for both the gap and the relative-change stopping tests.
    N_d, S_C, T_C : int
        Codebook size, samples per CEM iteration and CEM iterations.
    rho_e, tau_C : float
        Elite fraction and smoothing weight of the CEM update.
    """

    eps_fd: float = 1e-4
    alpha: float = 1e-4
    beta: float = 0.5
    rho_min: float = 1e-6
    T_max: int = 200
    eps_stop: float = 1e-6
    N_d: int = 256
    S_C: int = 64
    T_C: int = 20
    rho_e: float = 0.2
    tau_C: float = 0.7

    def __post_init__(self):
        if not self.eps_fd > 0:
            raise ValueError("eps_fd must be positive")
        for name in ("alpha", "beta"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        for name in ("rho_e", "tau_C"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if not 0.0 < self.rho_min <= 1.0:
            raise ValueError("rho_min must lie in (0, 1]")
        if not self.eps_stop >= 0:
            raise ValueError("eps_stop must be nonnegative")
        for name in ("T_max", "S_C", "T_C"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a nonnegative integer")
        if int(self.N_d) != self.N_d or self.N_d < 1:
            raise ValueError("N_d must be a positive integer")

    @classmethod
    def from_mapping(cls, values) -> "OptimizerParams":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigurationError(f"unknown optimizer parameter(s): {', '.join(sorted(unknown))}")
        return cls(**values)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class Codebook:
    codewords: np.ndarray
    cap: SphericalCap

    def __len__(self):
        return self.codewords.shape[0]


def build_codebook(cap: SphericalCap, N_d: int) -> Codebook:
    """Spherical Fibonacci points on ``cap`` (equal-area zenith bands, golden-angle azimuths)."""
    if int(N_d) != N_d or N_d < 1:
        raise ValueError(f"codebook size must be a positive integer, got {N_d!r}")
    i = np.arange(1, int(N_d) + 1, dtype=float)
    cos_t = 1.0 - (i - 0.5) / N_d * (1.0 - cap.c_theta)
    theta = np.arccos(np.clip(cos_t, -1.0, 1.0))
    phi = np.mod(2.0 * math.pi * (i - 1.0) / GOLDEN_RATIO, 2.0 * math.pi)
    local = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1)
    axis, perp = cap.axis, cap.perp
    # local frame (perp, axis x perp, axis) is the identity for the default cap
    frame = np.stack([perp, np.cross(axis, perp), axis], axis=1)
    words = local @ frame.T
    words.setflags(write=False)
    return Codebook(words, cap)


# --- cross-entropy search -------------------------------------------------


@dataclass
class CemState:
    """Sampling distributions and the accumulated feasible pool.

    ``pool_choices[m]`` holds the codeword index picked for every variable by
    pool member ``m``; ``pool_values[m]`` is its objective value.
    """

    pmfs: np.ndarray
    pool_choices: np.ndarray
    pool_values: np.ndarray
    iterations: int = 0
    evaluations: int = 0

    @property
    def empty(self) -> bool:
        return self.pool_values.size == 0

    def best(self) -> tuple[np.ndarray, float]:
        m = int(np.argmax(self.pool_values))
        return self.pool_choices[m], float(self.pool_values[m])


def _elite_count(rho_e: float, n_feasible: int) -> int:
    # rounding guards against 0.2 * 15 = 3.0000000000000004
    return max(1, math.ceil(round(rho_e * n_feasible, 9)))


def _categorical(pmfs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(pmfs, axis=1)
    idx = np.empty(uniforms.shape, dtype=np.intp)
    for n in range(pmfs.shape[0]):
        idx[:, n] = np.searchsorted(cdf[n], uniforms[:, n] * cdf[n, -1], side="right")
    return np.minimum(idx, pmfs.shape[1] - 1)


def cross_entropy_search(evaluate_many, feasible_many, n_vars: int, n_choices: int,
                         params: OptimizerParams, rng: np.random.Generator) -> CemState:
    """Smoothed cross-entropy search over ``n_vars`` categorical variables.

    ``feasible_many(K)`` and ``evaluate_many(K)`` receive a ``(S, n_vars)``
    array of choice indices. Objective values are computed for feasible
    samples only.
    """
    pmfs = np.full((n_vars, n_choices), 1.0 / n_choices)
    pool_c, pool_v = [], []
    state = CemState(pmfs, np.zeros((0, n_vars), dtype=np.intp), np.zeros(0))
    for _ in range(int(params.T_C)):
        # one draw per (candidate, variable), candidate-major
        choices = _categorical(pmfs, rng.random((int(params.S_C), n_vars)))
        feas = np.flatnonzero(np.asarray(feasible_many(choices), dtype=bool))
        state.iterations += 1
        if feas.size == 0:
            continue
        vals = np.asarray(evaluate_many(choices[feas]), dtype=float)
        state.evaluations += feas.size
        pool_c.append(choices[feas])
        pool_v.append(vals)
        order = np.lexsort((np.arange(feas.size), -vals))
        elite = choices[feas[order[:_elite_count(params.rho_e, feas.size)]]]
        freq = np.stack([np.bincount(elite[:, n], minlength=n_choices) for n in range(n_vars)])
        pmfs = (1.0 - params.tau_C) * pmfs + params.tau_C * (freq / elite.shape[0])
        # keep every row an exact-enough simplex despite accumulated rounding
        pmfs /= pmfs.sum(axis=1, keepdims=True)
    state.pmfs = pmfs
    if pool_c:
        state.pool_choices = np.concatenate(pool_c)
        state.pool_values = np.concatenate(pool_v)
    return state


def cem_initialize(problem, params: OptimizerParams, cap: SphericalCap | None = None, seed=None,
                   codebook: Codebook | None = None):
    """Best feasible codebook configuration found by the cross-entropy search.

    Returns ``(U0, state)``; ``U0`` is ``None`` when no feasible sample was
    found and the caller has to fall back.
    """
    cap = cap or problem.cap
    codebook = codebook or build_codebook(cap, params.N_d)
    words = codebook.codewords
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    N = problem.n_couplers
    state = cross_entropy_search(
        lambda K: problem.objective_many(words[K]),
        lambda K: problem.feasible_many(words[K]),
        N, len(codebook), params, rng,
    )
    if state.empty:
        return None, state
    best, _ = state.best()
    return words[best].copy(), state


# --- conditional-gradient refinement ------------------------------------


def cap_retract_many(Y: np.ndarray, cap: SphericalCap) -> np.ndarray:
    """Row-wise cap retraction of an ``(..., 3)`` array."""
    Y = np.asarray(Y, dtype=float)
    ny = np.linalg.norm(Y, axis=-1, keepdims=True)
    Yb = Y / np.where(ny == 0.0, 1.0, ny)
    along = Yb @ cap.axis
    perp = Y - (Y @ cap.axis)[..., None] * cap.axis
    npp = np.linalg.norm(perp, axis=-1, keepdims=True)
    e = np.where(npp > 0.0, perp / np.where(npp == 0.0, 1.0, npp), cap.perp)
    boundary = cap.c_theta * cap.axis + cap.s_theta * e
    out = np.where((along >= cap.c_theta)[..., None], Yb, boundary)
    return np.where(ny == 0.0, cap.axis, out)


def linear_oracle(q, u_current, cap: SphericalCap) -> np.ndarray:
    """Maximizer of ``q . x`` over the cap, in closed form.

    A zero ``q`` keeps ``u_current``. If ``q`` points into the cap its
    direction is the answer; otherwise the maximizer is the boundary point
    aligned with the part of ``q`` orthogonal to the cap axis, or a fixed
    boundary point when that part vanishes.
    """
    q = np.asarray(q, dtype=float)
    nq = np.linalg.norm(q)
    if nq == 0.0:
        return np.array(u_current, dtype=float)
    q_hat = q / nq
    if q_hat @ cap.axis >= cap.c_theta:
        return q_hat
    q_perp = q - (cap.axis @ q) * cap.axis
    npp = np.linalg.norm(q_perp)
    e = q_perp / npp if npp > 0.0 else cap.perp
    return cap.c_theta * cap.axis + cap.s_theta * e


def _fd_trials(U, params: OptimizerParams, cap: SphericalCap):
    """Trial matrices ``(N, 2, 2, N, 3)`` indexed (coupler, basis, sign) and the bases."""
    N = U.shape[0]
    bases = np.empty((N, 2, 3))
    trials = np.broadcast_to(U, (N, 2, 2, N, 3)).copy()
    for n in range(N):
        bases[n] = tangent_basis(U[n])
        for r in range(2):
            for k, sgn in enumerate((1.0, -1.0)):
                trials[n, r, k, n] = cap_retract_many(U[n] + sgn * params.eps_fd * bases[n, r], cap)
    return trials, bases


def _fd_coefficients(phi0, phi_trials, feas, eps):
    """Difference quotients from ``(..., 2)`` trial values (plus, minus) and their feasibility."""
    plus, minus = phi_trials[..., 0], phi_trials[..., 1]
    fp, fm = feas[..., 0], feas[..., 1]
    central = (plus - minus) / (2.0 * eps)
    forward = (plus - phi0) / eps
    backward = (phi0 - minus) / eps
    return np.where(fp & fm, central, np.where(fp, forward, np.where(fm, backward, 0.0)))


def _evaluate_feasible(problem, Us, feas):
    vals = np.zeros(Us.shape[0])
    idx = np.flatnonzero(feas)
    if idx.size:
        vals[idx] = problem.objective_many(Us[idx])
    return vals, idx.size


def fd_gradients(U, problem, params: OptimizerParams, phi0: float | None = None):
    """Finite-difference gradient estimates for every coupler, shape ``(N, 3)``.

    Only fully feasible trial matrices are evaluated. Returns the estimates and
    the number of objective evaluations spent.
    """
    U = np.asarray(U, dtype=float)
    N = U.shape[0]
    if N == 0:
        return np.zeros((0, 3)), 0
    trials, bases = _fd_trials(U, params, problem.cap)
    flat = trials.reshape(4 * N, N, 3)
    feas = np.asarray(problem.feasible_many(flat), dtype=bool)
    vals, n_eval = _evaluate_feasible(problem, flat, feas)
    needs_center = feas.reshape(N, 2, 2).sum(axis=2) == 1
    if phi0 is None and needs_center.any():
        phi0 = float(problem.objective_many(U[None])[0])
        n_eval += 1
    sig = _fd_coefficients(0.0 if phi0 is None else phi0, vals.reshape(N, 2, 2),
                           feas.reshape(N, 2, 2), params.eps_fd)
    return np.einsum("nr,nrk->nk", sig, bases), n_eval


def fd_gradient(U, n: int, problem, params: OptimizerParams, phi0: float | None = None) -> np.ndarray:
    """Finite-difference gradient estimate for coupler ``n`` (0-based)."""
    U = np.asarray(U, dtype=float)
    if not 0 <= n < U.shape[0]:
        raise ValueError(f"coupler index {n} out of range")
    trials, bases = _fd_trials(U, params, problem.cap)
    flat = trials[n].reshape(4, *U.shape)
    feas = np.asarray(problem.feasible_many(flat), dtype=bool)
    vals, _ = _evaluate_feasible(problem, flat, feas)
    if phi0 is None and feas.reshape(2, 2).sum(axis=1).min() == 1:
        phi0 = float(problem.objective_many(U[None])[0])
    sig = _fd_coefficients(0.0 if phi0 is None else phi0, vals.reshape(2, 2), feas.reshape(2, 2),
                           params.eps_fd)
    return sig @ bases[n]


def project_tangent(g, U) -> np.ndarray:
    """Row-wise projection of ``g`` onto the tangent planes at the rows of ``U``."""
    g = np.asarray(g, dtype=float)
    U = np.asarray(U, dtype=float)
    return g - np.sum(g * U, axis=-1, keepdims=True) * U


@dataclass(frozen=True)
class IterationRecord:
    """One refinement iteration.

    ``step`` is the accepted stepsize, or ``None`` when the iteration ended
    the run without moving.
    """

    iteration: int
    objective: float
    gap: float
    step: float | None
    feasible: bool
    evaluations: int


@dataclass
class OptimizationTrace:
    """Outcome of a refinement or full optimization run."""

    U_init: np.ndarray
    objective_init: float
    records: list = field(default_factory=list)
    U_star: np.ndarray | None = None
    objective_star: float | None = None
    stop_reason: str = ""
    wall_time: float = 0.0
    evaluations: int = 0
    init_source: str = "given"
    cem: CemState | None = None

    @property
    def objectives(self) -> np.ndarray:
        """Accepted objective values, starting with the initial point."""
        acc = [r.objective for r in self.records if r.step is not None]
        return np.array([self.objective_init, *acc])

    @property
    def iterations(self) -> int:
        """Number of accepted refinement steps."""
        return sum(r.step is not None for r in self.records)

    @property
    def converged(self) -> bool:
        """True when a stopping test fired before the iteration cap."""
        return self.stop_reason in ("gap", "step", "relative_change", "no_couplers")


def _check_start(U0, problem) -> np.ndarray:
    U0 = np.array(U0, dtype=float).reshape(problem.n_couplers, 3)
    if not bool(np.asarray(problem.feasible_many(U0[None]))[0]):
        raise ValueError("refinement must start from a feasible axis matrix")
    return U0


def refine(U0, problem, params: OptimizerParams, phi0: float | None = None) -> OptimizationTrace:
    """Conditional-gradient ascent over the caps from a feasible ``U0``."""
    t_start = time.perf_counter()
    U = _check_start(U0, problem)
    cap = problem.cap
    n_eval = 0
    if phi0 is None:
        phi0 = float(problem.objective_many(U[None])[0])
        n_eval += 1
    trace = OptimizationTrace(U_init=U.copy(), objective_init=phi0)
    phi = phi0
    N = U.shape[0]
    reason = "max_iter"
    if N == 0:
        reason = "no_couplers"
    t = 0
    while N and t < params.T_max:
        g, used = fd_gradients(U, problem, params, phi)
        n_eval += used
        q = project_tangent(g, U)
        S = np.stack([linear_oracle(q[n], U[n], cap) for n in range(N)])
        D = S - U
        gap = float(np.sum(q * D))
        if gap <= params.eps_stop:
            trace.records.append(IterationRecord(t, phi, gap, None, True, used))
            reason = "gap"
            break
        rho = 1.0
        accepted = None
        while rho >= params.rho_min:
            cand = cap_retract_many(U + rho * D, cap)
            if bool(np.asarray(problem.feasible_many(cand[None]))[0]):
                val = float(problem.objective_many(cand[None])[0])
                n_eval += 1
                used += 1
                if val >= phi + params.alpha * rho * gap:
                    accepted = (cand, val)
                    break
            rho *= params.beta
        if accepted is None:
            trace.records.append(IterationRecord(t, phi, gap, None, True, used))
            reason = "step"
            break
        U, new_phi = accepted
        t += 1
        trace.records.append(IterationRecord(t, new_phi, gap, rho, True, used))
        prev, phi = phi, new_phi
        if abs(phi - prev) / max(abs(prev), 1.0) <= params.eps_stop:
            reason = "relative_change"
            break
    trace.U_star = U
    trace.objective_star = phi
    trace.stop_reason = reason
    trace.evaluations = n_eval
    trace.wall_time = time.perf_counter() - t_start
    return trace


def optimize(problem, params: OptimizerParams | None = None, seed=None) -> OptimizationTrace:
    """Codebook cross-entropy initialization followed by conditional-gradient refinement.

    The refinement starts from whichever of the best codebook sample and the
    all-parallel configuration has the larger objective, so the result is never
    worse than leaving every coupler parallel to the active dipole.
    """
    params = params or OptimizerParams()
    t_start = time.perf_counter()
    N = problem.n_couplers
    U_fb = np.asarray(problem.fixed_axes(), dtype=float).reshape(N, 3)
    if N == 0:
        trace = refine(U_fb, problem, params)
        trace.init_source = "fallback"
        return trace
    U_cem, state = cem_initialize(problem, params, problem.cap, seed)
    fb_ok = bool(np.asarray(problem.feasible_many(U_fb[None]))[0])
    candidates = []
    if U_cem is not None:
        candidates.append(("cem", U_cem, state.best()[1]))
    if fb_ok:
        candidates.append(("fallback", U_fb, float(problem.objective_many(U_fb[None])[0])))
    if not candidates:
        raise ConfigurationError("no feasible codebook sample and the fixed-axis fallback is infeasible")
    # max() keeps the first entry on ties, i.e. the codebook point
    source, U0, phi0 = max(candidates, key=lambda c: c[2])
    trace = refine(U0, problem, params, phi0)
    trace.init_source = source
    trace.cem = state
    trace.evaluations += state.evaluations + int(fb_ok)
    trace.wall_time = time.perf_counter() - t_start
    return trace
