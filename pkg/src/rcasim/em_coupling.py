"""Self and mutual impedances of thin-wire dipoles and the transmit impedance matrix.

Mutual impedances use the induced-EMF double integral for arbitrarily
oriented (skew) dipoles with sinusoidal currents. The production solver does
the integral along the source wire in closed form and integrates the rest with
panel-adaptive Gauss-Legendre rules; a direct tensor-product quadrature of the
double integral is kept alongside for cross-checking.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import U0, ElementGeometry, as_axis_matrix, closest_segment_params, pair_indices
from .numerics import EULER_GAMMA, cosine_integral, gauss_legendre, sine_integral

FREE_SPACE_IMPEDANCE = 376.7303

DEFAULT_ORDER = 12
DEFAULT_REL_TOL = 1e-10
MAX_DEPTH = 24
_CHUNK_POINTS = 200_000
_ROUNDOFF = 1e-15
_MAX_PANELS = 50_000
# below this rho^2 / d^2 the normal-field term uses its on-axis expansion
_AXIS_REL = 1e-8


@dataclass(frozen=True)
class WireParameters:
    """Wavenumber ``k`` (rad/m), dipole length ``D`` and radius ``a`` (m), wave impedance ``eta``."""

    wavenumber: float
    length: float
    radius: float
    eta: float = FREE_SPACE_IMPEDANCE

    def __post_init__(self):
        if not self.wavenumber > 0:
            raise ValueError("wavenumber must be positive")
        if not 0 < self.radius < self.length / 10:
            raise ValueError("wire radius must satisfy 0 < a < D/10")
        if not self.eta > 0:
            raise ValueError("wave impedance must be positive")

    @classmethod
    def from_wavelength(cls, wavelength, length_frac=0.5, radius_frac=1 / 500, eta=FREE_SPACE_IMPEDANCE):
        return cls(2 * math.pi / wavelength, length_frac * wavelength, radius_frac * wavelength, eta)

    @property
    def wavelength(self) -> float:
        return 2 * math.pi / self.wavenumber

    @property
    def half_length(self) -> float:
        return 0.5 * self.length


def _feed_sine(wp: WireParameters) -> float:
    sk = math.sin(0.5 * wp.wavenumber * wp.length)
    if abs(sk) < 1e-12:
        raise ValueError(
            "sin(kD/2) vanishes: the sinusoidal current model has no feed current at this dipole length"
        )
    return sk


def self_impedance(wp: WireParameters) -> complex:
    """Input impedance of an isolated center-fed dipole (classical induced-EMF result)."""
    _feed_sine(wp)
    k, D, a, eta = wp.wavenumber, wp.length, wp.radius, wp.eta
    kD = k * D
    C = EULER_GAMMA
    si1, si2 = sine_integral(kD), sine_integral(2 * kD)
    ci1, ci2 = cosine_integral(kD), cosine_integral(2 * kD)
    re = eta / (2 * math.pi) * (
        C + math.log(kD) - ci1
        + 0.5 * math.sin(kD) * (si2 - 2 * si1)
        + 0.5 * math.cos(kD) * (C + math.log(kD / 2) + ci2 - 2 * ci1)
    )
    im = eta / (4 * math.pi) * (
        2 * si1
        + math.cos(kD) * (2 * si1 - si2)
        - math.sin(kD) * (2 * ci1 - ci2 - cosine_integral(2 * k * a * a / D))
    )
    return complex(re, im)


def _profile(s, k: float, h: float, sk: float):
    arg = k * (h - np.abs(s))
    return np.sin(arg) / sk, -k * np.sign(s) * np.cos(arg) / sk


def current_profile(s, wp: WireParameters):
    """Normalized current ``I(s)`` and its derivative ``I'(s)`` along a dipole.

    ``I'(0)`` is reported as 0. Accepts scalars or arrays.
    """
    s_arr = np.asarray(s, dtype=float)
    h = wp.half_length
    if np.any(np.abs(s_arr) > h * (1 + 1e-12)):
        raise ValueError(f"axial position outside [-D/2, D/2] = [{-h}, {h}]")
    I, Ip = _profile(s_arr, wp.wavenumber, h, _feed_sine(wp))
    if np.ndim(s) == 0:
        return float(I), float(Ip)
    return I, Ip


class ImpedanceMatrix:
    """Symmetric ``(N+1, N+1)`` transmit impedance matrix with block views.

    Ports are ordered active antenna first, then couplers.
    """

    def __init__(self, entries):
        entries = np.array(entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] < 1:
            raise ValueError("impedance matrix must be square and non-empty")
        entries.setflags(write=False)
        self.entries = entries

    def __repr__(self):
        return f"ImpedanceMatrix(N={self.n_couplers})"

    @property
    def n_couplers(self) -> int:
        return self.entries.shape[0] - 1

    @property
    def z_s(self) -> complex:
        return complex(self.entries[0, 0])

    @property
    def z_bar(self) -> np.ndarray:
        """Active-to-coupler mutual impedances, length N."""
        return self.entries[1:, 0]

    @property
    def Z_E(self) -> np.ndarray:
        """Coupler block, ``(N, N)``."""
        return self.entries[1:, 1:]


class _PairCache:
    """LRU memo of pair impedances keyed on the exact pair geometry ``(dp, u, v)``."""

    def __init__(self, wp: WireParameters, cache_size: int):
        self.wp = wp
        self.cache_size = cache_size
        self._cache: OrderedDict = OrderedDict()
        self.hits = 0
        self.misses = 0
        self.z_s = self_impedance(wp)

    def clear_cache(self):
        self._cache.clear()
        self.hits = self.misses = 0

    def compute(self, dp, u, v) -> np.ndarray:
        raise NotImplementedError

    def pair_values(self, dp, u, v) -> np.ndarray:
        """Cached :meth:`compute`."""
        dp = np.atleast_2d(np.asarray(dp, dtype=float))
        u = np.atleast_2d(np.asarray(u, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        out = np.empty(dp.shape[0], dtype=complex)
        if self.cache_size <= 0:
            out[:] = self.compute(dp, u, v)
            return out
        packed = np.ascontiguousarray(np.concatenate([dp, u, v], axis=1))
        todo: dict[bytes, list[int]] = {}
        cache = self._cache
        for q in range(packed.shape[0]):
            key = packed[q].tobytes()
            hit = cache.get(key)
            if hit is not None:
                cache.move_to_end(key)
                out[q] = hit
                self.hits += 1
            else:
                todo.setdefault(key, []).append(q)
        if todo:
            first = [idx[0] for idx in todo.values()]
            self.misses += len(first)
            vals = self.compute(dp[first], u[first], v[first])
            for (key, idx), val in zip(todo.items(), vals):
                out[idx] = val
                cache[key] = val
            while len(cache) > self.cache_size:
                cache.popitem(last=False)
        return out


def _green(R, k):
    return (np.cos(k * R) - 1j * np.sin(k * R)) / R


def _line_integrand(s, dp, u, v, k, h, sk):
    """``I(s) * F(s)`` where ``F`` is the inner (along-``t``) integral in closed form.

    ``s`` is ``(P, m)``; ``dp``, ``u``, ``v`` are ``(P, 3)``. For a sinusoidal
    current on wire ``j`` the inner integral reduces to contributions of its two
    ends and its center; the part along the component of ``r`` normal to wire
    ``j`` carries a ``1/rho^2`` factor whose numerator vanishes on the wire's
    axis line, so it switches to the leading term of its expansion there.
    """
    c = math.cos(k * h)
    # componentwise on purpose: every value depends only on its own pair,
    # whatever else shares the batch
    r = [dp[:, i, None] + s * u[:, i, None] for i in range(3)]
    z = r[0] * v[:, 0, None] + r[1] * v[:, 1, None] + r[2] * v[:, 2, None]
    rv = [r[i] - z * v[:, i, None] for i in range(3)]
    rho2 = rv[0] * rv[0] + rv[1] * rv[1] + rv[2] * rv[2]
    u_rho = rv[0] * u[:, 0, None] + rv[1] * u[:, 1, None] + rv[2] * u[:, 2, None]
    b = (u[:, 0] * v[:, 0] + u[:, 1] * v[:, 1] + u[:, 2] * v[:, 2])[:, None]
    d1, d2 = z - h, z + h
    R1 = np.sqrt(d1 * d1 + rho2)
    R2 = np.sqrt(d2 * d2 + rho2)
    R0 = np.sqrt(z * z + rho2)
    G1, G2, G0 = _green(R1, k), _green(R2, k), _green(R0, k)
    axial = b * (G1 + G2 - 2 * c * G0)
    small = rho2 < _AXIS_REL * np.minimum(np.minimum(d1 * d1, d2 * d2), z * z)
    safe = np.where(small, 1.0, rho2)
    ratio = (d1 * G1 + d2 * G2 - 2 * c * z * G0) / safe
    if small.any():
        # d/d(rho^2) of d * G(sqrt(d^2 + rho^2)) at rho = 0, summed over the three terms
        def lead(d, w):
            a = np.abs(np.where(small, d, 1.0))
            return w * d * -(1 + 1j * k * a) * np.exp(-1j * k * a) / (2 * a ** 3)
        ratio = np.where(small, lead(d1, 1.0) + lead(d2, 1.0) + lead(z, -2 * c), ratio)
    I = np.sin(k * (h - np.abs(s))) / sk
    return I * (k / sk) * (axial - u_rho * ratio)


def _split2(panels):
    mid = 0.5 * (panels[:, 0] + panels[:, 1])
    out = np.empty((panels.shape[0], 2, 2))
    out[:, 0, 0], out[:, 0, 1] = panels[:, 0], mid
    out[:, 1, 0], out[:, 1, 1] = mid, panels[:, 1]
    return out.reshape(-1, 2)


class MutualImpedanceSolver(_PairCache):
    """Batched mutual-impedance evaluator with a memo cache.

    The inner integral of the induced-EMF formula over the source wire has a
    closed form for sinusoidal currents, leaving a single integral along the
    observation wire. That integrand is smooth except near the points of the
    observation wire closest to the source wire and to the source's ends and
    feed, and at ``s = 0``; those points become panel breakpoints. Panels are
    bisected until each ``order``-point Gauss-Legendre sum agrees with the sum
    over its halves to ``rel_tol`` (area-weighted). All pairs of a batch are
    refined together, one vectorized pass per level.
    """

    def __init__(self, wp: WireParameters, order: int = DEFAULT_ORDER, rel_tol: float = DEFAULT_REL_TOL,
                 cache_size: int = 200_000):
        super().__init__(wp, cache_size)
        _feed_sine(wp)
        self.order = order
        self.rule = gauss_legendre(order)
        self.rel_tol = rel_tol
        self.panel_count = 0

    def _sums(self, panels, owner, dp, u, v):
        wp = self.wp
        k, h, sk = wp.wavenumber, wp.half_length, _feed_sine(wp)
        x, w = self.rule.nodes, self.rule.weights
        out = np.empty(panels.shape[0], dtype=complex)
        chunk = max(1, _CHUNK_POINTS // self.rule.order)
        for c0 in range(0, panels.shape[0], chunk):
            p = panels[c0:c0 + chunk]
            o = owner[c0:c0 + chunk]
            half = 0.5 * (p[:, 1] - p[:, 0])
            s = (0.5 * (p[:, 1] + p[:, 0]))[:, None] + half[:, None] * x
            f = _line_integrand(s, dp[o], u[o], v[o], k, h, sk)
            out[c0:c0 + chunk] = half * np.sum(f * w, axis=1)
        return out

    def _initial_panels(self, dp, u, v):
        h = self.wp.half_length
        K = dp.shape[0]
        s_star, _, _ = closest_segment_params(dp, u, v, h)
        b = np.sum(u * v, axis=1)
        cu = np.sum(u * dp, axis=1)
        # projections of the source ends and feed onto the observation wire
        proj = -cu[:, None] + np.array([h, -h, 0.0])[None, :] * b[:, None]
        edges = np.concatenate([np.tile([-h, 0.0, h], (K, 1)), s_star[:, None], np.clip(proj, -h, h)], axis=1)
        edges = np.sort(edges, axis=1)
        lo, hi = edges[:, :-1], edges[:, 1:]
        keep = hi - lo > 1e-9 * h
        owner = np.broadcast_to(np.arange(K)[:, None], lo.shape)[keep]
        return np.stack([lo[keep], hi[keep]], axis=1), owner

    def compute(self, dp, u, v, rel_tol: float | None = None) -> np.ndarray:
        """Mutual impedances of wire pairs, uncached.

        ``dp = p_i - p_j``, ``u = u_i``, ``v = u_j``; each ``(K, 3)``.
        """
        dp = np.atleast_2d(np.asarray(dp, dtype=float))
        u = np.atleast_2d(np.asarray(u, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        K = dp.shape[0]
        if K == 0:
            return np.zeros(0, dtype=complex)
        rel_tol = self.rel_tol if rel_tol is None else rel_tol
        wp = self.wp
        panels, owner = self._initial_panels(dp, u, v)
        coarse = self._sums(panels, owner, dp, u, v)
        scale = np.zeros(K)
        np.add.at(scale, owner, np.abs(coarse))
        scale = np.maximum(scale, 1e-300)
        total = np.zeros(K, dtype=complex)
        full = 2 * wp.half_length
        for depth in range(MAX_DEPTH + 1):
            children = _split2(panels)
            child_owner = np.repeat(owner, 2)
            fine2 = self._sums(children, child_owner, dp, u, v).reshape(-1, 2)
            fine = fine2.sum(axis=1)
            frac = (panels[:, 1] - panels[:, 0]) / full
            err = np.abs(fine - coarse)
            ok = (err <= rel_tol * scale[owner] * frac) | (err <= _ROUNDOFF * scale[owner])
            if depth == MAX_DEPTH or panels.shape[0] > _MAX_PANELS:
                ok[:] = True
            np.add.at(total, owner[ok], fine[ok])
            keep = ~ok
            if not keep.any():
                break
            panels = children.reshape(-1, 2, 2)[keep].reshape(-1, 2)
            owner = child_owner.reshape(-1, 2)[keep].reshape(-1)
            coarse = fine2[keep].reshape(-1)
            self.panel_count += panels.shape[0]
        return 1j * wp.eta / (4 * math.pi * wp.wavenumber) * total


def _panel_sums(k, h, sk, dp2, cu, cv, dot, boxes, rule):
    """Tensor Gauss-Legendre sums of the induced-EMF kernel over rectangles.

    ``boxes`` is ``(P, 4)`` = ``(s0, s1, t0, t1)``; the geometric scalars are
    per panel: ``dp2 = |dp|^2``, ``cu = u.dp``, ``cv = v.dp``, ``dot = u.v``.
    """
    x, w = rule.nodes, rule.weights
    hs = 0.5 * (boxes[:, 1] - boxes[:, 0])
    ht = 0.5 * (boxes[:, 3] - boxes[:, 2])
    S = (0.5 * (boxes[:, 1] + boxes[:, 0]))[:, None] + hs[:, None] * x
    T = (0.5 * (boxes[:, 3] + boxes[:, 2]))[:, None] + ht[:, None] * x
    Is, Ips = _profile(S, k, h, sk)
    It, Ipt = _profile(T, k, h, sk)
    Sg, Tg = S[:, :, None], T[:, None, :]
    # |dp + s u - t v|^2 expanded in the panel scalars
    R2 = dp2[:, None, None] + Sg * Sg + Tg * Tg + 2 * Sg * cu[:, None, None] - 2 * Tg * cv[:, None, None]
    R2 -= 2 * dot[:, None, None] * Sg * Tg
    R = np.sqrt(np.maximum(R2, 0.0))
    amp = (k * k * dot)[:, None, None] * Is[:, :, None] * It[:, None, :] - Ips[:, :, None] * Ipt[:, None, :]
    kern = amp * (np.cos(k * R) - 1j * np.sin(k * R)) / R
    return np.einsum("p,i,pij,j,p->p", hs, w, kern, w, ht)


def _split4(boxes):
    s0, s1, t0, t1 = boxes.T
    sm, tm = 0.5 * (s0 + s1), 0.5 * (t0 + t1)
    out = np.empty((boxes.shape[0], 4, 4))
    out[:, 0] = np.stack([s0, sm, t0, tm], axis=1)
    out[:, 1] = np.stack([sm, s1, t0, tm], axis=1)
    out[:, 2] = np.stack([s0, sm, tm, t1], axis=1)
    out[:, 3] = np.stack([sm, s1, tm, t1], axis=1)
    return out.reshape(-1, 4)


class DoubleIntegralSolver(_PairCache):
    """Direct tensor-product quadrature of the induced-EMF double integral.

    Much slower than :class:`MutualImpedanceSolver` and kept as an independent
    cross-check. Well separated pairs use a fixed ``order``-point rule on each
    quadrant of ``[-D/2, D/2]^2``; pairs closer than ``near_factor * D`` get
    breakpoints at their closest-approach parameters and quadtree refinement.
    """

    def __init__(self, wp: WireParameters, order: int = 16, rel_tol: float = 1e-10,
                 near_factor: float = 0.2, panel_order: int = 12, cache_size: int = 0):
        super().__init__(wp, cache_size)
        self.order = order
        self.rule = gauss_legendre(order)
        self.panel_rule = gauss_legendre(panel_order)
        self.rel_tol = rel_tol
        self.near_factor = near_factor
        self.panel_count = 0
        h = wp.half_length
        self._quadrants = np.array([[-h, 0, -h, 0], [-h, 0, 0, h], [0, h, -h, 0], [0, h, 0, h]], dtype=float)

    def _sums(self, scal, boxes, owner, rule):
        wp = self.wp
        k, h, sk = wp.wavenumber, wp.half_length, _feed_sine(wp)
        chunk = max(1, _CHUNK_POINTS // rule.order ** 2)
        out = np.empty(boxes.shape[0], dtype=complex)
        for c0 in range(0, boxes.shape[0], chunk):
            sc = scal[owner[c0:c0 + chunk]]
            out[c0:c0 + chunk] = _panel_sums(k, h, sk, sc[:, 0], sc[:, 1], sc[:, 2], sc[:, 3],
                                             boxes[c0:c0 + chunk], rule)
        return out

    def _near_boxes(self, s_star, t_star):
        h = self.wp.half_length
        boxes, owner = [], []
        for p in range(s_star.size):
            edges = []
            for star in (s_star[p], t_star[p]):
                e = np.unique(np.array([-h, 0.0, h, star]))
                edges.append(e[np.concatenate([[True], np.diff(e) > 1e-9 * h])])
            for a0, a1 in zip(edges[0][:-1], edges[0][1:]):
                for b0, b1 in zip(edges[1][:-1], edges[1][1:]):
                    boxes.append((a0, a1, b0, b1))
                    owner.append(p)
        return np.array(boxes, dtype=float), np.array(owner, dtype=np.intp)

    def _adaptive(self, scal, s_star, t_star, rel_tol):
        K = scal.shape[0]
        rule = self.panel_rule
        full_area = (2 * self.wp.half_length) ** 2
        boxes, owner = self._near_boxes(s_star, t_star)
        coarse = self._sums(scal, boxes, owner, rule)
        scale = np.zeros(K)
        np.add.at(scale, owner, np.abs(coarse))
        scale = np.maximum(scale, 1e-300)
        total = np.zeros(K, dtype=complex)
        for depth in range(MAX_DEPTH + 1):
            children = _split4(boxes)
            child_owner = np.repeat(owner, 4)
            fine4 = self._sums(scal, children, child_owner, rule).reshape(-1, 4)
            fine = fine4.sum(axis=1)
            area = (boxes[:, 1] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 2]) / full_area
            err = np.abs(fine - coarse)
            # area-weighted share of the tolerance, floored at double roundoff
            ok = (err <= rel_tol * scale[owner] * area) | (err <= _ROUNDOFF * scale[owner])
            if depth == MAX_DEPTH or boxes.shape[0] > _MAX_PANELS:
                ok[:] = True
            np.add.at(total, owner[ok], fine[ok])
            keep = ~ok
            if not keep.any():
                break
            boxes = children.reshape(-1, 4, 4)[keep].reshape(-1, 4)
            owner = child_owner.reshape(-1, 4)[keep].reshape(-1)
            coarse = fine4[keep].reshape(-1)
            self.panel_count += boxes.shape[0]
        return total

    def compute(self, dp, u, v, rel_tol: float | None = None) -> np.ndarray:
        dp = np.atleast_2d(np.asarray(dp, dtype=float))
        u = np.atleast_2d(np.asarray(u, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        K = dp.shape[0]
        if K == 0:
            return np.zeros(0, dtype=complex)
        rel_tol = self.rel_tol if rel_tol is None else rel_tol
        wp = self.wp
        scal = np.stack([np.sum(dp * dp, 1), np.sum(u * dp, 1), np.sum(v * dp, 1), np.sum(u * v, 1)], axis=1)
        s_star, t_star, dist = closest_segment_params(dp, u, v, wp.half_length)
        near = dist < self.near_factor * wp.length
        total = np.empty(K, dtype=complex)
        far = np.flatnonzero(~near)
        if far.size:
            boxes = np.tile(self._quadrants, (far.size, 1))
            owner = np.repeat(np.arange(far.size), 4)
            total[far] = self._sums(scal[far], boxes, owner, self.rule).reshape(-1, 4).sum(axis=1)
        close = np.flatnonzero(near)
        if close.size:
            total[close] = self._adaptive(scal[close], s_star[close], t_star[close], rel_tol)
        return 1j * wp.eta / (4 * math.pi * wp.wavenumber) * total


@lru_cache(maxsize=16)
def default_solver(wp: WireParameters) -> MutualImpedanceSolver:
    return MutualImpedanceSolver(wp)


def mutual_impedance(i: int, j: int, U, geom: ElementGeometry, wp: WireParameters,
                     solver: MutualImpedanceSolver | None = None) -> complex:
    """Mutual impedance between elements ``i`` and ``j`` (0 is the active dipole)."""
    if i == j:
        raise ValueError("mutual impedance needs i != j; use self_impedance for the diagonal")
    axes = geom.axes(U)
    n = axes.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"element index out of range [0, {n - 1}]")
    dp = geom.centers[i] - geom.centers[j]
    _, _, dist = closest_segment_params(dp, axes[i], axes[j], wp.half_length)
    if dist < 2.0 * geom.radius:
        raise ValueError(f"wires intersect (axis distance {float(dist):.3e} m < 2a = {2 * geom.radius:.3e} m)")
    solver = solver or default_solver(wp)
    return complex(solver.pair_values(dp, axes[i], axes[j])[0])


def assemble_stack(centers, axes, wp: WireParameters, solver: MutualImpedanceSolver | None = None) -> np.ndarray:
    """Impedance matrices for stacks of element centers and axes, both ``(K, M, 3)``.

    Every element is a dipole with the parameters ``wp``; the diagonal is the
    isolated self-impedance. Raises ``ValueError`` if any two wires come closer
    than ``2a``.
    """
    solver = solver or default_solver(wp)
    centers = np.asarray(centers, dtype=float)
    axes = np.asarray(axes, dtype=float)
    K, M = axes.shape[0], axes.shape[1]
    Z = np.zeros((K, M, M), dtype=complex)
    idx = np.arange(M)
    Z[:, idx, idx] = solver.z_s
    if M < 2:
        return Z
    ii, jj = pair_indices(M)
    dp = np.broadcast_to(centers[:, ii] - centers[:, jj], (K, ii.size, 3)).reshape(-1, 3)
    ua = axes[:, ii].reshape(-1, 3)
    va = axes[:, jj].reshape(-1, 3)
    _, _, dist = closest_segment_params(dp, ua, va, wp.half_length)
    if np.any(dist < 2.0 * wp.radius):
        raise ValueError(
            f"wires intersect (axis distance {float(np.min(dist)):.3e} m < 2a = {2 * wp.radius:.3e} m)"
        )
    vals = solver.pair_values(dp, ua, va).reshape(K, ii.size)
    Z[:, ii, jj] = vals
    Z[:, jj, ii] = vals
    return Z


def assemble_many(Us, geom: ElementGeometry, wp: WireParameters,
                  solver: MutualImpedanceSolver | None = None) -> np.ndarray:
    """Impedance matrices for a stack of axis matrices, ``(K, N+1, N+1)``.

    Uncached pair values across the whole stack are integrated in one batch.
    """
    Us = np.asarray(Us, dtype=float)
    if Us.ndim == 2:
        Us = Us[None]
    K, N = Us.shape[0], geom.n_couplers
    if Us.shape[1:] != (N, 3):
        raise ValueError(f"axis matrices must have shape (K, {N}, 3), got {Us.shape}")
    axes = np.concatenate([np.broadcast_to(U0, (K, 1, 3)), Us], axis=1)
    return assemble_stack(geom.centers[None], axes, wp, solver)


def assemble_impedance_matrix(U, geom: ElementGeometry, wp: WireParameters,
                              solver: MutualImpedanceSolver | None = None) -> ImpedanceMatrix:
    """Transmit impedance matrix for one axis matrix ``U``."""
    U = as_axis_matrix(U, geom.n_couplers)
    return ImpedanceMatrix(assemble_many(U[None], geom, wp, solver)[0])


def certify_quadrature(Us, geom: ElementGeometry, wp: WireParameters, order: int = DEFAULT_ORDER,
                       rel_tol: float = DEFAULT_REL_TOL) -> float:
    """Largest relative change of any mutual impedance when the panel order is doubled."""
    base = MutualImpedanceSolver(wp, order=order, rel_tol=rel_tol, cache_size=0)
    fine = MutualImpedanceSolver(wp, order=2 * order, rel_tol=rel_tol, cache_size=0)
    Za = assemble_many(Us, geom, wp, base)
    Zb = assemble_many(Us, geom, wp, fine)
    off = ~np.eye(geom.n_couplers + 1, dtype=bool)
    if not off.any():
        return 0.0
    a, b = Za[:, off], Zb[:, off]
    return float(np.max(np.abs(a - b) / np.abs(b)))
