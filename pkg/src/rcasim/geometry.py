"""Axis parameterization, spherical caps and the non-intersection test.

Conventions
-----------
A rotation axis matrix ``U`` is an ``(N, 3)`` array whose row ``n`` is the unit
axis of coupler ``n + 1``. Element 0 is the fixed active dipole along
``U0 = (0, 0, 1)``; :meth:`ElementGeometry.axes` stacks it in front of ``U``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

U0 = np.array([0.0, 0.0, 1.0])
B_PERP = np.array([1.0, 0.0, 0.0])

CAP_TOL = 1e-12
PARALLEL_TOL = 1e-12


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def axis_from_angles(theta_z: float, theta_a: float) -> np.ndarray:
    """Unit axis with zenith ``theta_z`` in [0, pi] and azimuth ``theta_a`` in [-pi, pi)."""
    if not 0.0 <= theta_z <= math.pi:
        raise ValueError(f"zenith angle must lie in [0, pi], got {theta_z!r}")
    if not -math.pi <= theta_a < math.pi:
        raise ValueError(f"azimuth angle must lie in [-pi, pi), got {theta_a!r}")
    st = math.sin(theta_z)
    return np.array([st * math.cos(theta_a), st * math.sin(theta_a), math.cos(theta_z)])


def angles_from_axis(u) -> tuple[float, float]:
    """Inverse of :func:`axis_from_angles` (azimuth wrapped into [-pi, pi))."""
    u = np.asarray(u, dtype=float)
    theta_z = math.acos(min(1.0, max(-1.0, u[2])))
    theta_a = math.atan2(u[1], u[0])
    if theta_a >= math.pi:
        theta_a -= 2.0 * math.pi
    return theta_z, theta_a


@dataclass(frozen=True)
class SphericalCap:
    """Unit vectors within ``theta_max`` of ``axis``."""

    theta_max: float
    axis: np.ndarray = field(default_factory=lambda: U0.copy())
    perp: np.ndarray = field(default_factory=lambda: B_PERP.copy())

    def __post_init__(self):
        if not 0.0 < self.theta_max <= math.pi:
            raise ValueError(f"theta_max must lie in (0, pi], got {self.theta_max!r}")
        axis = np.asarray(self.axis, dtype=float)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError("cap axis must be a unit vector")
        perp = np.asarray(self.perp, dtype=float)
        if abs(np.linalg.norm(perp) - 1.0) > 1e-12 or abs(perp @ axis) > 1e-12:
            raise ValueError("perp must be a unit vector orthogonal to the cap axis")
        object.__setattr__(self, "axis", _readonly(axis))
        object.__setattr__(self, "perp", _readonly(perp))

    @property
    def c_theta(self) -> float:
        return math.cos(self.theta_max)

    @property
    def s_theta(self) -> float:
        return math.sin(self.theta_max)

    def contains(self, x, tol: float = CAP_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(abs(np.linalg.norm(x) - 1.0) <= 1e-9 and self.axis @ x >= self.c_theta - tol)

    def contains_all(self, X, tol: float = CAP_TOL) -> bool:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.size == 0:
            return True
        norms_ok = np.all(np.abs(np.linalg.norm(X, axis=1) - 1.0) <= 1e-9)
        return bool(norms_ok and np.all(X @ self.axis >= self.c_theta - tol))

    def boundary_point(self, direction) -> np.ndarray:
        """Cap-boundary point whose component orthogonal to the axis points along ``direction``.

        Falls back to the fixed ``perp`` vector when ``direction`` has no
        orthogonal component.
        """
        direction = np.asarray(direction, dtype=float)
        d_perp = direction - (self.axis @ direction) * self.axis
        n = np.linalg.norm(d_perp)
        e = d_perp / n if n > 0.0 else self.perp
        return self.c_theta * self.axis + self.s_theta * e


def cap_retract(y, cap: SphericalCap) -> np.ndarray:
    """Map any 3-vector to a member of ``cap``.

    Zero goes to the cap axis, a normalized vector already inside the cap is
    returned as is, and anything else lands on the boundary circle keeping
    the direction of its component orthogonal to the axis.
    """
    y = np.asarray(y, dtype=float)
    ny = np.linalg.norm(y)
    if ny == 0.0:
        return cap.axis.copy()
    y_bar = y / ny
    if y_bar @ cap.axis >= cap.c_theta:
        return y_bar
    return cap.boundary_point(y)


def tangent_basis(u) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal basis of the tangent plane of the unit sphere at ``u``.

    The canonical axis least aligned with ``u`` is crossed with ``u`` to form
    the second vector, and the first completes a right-handed frame
    ``(b1, b2, u)``. At ``u = e_z`` this gives ``b1 = e_x``, ``b2 = e_y``.
    """
    u = np.asarray(u, dtype=float)
    e = np.zeros(3)
    e[int(np.argmin(np.abs(u)))] = 1.0
    b2 = np.cross(u, e)
    b2 /= np.linalg.norm(b2)
    b1 = np.cross(b2, u)
    b1 /= np.linalg.norm(b1)
    return b1, b2


@dataclass(frozen=True)
class ElementGeometry:
    """Centers and wire dimensions of the active dipole (index 0) and N couplers.

    Parameters
    ----------
    centers : (N+1, 3) array
        Element centers in meters; row 0 is the origin.
    length : float
        Dipole length ``D`` in meters.
    radius : float
        Wire radius ``a`` in meters.
    """

    centers: np.ndarray
    length: float
    radius: float

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if c.ndim != 2 or c.shape[1] != 3 or c.shape[0] < 1:
            raise ValueError("centers must be an (N+1, 3) array")
        if self.length <= 0 or self.radius <= 0:
            raise ValueError("dipole length and radius must be positive")
        if self.radius >= self.length:
            raise ValueError("dipole radius must be much smaller than its length")
        object.__setattr__(self, "centers", _readonly(c))

    @classmethod
    def on_x_axis(cls, x_positions, length: float, radius: float) -> "ElementGeometry":
        """Active dipole at the origin and couplers at ``(x_n, 0, 0)``."""
        xs = np.asarray(x_positions, dtype=float).reshape(-1)
        centers = np.zeros((xs.size + 1, 3))
        centers[1:, 0] = xs
        return cls(centers, length, radius)

    @property
    def n_couplers(self) -> int:
        return self.centers.shape[0] - 1

    def axes(self, U) -> np.ndarray:
        """``(N+1, 3)`` stack of element axes: ``U0`` followed by the rows of ``U``."""
        U = as_axis_matrix(U, self.n_couplers)
        return np.vstack([U0[None, :], U])

    def fixed_axes(self) -> np.ndarray:
        """The fallback configuration with every coupler parallel to ``U0``."""
        return np.tile(U0, (self.n_couplers, 1))


def as_axis_matrix(U, n_couplers: int | None = None) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.size == 0:
        U = U.reshape(0, 3)
    if U.ndim != 2 or U.shape[1] != 3:
        raise ValueError(f"axis matrix must have shape (N, 3), got {U.shape}")
    if n_couplers is not None and U.shape[0] != n_couplers:
        raise ValueError(f"axis matrix has {U.shape[0]} rows but geometry has {n_couplers} couplers")
    return U


def _clamp(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def closest_segment_params(dp, u, v, half_length):
    """Closest-approach parameters of centered segments, vectorized over leading axes.

    The segments are ``p + s u`` and ``q + t v`` with ``s, t`` in
    ``[-h, h]`` and ``dp = p - q``. Returns ``(s, t, distance)``.
    """
    dp = np.asarray(dp, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    h = float(half_length)
    b = np.sum(u * v, axis=-1)
    c = np.sum(u * dp, axis=-1)
    f = np.sum(v * dp, axis=-1)
    denom = 1.0 - b * b
    parallel = np.abs(denom) < PARALLEL_TOL
    safe = np.where(parallel, 1.0, denom)
    # unconstrained minimizer of |dp + s u - t v|^2, then clamp in s
    s = np.where(parallel, 0.0, _clamp((b * f - c) / safe, -h, h))
    t = _clamp(b * s + f, -h, h)
    s = _clamp(b * t - c, -h, h)
    r = dp + s[..., None] * u - t[..., None] * v
    return s, t, np.linalg.norm(r, axis=-1)


def segment_min_distance(i: int, j: int, U, geom: ElementGeometry) -> float:
    """Minimum distance between the axis segments of elements ``i`` and ``j``."""
    if i == j:
        raise ValueError("segment distance needs two distinct elements")
    n = geom.n_couplers
    for k in (i, j):
        if not 0 <= k <= n:
            raise ValueError(f"element index {k} out of range [0, {n}]")
    axes = geom.axes(U)
    p = geom.centers
    _, _, d = closest_segment_params(p[i] - p[j], axes[i], axes[j], 0.5 * geom.length)
    return float(d)


def pair_indices(n_elements: int) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays ``(i, j)`` of all pairs ``i < j``."""
    return np.triu_indices(n_elements, k=1)


def pairwise_segment_distances(U, geom: ElementGeometry) -> np.ndarray:
    """Distances for all pairs ``i < j`` in :func:`pair_indices` order."""
    axes = geom.axes(U)
    ii, jj = pair_indices(axes.shape[0])
    p = geom.centers
    _, _, d = closest_segment_params(p[ii] - p[jj], axes[ii], axes[jj], 0.5 * geom.length)
    return d


def is_feasible(U, cap: SphericalCap, geom: ElementGeometry) -> bool:
    """Cap membership of every coupler and pairwise clearance of at least ``2a``."""
    U = as_axis_matrix(U, geom.n_couplers)
    if not cap.contains_all(U):
        return False
    if U.shape[0] == 0:
        return True
    return bool(np.all(pairwise_segment_distances(U, geom) >= 2.0 * geom.radius))


def feasible_mask(Us, cap: SphericalCap, geom: ElementGeometry) -> np.ndarray:
    """Vectorized :func:`is_feasible` over a stack of axis matrices ``(K, N, 3)``."""
    Us = np.asarray(Us, dtype=float)
    K, N = Us.shape[0], Us.shape[1]
    if N != geom.n_couplers:
        raise ValueError("axis matrices do not match geometry")
    if N == 0:
        return np.ones(K, dtype=bool)
    in_cap = np.all(np.abs(np.linalg.norm(Us, axis=2) - 1.0) <= 1e-9, axis=1)
    in_cap &= np.all(Us @ cap.axis >= cap.c_theta - CAP_TOL, axis=1)
    axes = np.concatenate([np.broadcast_to(U0, (K, 1, 3)), Us], axis=1)
    ii, jj = pair_indices(N + 1)
    p = geom.centers
    _, _, d = closest_segment_params(
        np.broadcast_to(p[ii] - p[jj], (K, ii.size, 3)), axes[:, ii], axes[:, jj], 0.5 * geom.length
    )
    return in_cap & np.all(d >= 2.0 * geom.radius, axis=1)
