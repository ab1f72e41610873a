"""Far-field multipath channel of the coupler antenna.

The active dipole is treated as an omnidirectional element; each coupler
contributes a normalized thin-wire pattern that depends on the cosine between
its axis and the departure direction of every path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .em_coupling import WireParameters
from .geometry import ElementGeometry, as_axis_matrix
from .numerics import gauss_legendre

SING_EPS = 1e-12


@dataclass(frozen=True)
class PathSpec:
    """One propagation path: zenith ``psi``, azimuth ``phi`` and complex gain."""

    psi: float
    phi: float
    gain: complex = 1.0

    def __post_init__(self):
        if not 0.0 <= self.psi <= math.pi:
            raise ValueError(f"path zenith must lie in [0, pi], got {self.psi!r}")
        if not -math.pi <= self.phi <= math.pi:
            raise ValueError(f"path azimuth must lie in [-pi, pi], got {self.phi!r}")

    @property
    def direction(self) -> np.ndarray:
        return path_direction(self.psi, self.phi)


class ChannelRealization:
    """An ordered set of ``L >= 1`` paths with their complex gains."""

    def __init__(self, paths):
        paths = tuple(paths)
        if not paths:
            raise ValueError("a channel needs at least one path")
        self.paths = paths
        self.psi = np.array([p.psi for p in paths])
        self.phi = np.array([p.phi for p in paths])
        self.gains = np.array([p.gain for p in paths], dtype=complex)
        self.directions = path_directions(self.psi, self.phi)
        for a in (self.psi, self.phi, self.gains, self.directions):
            a.setflags(write=False)

    @classmethod
    def from_arrays(cls, psi, phi, gains):
        return cls(PathSpec(float(a), float(b), complex(g)) for a, b, g in zip(psi, phi, gains))

    def with_gains(self, gains) -> "ChannelRealization":
        return ChannelRealization.from_arrays(self.psi, self.phi, gains)

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    def __repr__(self):
        return f"ChannelRealization(L={self.num_paths})"


def path_direction(psi: float, phi: float) -> np.ndarray:
    """Unit departure direction for zenith ``psi`` and azimuth ``phi``."""
    if not 0.0 <= psi <= math.pi:
        raise ValueError(f"zenith must lie in [0, pi], got {psi!r}")
    if not -math.pi <= phi <= math.pi:
        raise ValueError(f"azimuth must lie in [-pi, pi], got {phi!r}")
    return path_directions(np.array([psi]), np.array([phi]))[0]


def path_directions(psi, phi) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    phi = np.asarray(phi, dtype=float)
    sp = np.sin(psi)
    return np.stack([sp * np.cos(phi), sp * np.sin(phi), np.cos(psi)], axis=-1)


def steering_vector(path: PathSpec, geom: ElementGeometry, wp: WireParameters) -> np.ndarray:
    """Phase of every element center along ``path``; entry 0 (the origin) is 1."""
    return steering_matrix(path.direction[None, :], geom, wp)[:, 0]


def steering_matrix(directions, geom: ElementGeometry, wp: WireParameters) -> np.ndarray:
    """``(N+1, L)`` matrix of ``exp(j k f_l . p_n)``."""
    f = np.atleast_2d(np.asarray(directions, dtype=float))
    return np.exp(1j * wp.wavenumber * (geom.centers @ f.T))


def _unnormalized_pattern(xi, kh: float):
    xi = np.asarray(xi, dtype=float)
    den2 = 1.0 - xi * xi
    safe = np.where(den2 < SING_EPS, 1.0, den2)
    val = (np.cos(kh * xi) - math.cos(kh)) / np.sqrt(safe)
    return np.where(den2 < SING_EPS, 0.0, val)


def dipole_element_response(u, f, wp: WireParameters) -> float:
    """Unnormalized far-field amplitude of a dipole with axis ``u`` toward ``f``.

    Along the axis (``|u . f| = 1``) the continuous extension 0 is returned.
    """
    xi = float(np.dot(u, f))
    return float(_unnormalized_pattern(xi, 0.5 * wp.wavenumber * wp.length))


@dataclass(frozen=True)
class PatternNormalization:
    """Scale making the dipole pattern's mean power over the sphere equal to one."""

    c_dip: float


_NORM_ORDER = 256


@lru_cache(maxsize=32)
def pattern_normalization(wp: WireParameters) -> PatternNormalization:
    """Full-sphere power normalization of the dipole pattern.

    By symmetry about the dipole axis the sphere integral reduces to
    ``(1/2) * int_{-1}^{1} e(x)^2 dx`` with ``x = cos(zenith)``; the integrand
    is smooth in ``x``, so a Gauss-Legendre rule converges spectrally.
    """
    rule = gauss_legendre(_NORM_ORDER)
    kh = 0.5 * wp.wavenumber * wp.length
    mean_power = 0.5 * np.sum(rule.weights * _unnormalized_pattern(rule.nodes, kh) ** 2)
    return PatternNormalization(c_dip=float(mean_power ** -0.5))


def pattern_vectors(U, directions, wp: WireParameters, norm: PatternNormalization) -> np.ndarray:
    """``(N+1, L)`` element responses ``sqrt(eta/pi) * [1, c_dip * e_n(u_n, f_l)]``."""
    U = as_axis_matrix(U)
    f = np.atleast_2d(np.asarray(directions, dtype=float))
    kh = 0.5 * wp.wavenumber * wp.length
    E = np.ones((U.shape[0] + 1, f.shape[0]))
    if U.shape[0]:
        E[1:] = norm.c_dip * _unnormalized_pattern(U @ f.T, kh)
    return math.sqrt(wp.eta / math.pi) * E


def channel_matrix(U, directions, geom: ElementGeometry, wp: WireParameters,
                   norm: PatternNormalization) -> np.ndarray:
    """``G(U)``: columns are the per-path effective channels ``a_l * e_l(U)``."""
    return steering_matrix(directions, geom, wp) * pattern_vectors(U, directions, wp, norm)


def effective_channel(U, ch: ChannelRealization, geom: ElementGeometry, wp: WireParameters,
                      norm: PatternNormalization | None = None) -> np.ndarray:
    """``h(U) = G(U) gamma``, length ``N + 1``."""
    U = as_axis_matrix(U, geom.n_couplers)
    norm = norm or pattern_normalization(wp)
    return channel_matrix(U, ch.directions, geom, wp, norm) @ ch.gains


def effective_channels(Us, ch: ChannelRealization, geom: ElementGeometry, wp: WireParameters,
                       norm: PatternNormalization | None = None) -> np.ndarray:
    """Vectorized :func:`effective_channel` over a stack ``(K, N, 3)``; returns ``(K, N+1)``."""
    norm = norm or pattern_normalization(wp)
    Us = np.asarray(Us, dtype=float)
    K, N = Us.shape[0], geom.n_couplers
    A = steering_matrix(ch.directions, geom, wp) * ch.gains  # (N+1, L)
    scale = math.sqrt(wp.eta / math.pi)
    H = np.empty((K, N + 1), dtype=complex)
    H[:, 0] = scale * A[0].sum()
    if N:
        kh = 0.5 * wp.wavenumber * wp.length
        pat = norm.c_dip * _unnormalized_pattern(Us @ ch.directions.T, kh)  # (K, N, L)
        H[:, 1:] = scale * np.einsum("knl,nl->kn", pat, A[1:])
    return H

