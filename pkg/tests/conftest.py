import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rcasim.em_coupling import WireParameters
from rcasim.geometry import SphericalCap

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

WAVELENGTH = 299_792_458.0 / 7e9


@pytest.fixture(scope="session")
def wp():
    return WireParameters.from_wavelength(WAVELENGTH)


class LinearProblem:
    """Phi(U) = sum_n c_n . u_n over a spherical cap, with no coupling constraint.

    The maximizer is ``c_n / |c_n|`` whenever that direction lies in the cap,
    so it is a convenient analytic target for the optimizer.
    """

    def __init__(self, C, theta_max=math.pi):
        self.C = np.asarray(C, dtype=float)
        self.cap = SphericalCap(theta_max)
        self.n_couplers = self.C.shape[0]

    def objective_many(self, Us):
        return np.einsum("knd,nd->k", np.asarray(Us, dtype=float), self.C)

    def feasible_many(self, Us):
        Us = np.asarray(Us, dtype=float)
        return np.all(Us @ self.cap.axis >= self.cap.c_theta - 1e-12, axis=-1)

    def fixed_axes(self):
        return np.tile(self.cap.axis, (self.n_couplers, 1))


def random_unit(rng, n=None):
    x = rng.standard_normal((3,) if n is None else (n, 3))
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def random_cap_point(rng, cap, n=None):
    """Uniform on the cap: uniform cos(angle to axis) in [c_theta, 1]."""
    m = 1 if n is None else n
    z = rng.uniform(cap.c_theta, 1.0, m)
    a = rng.uniform(-math.pi, math.pi, m)
    r = np.sqrt(np.clip(1 - z ** 2, 0, None))
    e1 = cap.perp
    e2 = np.cross(cap.axis, e1)
    x = z[:, None] * cap.axis + (r * np.cos(a))[:, None] * e1 + (r * np.sin(a))[:, None] * e2
    return x[0] if n is None else x


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
