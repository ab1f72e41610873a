import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import WAVELENGTH
from rcasim.beamforming import (NULL_OBJECTIVE, Scenario, achievable_rate, achievable_rate_from_snr, beampattern,
                                beamforming_result, normalized_gain, objective, snr, solve_beamforming,
                                solve_beamforming_many, transmit_power_quadratic)
from rcasim.channel import ChannelRealization, effective_channel
from rcasim.em_coupling import ImpedanceMatrix, WireParameters
from rcasim.errors import IllConditionedError, ModelViolationError
from rcasim.geometry import U0, ElementGeometry, SphericalCap, axis_from_angles

LOAD = complex(0.05, 50.0)


def make_scenario(N=3, L=4, seed=0, theta_max=math.pi, loads=None, omni=False):
    wp = WireParameters.from_wavelength(WAVELENGTH)
    geom = ElementGeometry.on_x_axis(WAVELENGTH / 4 * np.arange(1, N + 1), wp.length, wp.radius)
    rng = np.random.default_rng(seed)
    psi = np.arccos(rng.uniform(-1, 1, L))
    phi = rng.uniform(-math.pi, math.pi, L)
    g = 1e-6 * (rng.standard_normal(L) + 1j * rng.standard_normal(L))
    ch = ChannelRealization.from_arrays(psi, phi, g)
    loads = np.full(N, LOAD) if loads is None else loads
    return Scenario(geom, wp, ch, loads, SphericalCap(theta_max), 1.0, 1e-12, omnidirectional=omni)


def random_feasible_U(sc, rng):
    while True:
        U = np.array([axis_from_angles(rng.uniform(0, sc.cap.theta_max), rng.uniform(-math.pi, math.pi))
                      for _ in range(sc.n_couplers)])
        if sc.is_feasible(U):
            return U


def network_snr(sc, U):
    """Solve the loaded port equations directly, then normalize radiated power."""
    Z = sc.impedance(U).entries
    N = sc.n_couplers
    # unknowns: all port currents with i0 = 1; coupler rows: (Z i)_n + X_n i_n = 0
    A = Z[1:, 1:] + np.diag(sc.loads)
    i = np.concatenate([[1.0], np.linalg.solve(A, -Z[1:, 0])]) if N else np.array([1.0 + 0j])
    p_rad = np.real(np.conj(i) @ Z.real @ i)
    h = effective_channel(U, sc.channel, sc.geometry, sc.wire)
    return sc.transmit_power * abs(h @ i) ** 2 / (sc.noise_power * p_rad), i, Z


@given(st.integers(0, 2 ** 32 - 1))
def test_snr_matches_network_solution(seed):
    sc = make_scenario(seed=seed % 50)
    U = random_feasible_U(sc, np.random.default_rng(seed))
    ref, _, _ = network_snr(sc, U)
    assert snr(U, sc) == pytest.approx(ref, rel=1e-10)
    assert achievable_rate(U, sc) == pytest.approx(math.log2(1 + ref), rel=1e-10)
    assert objective(U, sc) == pytest.approx(math.log(ref * sc.noise_power / sc.transmit_power), rel=1e-10)


def test_power_balance():
    """Input power equals radiated power plus the power burned in the load resistances."""
    sc = make_scenario(loads=np.array([5 + 40j, 0.05 + 50j, 20 - 10j]))
    U = random_feasible_U(sc, np.random.default_rng(0))
    _, i, Z = network_snr(sc, U)
    v0 = Z[0] @ i
    p_in = np.real(np.conj(i[0]) * v0)
    p_load = np.sum(sc.loads.real * np.abs(i[1:]) ** 2)
    p_rad = transmit_power_quadratic(ImpedanceMatrix(Z), i)
    assert p_in == pytest.approx(p_rad + p_load, rel=1e-12)


def test_beamforming_residual_and_structure():
    sc = make_scenario()
    Z = sc.impedance(np.tile(U0, (3, 1)))
    w, w_e = solve_beamforming(Z, sc.loads)
    A = Z.Z_E + np.diag(sc.loads)
    assert np.linalg.norm(A @ w - Z.z_bar) <= 1e-12 * np.linalg.norm(Z.z_bar)
    assert w_e[0] == 1 and np.all(w_e[1:] == -w)
    res = beamforming_result(np.tile(U0, (3, 1)), sc)
    assert res.effective_gain == pytest.approx(normalized_gain(np.tile(U0, (3, 1)), sc), rel=1e-14)


def test_n0_bare_dipole():
    sc = make_scenario(N=0)
    U = np.zeros((0, 3))
    h0 = effective_channel(U, sc.channel, sc.geometry, sc.wire)[0]
    ref = sc.transmit_power * abs(h0) ** 2 / (sc.noise_power * sc.impedance(U).z_s.real)
    assert snr(U, sc) == pytest.approx(ref, rel=1e-13)


def test_global_phase_invariance():
    sc = make_scenario()
    U = random_feasible_U(sc, np.random.default_rng(4))
    rot = Scenario(sc.geometry, sc.wire, sc.channel.with_gains(np.exp(0.7j) * sc.channel.gains), sc.loads,
                   sc.cap, sc.transmit_power, sc.noise_power)
    assert snr(U, rot) == pytest.approx(snr(U, sc), rel=1e-13)


def test_snr_scales_with_power_ratio():
    sc = make_scenario()
    U = np.tile(U0, (3, 1))
    sc2 = Scenario(sc.geometry, sc.wire, sc.channel, sc.loads, sc.cap, 10.0, sc.noise_power)
    assert snr(U, sc2) == pytest.approx(10 * snr(U, sc), rel=1e-14)


def test_batched_objective_matches_scalar():
    sc = make_scenario()
    rng = np.random.default_rng(8)
    Us = np.stack([random_feasible_U(sc, rng) for _ in range(5)])
    np.testing.assert_allclose(sc.objective_many(Us), [sc.objective(U) for U in Us], rtol=1e-13)


def test_singular_load_system_detected():
    sc = make_scenario(N=1)
    Z = sc.impedance(np.tile(U0, (1, 1)))
    with pytest.raises(IllConditionedError) as exc:
        solve_beamforming_many(Z.entries[None], -Z.Z_E.reshape(-1))
    assert exc.value.condition > 1e12 or not math.isfinite(exc.value.condition)


def test_wrong_load_count():
    sc = make_scenario(N=2)
    with pytest.raises(ValueError):
        solve_beamforming(sc.impedance(np.tile(U0, (2, 1))), np.ones(3))


def test_nonpositive_power_detected():
    Z = ImpedanceMatrix(np.array([[1j]]))
    with pytest.raises(ModelViolationError):
        transmit_power_quadratic(Z, np.array([1.0]))


def test_null_objective_sentinel():
    sc = make_scenario(N=0)
    zero = Scenario(sc.geometry, sc.wire, sc.channel.with_gains(np.zeros(4)), sc.loads, sc.cap, 1.0, 1.0)
    assert zero.objective(np.zeros((0, 3))) == NULL_OBJECTIVE


def test_rate_from_snr():
    assert achievable_rate_from_snr(0.0) == 0.0
    assert achievable_rate_from_snr(1.0) == 1.0
    assert achievable_rate_from_snr(1023.0) == pytest.approx(10.0)


def test_scenario_validation():
    sc = make_scenario(N=2)
    with pytest.raises(ValueError):
        Scenario(sc.geometry, sc.wire, sc.channel, np.ones(3), sc.cap, 1.0, 1.0)
    with pytest.raises(ValueError):
        Scenario(sc.geometry, sc.wire, sc.channel, sc.loads, sc.cap, 0.0, 1.0)


@pytest.mark.parametrize("omni", [False, True])
def test_beampattern(omni):
    sc = make_scenario(omni=omni)
    U = random_feasible_U(sc, np.random.default_rng(1))
    grid = np.deg2rad(np.arange(-180, 180))
    pat = beampattern(U, sc, math.radians(55), grid)
    assert pat.shape == grid.shape
    assert np.max(pat) == 0.0
    assert np.all(pat <= 0.0)
    with pytest.raises(ValueError):
        beampattern(U, sc, 1.0, [])


def test_beampattern_relative_levels():
    """Pattern levels equal |h^T w_e|^2 of unit-gain single-path channels, up to the peak."""
    sc = make_scenario()
    U = random_feasible_U(sc, np.random.default_rng(3))
    psi = math.radians(55)
    grid = np.deg2rad(np.arange(-180.0, 180.0, 7.5))
    pat = beampattern(U, sc, psi, grid)
    _, w_e = solve_beamforming(sc.impedance(U), sc.loads)
    ref = []
    for phi in grid:
        ch = ChannelRealization.from_arrays([psi], [phi], [1.0])
        ref.append(abs(effective_channel(U, ch, sc.geometry, sc.wire) @ w_e) ** 2)
    ref = 10 * np.log10(np.array(ref) / max(ref))
    np.testing.assert_allclose(pat, ref, atol=1e-9)
