import csv
import math

import numpy as np
import numpy.testing as npt
import pytest

from framesync import (
    Ensemble,
    IntegratorConfig,
    ModelParams,
    all_to_all,
    clustered_states,
    compute_stats,
    diameter,
    energy,
    energy_dissipation_rhs,
    ensemble_gram,
    g_functional,
    gram_defect,
    gronwall_bound,
    integrate,
    inter_diameter,
    lock_thresholds,
    make_record,
    make_tangent_velocity,
    phase_lock_detector,
    random_skew,
    spread_inequality_residuals,
    uniform_states,
    velocity_bound_check,
    write_timeseries,
    zero_freqs,
)
from framesync.errors import ParameterError

R23 = math.sqrt(2.0 / 3.0)


def three_angles():
    # unit vectors at 0, 90 and 180 degrees
    a = np.array(
        [[[1.0], [0.0]], [[0.0], [1.0]], [[-1.0], [0.0]]]
    )
    return Ensemble(a)


def test_diameter_hand_case():
    d, pair = diameter(three_angles())
    assert d == 2.0
    assert pair == (0, 2)


def test_diameter_tie_breaks_low_pair():
    s = np.array([[[1.0], [0.0]], [[-1.0], [0.0]], [[0.0], [1.0]], [[0.0], [-1.0]]])
    _, pair = diameter(Ensemble(s))
    assert pair == (0, 1)


def test_g_functional_hand_case():
    # squared distances 2, 4, 2 per unordered pair -> ordered sum 16
    assert math.isclose(g_functional(three_angles()), 16.0 / 9.0, rel_tol=1e-15)


def test_gram_defect_traces_equal_sq_distances():
    rng = np.random.default_rng(1)
    ens = Ensemble(uniform_states(5, 2, 4, rng))
    h, traces = gram_defect(ens)
    for i in range(4):
        for j in range(4):
            dij = np.linalg.norm(ens.states[i] - ens.states[j]) ** 2
            npt.assert_allclose(traces[i, j], dij, atol=1e-12)
            npt.assert_allclose(
                h[i, j], np.eye(2) - ens.states[i].T @ ens.states[j], atol=1e-15
            )


def test_inter_diameter():
    rng = np.random.default_rng(2)
    a = Ensemble(uniform_states(4, 2, 3, rng))
    b = Ensemble(uniform_states(4, 2, 3, rng))
    assert inter_diameter(a, a) == 0.0
    got = inter_diameter(a, b)
    want = max(
        np.linalg.norm(
            a.states[i].T @ a.states[j] - b.states[i].T @ b.states[j]
        )
        for i in range(3)
        for j in range(3)
    )
    npt.assert_allclose(got, want, rtol=1e-14)


def test_energy_hand_case():
    ens = three_angles()
    vels = make_tangent_velocity(ens.states, np.ones_like(ens.states), 1.0)
    params = ModelParams(
        kappa=2.0, freqs=zero_freqs(3, 1), mass=1.5, friction=1.0
    )
    kin, pot, tot = energy(Ensemble(ens.states, vels), params, all_to_all(3))
    npt.assert_allclose(kin, 1.5 / 3.0 * np.sum(vels**2), rtol=1e-14)
    # sum of ordered squared distances is 16 (see g_functional case)
    npt.assert_allclose(pot, 2.0 / (2 * 9) * 16.0, rtol=1e-14)
    assert tot == kin + pot


def test_dissipation_matches_energy_derivative():
    # centred difference of recorded energy against the closed-form rate
    rng = np.random.default_rng(3)
    states = clustered_states(4, 2, 5, rng, 0.9)
    vels = make_tangent_velocity(states, rng.standard_normal(states.shape), 0.4)
    freqs = np.stack([random_skew(2, 0.3, rng) for _ in range(5)])
    params = ModelParams(kappa=1.0, freqs=freqs, mass=1.0, friction=2.0)
    top = all_to_all(5)
    errs = []
    for record_every in (10, 5):
        traj = integrate(
            Ensemble(states, vels), params, top,
            IntegratorConfig(1e-3, 1.0, record_every),
        )
        e = traj.column("total")
        h = traj.times[1] - traj.times[0]
        fd = (e[2:] - e[:-2]) / (2 * h)
        exact = np.array(
            [energy_dissipation_rhs(ens, params) for ens in traj.ensembles[1:-1]]
        )
        errs.append(np.max(np.abs(fd - exact)))
        assert errs[-1] < 20.0 * h**2
    # centred differences converge at second order in the sample spacing
    assert errs[0] / errs[1] > 3.5


def test_dissipation_negative_without_rotations():
    rng = np.random.default_rng(4)
    states = uniform_states(4, 2, 4, rng)
    vels = make_tangent_velocity(states, rng.standard_normal(states.shape), 0.5)
    params = ModelParams(
        kappa=1.0, freqs=zero_freqs(4, 2), mass=1.0, friction=2.0
    )
    assert energy_dissipation_rhs(Ensemble(states, vels), params) < 0.0


# --- locking thresholds ------------------------------------------------------


def test_lock_thresholds_zero_freq():
    th = lock_thresholds(p=2, a_min=1.0, a_max=1.0, gap=0.25, freq_sup=0.0, kappa=1.0)
    assert th.alpha == 0.0
    assert th.beta == math.sqrt(2.0)
    assert th.kappa_star == 0.0
    assert th.kappa_ok


def test_lock_thresholds_double_root():
    # c0 = (4/3) sqrt(2/3) collapses both roots onto sqrt(2/3)
    freq_sup = (2.0 / 3.0) * R23
    th = lock_thresholds(p=1, a_min=1.0, a_max=1.0, gap=0.5, freq_sup=freq_sup, kappa=1.0)
    npt.assert_allclose([th.alpha, th.beta], [R23, R23], rtol=1e-12)


def test_lock_thresholds_roots_solve_cubic():
    th = lock_thresholds(p=2, a_min=1.0, a_max=1.0, gap=1.0 / 3.0, freq_sup=0.1, kappa=2.0)
    c0 = 2.0 * math.sqrt(2.0) * 0.1 / 2.0
    for r in (th.alpha, th.beta):
        assert abs(r**3 - 2.0 * r + c0) < 1e-10
    assert 0.0 < th.alpha < R23 < th.beta < math.sqrt(2.0)
    # strong coupling passes, and alpha stays under the gap ceiling
    assert th.kappa_ok
    assert th.alpha < th.lambda_bound


def test_lock_thresholds_weak_coupling_raises():
    with pytest.raises(ParameterError, match="too weak"):
        lock_thresholds(p=2, a_min=1.0, a_max=1.0, gap=0.25, freq_sup=1.0, kappa=0.1)


def test_lock_thresholds_gap_window():
    with pytest.raises(ParameterError):
        lock_thresholds(p=1, a_min=1.0, a_max=1.0, gap=-0.1, freq_sup=0.1, kappa=5.0)
    with pytest.raises(ParameterError):
        lock_thresholds(p=1, a_min=1.0, a_max=1.0, gap=9.0, freq_sup=0.1, kappa=5.0)


def test_lock_thresholds_kappa_star_boundary():
    # crossing kappa_star flips the sign of the cubic at the gap ceiling
    p, a, gap, freq = 2, 1.0, 1.0 / 3.0, 0.1
    th = lock_thresholds(p, a, a, gap, freq, kappa=5.0)
    r = gap / (2.0 * a * math.sqrt(p))
    for kappa, expect_below in ((th.kappa_star * 1.01, True), (th.kappa_star * 0.5, False)):
        c0 = 2.0 * math.sqrt(p) * freq / (kappa * a)
        below = r**3 - 2.0 * r + c0 < 0.0
        assert below == expect_below


# --- comparison bound --------------------------------------------------------


def damped_reference(a, b, c, eps0, y0, yprime0, t_grid):
    """RK4 on the equality ODE a y'' + b y' + c y = eps0."""
    dt = t_grid[1] - t_grid[0]
    state = np.array([y0, yprime0])

    def f(s):
        return np.array([s[1], (eps0 - b * s[1] - c * s[0]) / a])

    out = [state[0]]
    for _ in range(len(t_grid) - 1):
        k1 = f(state)
        k2 = f(state + 0.5 * dt * k1)
        k3 = f(state + 0.5 * dt * k2)
        k4 = f(state + dt * k3)
        state = state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(state[0])
    return np.array(out)


def test_gronwall_overdamped_dominates_equality_ode():
    t = np.linspace(0.0, 20.0, 2001)
    a, b, c, eps0, y0, yp0 = 1.0, 3.0, 2.0, 2.0, 1.0, 0.5
    bound, limsup = gronwall_bound(a, b, c, eps0, y0, yp0, t)
    y = damped_reference(a, b, c, eps0, y0, yp0, t)
    assert np.all(y <= bound + 1e-8)
    assert limsup == eps0 / c == 1.0
    assert y[-1] <= limsup + 1e-6


def test_gronwall_underdamped_dominates_equality_ode():
    t = np.linspace(0.0, 20.0, 2001)
    a, b, c, eps0, y0, yp0 = 1.0, 2.0, 5.0, 1.0, 0.8, 0.0
    bound, limsup = gronwall_bound(a, b, c, eps0, y0, yp0, t)
    y = damped_reference(a, b, c, eps0, y0, yp0, t)
    assert np.all(y <= bound + 1e-8)
    npt.assert_allclose(limsup, 4.0 * a * eps0 / b**2)
    assert y[-1] <= limsup + 1e-6


def test_gronwall_scalar_time():
    bound, _ = gronwall_bound(1.0, 3.0, 2.0, 2.0, 1.0, 0.5, 0.0)
    assert isinstance(bound, float)
    # at t=0 the envelope starts at or above the initial value
    assert bound >= 1.0


def test_gronwall_rejects_critical_damping():
    with pytest.raises(ParameterError):
        gronwall_bound(1.0, 2.0, 1.0, 1.0, 1.0, 0.0, 0.0)
    with pytest.raises(ParameterError):
        gronwall_bound(-1.0, 2.0, 5.0, 1.0, 1.0, 0.0, 0.0)


# --- trajectory monitors -----------------------------------------------------


def inertial_run(seed=5, horizon=4.0, record_every=20, freqs_scale=0.0, dt=1e-3):
    rng = np.random.default_rng(seed)
    states = clustered_states(4, 2, 5, rng, 1.0)
    vels = make_tangent_velocity(states, rng.standard_normal(states.shape), 0.3)
    if freqs_scale > 0:
        freqs = np.stack([random_skew(2, freqs_scale, rng) for _ in range(5)])
    else:
        freqs = zero_freqs(5, 2)
    params = ModelParams(kappa=1.0, freqs=freqs, mass=1.0, friction=2.0)
    top = all_to_all(5)
    traj = integrate(
        Ensemble(states, vels), params, top,
        IntegratorConfig(dt, horizon, record_every),
    )
    return traj, params, top


def test_spread_inequality_residuals_nonnegative():
    traj, params, top = inertial_run()
    times, resid = spread_inequality_residuals(traj, params, top)
    assert len(times) == len(traj.times) - 2
    assert np.min(resid) > -1e-6


def test_spread_inequality_requires_velocities():
    rng = np.random.default_rng(6)
    states = uniform_states(4, 2, 3, rng)
    params = ModelParams(kappa=1.0, freqs=zero_freqs(3, 2))
    traj = integrate(
        Ensemble(states), params, all_to_all(3), IntegratorConfig(1e-2, 0.5, 10)
    )
    params2 = ModelParams(kappa=1.0, freqs=zero_freqs(3, 2), mass=1.0)
    with pytest.raises(ParameterError):
        spread_inequality_residuals(traj, params2, all_to_all(3))


def test_spread_inequality_requires_constant_row_average():
    from framesync import Topology

    traj, params, _ = inertial_run(horizon=0.5)
    uneven = Topology(np.array([[1.0, 2.0, 1.0, 1.0, 1.0],
                                [2.0, 4.0, 1.0, 1.0, 1.0],
                                [1.0, 1.0, 1.0, 1.0, 1.0],
                                [1.0, 1.0, 1.0, 1.0, 1.0],
                                [1.0, 1.0, 1.0, 1.0, 1.0]]))
    with pytest.raises(ParameterError):
        spread_inequality_residuals(traj, params, uneven)


def test_velocity_bound_check():
    traj, params, top = inertial_run()
    report = velocity_bound_check(traj, params, top)
    assert report.ok
    assert report.sup_observed <= report.bound + 1e-8
    # ceiling with zero rotations: kappa a_max sqrt(p) / gamma
    npt.assert_allclose(
        report.bound, max(traj.column("vel_sup")[0], math.sqrt(2.0) / 2.0)
    )


def test_phase_lock_detector_on_converging_run():
    traj, params, top = inertial_run(horizon=20.0, record_every=50)
    report = phase_lock_detector(traj, window=0.5, tol=1e-6)
    assert report.locked
    assert report.rho < 1.0
    assert report.deltas[-1] <= 1e-6


def test_phase_lock_detector_grid_validation():
    traj, params, top = inertial_run(horizon=2.0, record_every=50)
    with pytest.raises(ParameterError):
        phase_lock_detector(traj, window=0.033, tol=1e-6)  # off the grid
    with pytest.raises(ParameterError):
        phase_lock_detector(traj, window=1.5, tol=1e-6)  # under two windows
    with pytest.raises(ParameterError):
        phase_lock_detector(traj, window=0.5, tol=1e-6, start_time=0.017)


def test_phase_lock_detector_not_locked_when_short():
    traj, params, top = inertial_run(horizon=2.0, record_every=10)
    report = phase_lock_detector(traj, window=0.5, tol=1e-6)
    assert not report.locked
    assert report.reason == "fewer than five windows"


def test_make_record_first_vs_second_order():
    rng = np.random.default_rng(7)
    states = uniform_states(4, 2, 3, rng)
    params = ModelParams(kappa=1.0, freqs=zero_freqs(3, 2))
    rec = make_record(0.0, Ensemble(states), params, all_to_all(3), 0.0)
    assert rec.vel_sup is None and rec.kinetic is None and rec.total is None
    assert rec.diameter > 0 and rec.interaction > 0

    vels = make_tangent_velocity(states, rng.standard_normal(states.shape), 0.2)
    params2 = ModelParams(kappa=1.0, freqs=zero_freqs(3, 2), mass=2.0)
    rec2 = make_record(0.0, Ensemble(states, vels), params2, all_to_all(3), 0.0)
    assert rec2.total == rec2.kinetic + rec2.interaction
    npt.assert_allclose(
        rec2.vel_sup, np.linalg.norm(vels, axis=(1, 2)).max(), rtol=1e-14
    )


def test_write_timeseries_roundtrip(tmp_path):
    traj, params, top = inertial_run(horizon=0.5, record_every=100)
    path = tmp_path / "run.csv"
    write_timeseries(path, traj.records)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# framesync-timeseries v1")
    assert lines[1] == "t,D,Dvel,G,K,L,E,maxDrift"
    rows = list(csv.reader(lines[2:]))
    assert len(rows) == len(traj.records)
    # full-precision roundtrip of the recorded diameter
    got = np.array([float(r[1]) for r in rows])
    npt.assert_array_equal(got, traj.column("diameter"))


def test_ensemble_gram_shape():
    rng = np.random.default_rng(8)
    ens = Ensemble(uniform_states(5, 3, 4, rng))
    gram = ensemble_gram(ens)
    assert gram.shape == (4, 4, 3, 3)
    npt.assert_allclose(gram[1, 1], np.eye(3), atol=1e-14)
    stats = compute_stats(all_to_all(4))
    assert stats.a_min == 1.0
