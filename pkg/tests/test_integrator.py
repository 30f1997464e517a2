import math

import numpy as np
import numpy.testing as npt
import pytest

from framesync import (
    BlowUpError,
    DriftError,
    Ensemble,
    IntegratorConfig,
    ModelParams,
    all_to_all,
    integrate,
    make_tangent_velocity,
    random_skew,
    random_stiefel,
    step_rk4,
    uniform_states,
    zero_freqs,
)
from framesync.errors import ParameterError, TangencyError
from framesync.stiefel import exp_skew


def rotation_rhs(xi):
    return lambda ens: ens.states @ xi


def test_config_validation():
    with pytest.raises(ParameterError):
        IntegratorConfig(dt=0.0, horizon=1.0)
    with pytest.raises(ParameterError):
        IntegratorConfig(dt=0.1, horizon=0.05)
    with pytest.raises(ParameterError):
        IntegratorConfig(dt=0.1, horizon=1.0, record_every=0)
    with pytest.raises(ParameterError):
        IntegratorConfig(dt=0.1, horizon=1.0, drift_repair=1e-5, drift_fail=1e-6)
    assert IntegratorConfig(dt=0.1, horizon=1.0).steps == 10


def test_step_rk4_local_error_fifth_order():
    rng = np.random.default_rng(1)
    s0 = random_stiefel(4, 2, rng)[None]
    xi = random_skew(2, 1.0, rng)
    errs = []
    for dt in (1e-1, 5e-2):
        stepped = step_rk4(Ensemble(s0.copy()), rotation_rhs(xi), dt)
        exact = s0 @ exp_skew(xi, dt)
        errs.append(np.max(np.abs(stepped.states - exact)))
    # one-step truncation error scales like dt^5
    assert errs[0] / errs[1] > 25


def test_rk4_global_error_fourth_order():
    rng = np.random.default_rng(2)
    s0 = random_stiefel(4, 2, rng)[None]
    xi = random_skew(2, 1.0, rng)
    horizon = 1.0
    exact = s0 @ exp_skew(xi, horizon)
    errs = []
    for dt in (2e-2, 1e-2):
        ens = Ensemble(s0.copy())
        for _ in range(int(round(horizon / dt))):
            ens = step_rk4(ens, rotation_rhs(xi), dt)
        errs.append(np.max(np.abs(ens.states - exact)))
    ratio = errs[0] / errs[1]
    assert 12.0 < ratio < 22.0


def test_step_rk4_second_order_dispatch():
    # harmonic oscillator per entry: d(s, v) = (v, -s)
    s0 = np.full((1, 2, 1), 1 / math.sqrt(2))
    v0 = np.zeros((1, 2, 1))
    ens = Ensemble(s0, v0)
    rhs = lambda e: (e.velocities, -e.states)
    t, dt = 0.0, 1e-3
    for _ in range(1000):
        ens = step_rk4(ens, rhs, dt)
        t += dt
    npt.assert_allclose(ens.states, s0 * math.cos(t), atol=1e-10)
    npt.assert_allclose(ens.velocities, -s0 * math.sin(t), atol=1e-10)


def make_run(seed=3, n_agents=4, second=False, kappa=1.0):
    rng = np.random.default_rng(seed)
    states = uniform_states(4, 2, n_agents, rng)
    vels = None
    mass = 0.0
    if second:
        vels = make_tangent_velocity(states, rng.standard_normal(states.shape), 0.3)
        mass = 1.0
    params = ModelParams(
        kappa=kappa, freqs=zero_freqs(n_agents, 2), mass=mass, friction=2.0
    )
    return Ensemble(states, vels), params, all_to_all(n_agents)


def test_integrate_records_grid():
    ens, params, top = make_run()
    traj = integrate(ens, params, top, IntegratorConfig(1e-2, 1.0, 25))
    npt.assert_allclose(traj.times, [0.0, 0.25, 0.5, 0.75, 1.0], atol=1e-12)
    assert len(traj.ensembles) == len(traj.times) == len(traj.records)
    # ragged horizon: the final partial stretch is still recorded
    traj = integrate(ens, params, top, IntegratorConfig(1e-2, 0.93, 25))
    npt.assert_allclose(traj.times[-1], 0.93, atol=1e-12)
    assert traj.sample_index(0.5) == 2


def test_integrate_deterministic():
    ens, params, top = make_run(second=True)
    cfg = IntegratorConfig(1e-3, 0.5, 100)
    a = integrate(ens, params, top, cfg)
    b = integrate(ens, params, top, cfg)
    npt.assert_array_equal(a.ensembles[-1].states, b.ensembles[-1].states)
    npt.assert_array_equal(a.ensembles[-1].velocities, b.ensembles[-1].velocities)


def test_integrate_restart_is_exact():
    ens, params, top = make_run()
    cfg = IntegratorConfig(1e-3, 2.0, 500)
    full = integrate(ens, params, top, cfg)
    idx = full.sample_index(1.0)
    tail = integrate(
        full.ensembles[idx], params, top, IntegratorConfig(1e-3, 1.0, 500)
    )
    npt.assert_array_equal(tail.ensembles[-1].states, full.ensembles[-1].states)


def test_integrate_rejects_off_manifold_start():
    ens, params, top = make_run()
    bad = Ensemble(ens.states + 1e-4)
    with pytest.raises(DriftError) as err:
        integrate(bad, params, top, IntegratorConfig(1e-2, 1.0))
    assert "reduce dt" in str(err.value)


def test_integrate_rejects_non_tangent_velocities():
    ens, params, top = make_run(second=True)
    bad = Ensemble(ens.states, ens.velocities + 0.1 * ens.states)
    with pytest.raises(TangencyError):
        integrate(bad, params, top, IntegratorConfig(1e-2, 1.0))


def test_integrate_aborts_on_blowup():
    # a wildly unstable step size drives the stiff inertial system non-finite
    ens, params, top = make_run(second=True)
    params = ModelParams(
        kappa=params.kappa, freqs=params.freqs, mass=1e-8, friction=2.0
    )
    vels = make_tangent_velocity(ens.states, np.ones_like(ens.states), 0.3)
    with pytest.raises((BlowUpError, DriftError)):
        integrate(Ensemble(ens.states, vels), params, top,
                  IntegratorConfig(0.5, 50.0))


def test_integrate_mass_required_for_velocities():
    ens, params, top = make_run(second=True)
    first_order_params = ModelParams(kappa=1.0, freqs=zero_freqs(4, 2))
    with pytest.raises(ParameterError):
        integrate(ens, first_order_params, top, IntegratorConfig(1e-2, 1.0))


def test_drift_repair_keeps_run_alive():
    # loose step size on a fast rotation accumulates drift; repairs bring it
    # back without aborting
    rng = np.random.default_rng(4)
    states = uniform_states(3, 1, 3, rng)
    xi = np.zeros((3, 1, 1))
    params = ModelParams(kappa=8.0, freqs=xi)
    cfg = IntegratorConfig(5e-2, 40.0, 10, drift_repair=1e-12, drift_fail=1e-3)
    traj = integrate(Ensemble(states), params, all_to_all(3), cfg)
    assert traj.repairs > 0
    from framesync import frame_drift

    assert np.max(frame_drift(traj.ensembles[-1].states)) < 1e-6


def test_column_nan_for_first_order():
    ens, params, top = make_run()
    traj = integrate(ens, params, top, IntegratorConfig(1e-2, 0.2, 10))
    assert np.isnan(traj.column("kinetic")).all()
    assert not np.isnan(traj.column("diameter")).any()


def test_first_order_consensus_decay():
    ens, params, top = make_run(seed=5)
    traj = integrate(ens, params, top, IntegratorConfig(1e-3, 30.0, 1000))
    d = traj.column("diameter")
    assert d[-1] < 1e-6 or d[-1] < d[0] * 1e-3
    assert traj.max_drift < 1e-10
