import numpy as np
import pytest

from viscodelam.delamination import flow_rule_residual
from viscodelam.momentum import LoadSpec, MomentumSolver, SystemState
from viscodelam.scenarios import canonical
from viscodelam.stepper import (StaggerConfig, StaggerError, Stepper, _trace_sq, check_initial,
                                initial_state, run)


@pytest.fixture(scope="module")
def canon():
    sc = canonical(8)
    return sc, *sc.build()


@pytest.fixture(scope="module")
def canon_run(canon):
    sc, ops, tr, init = canon
    cfg = StaggerConfig(dt=1e-2, T=1.0, eps=1e-2)
    return cfg, run(init, cfg, ops, tr, sc.load, sc.mat)


def test_states_and_times(canon):
    sc, ops, tr, init = canon
    traj = run(init, StaggerConfig(dt=0.1, T=0.3, eps=0.1), ops, tr, sc.load, sc.mat)
    assert len(traj.states) == 4 and len(traj.reports) == 4 and len(traj.infos) == 3
    assert np.all(np.diff(traj.times()) > 0)


def test_restart_is_bitwise(canon):
    sc, ops, tr, init = canon
    full = run(init, StaggerConfig(dt=0.05, T=0.5, eps=0.01), ops, tr, sc.load, sc.mat)
    half = run(init, StaggerConfig(dt=0.05, T=0.25, eps=0.01), ops, tr, sc.load, sc.mat)
    rest = run(half.final, StaggerConfig(dt=0.05, T=0.5, eps=0.01), ops, tr, sc.load, sc.mat,
               restart=True)
    a, b = full.final, rest.final
    assert a.t == b.t
    for x, y in ((a.u, b.u), (a.v, b.v), (a.bonding.z, b.bonding.z)):
        assert x.tobytes() == y.tobytes()


def test_zero_data_drifts_by_healing_slack(canon):
    _, ops, tr, _ = canon
    eps, dt, a = 0.1, 0.01, 0.2
    init = initial_state(ops, tr, z0=1.0, a=a)
    traj = run(init, StaggerConfig(dt=dt, T=0.1, eps=eps), ops, tr, LoadSpec((0.0, 0.0)))
    assert all(i.iterations <= 2 for i in traj.infos)
    for prev, s in zip(traj.states, traj.states[1:]):
        assert np.all(s.u == 0)
        assert np.all(s.bonding.z - prev.bonding.z <= dt * eps / (eps + 1) * a * (1 + 1e-12))


def test_linear_regime_single_iteration(canon):
    _, ops, _, _ = canon
    init = initial_state(ops, None)
    traj = run(init, StaggerConfig(dt=0.05, T=0.2, eps=0.1), ops, None, LoadSpec((1.0, 1.0)))
    assert [i.iterations for i in traj.infos] == [1] * 4


def test_fixed_point_certificate(canon, canon_run):
    sc, ops, tr, _ = canon
    cfg, traj = canon_run
    solver = MomentumSolver(ops, tr, cfg.eps, cfg.dt, cfg.solver)
    for prev, s, info in zip(traj.states, traj.states[1:], traj.infos):
        # the same (u+, z+) pair satisfies both equations
        flow = flow_rule_residual(s.bonding, _trace_sq(s.u, tr, 2))
        assert np.abs(flow).max() <= 1e-12 / cfg.dt
        r = solver.residual(s.u, solver._zdiag(np.maximum(s.bonding.z, 0)),
                            solver.rhs(prev, sc.load))
        scale = np.linalg.norm(solver.rhs(prev, sc.load)[ops.free_dofs])
        assert np.linalg.norm(r[ops.free_dofs]) <= 1e-9 * scale + 1e-12
        assert info.momentum_residual <= cfg.solver.rtol * info.momentum_scale + cfg.solver.atol


def test_stagger_contraction(canon_run):
    _, traj = canon_run
    for info in traj.infos:
        inc = info.increments
        for k in range(1, len(inc) - 1):
            if inc[k] > 0:
                assert inc[k + 1] / inc[k] < 1


def test_halving_dt_does_not_add_iterations(canon):
    sc, ops, tr, init = canon
    counts = []
    for dt in (1e-2, 5e-3):
        traj = run(init, StaggerConfig(dt=dt, T=1.0, eps=1e-2), ops, tr, sc.load, sc.mat)
        counts.append(max(i.iterations for i in traj.infos))
    assert counts[1] <= counts[0]


def test_stagger_max_is_a_hard_error(canon):
    sc, ops, tr, init = canon
    cfg = StaggerConfig(dt=1e-2, T=1.0, eps=1e-2, stagger_max=1)
    with pytest.raises(StaggerError) as err:
        run(init, cfg, ops, tr, sc.load, sc.mat)
    assert err.value.step_index >= 1 and len(err.value.increments) == 1


def test_relaxed_iteration_agrees(canon):
    sc, ops, tr, init = canon
    base = StaggerConfig(dt=1e-2, T=0.3, eps=1e-2)
    relaxed = StaggerConfig(dt=1e-2, T=0.3, eps=1e-2, relax=0.7, stagger_max=200)
    a = run(init, base, ops, tr, sc.load).final
    b = run(init, relaxed, ops, tr, sc.load).final
    np.testing.assert_allclose(a.u, b.u, atol=1e-9)


def test_check_initial_messages(canon):
    _, ops, tr, init = canon
    bad_u = init.u.copy()
    bad_u[tr.dofs(2)[:, 0]] = 0.1
    bad_u[ops.dirichlet_dofs] = 0
    msgs = check_initial(SystemState(0.0, bad_u, init.v, init.bonding), ops, tr)
    assert any("assumption (c)" in m and "u0.n" in m for m in msgs)
    z = initial_state(ops, tr, z0=1.5)
    assert "assumption (c): z0 out of [0,1]" in check_initial(z, ops, tr)
    with pytest.raises(ValueError):
        run(z, StaggerConfig(dt=0.1, T=0.2, eps=0.1), ops, tr, LoadSpec((0.0, 0.0)))


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(T=0.001), dict(eps=1.0),
                                dict(stagger_tol=0.0), dict(relax=1.5), dict(stagger_max=0)])
def test_config_validation(kw):
    args = dict(dt=0.01, T=1.0, eps=0.1)
    args.update(kw)
    with pytest.raises(ValueError):
        StaggerConfig(**args)


def test_stepper_reuse_matches_run(canon):
    sc, ops, tr, init = canon
    cfg = StaggerConfig(dt=0.05, T=0.1, eps=0.01)
    st = Stepper(cfg, ops, tr, sc.load)
    s1, _ = st.step(init)
    s2, _ = st.step(s1)
    ref = run(init, cfg, ops, tr, sc.load).final
    assert s2.u.tobytes() == ref.u.tobytes()
