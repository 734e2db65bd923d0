import dataclasses

import numpy as np
import pytest

from epidiffuse import (
    Forcing,
    Grid,
    InputError,
    IntegrityError,
    ModelParams,
    Nonlinearity,
    State,
    StepControl,
    TransformUnavailable,
    eval_f,
    eval_lambda,
    from_w,
    laplacian,
    load_config,
    run,
    stable_dt,
    step_direct,
    step_transformed,
    to_w,
)
from epidiffuse.convergence import convergence, spatial_study, temporal_study
from epidiffuse.solver import TransformedState, plan_steps, simulate

from conftest import CONFIGS, line_grid, smooth_fields


def params(**kw):
    base = dict(a=1.0, b=1.0, d=2.0, Lambda=1.0, mu=2.0, lambda_hat=1.0)
    base.update(kw)
    return ModelParams(**base)


def with_control(cfg, **kw):
    return dataclasses.replace(cfg, control=dataclasses.replace(cfg.control, **kw))


def uniform_state(u, v, n=10):
    g = line_grid(n)
    return State(0.0, np.full(g.shape, u), np.full(g.shape, v), g)


class TestStableDt:
    def test_transformed(self):
        g = Grid((1.0,), (100,))
        assert stable_dt(params(), g, 0.9, "transformed") == pytest.approx(2.25e-5, rel=1e-14)

    def test_direct(self):
        g = Grid((1.0,), (100,))
        assert stable_dt(params(), g, 0.9, "direct") == pytest.approx(1.5e-5, rel=1e-14)

    def test_2d_no_cross_term(self):
        g = Grid((1.0, 1.0), (10, 10))
        p = params(a=1.0, d=1.0, b=0.0, Lambda=0.0, mu=0.0, strict_mode=False)
        assert stable_dt(p, g, 1.0, "transformed") == pytest.approx(2.5e-3, rel=1e-14)

    def test_decay_cap(self):
        g = Grid((1.0,), (3,))
        assert stable_dt(params(mu=100.0), g, 0.5) == pytest.approx(0.005)

    def test_unknown_path(self):
        with pytest.raises(InputError):
            stable_dt(params(), line_grid(10), 0.9, "implicit")


class TestStepDirect:
    def test_uniform_no_infection(self):
        out = step_direct(uniform_state(0.2, 0.0), params(), Forcing.constant(0.0), Nonlinearity(), 0.1)
        np.testing.assert_allclose(out.u, 0.26, rtol=1e-15)
        np.testing.assert_array_equal(out.v, 0.0)
        assert out.t == pytest.approx(0.1)

    def test_uniform_with_infection(self):
        out = step_direct(uniform_state(0.5, 1.0), params(), Forcing.constant(1.0), Nonlinearity(), 0.1)
        np.testing.assert_allclose(out.u, 0.45, rtol=1e-15)
        np.testing.assert_allclose(out.v, 0.85, rtol=1e-15)

    def test_conserves_mass_without_source(self):
        g = line_grid(50)
        u0, v0 = smooth_fields(g)
        p = params(Lambda=0.0, mu=0.0, strict_mode=False)
        s = State(0.0, u0, v0, g)
        out = step_direct(s, p, Forcing.constant(0.0), Nonlinearity(), stable_dt(p, g))
        total = lambda st: np.sum(st.u + st.v)  # noqa: E731
        assert abs(total(out) - total(s)) <= 1e-13 * total(s)

    def test_non_finite_reports_cell(self):
        g = line_grid(10)
        v = np.ones(10)
        v[3] = 800.0  # exp overflows
        s = State(0.0, np.full(10, 0.5), v, g)
        with pytest.raises(IntegrityError) as err:
            step_direct(s, params(lambda_hat=5.0), Forcing.constant(5.0), Nonlinearity("exponential_violator"), 1e-5)
        assert err.value.cell == (3,)
        assert err.value.step == 0

    def test_input_not_mutated(self):
        s = uniform_state(0.5, 1.0)
        u, v = s.u.copy(), s.v.copy()
        step_direct(s, params(), Forcing.constant(1.0), Nonlinearity(), 0.01)
        np.testing.assert_array_equal(s.u, u)
        np.testing.assert_array_equal(s.v, v)


class TestTransform:
    def test_offset_vanishes_at_equilibrium(self):
        s = uniform_state(0.5, 0.8)
        np.testing.assert_array_equal(to_w(s, params()).w, s.v)

    def test_example(self):
        s = uniform_state(0.2, 1.0)
        np.testing.assert_allclose(to_w(s, params()).w, 0.7, rtol=1e-15)

    def test_round_trip(self):
        g = line_grid(64)
        rng = np.random.default_rng(4)
        s = State(0.3, rng.random(64), rng.random(64) * 3, g)
        p = params(b=0.7, d=3.1, Lambda=1.3, mu=0.9)
        back = from_w(to_w(s, p), p)
        np.testing.assert_allclose(back.u, s.u, rtol=0, atol=1e-15)
        np.testing.assert_allclose(back.v, s.v, rtol=0, atol=1e-15)
        assert back.t == s.t

    @pytest.mark.parametrize("kw", [dict(d=1.0), dict(d=0.5), dict(mu=0.0)])
    def test_unavailable(self, kw):
        p = params(strict_mode=False, **kw)
        with pytest.raises(TransformUnavailable):
            to_w(uniform_state(0.2, 1.0), p)

    def test_fixed_point(self):
        g = line_grid(10)
        s = TransformedState(0.0, np.full(10, 0.5), np.zeros(10), g)
        out = step_transformed(s, params(), Forcing.constant(0.0), Nonlinearity(), 0.01)
        np.testing.assert_array_equal(out.u, 0.5)
        np.testing.assert_array_equal(out.w, 0.0)

    def test_step_unavailable(self):
        g = line_grid(10)
        s = TransformedState(0.0, np.zeros(10), np.zeros(10), g)
        with pytest.raises(TransformUnavailable):
            step_transformed(s, params(d=1.0, strict_mode=False), Forcing.constant(0.0), Nonlinearity(), 0.01)


def numpy_euler(state, p, forcing, nl, dt, n, path):
    """Plain numpy forward Euler built on grid.laplacian, used as the kernel oracle."""
    g = state.grid
    u, v = state.u.copy(), state.v.copy()
    c, ueq = (p.cross_ratio, p.equilibrium_u) if path == "transformed" else (0.0, 0.0)
    w = v - c * (ueq - u)
    for k in range(n):
        t = state.t + k * dt
        lam = eval_lambda(forcing, t, p.lambda_hat)
        vv = w + c * (ueq - u) if path == "transformed" else v
        f = eval_f(nl, np.maximum(u, 0.0), np.maximum(vv, 0.0))
        du = p.a * laplacian(u, g) + p.Lambda - lam * f - p.mu * u
        if path == "transformed":
            dw = p.d * laplacian(w, g) + (1.0 - c) * lam * f - p.mu * w
            u, w = u + dt * du, w + dt * dw
        else:
            dv = p.b * laplacian(u, g) + p.d * laplacian(v, g) + lam * f - p.mu * v
            u, v = u + dt * du, v + dt * dv
    if path == "transformed":
        v = w + c * (ueq - u)
    return u, v


ORACLE_CASES = [
    ("direct", Forcing.constant(1.0), Nonlinearity("product_power", m=1.0), 1),
    ("transformed", Forcing.constant(1.0), Nonlinearity("product_power", m=2.0), 1),
    ("direct", Forcing.piecewise_constant([0.001], [0.2, 0.9]), Nonlinearity("sub_exponential"), 1),
    ("transformed", Forcing.sinusoidal_clamped(0.5, 1.0, 0.003), Nonlinearity("exponential_violator"), 1),
    ("direct", Forcing.constant(1.0), Nonlinearity("product_power", m=1.0), 2),
    ("transformed", Forcing.sinusoidal_clamped(0.5, 1.0, 0.003), Nonlinearity("sub_exponential"), 2),
]


@pytest.mark.parametrize("path, forcing, nl, dim", ORACLE_CASES)
def test_kernel_matches_numpy_oracle(path, forcing, nl, dim):
    p = params(b=0.5, d=2.5, lambda_hat=1.0)
    if dim == 1:
        g = Grid((1.0,), (40,))
        (x,) = g.centers()
        u0 = 0.25 + 0.2 * np.cos(np.pi * x)
        v0 = 1.0 + 0.5 * np.cos(2 * np.pi * x)
    else:
        g = Grid((1.0, 2.0), (12, 20))
        x, y = g.centers()
        u0 = 0.25 + 0.2 * np.cos(np.pi * x) * np.cos(np.pi * y / 2)
        v0 = 1.0 + 0.5 * np.cos(np.pi * y)
    s = State(0.0, u0, v0, g)
    dt = stable_dt(p, g)
    got = simulate(s, p, forcing, nl, dt, 60, path)
    u, v = numpy_euler(s, p, forcing, nl, dt, 60, path)
    np.testing.assert_allclose(got.u, u, rtol=0, atol=1e-13)
    np.testing.assert_allclose(got.v, v, rtol=0, atol=1e-13)


def test_simulate_matches_repeated_steps():
    g = line_grid(30)
    u0, v0 = smooth_fields(g)
    p = params()
    s = State(0.0, u0, v0, g)
    dt = stable_dt(p, g)
    one = s
    for _ in range(25):
        one = step_direct(one, p, Forcing.constant(1.0), Nonlinearity(), dt)
    many = simulate(s, p, Forcing.constant(1.0), Nonlinearity(), dt, 25)
    np.testing.assert_array_equal(one.u, many.u)
    np.testing.assert_array_equal(one.v, many.v)


class TestPlanSteps:
    def test_exact(self):
        assert plan_steps(1.0, 0.25) == (4, 0.25)

    def test_shortened(self):
        n, dt = plan_steps(1.0, 0.3)
        assert n == 4 and dt == 0.25

    def test_zero(self):
        assert plan_steps(0.0, 0.1)[0] == 0


@pytest.fixture(scope="module")
def smooth_cfg():
    return load_config(CONFIGS / "smooth.cfg")


class TestRun:
    def test_zero_horizon(self, smooth_cfg):
        res = run(with_control(smooth_cfg, t_end=0.0))
        assert res.steps == 0
        assert len(res.report.samples) == 1
        s = res.report.samples[0]
        assert s.t == 0.0 and np.isfinite(s.J)
        assert res.ok

    def test_short_run_clean(self, smooth_cfg):
        res = run(with_control(smooth_cfg, t_end=0.2, output_every=500))
        assert res.ok, res.report.violations
        t = res.report.column("t")
        assert np.all(np.diff(t) > 0)
        assert t[-1] == 0.2
        assert res.snapshots[0].t == 0.0 and res.snapshots[-1].t == 0.2

    def test_unstable_dt_rejected(self, smooth_cfg):
        dt = 10 * stable_dt(smooth_cfg.params, smooth_cfg.grid, smooth_cfg.control.safety)
        with pytest.raises(InputError):
            run(with_control(smooth_cfg, dt=dt))

    def test_unstable_dt_blows_up(self, smooth_cfg):
        dt = 10 * stable_dt(smooth_cfg.params, smooth_cfg.grid, smooth_cfg.control.safety)
        res = run(with_control(smooth_cfg, dt=dt, t_end=1.0, output_every=10), enforce_stable_dt=False)
        assert isinstance(res.error, IntegrityError)
        assert res.report.integrity_error
        assert res.report.samples  # partial trajectory kept
        assert np.all(np.isfinite(res.final.u)) and np.all(np.isfinite(res.final.v))

    def test_deterministic(self, smooth_cfg):
        cfg = with_control(smooth_cfg, t_end=0.1, output_every=300)
        a, b = run(cfg), run(cfg)
        assert a.report.rows() == b.report.rows()
        np.testing.assert_array_equal(a.final.v, b.final.v)

    def test_strict_failure_raises(self, smooth_cfg):
        from epidiffuse import HypothesisError

        bad = dataclasses.replace(smooth_cfg, params=dataclasses.replace(smooth_cfg.params, d=1.5))
        with pytest.raises(HypothesisError):
            run(bad)

    def test_snapshots_every(self, smooth_cfg):
        res = run(with_control(smooth_cfg, t_end=0.05, output_every=100, snapshot_every=2))
        times = [s.t for s in res.snapshots]
        assert times[0] == 0.0 and times[-1] == 0.05
        assert len(times) > 2

    def test_paths_agree_on_smooth_data(self, smooth_cfg):
        dt = stable_dt(smooth_cfg.params, smooth_cfg.grid, smooth_cfg.control.safety, "direct")
        d = run(with_control(smooth_cfg, t_end=1.0, dt=dt, output_every=10**6))
        t = run(with_control(smooth_cfg, t_end=1.0, dt=dt, output_every=10**6, path="transformed"))
        assert np.max(np.abs(d.final.v - t.final.v)) <= 1e-6
        assert np.max(np.abs(d.final.u - t.final.u)) <= 1e-6


class TestConvergence:
    def test_levels_checked(self, smooth_cfg):
        with pytest.raises(InputError):
            convergence(smooth_cfg, 1)

    def test_temporal_first_order(self, smooth_cfg):
        st = temporal_study(smooth_cfg, 3)
        assert 0.8 <= st.order <= 1.2
        assert st.steps == [st.steps[0] * 2**k for k in range(3)]

    def test_uniform_data_skip_spatial(self):
        cfg = load_config(CONFIGS / "canonical.cfg")
        st = spatial_study(cfg, 3)
        assert st.errors == [] and st.order is None

    def test_threads_match_serial(self, smooth_cfg, monkeypatch):
        monkeypatch.setenv("EPIDIFFUSE_THREADS", "0")
        serial = spatial_study(smooth_cfg, 2)
        monkeypatch.setenv("EPIDIFFUSE_THREADS", "3")
        threaded = spatial_study(smooth_cfg, 2)
        assert serial.errors == threaded.errors

    def test_bad_thread_env(self, smooth_cfg, monkeypatch):
        monkeypatch.setenv("EPIDIFFUSE_THREADS", "many")
        with pytest.raises(InputError):
            temporal_study(smooth_cfg, 2)


def test_step_control_validation():
    with pytest.raises(InputError):
        StepControl(t_end=1.0, safety=1.5)
    with pytest.raises(InputError):
        StepControl(t_end=-1.0)
    with pytest.raises(InputError):
        StepControl(t_end=1.0, path="rk4")
