import json

import numpy as np
import pytest

from ncsaga.diagnostics import (
    CheckResult,
    LyapunovTracker,
    PLViolation,
    anchor_spread,
    finite_difference_gradient,
    grad_check,
    lyapunov_descent_run,
    lyapunov_trace,
    minibatch_unbiasedness_gap,
    pl_audit,
    relative_error,
    report_json,
    standard_suite,
    unbiasedness_gap,
    variance_bound_check,
)
from ncsaga.oracle import IfoCounter
from ncsaga.optim import RunStreams, run_saga, saga_init, saga_step
from ncsaga.problems import LeastSquaresProblem, make_nonconvex_quadratic, make_pl_quadratic
from ncsaga.theory import run_recursion, theory_params

from conftest import small_linear


def test_fd_gradient_on_known_function():
    g = finite_difference_gradient(lambda x: float(x @ x), np.array([1.0, -2.0]), 1e-5)
    np.testing.assert_allclose(g, [2.0, -4.0], rtol=1e-8)


def test_relative_error_conventions():
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0
    assert relative_error(np.array([1.0, 0.0]), np.array([0.0, 0.0])) == 1.0


def test_grad_check_catches_wrong_gradient(linear8):
    x = np.array([0.2, 0.1, -0.3])
    assert grad_check(linear8, x) <= 1e-7
    assert grad_check(linear8, x, gradient=lambda z: 1.01 * linear8.gradient(z)) > 1e-3
    with pytest.raises(ValueError):
        grad_check(linear8, x, h=0.0)


@pytest.mark.parametrize("regularized", [False, True])
def test_unbiasedness_along_run(linear8, regularized):
    s = saga_init(linear8, np.ones(3), 0.3, RunStreams(1).index_stream(8), IfoCounter(), regularized=regularized,
                  track_anchors=True)
    for _ in range(30):
        assert unbiasedness_gap(s, linear8) <= 1e-12
        assert variance_bound_check(s, linear8).holds
        saga_step(s, linear8)


def test_minibatch_unbiasedness():
    q = make_nonconvex_quadratic(4, 3, 2)
    s = saga_init(q, np.ones(3), 0.05, RunStreams(0).index_stream(4), IfoCounter(), track_anchors=True)
    for _ in range(10):
        saga_step(s, q)
    assert minibatch_unbiasedness_gap(s, q, 3) <= 1e-12
    assert variance_bound_check(s, q, b=2).holds


def test_variance_bound_tight_at_cold_start(linear8):
    # all anchors at x: v = grad f(x) for every i, so E|v|^2 = |grad f|^2
    s = saga_init(linear8, np.ones(3), 0.1, RunStreams(0).index_stream(8), IfoCounter(), track_anchors=True)
    chk = variance_bound_check(s, linear8)
    g = linear8.gradient(np.ones(3))
    assert chk.lhs == pytest.approx(float(g @ g), rel=1e-12)
    assert anchor_spread(s) == 0.0


def test_anchor_spread_requires_tracking(linear8):
    s = saga_init(linear8, np.ones(3), 0.1, RunStreams(0).index_stream(8), IfoCounter())
    with pytest.raises(ValueError):
        anchor_spread(s)


def test_lyapunov_bridge_small_problem():
    q = make_nonconvex_quadratic(4, 2, 11)
    p = theory_params(4, q.smoothness.L, 20)
    s = saga_init(q, np.array([2.0, -1.0]), p.eta, RunStreams(3).index_stream(4), IfoCounter(),
                  track_anchors=True)
    steps = lyapunov_descent_run(q, s, p, 20)
    assert len(steps) == 20
    assert all(st.slack >= -1e-12 for st in steps)
    assert s.t == 20
    with pytest.raises(ValueError):
        lyapunov_descent_run(q, s, p, 21)


def test_lyapunov_tracker_and_trace(linear8):
    p = theory_params(8, linear8.smoothness.L, 40)
    c = run_recursion(p).c
    tracker = LyapunovTracker(linear8, c, stride=10)
    run = run_saga(linear8, np.ones(3), 40, p.eta, seed=0, track_anchors=True, callback=tracker)
    assert [s.t for s in tracker.snapshots] == [10, 20, 30, 40]
    snaps = lyapunov_trace([run.state], linear8, c, stride=1)
    assert snaps[0].R == pytest.approx(snaps[0].f_val)  # c_T = 0
    with pytest.raises(ValueError):
        LyapunovTracker(linear8, c, stride=0)


def test_pl_audit():
    p = make_pl_quadratic(20, 8, 5, 1)
    rng = np.random.default_rng(0)
    audit = pl_audit(p, rng.normal(scale=4, size=(100, 8)))
    assert audit.holds and 0 < audit.worst_ratio <= p.tau
    # along the weakest direction the bound is attained
    H = p.design.T @ p.design / p.n
    w, V = np.linalg.eigh(H)
    k = int(np.flatnonzero(w > 1e-9)[0])
    tight = pl_audit(p, p.x_true + V[:, k])
    assert tight.worst_ratio == pytest.approx(p.tau, rel=1e-9)
    assert pl_audit(p, p.x_true).excluded == 1


def test_pl_audit_scales_with_objective():
    A = make_pl_quadratic(10, 4, 4, 0)
    B = LeastSquaresProblem(np.sqrt(2.0) * A.design, np.sqrt(2.0) * A.targets)  # f -> 2f
    B.fstar, B.tau = 0.0, B.smoothness.tau
    x = np.random.default_rng(1).normal(size=(20, 4))
    a, b = pl_audit(A, x), pl_audit(B, x)
    assert b.tau == pytest.approx(A.tau / 2, rel=1e-10)
    assert b.worst_ratio == pytest.approx(a.worst_ratio / 2, rel=1e-10)


def test_pl_violation_detected():
    class Flat:
        fstar = 0.0
        tau = 1.0

        def value(self, x):
            return 1.0

        def gradient(self, x):
            return np.zeros_like(x)

    with pytest.raises(PLViolation):
        pl_audit(Flat(), np.zeros((1, 2)))


def test_report_json_and_suite():
    results = standard_suite(seed=2)
    assert all(r.passed for r in results), [r.to_dict() for r in results]
    parsed = json.loads(report_json(results))
    assert {"name", "inputs_digest", "margin", "pass"} <= set(parsed[0])
    assert CheckResult("x", False, -1.0).to_dict()["pass"] is False
