"""Worked examples for individual operations, each against an independent oracle."""

import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from scipy.special import expit

from ncsaga.data import make_synthetic_classification, normalize_rows, parse_libsvm
from ncsaga.diagnostics import (
    anchor_average_drift,
    descent_lemma_gap,
    grad_check,
    lyapunov_value,
    minibatch_directions,
    pl_audit,
    saga_directions,
    variance_bound_check,
)
from ncsaga.oracle import IfoCounter, eval_component, full_gradient
from ncsaga.optim import (
    OptState,
    RunStreams,
    SgdSchedule,
    gd_saga,
    gd_step,
    run_saga,
    saga_init,
    saga_step,
    select_output,
    sgd_step,
)
from ncsaga.problems import (
    LeastSquaresProblem,
    LinearModelProblem,
    QuadraticProblem,
    RegularizerParams,
    logistic_component,
    make_nonconvex_quadratic,
    make_pl_quadratic,
    nonconvex_regularizer,
    scalar_gradient_surrogate,
)
from ncsaga.theory import theoretical_step

from conftest import small_linear


# --- oracle ------------------------------------------------------------------

@pytest.mark.parametrize("y", [-1.0, 1.0])
def test_logistic_at_origin(y):
    z = np.array([0.6, 0.0, 0.8])
    v, g = logistic_component(z, y, np.zeros(3))
    assert v == pytest.approx(0.6931472, abs=1e-7)
    np.testing.assert_allclose(g, -y * z / 2, rtol=1e-15)


def test_least_squares_identity_case():
    p = LeastSquaresProblem(np.eye(2), np.zeros(2))
    v, g = eval_component(p, 0, np.array([1.0, 0.0]))
    assert v == 1.0
    np.testing.assert_array_equal(g, [2.0, 0.0])


def test_full_gradient_single_component():
    p = small_linear(n=1, d=3, seed=1, lam=0.3)
    x = np.array([0.1, 0.2, -0.5])
    np.testing.assert_array_equal(full_gradient(p, x), eval_component(p, 0, x)[1] + p.regularizer(x)[1])


def test_full_gradient_identical_components():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((2, 2))
    H = np.stack([M + M.T] * 3)
    c = np.stack([rng.standard_normal(2)] * 3)
    p = QuadraticProblem(H, c)
    x = rng.standard_normal(2)
    np.testing.assert_allclose(full_gradient(p, x), eval_component(p, 1, x)[1], rtol=1e-15)


def test_full_gradient_is_mean_of_components_exactly():
    p = make_nonconvex_quadratic(7, 4, seed=3)
    x = np.random.default_rng(1).standard_normal(4)
    total = np.zeros(4)
    for i in range(7):
        total += eval_component(p, i, x)[1]
    np.testing.assert_array_equal(full_gradient(p, x), total / 7)


def test_component_eval_deterministic(linear8):
    x = np.array([0.3, 0.1, -2.0])
    a, b = linear8.component(3, x), linear8.component(3, x)
    assert a[0] == b[0] and np.array_equal(a[1], b[1])


# --- problems ------------------------------------------------------------------

def test_logistic_far_in_the_tail():
    z = np.array([1.0, 0.0])
    v, g = logistic_component(z, 1.0, np.array([50.0, 3.0]))
    assert v == pytest.approx(math.exp(-50), rel=1e-12)
    assert np.linalg.norm(g) <= math.exp(-50) * np.linalg.norm(z)


def test_regularizer_examples():
    v, g = nonconvex_regularizer(RegularizerParams(0.5, 3.0), np.zeros(4))
    assert v == 0.0 and not g.any()
    v, g = nonconvex_regularizer(RegularizerParams(1.0, 1.0), np.array([1.0]))
    assert v == 0.5 and g[0] == 0.5
    x = np.random.default_rng(0).normal(size=9)
    assert nonconvex_regularizer(RegularizerParams(), x)[0] == nonconvex_regularizer(RegularizerParams(), -x)[0]


def test_logistic_curvature_constant_by_numerical_max():
    res = minimize_scalar(lambda u: -expit(u) * (1 - expit(u)), bounds=(-10, 10), method="bounded")
    assert -res.fun == pytest.approx(0.25, abs=1e-10)
    p = LinearModelProblem([[1.0, 0.0]], [1.0], RegularizerParams(0.0, 1.0))
    assert p.smoothness.L == pytest.approx(-res.fun, abs=1e-10)


def test_regularizer_lipschitz_by_numerical_max():
    lam, alpha = 0.001, 1.0

    def r2(u):  # second derivative of lam * alpha u^2 / (1 + alpha u^2)
        return lam * 2 * alpha * (1 - 3 * alpha * u * u) / (1 + alpha * u * u) ** 3

    grid = np.linspace(-5, 5, 200001)
    assert np.abs(r2(grid)).max() == pytest.approx(0.002, rel=1e-9)
    assert RegularizerParams(lam, alpha).lipschitz == pytest.approx(0.002)


def test_regularizer_gradient_lipschitz_on_pairs():
    params = RegularizerParams(0.3, 2.0)
    rng = np.random.default_rng(4)
    for _ in range(200):
        x, y = rng.normal(scale=2, size=(2, 5))
        dg = nonconvex_regularizer(params, x)[1] - nonconvex_regularizer(params, y)[1]
        assert np.linalg.norm(dg) <= params.lipschitz * np.linalg.norm(x - y) * (1 + 1e-12)


def test_scalar_surrogate_examples(linear8):
    for i in range(8):
        assert scalar_gradient_surrogate(linear8, i, np.zeros(3)) == -linear8.labels[i] / 2
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.normal(scale=3, size=3)
        i = int(rng.integers(8))
        np.testing.assert_array_equal(scalar_gradient_surrogate(linear8, i, x) * linear8.features[i],
                                      eval_component(linear8, i, x)[1])
    p = LinearModelProblem([[1.0]], [1.0])
    vals = [abs(scalar_gradient_surrogate(p, 0, np.array([m]))) for m in np.linspace(0, 60, 50)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_pl_full_rank_orthogonal_case():
    p = make_pl_quadratic(8, 8, 8, seed=2)
    H = p.design.T @ p.design / p.n
    lam_min = np.linalg.eigvalsh(H).min()
    assert lam_min > 0
    assert p.tau == pytest.approx(1 / (4 * lam_min), rel=1e-10)


def test_pl_rank_deficient_holds_at_random_points():
    p = make_pl_quadratic(40, 20, 7, seed=5)
    assert np.linalg.matrix_rank(p.design.T @ p.design) == 7
    samples = np.random.default_rng(0).normal(scale=3, size=(1000, 20))
    audit = pl_audit(p, samples)
    assert audit.holds and audit.worst_ratio <= p.tau


def test_pl_same_seed_bit_identical():
    a, b = make_pl_quadratic(12, 6, 4, 9), make_pl_quadratic(12, 6, 4, 9)
    assert np.array_equal(a.design, b.design) and np.array_equal(a.x_true, b.x_true)


# --- data ----------------------------------------------------------------------

def test_parse_examples():
    ds = parse_libsvm("+1 1:0.6 3:0.8\n")
    assert ds.n == 1 and ds.d == 3 and ds.labels[0] == 1
    assert ds.row_norms()[0] == pytest.approx(1.0, abs=1e-15)
    ds = parse_libsvm("0 2:1\n")
    assert ds.labels[0] == -1
    np.testing.assert_array_equal(ds.to_dense(), [[0.0, 1.0]])


def test_normalize_examples():
    ds = normalize_rows(parse_libsvm("1 1:3 2:4\n-1 1:0.6 2:0.8\n"))
    np.testing.assert_allclose(ds.to_dense()[0], [0.6, 0.8], rtol=1e-15)
    np.testing.assert_allclose(ds.to_dense()[1], [0.6, 0.8], rtol=2.3e-16)
    rnd = make_synthetic_classification(500, 30, seed=3)
    assert np.max(np.abs(rnd.row_norms() - 1.0)) <= 1e-12


def _train_accuracy(ds, steps=300):
    p = LinearModelProblem(ds.to_dense(), ds.labels)
    x = np.zeros(ds.d)
    for _ in range(steps):
        x = x - (1 / p.smoothness.L) * p.gradient(x)
    return x


def test_synthetic_separable_enough_for_logistic():
    ds = make_synthetic_classification(2000, 50, separation=2.0, seed=0)
    x = _train_accuracy(ds)
    acc = np.mean(np.sign(ds.to_dense() @ x) == ds.labels)
    assert acc > 0.9


def test_synthetic_no_signal_without_separation():
    ds = make_synthetic_classification(4000, 10, separation=0.0, seed=1)
    X, y = ds.to_dense(), ds.labels
    train = make_synthetic_classification(4000, 10, separation=0.0, seed=1)
    half = 2000
    from ncsaga.data import from_dense

    x = _train_accuracy(from_dense(X[:half], y[:half]))
    acc = np.mean(np.sign(X[half:] @ x) == y[half:])
    assert abs(acc - 0.5) <= 0.05
    assert train == ds


# --- optim ---------------------------------------------------------------------

def _unit_quadratic():
    return QuadraticProblem(np.ones((1, 1, 1)), np.zeros((1, 1)))


def test_gd_step_examples():
    st = OptState(x=np.array([1.0]), stream=None, ifo=IfoCounter(), eta=1.0)
    assert gd_step(st, _unit_quadratic()).x[0] == 0.0
    p = make_pl_quadratic(10, 5, 3, 0)
    st = OptState(x=np.ones(5), stream=None, ifo=IfoCounter(), eta=0.0)
    assert np.array_equal(gd_step(st, p).x, np.ones(5))
    st = OptState(x=np.ones(5) * 3, stream=None, ifo=IfoCounter(), eta=1 / p.smoothness.L)
    f = [p.value(st.x)]
    for _ in range(100):
        f.append(p.value(gd_step(st, p).x))
    assert all(b <= a for a, b in zip(f, f[1:]))


def test_sgd_examples():
    q = make_nonconvex_quadratic(1, 3, 4)
    s = OptState(x=np.ones(3), stream=RunStreams(0).index_stream(1), ifo=IfoCounter())
    g = OptState(x=np.ones(3), stream=None, ifo=IfoCounter(), eta=0.05)
    for _ in range(50):
        sgd_step(s, q, SgdSchedule(0.05))
        gd_step(g, q)
        assert np.array_equal(s.x, g.x)
    p = make_nonconvex_quadratic(5, 3, 1)
    x = np.array([0.5, -1.0, 2.0])
    mean = np.mean([p.component(i, x)[1] for i in range(5)], axis=0)
    np.testing.assert_allclose(mean, p.gradient(x), rtol=1e-13)
    assert SgdSchedule(0.1, 1.0).eta(25, 10) == pytest.approx(0.1 / 3)


@pytest.mark.parametrize("regularized", [False, True])
def test_first_saga_step_is_full_gradient_step(regularized):
    p = small_linear(n=6, d=3, seed=2, lam=0.2)
    x0 = np.array([0.3, -0.4, 1.0])
    s = saga_init(p, x0, 0.5, RunStreams(0).index_stream(6), IfoCounter(), regularized=regularized)
    saga_step(s, p)
    np.testing.assert_allclose(s.x, x0 - 0.5 * p.gradient(x0), rtol=1e-13, atol=1e-15)


def test_scalar_storage_is_order_n():
    p = small_linear(n=1000, d=200, seed=0)
    a = saga_init(p, np.zeros(200), 0.1, RunStreams(0).index_stream(1000), IfoCounter(), regularized=True)
    b = saga_init(p, np.zeros(200), 0.1, RunStreams(0).index_stream(1000), IfoCounter(), regularized=True,
                  storage="dense")
    assert a.anchor_storage == 1000
    assert b.anchor_storage == 1000 * 200


def test_anchor_average_identity_every_100_steps():
    p = small_linear(n=30, d=5, seed=6)
    s = saga_init(p, np.ones(5), 0.5, RunStreams(3).index_stream(30), IfoCounter())
    for k in range(1, 3001):
        saga_step(s, p)
        if k % 100 == 0:
            assert anchor_average_drift(s, p) <= 1e-9


def test_descent_lemma_along_iterates():
    for p in (small_linear(n=20, d=4, seed=1, lam=0.1), make_nonconvex_quadratic(10, 3, 2),
              make_pl_quadratic(20, 6, 4, 1)):
        iters = run_saga(p, np.ones(p.d), 200, theoretical_step(p.n, p.smoothness.L)[0], seed=1,
                         retain_iterates=True).iterates
        for x, y in zip(iters, iters[1:]):
            assert descent_lemma_gap(p, x, y) >= -1e-12 * (1 + abs(p.value(x)))
            assert descent_lemma_gap(p, y, x) >= -1e-12 * (1 + abs(p.value(y)))


def test_minibatch_variance_halves_with_b2():
    q = make_nonconvex_quadratic(4, 3, 5)
    s = saga_init(q, np.ones(3), 0.05, RunStreams(2).index_stream(4), IfoCounter(), track_anchors=True)
    for _ in range(8):
        saga_step(s, q)
    g = q.gradient(s.x)
    var1 = np.mean(np.sum((saga_directions(s, q) - g) ** 2, axis=1))
    var2 = np.mean(np.sum((minibatch_directions(s, q, 2) - g) ** 2, axis=1))
    assert var2 == pytest.approx(var1 / 2, rel=1e-12)


def test_select_output_examples():
    rng = np.random.default_rng(0)
    assert select_output([np.array([7.0])], rng)[0] == 7.0
    trace = [np.array([float(k)]) for k in range(16)]
    rng = np.random.default_rng(1)
    counts = np.bincount([int(select_output(trace, rng)[0]) for _ in range(100_000)], minlength=16)
    mu, sd = 100_000 / 16, math.sqrt(100_000 * (1 / 16) * (15 / 16))
    assert np.all(np.abs(counts - mu) <= 3 * sd)


def test_gd_saga_single_epoch_is_one_saga_run():
    p = make_pl_quadratic(12, 5, 4, 0)
    res = gd_saga(p, np.ones(5), K=1, T=30, eta=0.01, seed=3)
    run = run_saga(p, np.ones(5), 30, 0.01, seed=3)
    np.testing.assert_array_equal(res.x, run.x_out)


def test_gd_saga_gradient_norm_halving():
    # E|grad f(x^k)|^2 <= 2^-k |grad f(x^0)|^2, checked on the median over seeds
    p = make_pl_quadratic(32, 16, 12, seed=0)
    L, tau = p.smoothness.L, p.tau
    eta = theoretical_step(32, L)[0]
    T = math.ceil(24 * L * tau * 32 ** (2 / 3))
    x0 = p.x_true + np.random.default_rng(0).normal(size=16)
    g0 = float(np.sum(p.gradient(x0) ** 2))
    norms = []
    for seed in range(8):
        res = gd_saga(p, x0, K=3, T=T, eta=eta, seed=seed)
        norms.append([float(np.sum(p.gradient(x) ** 2)) for x in res.epochs[1:]])
    med = np.median(norms, axis=0)
    assert all(med[k] <= 2.0 ** -(k + 1) * g0 for k in range(3))


# --- diagnostics -----------------------------------------------------------------

def test_grad_check_quadratic_is_near_exact():
    p = make_nonconvex_quadratic(5, 4, 0)
    for x in np.random.default_rng(2).normal(size=(20, 4)):
        assert grad_check(p, x) <= 1e-9


def test_grad_check_detects_one_corrupted_coordinate():
    p = small_linear(n=20, d=6, seed=8, lam=0.001)
    x = np.random.default_rng(3).normal(size=6)
    k = int(np.argmax(np.abs(p.gradient(x))))

    def corrupted(z):
        g = p.gradient(z).copy()
        g[k] *= 1.01
        return g

    assert grad_check(p, x, gradient=corrupted) >= 1e-3


def test_variance_bound_single_component():
    q = make_nonconvex_quadratic(1, 3, 0)
    s = saga_init(q, np.ones(3), 0.1, RunStreams(0).index_stream(1), IfoCounter(), track_anchors=True)
    for _ in range(3):
        saga_step(s, q)
    chk = variance_bound_check(s, q)
    g = q.gradient(s.x)
    assert chk.lhs == pytest.approx(float(g @ g), rel=1e-12)
    assert chk.holds


def test_lyapunov_cold_start_and_horizon():
    q = make_nonconvex_quadratic(4, 2, 0)
    s = saga_init(q, np.ones(2), 0.01, RunStreams(0).index_stream(4), IfoCounter(), track_anchors=True)
    snap = lyapunov_value(s, q, 0.37)
    assert snap.anchor_spread == 0.0 and snap.R == q.value(np.ones(2))
    for _ in range(5):
        saga_step(s, q)
    snap = lyapunov_value(s, q, 0.0)
    assert snap.R == snap.f_val
