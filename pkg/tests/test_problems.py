import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ncsaga.diagnostics import descent_lemma_gap, grad_check, grad_check_component, lipschitz_ratios
from ncsaga.problems import (
    LeastSquaresProblem,
    LinearModelProblem,
    RegularizerParams,
    estimate_smoothness,
    logistic_component,
    logistic_scalar,
    make_nonconvex_quadratic,
    make_pl_quadratic,
    nonconvex_regularizer,
    scalar_gradient_surrogate,
)

from conftest import small_linear

finite = st.floats(-50, 50, allow_nan=False)


@pytest.mark.parametrize("u", [-800.0, -40.0, 0.0, 40.0, 800.0])
@pytest.mark.parametrize("y", [-1.0, 1.0])
def test_logistic_scalar_is_stable(u, y):
    v, lp = logistic_scalar(u, y)
    assert np.isfinite(v) and np.isfinite(lp)
    assert v >= 0.0
    assert abs(lp) <= 1.0


@given(u=finite, y=st.sampled_from([-1.0, 1.0]))
def test_logistic_scalar_matches_reference(u, y):
    v, lp = logistic_scalar(u, y)
    assert v == pytest.approx(np.logaddexp(0.0, -y * u), rel=1e-12, abs=1e-300)
    assert lp == pytest.approx(-y / (1.0 + np.exp(y * u)), rel=1e-12, abs=1e-300)


def test_logistic_component_gradient_is_scalar_times_row():
    z = np.array([0.6, 0.8])
    x = np.array([1.0, -2.0])
    v, g = logistic_component(z, -1.0, x)
    s = logistic_scalar(float(z @ x), -1.0)[1]
    np.testing.assert_array_equal(g, s * z)


def test_regularizer_value_and_gradient():
    p = RegularizerParams(lam=0.3, alpha=2.0)
    x = np.array([0.0, 1.0, -0.5])
    v, g = nonconvex_regularizer(p, x)
    assert v == pytest.approx(0.3 * (2.0 / 3.0 + 0.5 / 1.5))
    np.testing.assert_allclose(g, 0.3 * 2 * 2.0 * x / (1 + 2.0 * x * x) ** 2)
    assert p.lipschitz == pytest.approx(1.2)


@given(arrays(np.float64, 4, elements=finite))
@settings(max_examples=50)
def test_regularizer_bounded_by_lam_times_d(x):
    p = RegularizerParams(lam=0.01, alpha=1.0)
    v, g = nonconvex_regularizer(p, x)
    assert 0.0 <= v <= 0.01 * 4 + 1e-15
    assert np.all(np.abs(g) <= p.lipschitz * np.abs(x) + 1e-15)


def test_scalar_surrogates_agree(linear8):
    x = np.array([0.4, -0.7, 2.0])
    s = linear8.scalar_surrogates(x)
    for i in range(linear8.n):
        assert s[i] == pytest.approx(scalar_gradient_surrogate(linear8, i, x), rel=1e-13)
        np.testing.assert_allclose(linear8.component(i, x)[1], s[i] * linear8.features[i], rtol=1e-13)


def test_linear_model_value_matches_components(linear8):
    x = np.array([1.0, 2.0, -3.0])
    loop = np.mean([linear8.component(i, x)[0] for i in range(linear8.n)])
    assert linear8.loss_value(x) == pytest.approx(loop, rel=1e-13)
    assert linear8.value(x) == pytest.approx(loop + linear8.regularizer(x)[0], rel=1e-13)


def test_linear_model_validates_inputs():
    with pytest.raises(ValueError):
        LinearModelProblem(np.ones((2, 2)), [1, 0])
    with pytest.raises(ValueError):
        LinearModelProblem(np.ones((2, 2)), [1])
    with pytest.raises(ValueError):
        LinearModelProblem([[0.0, 0.0], [1.0, 0.0]], [1, -1], normalize=True)


def test_linear_model_is_read_only(linear8):
    with pytest.raises(ValueError):
        linear8.features[0, 0] = 1.0


def test_normalize_flag_makes_rows_unit():
    p = LinearModelProblem([[3.0, 4.0], [0.0, 2.0]], [1, -1], normalize=True)
    np.testing.assert_allclose(np.linalg.norm(p.features, axis=1), 1.0)


def test_linear_smoothness_constant():
    p = small_linear(lam=0.01, alpha=2.0)
    assert p.smoothness.L == pytest.approx(0.25 + 2 * 0.01 * 2.0)
    assert p.smoothness.sigma == pytest.approx(1.0)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_component_lipschitz_ratio_within_L(seed):
    rng = np.random.default_rng(seed)
    p = small_linear(n=5, d=3, seed=seed % 7, lam=0.1)
    pairs = [(rng.normal(scale=3, size=3), rng.normal(scale=3, size=3)) for _ in range(3)]
    assert lipschitz_ratios(p, pairs) <= p.smoothness.L * (1 + 1e-12)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_descent_lemma_holds(seed):
    rng = np.random.default_rng(seed)
    for p in (small_linear(seed=1, lam=0.05), make_nonconvex_quadratic(4, 3, 2), make_pl_quadratic(6, 4, 3, 0)):
        x, y = rng.normal(scale=2, size=(2, p.d))
        assert descent_lemma_gap(p, x, y) >= -1e-9 * (1 + abs(p.value(x)))


def test_pl_quadratic_properties():
    p = make_pl_quadratic(32, 16, 12, seed=3)
    assert p.rank == 12
    assert p.value(p.x_true) == pytest.approx(0.0, abs=1e-20)
    assert p.tau == pytest.approx(0.5, rel=1e-10)
    eig = np.linalg.eigvalsh(p.design.T @ p.design / p.n)
    assert eig.max() == pytest.approx(1.0, rel=1e-10)


def test_pl_quadratic_identity_design_tau():
    # f = |x - x*|^2 / n, |grad|^2 = 4 |x - x*|^2 / n^2, so tau = n / 4
    n = 6
    p = LeastSquaresProblem(np.eye(n), np.zeros(n))
    assert p.smoothness.tau == pytest.approx(n / 4)


@pytest.mark.parametrize("rank", [0, 17, 40])
def test_pl_quadratic_rejects_bad_rank(rank):
    with pytest.raises(ValueError):
        make_pl_quadratic(32, 16, rank, 0)


def test_nonconvex_quadratic_components_indefinite_mean_definite():
    q = make_nonconvex_quadratic(6, 4, seed=5)
    assert any(np.linalg.eigvalsh(h).min() < 0 for h in q.hessians)
    assert np.linalg.eigvalsh(q.hessians.mean(axis=0)).min() > 0
    assert q.smoothness.L == pytest.approx(max(np.abs(np.linalg.eigvalsh(h)).max() for h in q.hessians))


@pytest.mark.parametrize("make", [lambda: small_linear(lam=0.2), lambda: make_nonconvex_quadratic(5, 3, 1),
                                  lambda: make_pl_quadratic(10, 5, 4, 2)])
def test_gradients_match_finite_differences(make):
    p = make()
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.normal(size=p.d)
        assert grad_check(p, x) <= 1e-7
        assert grad_check_component(p, int(rng.integers(p.n)), x) <= 1e-7


def test_digests_are_content_based():
    a = small_linear(seed=1)
    b = small_linear(seed=1)
    c = small_linear(seed=2)
    assert a.digest() == b.digest() != c.digest()
    assert make_pl_quadratic(8, 4, 2, 0).digest() == make_pl_quadratic(8, 4, 2, 0).digest()


def test_estimate_smoothness_rejects_unknown():
    class Empty:
        n = 0

    with pytest.raises(ValueError):
        estimate_smoothness(Empty())
