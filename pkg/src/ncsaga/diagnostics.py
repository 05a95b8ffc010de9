"""Executable checks for the SAGA analysis.

Expectations over the sampled indices are computed by enumerating every outcome,
never by sampling, so each check is an exact inequality up to floating-point slack.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .oracle import FiniteSumProblem, IfoCounter
from .optim.state import SagaState
from .optim.steps import minibatch_direction, minibatch_saga_step, saga_direction, saga_step
from .theory import TheoryParams, gamma_from, run_recursion

IDENTITY_TOL = 1e-12
FD_TOL = 1e-5
INEQUALITY_SLACK = 1e-12


class PLViolation(ArithmeticError):
    """A point with zero gradient but positive suboptimality."""


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    inputs_digest: str = ""
    details: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {"name": self.name, "inputs_digest": self.inputs_digest, "margin": self.margin,
                "pass": bool(self.passed), **({"details": self.details} if self.details else {})}


def digest_inputs(*items) -> str:
    h = hashlib.sha256()
    for it in items:
        if isinstance(it, np.ndarray):
            h.update(np.ascontiguousarray(it).tobytes())
        else:
            h.update(repr(it).encode())
    return h.hexdigest()[:16]


def report_json(results: Sequence[CheckResult]) -> str:
    return json.dumps([r.to_dict() for r in results], indent=2, sort_keys=False, default=float)


# --- gradients ----------------------------------------------------------------

def fd_step(x: np.ndarray) -> float:
    return 1e-6 * (1.0 + float(np.linalg.norm(x)))


def finite_difference_gradient(fun: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    g = np.empty_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b)) / scale


def grad_check(problem: FiniteSumProblem, x, h: float | None = None,
               gradient: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
    """Relative error ``|fd - analytic| / max(|fd|, |analytic|)`` of the full gradient."""
    x = np.asarray(x, dtype=np.float64)
    h = fd_step(x) if h is None else h
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    analytic = (gradient or problem.gradient)(x)
    fd = finite_difference_gradient(problem.value, x, h)
    return relative_error(fd, analytic)


def grad_check_component(problem: FiniteSumProblem, i: int, x, h: float | None = None) -> float:
    x = np.asarray(x, dtype=np.float64)
    h = fd_step(x) if h is None else h
    fd = finite_difference_gradient(lambda z: problem.component(i, z)[0], x, h)
    return relative_error(fd, problem.component(i, x)[1])


def descent_lemma_gap(problem: FiniteSumProblem, x, y, L: float | None = None) -> float:
    """``f(y) + <grad f(y), x - y> + L/2 |x - y|^2 - f(x)``; non-negative for L-smooth f."""
    L = problem.smoothness.L if L is None else L
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - y
    return problem.value(y) + float(problem.gradient(y) @ dx) + 0.5 * L * float(dx @ dx) - problem.value(x)


def lipschitz_ratios(problem: FiniteSumProblem, pairs, components: bool = True) -> float:
    """Largest observed ``|grad f_i(x) - grad f_i(y)| / |x - y|`` over the given pairs."""
    worst = 0.0
    for x, y in pairs:
        dist = float(np.linalg.norm(x - y))
        if dist == 0:
            continue
        idx = range(problem.n) if components else []
        for i in idx:
            diff = problem.component(i, x)[1] - problem.component(i, y)[1]
            worst = max(worst, float(np.linalg.norm(diff)) / dist)
        if problem.has_regularizer:
            diff = problem.regularizer(x)[1] - problem.regularizer(y)[1]
            worst = max(worst, float(np.linalg.norm(diff)) / dist)
    return worst


# --- unbiasedness and variance ----------------------------------------------

def _objective_gradient(state: SagaState, problem) -> np.ndarray:
    """Gradient of the part of ``f`` that the SAGA estimator targets."""
    if state.folded or not problem.has_regularizer:
        return problem.gradient(state.x)
    return problem.sum_gradients(state.x) / problem.n


def saga_directions(state: SagaState, problem) -> np.ndarray:
    return np.array([saga_direction(state, problem, i) for i in range(problem.n)])


def unbiasedness_gap(state: SagaState, problem) -> float:
    """``|mean_i v(i) - grad f(x)|`` over every choice of ``i``."""
    v = saga_directions(state, problem)
    return float(np.linalg.norm(v.mean(axis=0) - _objective_gradient(state, problem)))


def minibatch_directions(state: SagaState, problem, b: int) -> np.ndarray:
    """Directions for all ``n^b`` ordered with-replacement batches."""
    combos = itertools.product(range(problem.n), repeat=b)
    return np.array([minibatch_direction(state, problem, I) for I in combos])


def minibatch_unbiasedness_gap(state: SagaState, problem, b: int) -> float:
    v = minibatch_directions(state, problem, b)
    return float(np.linalg.norm(v.mean(axis=0) - _objective_gradient(state, problem)))


def anchor_spread(state: SagaState) -> float:
    """``sum_i |x - alpha_i|^2`` (requires anchor tracking)."""
    if state.points is None:
        raise ValueError("state does not track anchor points; initialize with track_anchors=True")
    diff = state.x[None, :] - state.points
    return float(np.einsum("ij,ij->", diff, diff))


@dataclass
class VarianceCheck:
    lhs: float
    rhs: float
    holds: bool

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def variance_bound_check(state: SagaState, problem, L: float | None = None, b: int = 1) -> VarianceCheck:
    """``E|v|^2 <= 2 |grad f|^2 + (2 L^2 / (b n)) sum_i |x - alpha_i|^2`` by enumeration.

    ``b = 1`` enumerates the ``n`` single-index outcomes; ``b > 1`` all ``n^b`` batches.
    """
    L = problem.smoothness.L if L is None else L
    v = saga_directions(state, problem) if b == 1 else minibatch_directions(state, problem, b)
    lhs = float(np.mean(np.einsum("ij,ij->i", v, v)))
    g = _objective_gradient(state, problem)
    rhs = 2.0 * float(g @ g) + 2.0 * L * L / (b * problem.n) * anchor_spread(state)
    return VarianceCheck(lhs, rhs, lhs <= rhs + INEQUALITY_SLACK)


def anchor_average_drift(state: SagaState, problem) -> float:
    """``|g - (1/n) sum_i grad f_i(alpha_i)|`` relative to ``1 + |g|``."""
    if state.scalars is not None:
        recomputed = problem.features.T @ state.scalars / problem.n
    else:
        recomputed = state.grads.mean(axis=0)
    g = state.g
    return float(np.linalg.norm(g - recomputed)) / (1.0 + float(np.linalg.norm(g)))


# --- Lyapunov function ------------------------------------------------------

@dataclass
class LyapunovSnapshot:
    t: int
    f_val: float
    anchor_spread: float
    R: float


def lyapunov_value(state: SagaState, problem, c_t: float) -> LyapunovSnapshot:
    f_val = problem.value(state.x)
    spread = c_t / problem.n * anchor_spread(state)
    return LyapunovSnapshot(state.t, f_val, spread, f_val + spread)


class LyapunovTracker:
    """Callback for :func:`ncsaga.optim.run_saga` recording ``R^t`` every ``stride`` steps."""

    def __init__(self, problem, c: np.ndarray, stride: int = 1):
        if stride < 1:
            raise ValueError("stride must be a positive integer")
        self.problem = problem
        self.c = np.asarray(c)
        self.stride = stride
        self.snapshots: List[LyapunovSnapshot] = []

    def __call__(self, state: SagaState) -> None:
        if state.t % self.stride == 0 and state.t < len(self.c):
            self.snapshots.append(lyapunov_value(state, self.problem, float(self.c[state.t])))

    def start(self, state: SagaState) -> None:
        self.snapshots.append(lyapunov_value(state, self.problem, float(self.c[state.t])))


def lyapunov_trace(states: Sequence[SagaState], problem, c: np.ndarray, stride: int = 1) -> List[LyapunovSnapshot]:
    """Snapshots for frozen states (e.g. copies saved along a run)."""
    if stride < 1:
        raise ValueError("stride must be a positive integer")
    return [lyapunov_value(s, problem, float(c[s.t])) for s in states if s.t % stride == 0]


class _ForcedStream:
    def __init__(self, values):
        self._values = list(values)
        self._k = 0

    def next(self) -> int:
        v = self._values[self._k]
        self._k += 1
        return v


def _clone(state: SagaState, stream) -> SagaState:
    s = copy.copy(state)
    s.x = state.x.copy()
    s.gsum = state.gsum.copy()
    s.grads = None if state.grads is None else state.grads.copy()
    s.scalars = None if state.scalars is None else state.scalars.copy()
    s.points = None if state.points is None else state.points.copy()
    s.ifo = IfoCounter()
    s.stream = stream
    return s


@dataclass
class LyapunovStep:
    t: int
    R_t: float
    expected_R_next: float
    Gamma_t: float
    grad_norm_sq: float

    @property
    def slack(self) -> float:
        return self.R_t - self.Gamma_t * self.grad_norm_sq - self.expected_R_next


def expected_lyapunov_step(state: SagaState, problem, c_t: float, c_next: float, Gamma_t: float) -> LyapunovStep:
    """Exact ``E[R^{t+1} | state]`` over all ``n^2`` equally likely ``(i, j)`` pairs."""
    n = problem.n
    total = 0.0
    for i in range(n):
        for j in range(n):
            nxt = saga_step(_clone(state, _ForcedStream([i, j])), problem)
            total += lyapunov_value(nxt, problem, c_next).R
    g = problem.gradient(state.x)
    return LyapunovStep(state.t, lyapunov_value(state, problem, c_t).R, total / (n * n), Gamma_t, float(g @ g))


def lyapunov_descent_run(problem, state: SagaState, params: TheoryParams, steps: int) -> List[LyapunovStep]:
    """Follow one sampled trajectory; at each visited state check the one-step Lyapunov descent exactly."""
    trace = run_recursion(params)
    if steps > params.T:
        raise ValueError("cannot check more steps than the recursion horizon")
    out = []
    for t in range(steps):
        c_t, c_next = float(trace.c[t]), float(trace.c[t + 1])
        gamma = float(gamma_from(c_next, params))
        out.append(expected_lyapunov_step(state, problem, c_t, c_next, gamma))
        saga_step(state, problem)
    return out


# --- gradient dominance -----------------------------------------------------

@dataclass
class PLAudit:
    worst_ratio: float
    tau: float
    holds: bool
    excluded: int


def pl_audit(problem, samples, tol: float = 1e-12) -> PLAudit:
    """Largest ``(f(x) - f*) / |grad f(x)|^2`` over ``samples``; must not exceed ``tau``."""
    worst = 0.0
    excluded = 0
    for x in np.atleast_2d(samples):
        gap = problem.value(x) - problem.fstar
        g = problem.gradient(x)
        g2 = float(g @ g)
        if g2 == 0.0:
            if gap > tol:
                raise PLViolation(f"zero gradient with suboptimality {gap:.3e}")
            excluded += 1
            continue
        worst = max(worst, gap / g2)
    tau = problem.tau
    return PLAudit(worst, tau, worst <= tau * (1.0 + 1e-12) + tol, excluded)


# --- standard suite ---------------------------------------------------------

def standard_suite(seed: int = 0, problem=None) -> List[CheckResult]:
    """Gradient, estimator and Lyapunov checks on small problems (or on ``problem``)."""
    from .optim.state import RunStreams
    from .optim.steps import saga_init
    from .problems import LinearModelProblem, RegularizerParams, make_nonconvex_quadratic
    from .theory import theory_params

    rng = np.random.default_rng(seed)
    results = []
    if problem is None:
        Z = rng.standard_normal((8, 3))
        Z /= np.linalg.norm(Z, axis=1, keepdims=True)
        y = np.where(rng.random(8) < 0.5, -1.0, 1.0)
        problem = LinearModelProblem(Z, y, RegularizerParams())
    x = rng.standard_normal(problem.d)
    err = grad_check(problem, x)
    results.append(CheckResult("grad_check", err <= FD_TOL, FD_TOL - err, digest_inputs(problem.digest(), x)))

    if problem.n <= 64:
        state = saga_init(problem, x, 0.1, RunStreams(seed).index_stream(problem.n), IfoCounter(),
                          track_anchors=True)
        for _ in range(5):
            saga_step(state, problem)
        gap = unbiasedness_gap(state, problem)
        results.append(CheckResult("unbiasedness", gap <= IDENTITY_TOL, IDENTITY_TOL - gap,
                                   digest_inputs(problem.digest(), seed)))
        var = variance_bound_check(state, problem)
        results.append(CheckResult("variance_bound", var.holds, var.slack, digest_inputs(problem.digest(), seed)))

    quad = make_nonconvex_quadratic(4, 2, seed)
    params = theory_params(4, quad.smoothness.L, 20)
    st = saga_init(quad, rng.standard_normal(2), params.eta, RunStreams(seed).index_stream(4), IfoCounter(),
                   track_anchors=True)
    steps = lyapunov_descent_run(quad, st, params, params.T)
    worst = min(s.slack for s in steps)
    results.append(CheckResult("lyapunov_descent", worst >= -INEQUALITY_SLACK, worst,
                               digest_inputs(quad.digest(), seed), {"steps": len(steps)}))
    return results
