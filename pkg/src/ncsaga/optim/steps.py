"""Single-iteration updates for GD, SGD and the SAGA family.

All steps mutate the state in place and return it. Index draws come from
``state.stream`` in a fixed order (SAGA: ``i`` then ``j``; minibatch: the ``b``
entries of ``I`` then the ``b`` entries of ``J``), so ``b = 1`` reproduces SAGA.
"""

from __future__ import annotations

import numpy as np

from ..oracle import ContractViolation, DivergenceError, FiniteSumProblem, IfoCounter, full_gradient
from ..problems import LinearModelProblem
from .state import IndexStream, OptState, SagaState, SgdSchedule


def _guard(vec: np.ndarray, t: int, what: str) -> None:
    if not np.all(np.isfinite(vec)):
        raise DivergenceError(f"non-finite {what} at t={t}", t=t, norm=float(np.linalg.norm(vec)))


def gd_step(state: OptState, problem: FiniteSumProblem) -> OptState:
    """``x <- x - eta * grad f(x)``; consumes ``n`` IFO calls."""
    grad = full_gradient(problem, state.x, state.ifo)
    _guard(grad, state.t, "gradient")
    state.x = state.x - state.eta * grad
    _guard(state.x, state.t, "iterate")
    state.t += 1
    return state


def _stochastic_grad(problem: FiniteSumProblem, i: int, x: np.ndarray) -> np.ndarray:
    g = problem.component(i, x)[1]
    if problem.has_regularizer:
        g = g + problem.regularizer(x)[1]
    return g


def sgd_step(state: OptState, problem: FiniteSumProblem, schedule: SgdSchedule) -> OptState:
    """``x <- x - eta_t (grad f_i(x) [+ grad r(x)])`` for a uniform ``i``; one IFO call."""
    eta = schedule.eta(state.t, problem.n)
    i = state.stream.next()
    state.ifo.charge(1)
    grad = _stochastic_grad(problem, i, state.x)
    state.x = state.x - eta * grad
    _guard(state.x, state.t, "iterate")
    state.eta = eta
    state.t += 1
    return state


# --- SAGA family ------------------------------------------------------------

def _uses_scalars(problem, storage: str) -> bool:
    if storage == "auto":
        return isinstance(problem, LinearModelProblem)
    if storage == "scalar":
        if not isinstance(problem, LinearModelProblem):
            raise ContractViolation("scalar anchor storage needs a LinearModelProblem")
        return True
    if storage == "dense":
        return False
    raise ValueError(f"unknown storage {storage!r}")


def _grad_at(state: SagaState, problem, i: int, x: np.ndarray):
    """Component gradient at ``x`` plus what the anchor table stores for it."""
    if state.scalars is not None:
        s = problem.scalar_surrogate(i, x)
        return s * problem.features[i], s
    g = problem.component(i, x)[1]
    if state.folded and problem.has_regularizer:
        g = g + problem.regularizer(x)[1]
    return g, g


def _anchor_grad(state: SagaState, problem, i: int) -> np.ndarray:
    if state.scalars is not None:
        return state.scalars[i] * problem.features[i]
    return state.grads[i]


def _store_anchor(state: SagaState, i: int, point: np.ndarray, stored) -> None:
    if state.scalars is not None:
        state.scalars[i] = stored
    else:
        state.grads[i] = stored
    if state.points is not None:
        state.points[i] = point


def saga_init(problem: FiniteSumProblem, x0, eta: float, stream: IndexStream, ifo: IfoCounter,
              regularized: bool = False, storage: str = "auto", track_anchors: bool = False) -> SagaState:
    """Cold start: every anchor at ``x0``; ``n`` IFO calls to fill the table.

    ``regularized=True`` keeps ``grad r`` out of the table (Reg-SAGA); otherwise a
    regularizer, if present, is folded into every component.
    """
    x0 = np.array(x0, dtype=np.float64)
    if x0.shape != (problem.d,):
        raise ContractViolation(f"x0 must have length {problem.d}")
    n, d = problem.n, problem.d
    scalar = regularized and _uses_scalars(problem, storage)
    state = SagaState(x=x0, stream=stream, ifo=ifo, eta=eta, n=n, folded=not regularized)
    if scalar:
        state.scalars = np.empty(n)
    else:
        state.grads = np.empty((n, d))
    if track_anchors:
        state.points = np.tile(x0, (n, 1))
    gsum = np.zeros(d)
    for i in range(n):
        g, stored = _grad_at(state, problem, i, x0)
        _store_anchor(state, i, x0, stored)
        gsum += g
    ifo.charge(n)
    state.gsum = gsum
    return state


def saga_from_anchors(problem, x0, eta, stream, ifo, anchor_grads=None, anchor_scalars=None,
                      anchor_points=None, regularized=False) -> SagaState:
    """State from precomputed anchors (warm start); no IFO calls charged here."""
    n, d = problem.n, problem.d
    state = SagaState(x=np.array(x0, dtype=np.float64), stream=stream, ifo=ifo, eta=eta, n=n,
                      folded=not regularized)
    if anchor_scalars is not None:
        state.scalars = np.array(anchor_scalars, dtype=np.float64)
        rows = state.scalars[:, None] * problem.features
    else:
        state.grads = np.array(anchor_grads, dtype=np.float64)
        rows = state.grads
    if anchor_points is not None:
        state.points = np.array(anchor_points, dtype=np.float64)
    gsum = np.zeros(d)
    for i in range(n):
        gsum += rows[i]
    state.gsum = gsum
    return state


def saga_direction(state: SagaState, problem, i: int) -> np.ndarray:
    """``v = grad f_i(x) - grad f_i(alpha_i) + g`` without touching the state or counter."""
    gx, _ = _grad_at(state, problem, i, state.x)
    return gx + (state.g - _anchor_grad(state, problem, i))


def saga_step(state: SagaState, problem: FiniteSumProblem) -> SagaState:
    """One SAGA iteration; 3 IFO calls. ``alpha_j`` moves to the pre-update iterate."""
    x = state.x
    i = state.stream.next()
    j = state.stream.next()
    gi_x, si_x = _grad_at(state, problem, i, x)
    v = gi_x + (state.g - _anchor_grad(state, problem, i))
    _guard(v, state.t, "direction")
    if not state.folded:
        v_full = v + problem.regularizer(x)[1]
    else:
        v_full = v
    gj_x, sj_x = (gi_x, si_x) if j == i else _grad_at(state, problem, j, x)
    state.gsum = (state.gsum - _anchor_grad(state, problem, j)) + gj_x
    _store_anchor(state, j, x, sj_x)
    state.x = x - state.eta * v_full
    state.ifo.charge(3)
    _guard(state.x, state.t, "iterate")
    state.t += 1
    return state


def reg_saga_step(state: SagaState, problem: FiniteSumProblem) -> SagaState:
    """SAGA with ``grad r(x)`` added to the direction every step and kept out of the anchors."""
    if state.folded:
        raise ContractViolation("state was initialized for plain SAGA; use regularized=True")
    if not problem.has_regularizer:
        raise ContractViolation("problem has no regularizer")
    return saga_step(state, problem)


def _distinct(seq):
    seen = set()
    out = []
    for j in seq:
        if j not in seen:
            seen.add(j)
            out.append(j)
    return out


def minibatch_direction(state: SagaState, problem, I) -> np.ndarray:
    b = len(I)
    sx = np.zeros(problem.d)
    sa = np.zeros(problem.d)
    for i in I:
        sx += _grad_at(state, problem, int(i), state.x)[0]
        sa += _anchor_grad(state, problem, int(i))
    return sx / b + (state.g - sa / b)


def minibatch_saga_step(state: SagaState, problem: FiniteSumProblem, b: int) -> SagaState:
    """Minibatch SAGA: ``I``, ``J`` of size ``b`` drawn with replacement.

    Each distinct ``j`` in ``J`` gets its anchor moved once. Costs ``2b + |distinct J|``
    IFO calls (at most ``3b``).
    """
    if not (1 <= b <= problem.n):
        raise ContractViolation(f"batch size {b} outside [1, {problem.n}]")
    x = state.x
    I = [state.stream.next() for _ in range(b)]
    J = [state.stream.next() for _ in range(b)]
    cache = {}
    sx = np.zeros(problem.d)
    sa = np.zeros(problem.d)
    for i in I:
        if i not in cache:
            cache[i] = _grad_at(state, problem, i, x)
        sx += cache[i][0]
        sa += _anchor_grad(state, problem, i)
    v = sx / b + (state.g - sa / b)
    _guard(v, state.t, "direction")
    if not state.folded:
        v = v + problem.regularizer(x)[1]
    distinct_j = _distinct(J)
    gsum = state.gsum
    for j in distinct_j:
        if j not in cache:
            cache[j] = _grad_at(state, problem, j, x)
        gj, sj = cache[j]
        gsum = (gsum - _anchor_grad(state, problem, j)) + gj
        _store_anchor(state, j, x, sj)
    state.gsum = gsum
    state.x = x - state.eta * v
    state.ifo.charge(2 * b + len(distinct_j))
    _guard(state.x, state.t, "iterate")
    state.t += 1
    return state
