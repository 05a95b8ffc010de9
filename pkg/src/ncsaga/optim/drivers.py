"""Multi-step drivers: SAGA runs with output selection, GD-SAGA restarts, warm start."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..oracle import ContractViolation, FiniteSumProblem, IfoCounter
from ..problems import LinearModelProblem
from .state import IndexStream, RunStreams, SagaState, SgdSchedule
from .steps import (
    _guard,
    minibatch_saga_step,
    saga_from_anchors,
    saga_init,
    saga_step,
)


def select_output(trace: Sequence[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    """Uniform pick from retained iterates ``x^0 .. x^{T-1}``."""
    if len(trace) == 0:
        raise ValueError("cannot select an output from an empty trace")
    return trace[draw_output_index(len(trace), rng)]


def draw_output_index(T: int, rng: np.random.Generator) -> int:
    """The single draw that both retain-all and up-front selection use."""
    if T < 1:
        raise ValueError("need T >= 1")
    return int(rng.integers(0, T))


@dataclass
class SagaRun:
    x_out: np.ndarray
    state: SagaState
    output_index: int
    iterates: Optional[List[np.ndarray]] = None


def run_saga(problem: FiniteSumProblem, x0, T: int, eta: float, seed: int | None = None,
             streams: RunStreams | None = None, variant: str = "saga", b: int = 1,
             state: SagaState | None = None, ifo: IfoCounter | None = None,
             retain_iterates: bool = False, track_anchors: bool = False,
             callback=None) -> SagaRun:
    """Run ``T`` iterations of SAGA / Reg-SAGA / Minibatch-SAGA and pick a uniform output.

    The output index is drawn before iterating, so only one iterate is kept unless
    ``retain_iterates`` asks for the whole trace (same pick either way).
    ``callback(state)`` runs after every step.
    """
    if T < 1:
        raise ValueError("need T >= 1")
    if streams is None:
        streams = RunStreams(0 if seed is None else seed)
    if variant not in ("saga", "reg-saga", "minibatch-saga"):
        raise ValueError(f"unknown SAGA variant {variant!r}")
    if state is None:
        state = saga_init(problem, x0, eta, streams.index_stream(problem.n), ifo or IfoCounter(),
                          regularized=(variant == "reg-saga"), track_anchors=track_anchors)
    a = draw_output_index(T, streams.output)
    iterates = [] if retain_iterates else None
    x_out = None
    for t in range(T):
        if t == a:
            x_out = state.x.copy()
        if iterates is not None:
            iterates.append(state.x.copy())
        if variant == "minibatch-saga":
            minibatch_saga_step(state, problem, b)
        else:
            saga_step(state, problem)
        if callback is not None:
            callback(state)
    return SagaRun(x_out=x_out, state=state, output_index=a, iterates=iterates)


@dataclass
class GdSagaResult:
    x: np.ndarray
    epochs: List[np.ndarray] = field(default_factory=list)
    ifo: IfoCounter = field(default_factory=IfoCounter)


def gd_saga(problem: FiniteSumProblem, x0, K: int, T: int, eta: float, seed: int = 0,
            streams: RunStreams | None = None, ifo: IfoCounter | None = None) -> GdSagaResult:
    """``K`` SAGA restarts of ``T`` steps, each re-anchored at the incoming iterate.

    ``epochs[k]`` is ``x^k`` (``epochs[0] = x0``). Every restart pays ``n`` IFO calls
    to rebuild the anchor table.
    """
    if K < 1 or T < 1:
        raise ValueError("need K >= 1 and T >= 1")
    streams = streams or RunStreams(seed)
    ifo = ifo or IfoCounter()
    stream = streams.index_stream(problem.n)
    x = np.array(x0, dtype=np.float64)
    epochs = [x.copy()]
    for _ in range(K):
        state = saga_init(problem, x, eta, stream, ifo)
        run = run_saga(problem, x, T, eta, streams=streams, state=state)
        x = run.x_out
        epochs.append(x.copy())
    return GdSagaResult(x=x, epochs=epochs, ifo=ifo)


def gd_saga_epoch_length(L: float, tau: float, n: int) -> int:
    """Restart length ``ceil(24 L tau n^(2/3))``."""
    return int(math.ceil(24.0 * L * tau * n ** (2.0 / 3.0) - 1e-9))


@dataclass
class WarmStart:
    x: np.ndarray
    grads: Optional[np.ndarray] = None
    scalars: Optional[np.ndarray] = None
    points: Optional[np.ndarray] = None


def sgd_warm_pass(problem: FiniteSumProblem, x0, eta: float, rng: np.random.Generator,
                  ifo: IfoCounter, regularized: bool = True, storage: str = "auto",
                  track_anchors: bool = False) -> WarmStart:
    """One pass of SGD without replacement; records each visited gradient as its anchor.

    Anchor ``i`` sits at the iterate where ``f_i`` was evaluated. ``n`` IFO calls.
    """
    x = np.array(x0, dtype=np.float64)
    n, d = problem.n, problem.d
    scalar = regularized and (storage == "scalar" or (storage == "auto" and isinstance(problem, LinearModelProblem)))
    if storage == "scalar" and not isinstance(problem, LinearModelProblem):
        raise ContractViolation("scalar anchor storage needs a LinearModelProblem")
    grads = None if scalar else np.empty((n, d))
    scalars = np.empty(n) if scalar else None
    points = np.empty((n, d)) if track_anchors else None
    for i in rng.permutation(n):
        i = int(i)
        if scalar:
            s = problem.scalar_surrogate(i, x)
            scalars[i] = s
            gi = s * problem.features[i]
        else:
            gi = problem.component(i, x)[1]
        greg = problem.regularizer(x)[1] if problem.has_regularizer else None
        if not scalar:
            grads[i] = gi if (regularized or greg is None) else gi + greg
        if points is not None:
            points[i] = x
        step = gi if greg is None else gi + greg
        x = x - eta * step
        _guard(x, i, "warm-pass iterate")
    ifo.charge(n)
    return WarmStart(x=x, grads=grads, scalars=scalars, points=points)


def saga_from_warm(problem, warm: WarmStart, eta: float, stream: IndexStream, ifo: IfoCounter,
                   regularized: bool) -> SagaState:
    return saga_from_anchors(problem, warm.x, eta, stream, ifo, anchor_grads=warm.grads,
                             anchor_scalars=warm.scalars, anchor_points=warm.points,
                             regularized=regularized)
