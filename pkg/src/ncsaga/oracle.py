"""Finite-sum problem abstraction and incremental first-order oracle (IFO) accounting.

A problem represents ``f(x) = (1/n) sum_i f_i(x) + r(x)``. Only evaluations of a
component ``f_i`` go through the oracle and are counted; the regularizer ``r``
is evaluated freely.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


class ContractViolation(ValueError):
    """Raised when an oracle call breaks its preconditions (bad index or shape)."""


class DivergenceError(ArithmeticError):
    """Raised when an iterate or update direction stops being finite."""

    def __init__(self, message: str, t: int = -1, norm: float = float("nan")):
        super().__init__(message)
        self.t = t
        self.norm = norm


@dataclass(frozen=True)
class SmoothnessInfo:
    """Constants describing a problem.

    ``L`` bounds the Lipschitz constant of every component gradient (and of the
    regularizer gradient); ``sigma`` is an optional uniform bound on component
    gradient norms; ``tau`` is an optional gradient-dominance constant.
    """

    L: float
    sigma: Optional[float] = None
    tau: Optional[float] = None

    def __post_init__(self):
        if not self.L >= 0:
            raise ValueError(f"L must be non-negative, got {self.L}")
        if self.sigma is not None and not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if self.tau is not None and not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


class IfoCounter:
    """Monotone count of component evaluations for a single run."""

    __slots__ = ("_calls",)

    def __init__(self) -> None:
        self._calls = 0

    @property
    def calls(self) -> int:
        return self._calls

    def charge(self, k: int = 1) -> None:
        if k < 0:
            raise ValueError("IFO counter cannot decrease")
        self._calls += int(k)

    def __repr__(self) -> str:
        return f"IfoCounter(calls={self._calls})"


class FiniteSumProblem:
    """Base class for ``f(x) = (1/n) sum_i f_i(x) [+ r(x)]``.

    Subclasses implement :meth:`component` (uncounted, deterministic) and may
    override :meth:`regularizer`, :meth:`value` and :meth:`sum_gradients` with
    vectorized versions. Instances are treated as immutable once built.
    """

    n: int
    d: int
    smoothness: SmoothnessInfo

    def component(self, i: int, x: np.ndarray) -> Tuple[float, np.ndarray]:
        raise NotImplementedError

    @property
    def has_regularizer(self) -> bool:
        return False

    def regularizer(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        return 0.0, np.zeros(self.d)

    def sum_gradients(self, x: np.ndarray) -> np.ndarray:
        """``sum_i grad f_i(x)``, accumulated in index order."""
        total = np.zeros(self.d)
        for i in range(self.n):
            total += self.component(i, x)[1]
        return total

    def loss_value(self, x: np.ndarray) -> float:
        """Mean of the component values (no regularizer)."""
        return sum(self.component(i, x)[0] for i in range(self.n)) / self.n

    def value(self, x: np.ndarray) -> float:
        """Full objective; uncounted, meant for instrumentation."""
        v = self.loss_value(x)
        if self.has_regularizer:
            v += self.regularizer(x)[0]
        return v

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Full gradient; uncounted, meant for instrumentation."""
        g = self.sum_gradients(x) / self.n
        if self.has_regularizer:
            g = g + self.regularizer(x)[1]
        return g


def _check_point(problem: FiniteSumProblem, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (problem.d,):
        raise ContractViolation(f"expected a vector of length {problem.d}, got shape {x.shape}")
    return x


def eval_component(problem: FiniteSumProblem, i: int, x, counter: IfoCounter | None = None):
    """One IFO call: returns ``(f_i(x), grad f_i(x))`` for a 0-based index ``i``."""
    if not (0 <= int(i) < problem.n) or int(i) != i:
        raise ContractViolation(f"component index {i} outside [0, {problem.n})")
    x = _check_point(problem, x)
    if counter is not None:
        counter.charge(1)
    return problem.component(int(i), x)


def full_gradient(problem: FiniteSumProblem, x, counter: IfoCounter | None = None) -> np.ndarray:
    """Mean component gradient plus the regularizer gradient; costs ``n`` IFO calls."""
    x = _check_point(problem, x)
    if counter is not None:
        counter.charge(problem.n)
    g = problem.sum_gradients(x) / problem.n
    if problem.has_regularizer:
        g = g + problem.regularizer(x)[1]
    return g


def gradient_equivalent_passes(calls: int, n: int) -> float:
    return calls / n
