"""Step-size theory for SAGA on nonconvex finite sums.

The Lyapunov weights follow the backward recursion

    c_T = 0,   c_t = c_{t+1} (1 - p + eta*beta + 2 eta^2 L^2 / b) + eta^2 L^3 / b

with ``p = 1/n`` for single-sample SAGA and ``p = 1 - (1 - 1/n)^b`` (chance that a
given anchor is refreshed by a with-replacement batch) for minibatches. The per-step
descent coefficient is

    Gamma_t = eta - c_{t+1} eta / beta - eta^2 L - 2 c_{t+1} eta^2

and ``gamma_n = min_t Gamma_t``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np


@dataclass(frozen=True)
class TheoryParams:
    n: int
    L: float
    eta: float
    beta: float
    T: int
    b: int = 1
    tau: Optional[float] = None
    K: Optional[int] = None

    def __post_init__(self):
        if self.n < 1 or self.T < 1 or self.b < 1:
            raise ValueError("n, T and b must be positive")
        if not (self.L > 0 and self.eta > 0):
            raise ValueError("L and eta must be positive")

    @property
    def refresh_prob(self) -> float:
        if self.b == 1:
            return 1.0 / self.n
        return -math.expm1(self.b * math.log1p(-1.0 / self.n)) if self.n > 1 else 1.0

    @property
    def theta(self) -> float:
        """``p - eta*beta - 2 eta^2 L^2 / b``; the recursion contracts when positive."""
        return self.refresh_prob - self.eta * self.beta - 2.0 * self.eta ** 2 * self.L ** 2 / self.b

    @property
    def increment(self) -> float:
        return self.eta ** 2 * self.L ** 3 / self.b


@dataclass
class RecursionTrace:
    c: np.ndarray          # c_0 .. c_T
    Gamma: np.ndarray      # Gamma_0 .. Gamma_{T-1}
    gamma_n: float
    params: TheoryParams


def theoretical_step(n: int, L: float, b: int = 1):
    """``eta = b / (3 L n^(2/3))``, ``beta = L / n^(1/3)``."""
    if n < 1 or not L > 0:
        raise ValueError("need n >= 1 and L > 0")
    if b > 1 and b >= n ** (2.0 / 3.0):
        warnings.warn(f"batch size {b} >= n^(2/3) = {n ** (2 / 3):.3g}; the minibatch bound does not apply",
                      stacklevel=2)
    n23 = n ** (2.0 / 3.0)
    return b / (3.0 * L * n23), L / n ** (1.0 / 3.0)


def theory_params(n: int, L: float, T: int, b: int = 1, **kw) -> TheoryParams:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        eta, beta = theoretical_step(n, L, b)
    return TheoryParams(n=n, L=L, eta=eta, beta=beta, T=T, b=b, **kw)


def gamma_from(c_next, p: TheoryParams):
    """``Gamma`` as a function of ``c_{t+1}`` (works elementwise on arrays)."""
    return p.eta - c_next * p.eta / p.beta - p.eta ** 2 * p.L - 2.0 * c_next * p.eta ** 2


def run_recursion(params: TheoryParams) -> RecursionTrace:
    """Backward recursion from ``c_T = 0`` carried in extended precision."""
    if params.beta <= 0:
        raise ValueError("beta must be positive (it divides Gamma_t)")
    ld = np.longdouble
    # rebuild the coefficient from its parts so the sum happens in extended precision
    p = ld(1) / ld(params.n) if params.b == 1 else ld(params.refresh_prob)
    eta, beta, L, b = ld(params.eta), ld(params.beta), ld(params.L), ld(params.b)
    a = ld(1) - p + eta * beta + ld(2) * eta * eta * L * L / b
    k = eta * eta * L * L * L / b
    T = params.T
    c = np.empty(T + 1, dtype=np.longdouble)
    c[T] = 0
    cur = ld(0)
    for t in range(T - 1, -1, -1):
        cur = cur * a + k
        c[t] = cur
    c64 = c.astype(np.float64)
    Gamma = (eta - c[1:] * eta / beta - eta * eta * L - ld(2) * c[1:] * eta * eta).astype(np.float64)
    return RecursionTrace(c=c64, Gamma=Gamma, gamma_n=float(Gamma.min()), params=params)


def closed_form_c(params: TheoryParams) -> Optional[np.ndarray]:
    """``c_t = k (1 - (1 - theta)^(T - t)) / theta``; ``None`` when ``theta <= 0``."""
    theta = params.theta
    if not theta > 0:
        return None
    steps = params.T - np.arange(params.T + 1, dtype=np.float64)
    decay = -np.expm1(steps * math.log1p(-theta))
    return params.increment * decay / theta


def c_upper_bound(n: int, L: float) -> float:
    return L / (4.0 * n ** (1.0 / 3.0))


def gamma_lower_bound(n: int, L: float, b: int = 1) -> float:
    return b / (12.0 * L * n ** (2.0 / 3.0))


@dataclass
class GammaCheck:
    holds: bool
    gamma_n: float
    bound: float
    margin: float
    sub_inequalities: Dict[str, float] = field(default_factory=dict)
    c_max: float = 0.0
    c_bound: float = 0.0
    theta: float = 0.0


def check_gamma_bound(params: TheoryParams, trace: RecursionTrace | None = None) -> GammaCheck:
    """Compare ``gamma_n`` with ``b / (12 L n^(2/3))`` and report the three sub-inequalities.

    Each sub-inequality is reported as ``slack = rhs - lhs`` (non-negative when it holds):
    ``c_{t+1} eta / beta <= eta / 4``, ``eta^2 L <= eta / 3``, ``2 c_{t+1} eta^2 <= eta / 6``.
    """
    trace = trace or run_recursion(params)
    eta, beta, L = params.eta, params.beta, params.L
    c_next_max = float(trace.c[1:].max()) if params.T >= 1 else 0.0
    subs = {
        "c_eta_over_beta": eta / 4.0 - c_next_max * eta / beta,
        "eta_sq_L": eta / 3.0 - eta * eta * L,
        "two_c_eta_sq": eta / 6.0 - 2.0 * c_next_max * eta * eta,
    }
    bound = gamma_lower_bound(params.n, L, params.b)
    margin = trace.gamma_n - bound
    return GammaCheck(
        holds=bool(margin >= 0),
        gamma_n=trace.gamma_n,
        bound=bound,
        margin=margin,
        sub_inequalities=subs,
        c_max=float(trace.c.max()),
        c_bound=c_upper_bound(params.n, L),
        theta=params.theta,
    )


METHODS = ("gd", "sgd", "saga", "minibatch-saga", "gd-saga")


@dataclass
class IfoBudget:
    method: str
    total: float
    iterations: float
    per_epoch: Optional[float] = None
    epochs: Optional[int] = None


def ifo_budget(method: str, n: int, eps: float, L: float = 1.0, tau: float | None = None, b: int = 1,
               f_gap: float = 1.0, sigma: float = 1.0, explicit: bool = True) -> IfoBudget:
    """Predicted IFO calls to reach ``E|grad f|^2 <= eps``.

    ``explicit=True`` uses the constants of the corresponding bounds:

    * gd: ``n * 2 L f_gap / eps`` (descent lemma with step ``1/L``)
    * sgd: ``8 L f_gap sigma^2 / eps^2`` (leading term for bounded gradients)
    * saga: ``n + 3 T`` with ``T = 12 L n^(2/3) f_gap / eps``
    * minibatch-saga: ``n + 3 b T`` with ``T = 12 L n^(2/3) f_gap / (b eps)``
    * gd-saga: ``K (n + 3 T)`` with ``T = ceil(24 L tau n^(2/3))``, ``K = ceil(log2(f_gap / (tau eps)))``

    ``explicit=False`` returns the bare rates (``n/eps``, ``1/eps^2``, ``n + n^(2/3)/eps``,
    ``(n + tau n^(2/3)) log(1/eps)``) for order-of-magnitude comparisons.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    n23 = n ** (2.0 / 3.0)
    if method == "gd-saga" and tau is None:
        raise ValueError("gd-saga needs the gradient-dominance constant tau")
    if not explicit:
        rates = {
            "gd": n / eps,
            "sgd": 1.0 / eps ** 2,
            "saga": n + n23 / eps,
            "minibatch-saga": n + n23 / eps,
        }
        if method == "gd-saga":
            return IfoBudget(method, (n + tau * n23) * math.log(1.0 / eps), float("nan"))
        return IfoBudget(method, rates[method], float("nan"))
    if method == "gd":
        T = 2.0 * L * f_gap / eps
        return IfoBudget(method, n * T, T)
    if method == "sgd":
        T = 8.0 * L * f_gap * sigma ** 2 / eps ** 2
        return IfoBudget(method, T, T)
    if method == "saga":
        T = 12.0 * L * n23 * f_gap / eps
        return IfoBudget(method, n + 3.0 * T, T)
    if method == "minibatch-saga":
        T = 12.0 * L * n23 * f_gap / (b * eps)
        return IfoBudget(method, n + 3.0 * b * T, T)
    T = math.ceil(24.0 * L * tau * n23 - 1e-9)
    K = max(1, math.ceil(math.log2(f_gap / (tau * eps))))
    per_epoch = n + 3 * T
    return IfoBudget(method, K * per_epoch, K * T, per_epoch=per_epoch, epochs=K)
