"""Concrete finite-sum problems.

* :class:`LinearModelProblem` -- ``(1/n) sum_i log(1 + exp(-y_i x.z_i)) + r(x)`` with the
  smooth nonconvex penalty ``r(x) = lam * sum_j a x_j^2 / (1 + a x_j^2)``. Component
  gradients are rank one, ``l'(x.z_i) z_i``, so a SAGA variant only needs to store
  the scalar ``l'`` per example.
* :class:`LeastSquaresProblem` / :class:`PLQuadraticProblem` -- ``f_i(x) = (a_i.x - b_i)^2``,
  gradient dominated (possibly rank deficient) with a known optimum.
* :class:`QuadraticProblem` -- ``f_i(x) = x.H_i.x / 2 + c_i.x`` with arbitrary symmetric
  ``H_i``; small indefinite instances exercise the nonconvex theory exactly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .oracle import FiniteSumProblem, SmoothnessInfo

LOGISTIC_CURVATURE_MAX = 0.25


def _logistic_slope(margin):
    """``1 / (1 + exp(margin))`` without overflow, scalar or array."""
    margin = np.asarray(margin, dtype=np.float64)
    out = np.empty_like(margin)
    pos = margin >= 0
    e = np.exp(-margin[pos])
    out[pos] = e / (1.0 + e)
    out[~pos] = 1.0 / (1.0 + np.exp(margin[~pos]))
    return out


def logistic_scalar(u: float, y: float) -> Tuple[float, float]:
    """Value and derivative in ``u`` of ``log(1 + exp(-y u))``."""
    m = y * u
    if m >= 0:
        e = np.exp(-m)
        value = np.log1p(e)
        s = e / (1.0 + e)
    else:
        e = np.exp(m)
        value = -m + np.log1p(e)
        s = 1.0 / (1.0 + e)
    return float(value), float(-y * s)


def logistic_component(z, y: float, x) -> Tuple[float, np.ndarray]:
    """``(log(1 + exp(-y x.z)), -y s z)`` with ``s = 1 / (1 + exp(y x.z))``."""
    z = np.asarray(z, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if z.shape != x.shape:
        raise ValueError(f"dimension mismatch: z {z.shape} vs x {x.shape}")
    value, lprime = logistic_scalar(float(z @ x), y)
    return value, lprime * z


@dataclass(frozen=True)
class RegularizerParams:
    lam: float = 0.001
    alpha: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")

    @property
    def lipschitz(self) -> float:
        # |r''| along a coordinate peaks at x = 0 with value 2*lam*alpha
        return 2.0 * self.lam * self.alpha


def nonconvex_regularizer(params: RegularizerParams, x) -> Tuple[float, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    ax2 = params.alpha * x * x
    denom = 1.0 + ax2
    value = params.lam * float(np.sum(ax2 / denom))
    grad = 2.0 * params.lam * params.alpha * x / (denom * denom)
    return value, grad


def _digest_arrays(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


class LinearModelProblem(FiniteSumProblem):
    """Logistic loss on rows ``z_i`` plus the nonconvex penalty.

    Rows are expected to be unit norm (``normalize=True`` enforces it).
    """

    def __init__(self, features, labels, reg: RegularizerParams | None = None, normalize: bool = False):
        Z = np.array(features, dtype=np.float64, order="C")
        y = np.array(labels, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[0] == 0:
            raise ValueError("features must be a non-empty n x d matrix")
        if y.shape != (Z.shape[0],):
            raise ValueError("need one label per row")
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("labels must be -1 or +1")
        if normalize:
            norms = np.linalg.norm(Z, axis=1)
            if np.any(norms == 0):
                raise ValueError(f"row {int(np.argmin(norms))} has zero norm")
            Z /= norms[:, None]
        Z.setflags(write=False)
        y.setflags(write=False)
        self.features = Z
        self.labels = y
        self.reg = reg if reg is not None else RegularizerParams(0.0, 1.0)
        self.n, self.d = Z.shape
        self.smoothness = estimate_smoothness(self)

    @property
    def has_regularizer(self) -> bool:
        return True

    def component(self, i, x):
        z = self.features[i]
        value, lprime = logistic_scalar(float(z @ x), self.labels[i])
        return value, lprime * z

    def scalar_surrogate(self, i: int, x) -> float:
        return logistic_scalar(float(self.features[i] @ x), self.labels[i])[1]

    def scalar_surrogates(self, x) -> np.ndarray:
        """``l'(x.z_i)`` for every ``i`` at once."""
        return -self.labels * _logistic_slope(self.labels * (self.features @ x))

    def regularizer(self, x):
        return nonconvex_regularizer(self.reg, x)

    def sum_gradients(self, x):
        return self.features.T @ self.scalar_surrogates(x)

    def loss_value(self, x):
        return float(np.mean(np.logaddexp(0.0, -self.labels * (self.features @ x))))

    def digest(self) -> str:
        return _digest_arrays(self.features, self.labels, np.array([self.reg.lam, self.reg.alpha]))


def scalar_gradient_surrogate(problem: LinearModelProblem, i: int, x) -> float:
    """``l'(x.z_i)``; the component gradient is this scalar times ``z_i``."""
    return problem.scalar_surrogate(i, np.asarray(x, dtype=np.float64))


class LeastSquaresProblem(FiniteSumProblem):
    """``f_i(x) = (a_i.x - b_i)^2``."""

    def __init__(self, design, targets):
        A = np.array(design, dtype=np.float64, order="C")
        b = np.array(targets, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] == 0:
            raise ValueError("design must be a non-empty n x d matrix")
        if b.shape != (A.shape[0],):
            raise ValueError("need one target per row")
        A.setflags(write=False)
        b.setflags(write=False)
        self.design = A
        self.targets = b
        self.n, self.d = A.shape
        self.smoothness = estimate_smoothness(self)

    def component(self, i, x):
        a = self.design[i]
        r = float(a @ x) - self.targets[i]
        return r * r, (2.0 * r) * a

    def sum_gradients(self, x):
        return 2.0 * (self.design.T @ (self.design @ x - self.targets))

    def loss_value(self, x):
        r = self.design @ x - self.targets
        return float(r @ r) / self.n

    def digest(self) -> str:
        return _digest_arrays(self.design, self.targets)


class PLQuadraticProblem(LeastSquaresProblem):
    """Consistent least squares, ``b = A x_true``, so ``f* = 0`` exactly."""

    def __init__(self, design, x_true):
        A = np.asarray(design, dtype=np.float64)
        x_true = np.asarray(x_true, dtype=np.float64)
        super().__init__(A, A @ x_true)
        self.x_true = x_true
        self.fstar = 0.0
        self.rank = int(np.linalg.matrix_rank(self.design))
        self.tau = self.smoothness.tau


def make_pl_quadratic(n: int, d: int, rank: int, seed: int,
                      spectrum: Tuple[float, float] = (0.5, 1.0)) -> PLQuadraticProblem:
    """Random consistent least-squares instance of the given rank.

    The nonzero eigenvalues of ``A^T A / n`` are spread evenly over ``spectrum``.
    ``rank < d`` gives a singular Hessian that is still gradient dominated.
    """
    if not (1 <= rank <= min(n, d)):
        raise ValueError(f"rank must lie in [1, min(n, d)] = [1, {min(n, d)}], got {rank}")
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, rank)))
    V, _ = np.linalg.qr(rng.standard_normal((d, rank)))
    eig = np.linspace(spectrum[1], spectrum[0], rank)
    A = (U * np.sqrt(n * eig)) @ V.T
    x_true = rng.standard_normal(d)
    return PLQuadraticProblem(A, x_true)


class QuadraticProblem(FiniteSumProblem):
    """``f_i(x) = x.H_i.x / 2 + c_i.x`` with symmetric (possibly indefinite) ``H_i``."""

    def __init__(self, hessians, linear):
        H = np.array(hessians, dtype=np.float64)
        c = np.array(linear, dtype=np.float64)
        if H.ndim != 3 or H.shape[1] != H.shape[2] or c.shape != H.shape[:2]:
            raise ValueError("need hessians of shape (n, d, d) and linear terms of shape (n, d)")
        if not np.allclose(H, np.swapaxes(H, 1, 2), rtol=0, atol=1e-14):
            raise ValueError("component Hessians must be symmetric")
        H.setflags(write=False)
        c.setflags(write=False)
        self.hessians = H
        self.linear = c
        self.n, self.d = c.shape
        self.smoothness = estimate_smoothness(self)

    def component(self, i, x):
        Hx = self.hessians[i] @ x
        return 0.5 * float(x @ Hx) + float(self.linear[i] @ x), Hx + self.linear[i]

    def digest(self) -> str:
        return _digest_arrays(self.hessians, self.linear)


def make_nonconvex_quadratic(n: int, d: int, seed: int, scale: float = 1.0) -> QuadraticProblem:
    """Indefinite components whose average stays bounded below (positive definite mean)."""
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, d, d))
    H = scale * (M + np.swapaxes(M, 1, 2)) / 2.0
    # shift so the mean Hessian is positive definite while components stay indefinite
    mean = H.mean(axis=0)
    shift = max(0.0, -np.linalg.eigvalsh(mean).min()) + 0.5 * scale
    H = H + shift * np.eye(d)
    c = scale * rng.standard_normal((n, d))
    return QuadraticProblem(H, c)


def estimate_smoothness(problem) -> SmoothnessInfo:
    """Lipschitz (and where available sigma/tau) constants for a bundled problem."""
    if getattr(problem, "n", 0) == 0:
        raise ValueError("cannot estimate smoothness of an empty problem")
    if isinstance(problem, LinearModelProblem):
        row_sq = np.einsum("ij,ij->i", problem.features, problem.features)
        L_loss = LOGISTIC_CURVATURE_MAX * float(row_sq.max())
        sigma = float(np.sqrt(row_sq.max()))
        return SmoothnessInfo(L=L_loss + problem.reg.lipschitz, sigma=sigma)
    if isinstance(problem, LeastSquaresProblem):
        A = problem.design
        L = 2.0 * float(np.einsum("ij,ij->i", A, A).max())
        eig = np.linalg.eigvalsh(A.T @ A / problem.n)
        tol = eig.max() * max(A.shape) * np.finfo(float).eps
        pos = eig[eig > tol]
        # f - f* <= tau |grad f|^2 with f = x'Hx on the row space and |grad f|^2 = 4 x'H^2 x
        tau = 1.0 / (4.0 * float(pos.min())) if pos.size else None
        return SmoothnessInfo(L=L, tau=tau)
    if isinstance(problem, QuadraticProblem):
        norms = [np.abs(np.linalg.eigvalsh(h)).max() for h in problem.hessians]
        return SmoothnessInfo(L=float(max(norms)))
    raise TypeError(f"no smoothness estimate for {type(problem).__name__}")
