"""Iteration state, random index streams and run traces."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..oracle import IfoCounter

CSV_SCHEMA = "ncsaga.run/1"
CSV_COLUMNS = ("t", "ifo_calls", "f", "grad_norm_sq", "eta_t", "wall_ns")


class IndexStream:
    """Uniform indices in ``[0, n)`` served one at a time from a seeded generator.

    Indices are drawn in fixed-size blocks, so the k-th index served depends only on
    the seed and ``k``, never on how consumers batch their requests.
    """

    BLOCK = 4096

    def __init__(self, n: int, rng: np.random.Generator):
        if n < 1:
            raise ValueError("need n >= 1")
        self.n = n
        self._rng = rng
        self._buf = np.empty(0, dtype=np.int64)
        self._pos = 0
        self.consumed = 0

    def _refill(self):
        self._buf = self._rng.integers(0, self.n, size=self.BLOCK, dtype=np.int64)
        self._pos = 0

    def next(self) -> int:
        if self._pos >= len(self._buf):
            self._refill()
        v = int(self._buf[self._pos])
        self._pos += 1
        self.consumed += 1
        return v

    def take(self, k: int) -> np.ndarray:
        out = np.empty(k, dtype=np.int64)
        filled = 0
        while filled < k:
            if self._pos >= len(self._buf):
                self._refill()
            m = min(k - filled, len(self._buf) - self._pos)
            out[filled:filled + m] = self._buf[self._pos:self._pos + m]
            self._pos += m
            filled += m
        self.consumed += k
        return out


@dataclass
class RunStreams:
    """Independent generators for one run: step indices, output pick, warm-pass order."""

    seed: int
    steps: np.random.Generator = field(init=False)
    output: np.random.Generator = field(init=False)
    warm: np.random.Generator = field(init=False)

    def __post_init__(self):
        a, b, c = np.random.SeedSequence(self.seed).spawn(3)
        self.steps = np.random.default_rng(a)
        self.output = np.random.default_rng(b)
        self.warm = np.random.default_rng(c)

    def index_stream(self, n: int) -> IndexStream:
        return IndexStream(n, self.steps)


@dataclass(frozen=True)
class SgdSchedule:
    """``eta_t = eta0 / (1 + etap * floor(t / n))``; ``etap = 0`` is a fixed step."""

    eta0: float
    etap: float = 0.0

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError(f"eta0 must be > 0, got {self.eta0}")
        if self.etap < 0:
            raise ValueError(f"etap must be >= 0, got {self.etap}")

    @property
    def mode(self) -> str:
        return "fixed" if self.etap == 0 else "t-inverse"

    def eta(self, t: int, n: int) -> float:
        return self.eta0 / (1.0 + self.etap * (t // n))

    def etas(self, t0: int, k: int, n: int) -> np.ndarray:
        t = np.arange(t0, t0 + k, dtype=np.int64)
        return self.eta0 / (1.0 + self.etap * (t // n))


@dataclass
class OptState:
    """State shared by every method: iterate, step counter, index stream, IFO counter."""

    x: np.ndarray
    stream: IndexStream
    ifo: IfoCounter
    eta: float = 0.0
    t: int = 0


@dataclass
class SagaState(OptState):
    """SAGA bookkeeping.

    Exactly one of ``grads`` (dense ``n x d`` table of ``grad f_i(alpha_i)``) and
    ``scalars`` (linear models: ``l'(alpha_i . z_i)``) is set. ``gsum`` is
    ``sum_i grad f_i(alpha_i)``; the running average is ``gsum / n``. ``points``
    keeps the anchors themselves when tracking is requested (diagnostics).
    """

    n: int = 0
    gsum: Optional[np.ndarray] = None
    grads: Optional[np.ndarray] = None
    scalars: Optional[np.ndarray] = None
    points: Optional[np.ndarray] = None
    folded: bool = True

    @property
    def g(self) -> np.ndarray:
        return self.gsum / self.n

    @property
    def anchor_storage(self) -> int:
        """Number of floats held for anchor gradients."""
        return self.grads.size if self.grads is not None else self.scalars.size


@dataclass
class RunRecord:
    """Per-checkpoint trace of a run. Metrics are taken outside the IFO count."""

    n: int
    t: List[int] = field(default_factory=list)
    ifo_calls: List[int] = field(default_factory=list)
    f: List[float] = field(default_factory=list)
    grad_norm_sq: List[float] = field(default_factory=list)
    eta_t: List[float] = field(default_factory=list)
    wall_ns: List[Optional[int]] = field(default_factory=list)
    x_out: Optional[np.ndarray] = None
    x_last: Optional[np.ndarray] = None
    status: str = "ok"
    message: str = ""

    def append(self, t, ifo, f, gnorm2, eta, wall_ns=None):
        if self.ifo_calls and ifo < self.ifo_calls[-1]:
            raise ValueError("IFO column must be non-decreasing")
        self.t.append(int(t))
        self.ifo_calls.append(int(ifo))
        self.f.append(float(f))
        self.grad_norm_sq.append(float(gnorm2))
        self.eta_t.append(float(eta))
        self.wall_ns.append(wall_ns)

    def __len__(self):
        return len(self.t)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema={CSV_SCHEMA}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in zip(self.t, self.ifo_calls, self.f, self.grad_norm_sq, self.eta_t, self.wall_ns):
            t, ifo, f, g2, eta, wall = row
            w.writerow([t, ifo, repr(f), repr(g2), repr(eta), "" if wall is None else wall])
        return buf.getvalue()
