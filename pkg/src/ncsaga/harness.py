"""Experiment orchestration: algorithm x seed grids, CSV traces, manifests, summaries."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__, kernels
from .data import make_synthetic_classification, normalize_rows, read_libsvm
from .oracle import DivergenceError, IfoCounter
from .optim.drivers import draw_output_index, saga_from_warm, sgd_warm_pass
from .optim.state import CSV_COLUMNS, CSV_SCHEMA, OptState, RunRecord, RunStreams, SgdSchedule
from .optim.steps import gd_step, minibatch_saga_step, saga_init, saga_step, sgd_step
from .problems import (LinearModelProblem, QuadraticProblem, RegularizerParams, make_nonconvex_quadratic,
                       make_pl_quadratic)
from .theory import theoretical_step

ALGORITHMS = ("gd", "sgd", "saga", "reg-saga", "minibatch-saga", "gd-saga")
PROBLEM_TYPES = ("synthetic", "libsvm", "pl-quadratic", "quadratic")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    problem: Dict = field(default_factory=lambda: {"type": "synthetic", "n": 1000, "d": 20})
    lam: float = 0.001
    alpha: float = 1.0
    algorithms: List[str] = field(default_factory=lambda: ["reg-saga", "sgd"])
    step_policy: str = "theory"           # theory | constant
    eta: Optional[float] = None           # constant step for gd / saga variants
    eta0: float = 0.1                     # sgd schedule
    etap: float = 0.0
    sgd_grid: Optional[Dict[str, List[float]]] = None
    T: Optional[int] = None
    budget_passes: Optional[float] = 10.0
    K: Optional[int] = None
    b: int = 1
    tau: Optional[float] = None
    seeds: List[int] = field(default_factory=lambda: [0])
    metric_stride: Optional[int] = None
    init: str = "cold"                    # cold | sgd-warm-pass
    warm_eta: float = 0.1
    output_dir: str = "runs"
    timing: bool = False
    reference: Dict = field(default_factory=lambda: {"restarts": 5, "budget_passes": 10000})
    jobs: int = 1

    @classmethod
    def from_dict(cls, d: Dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def to_dict(self) -> Dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        d = self.to_dict()
        for k in ("output_dir", "jobs", "timing"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def validate(self) -> None:
        kind = self.problem.get("type")
        if kind not in PROBLEM_TYPES:
            raise ConfigError(f"problem type must be one of {PROBLEM_TYPES}, got {kind!r}")
        if kind == "libsvm":
            path = self.problem.get("path")
            if not path or not os.path.exists(path):
                raise ConfigError(f"dataset file not found: {path!r}")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}; choose from {ALGORITHMS}")
        if not self.algorithms:
            raise ConfigError("no algorithms selected")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.step_policy not in ("theory", "constant"):
            raise ConfigError("step_policy must be 'theory' or 'constant'")
        if self.step_policy == "constant" and self.eta is None:
            raise ConfigError("step_policy 'constant' needs eta")
        if self.init not in ("cold", "sgd-warm-pass"):
            raise ConfigError("init must be 'cold' or 'sgd-warm-pass'")
        if self.T is None and self.budget_passes is None:
            raise ConfigError("give T or budget_passes")
        if self.b < 1:
            raise ConfigError("b must be >= 1")
        if "gd-saga" in self.algorithms and kind != "pl-quadratic" and self.tau is None:
            raise ConfigError("gd-saga needs tau: use a pl-quadratic problem or set tau")
        if self.eta0 <= 0 or self.etap < 0:
            raise ConfigError("need eta0 > 0 and etap >= 0")


def build_problem(cfg: ExperimentConfig):
    p = dict(cfg.problem)
    kind = p.pop("type")
    reg = RegularizerParams(cfg.lam, cfg.alpha)
    if kind == "synthetic":
        ds = make_synthetic_classification(p.get("n", 1000), p.get("d", 20), p.get("separation", 1.0),
                                           p.get("noise", 1.0), p.get("seed", 0))
        return LinearModelProblem(ds.to_dense(), ds.labels, reg)
    if kind == "libsvm":
        ds = normalize_rows(read_libsvm(p["path"], d=p.get("d")))
        return LinearModelProblem(ds.to_dense(), ds.labels, reg)
    if kind == "pl-quadratic":
        return make_pl_quadratic(p["n"], p["d"], p.get("rank", p["d"]), p.get("seed", 0))
    if kind == "quadratic":
        if "hessians" in p:
            return QuadraticProblem(np.asarray(p["hessians"], dtype=np.float64),
                                    np.asarray(p["linear"], dtype=np.float64))
        return make_nonconvex_quadratic(p["n"], p["d"], p.get("seed", 0))
    raise ConfigError(f"unknown problem type {kind!r}")


@dataclass(frozen=True)
class Cell:
    """One (algorithm, hyper-parameters, seed) run."""

    algorithm: str
    seed: int
    eta0: float = 0.0
    etap: float = 0.0

    @property
    def label(self) -> str:
        if self.algorithm == "sgd":
            return f"sgd[eta0={self.eta0!r},etap={self.etap!r}]"
        return self.algorithm

    @property
    def stem(self) -> str:
        tag = self.label.replace("[", "_").replace("]", "").replace(",", "_").replace("=", "")
        return f"{tag}_seed{self.seed}"


def grid_cells(cfg: ExperimentConfig) -> List[Cell]:
    cells = []
    for algo in cfg.algorithms:
        for seed in cfg.seeds:
            if algo == "sgd" and cfg.sgd_grid:
                for e0 in cfg.sgd_grid.get("eta0", [cfg.eta0]):
                    for ep in cfg.sgd_grid.get("etap", [cfg.etap]):
                        cells.append(Cell(algo, seed, float(e0), float(ep)))
            elif algo == "sgd":
                cells.append(Cell(algo, seed, cfg.eta0, cfg.etap))
            else:
                cells.append(Cell(algo, seed))
    return cells


def step_size(cfg: ExperimentConfig, problem, algorithm: str) -> float:
    if cfg.step_policy == "constant":
        return float(cfg.eta)
    L = problem.smoothness.L
    if algorithm == "gd":
        return 1.0 / L
    b = cfg.b if algorithm == "minibatch-saga" else 1
    return theoretical_step(problem.n, L, b)[0]


class _Recorder:
    def __init__(self, problem, record: RunRecord, stride: int, timing: bool):
        self.problem = problem
        self.record = record
        self.stride = stride
        self.timing = timing
        self.t0 = time.perf_counter_ns()
        self.next_mark = 0

    def __call__(self, t: int, ifo: int, x: np.ndarray, eta: float, force: bool = False):
        if not force and ifo < self.next_mark:
            return
        if self.record.ifo_calls and self.record.ifo_calls[-1] == ifo and self.record.t[-1] == t:
            return
        g = self.problem.gradient(x)
        wall = time.perf_counter_ns() - self.t0 if self.timing else None
        self.record.append(t, ifo, self.problem.value(x), float(g @ g), eta, wall)
        self.record.x_last = x.copy()
        self.next_mark = (ifo // self.stride + 1) * self.stride

    def steps_to_mark(self, ifo: int, cost: int) -> int:
        return max(1, math.ceil((self.next_mark - ifo) / cost))


def execute_run(problem, cfg: ExperimentConfig, cell: Cell, use_kernels: bool = True) -> RunRecord:
    """Run one cell; metrics are evaluated outside the IFO count at ``metric_stride`` calls."""
    n, d = problem.n, problem.d
    stride = cfg.metric_stride or max(1, n // 10)
    budget = None if cfg.budget_passes is None else int(round(cfg.budget_passes * n))
    streams = RunStreams(cell.seed)
    ifo = IfoCounter()
    rec = RunRecord(n=n)
    recorder = _Recorder(problem, rec, stride, cfg.timing)
    linear = isinstance(problem, LinearModelProblem) and use_kernels
    algo = cell.algorithm
    x = np.zeros(d)
    warm = None
    try:
        if cfg.init == "sgd-warm-pass":
            warm = sgd_warm_pass(problem, x, cfg.warm_eta, streams.warm, ifo,
                                 regularized=(algo != "saga" and algo != "minibatch-saga"))
            x = warm.x
        if algo == "sgd":
            _run_sgd(problem, cfg, cell, x, streams, ifo, budget, recorder, linear)
        elif algo == "gd":
            _run_gd(problem, cfg, x, streams, ifo, budget, recorder)
        elif algo == "gd-saga":
            _run_gd_saga(problem, cfg, x, streams, ifo, budget, recorder)
        else:
            _run_saga(problem, cfg, algo, x, warm, streams, ifo, budget, recorder, linear)
    except DivergenceError as exc:
        rec.status = "diverged"
        rec.message = str(exc)
    return rec


def _iterations(cfg, budget, ifo, cost) -> int:
    if cfg.T is not None:
        T = cfg.T
        if budget is not None:
            T = min(T, max(0, (budget - ifo) // cost))
        return T
    return max(0, (budget - ifo) // cost)


def _run_sgd(problem, cfg, cell, x, streams, ifo, budget, recorder, linear):
    sched = SgdSchedule(cell.eta0, cell.etap)
    n = problem.n
    state = OptState(x=x.copy(), stream=streams.index_stream(n), ifo=ifo, eta=sched.eta(0, n))
    recorder(0, ifo.calls, state.x, state.eta, force=True)
    T = _iterations(cfg, budget, ifo.calls, 1)
    while state.t < T:
        k = min(recorder.steps_to_mark(ifo.calls, 1), T - state.t)
        if linear:
            idx = state.stream.take(k)
            etas = sched.etas(state.t, k, n)
            fail = kernels.sgd_linear(problem.features, problem.labels, state.x, idx, etas,
                                      problem.reg.lam, problem.reg.alpha)
            done = k if fail < 0 else fail
            ifo.charge(done)
            state.t += done
            state.eta = float(etas[done - 1]) if done else state.eta
            if fail >= 0:
                raise DivergenceError(f"non-finite iterate at t={state.t}", t=state.t)
        else:
            for _ in range(k):
                sgd_step(state, problem, sched)
        recorder(state.t, ifo.calls, state.x, state.eta)
    recorder(state.t, ifo.calls, state.x, state.eta, force=True)
    recorder.record.x_out = state.x.copy()


def _run_gd(problem, cfg, x, streams, ifo, budget, recorder):
    n = problem.n
    state = OptState(x=x.copy(), stream=streams.index_stream(n), ifo=ifo, eta=step_size(cfg, problem, "gd"))
    recorder(0, ifo.calls, state.x, state.eta, force=True)
    T = _iterations(cfg, budget, ifo.calls, n)
    for _ in range(T):
        gd_step(state, problem)
        recorder(state.t, ifo.calls, state.x, state.eta)
    recorder(state.t, ifo.calls, state.x, state.eta, force=True)
    recorder.record.x_out = state.x.copy()


def _run_saga(problem, cfg, algo, x, warm, streams, ifo, budget, recorder, linear):
    n = problem.n
    eta = step_size(cfg, problem, algo)
    regularized = algo == "reg-saga"
    stream = streams.index_stream(n)
    if warm is not None:
        state = saga_from_warm(problem, warm, eta, stream, ifo, regularized)
    else:
        state = saga_init(problem, x, eta, stream, ifo, regularized=regularized)
    recorder(0, ifo.calls, state.x, eta, force=True)
    b = cfg.b if algo == "minibatch-saga" else 1
    cost = 3 * b
    T = _iterations(cfg, budget, ifo.calls, cost)
    if T == 0:
        recorder.record.x_out = state.x.copy()
        return
    out_index = draw_output_index(T, streams.output)
    use_kernel = linear and regularized and state.scalars is not None
    x_out = None
    while state.t < T:
        k = min(recorder.steps_to_mark(ifo.calls, cost), T - state.t)
        if state.t < out_index < state.t + k:
            k = out_index - state.t
        if state.t == out_index:
            x_out = state.x.copy()
        if use_kernel:
            idx = stream.take(2 * k)
            fail = kernels.reg_saga_linear(problem.features, problem.labels, state.x, state.scalars,
                                           state.gsum, idx, eta, problem.reg.lam, problem.reg.alpha)
            done = k if fail < 0 else fail
            ifo.charge(3 * done)
            state.t += done
            if fail >= 0:
                raise DivergenceError(f"non-finite iterate at t={state.t}", t=state.t)
        else:
            for _ in range(k):
                if algo == "minibatch-saga":
                    minibatch_saga_step(state, problem, b)
                else:
                    saga_step(state, problem)
        recorder(state.t, ifo.calls, state.x, eta)
    recorder(state.t, ifo.calls, state.x, eta, force=True)
    recorder.record.x_out = x_out


def _run_gd_saga(problem, cfg, x, streams, ifo, budget, recorder):
    from .optim.drivers import gd_saga_epoch_length

    n = problem.n
    L = problem.smoothness.L
    tau = cfg.tau if cfg.tau is not None else problem.smoothness.tau
    eta = step_size(cfg, problem, "gd-saga")
    T = cfg.T or gd_saga_epoch_length(L, tau, n)
    per_epoch = n + 3 * T
    K = cfg.K or max(1, (budget - ifo.calls) // per_epoch if budget else 1)
    stream = streams.index_stream(n)
    recorder(0, ifo.calls, x, eta, force=True)
    t_total = 0
    for _ in range(K):
        state = saga_init(problem, x, eta, stream, ifo)
        a = draw_output_index(T, streams.output)
        x_next = None
        for t in range(T):
            if t == a:
                x_next = state.x.copy()
            saga_step(state, problem)
            t_total += 1
            recorder(t_total, ifo.calls, state.x, eta)
        x = x_next
        recorder(t_total, ifo.calls, x, eta, force=True)
    recorder.record.x_out = x


# --- reference solution -----------------------------------------------------

def reference_solution(problem, budget: int | None = None, restarts: int = 5, seed: int = 0,
                       extra_starts: Sequence[np.ndarray] = (), tol: float = 1e-10) -> Tuple[np.ndarray, float]:
    """Best point found by GD (step ``1/L``) from several starts.

    The origin and ``restarts - 1`` Gaussian points share ``budget`` IFO calls; each runs
    until ``|grad f|^2 <= tol`` or its share is spent. If ``extra_starts`` are given
    (final iterates of algorithm runs), the lowest of them is polished with one more
    share, so the incumbent is never worse than any run it was handed.
    """
    n, d = problem.n, problem.d
    restarts = max(int(restarts), 1)
    budget = 2000 * n * restarts if budget is None else int(budget)
    if budget < 100 * n:
        raise ValueError("reference budget must be at least 100 n IFO calls")
    rng = np.random.default_rng(seed)
    starts = [np.zeros(d)] + [rng.standard_normal(d) for _ in range(restarts - 1)]
    extra = [np.asarray(s, dtype=np.float64) for s in extra_starts if s is not None]
    if extra:
        starts.append(min(extra, key=problem.value))
    iters = max(1, budget // (n * restarts))
    eta = 1.0 / problem.smoothness.L
    best_x, best_f = None, math.inf
    for x in starts:
        x = x.copy()
        for _ in range(iters):
            g = problem.gradient(x)
            if float(g @ g) <= tol:
                break
            x = x - eta * g
        fx = problem.value(x)
        if fx < best_f:
            best_x, best_f = x, fx
    return best_x, best_f


# --- orchestration ----------------------------------------------------------

def _manifest(cfg: ExperimentConfig, cell: Cell, problem, rec: RunRecord) -> Dict:
    return {
        "schema": CSV_SCHEMA,
        "config_digest": cfg.digest(),
        "problem_digest": problem.digest(),
        "library_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "algorithm": cell.algorithm,
        "label": cell.label,
        "seed": cell.seed,
        "eta0": cell.eta0 if cell.algorithm == "sgd" else None,
        "etap": cell.etap if cell.algorithm == "sgd" else None,
        "n": problem.n,
        "d": problem.d,
        "status": rec.status,
        "message": rec.message,
        "final_f": rec.f[-1] if rec.f else None,
        "output_f": problem.value(rec.x_out) if rec.x_out is not None else None,
    }


_PROBLEM_CACHE: Dict[str, object] = {}


def _cached_problem(cfg: ExperimentConfig):
    key = json.dumps([cfg.problem, cfg.lam, cfg.alpha], sort_keys=True)
    if key not in _PROBLEM_CACHE:
        _PROBLEM_CACHE.clear()
        _PROBLEM_CACHE[key] = build_problem(cfg)
    return _PROBLEM_CACHE[key]


def _run_cell(args):
    cfg_dict, cell, outdir = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    problem = _cached_problem(cfg)
    rec = execute_run(problem, cfg, cell)
    outdir = Path(outdir)
    (outdir / f"{cell.stem}.csv").write_text(rec.to_csv())
    with open(outdir / f"{cell.stem}.json", "w") as fh:
        json.dump(_manifest(cfg, cell, problem, rec), fh, indent=2, sort_keys=True)
    x_final = None if rec.status != "ok" else rec.x_last
    return cell, rec.status, x_final


@dataclass
class ExperimentResult:
    run_files: List[Path]
    reference: Dict
    diverged: List[str]


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    cfg.validate()
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    cells = grid_cells(cfg)
    jobs = [(cfg.to_dict(), c, str(outdir)) for c in cells]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    problem = _cached_problem(cfg)
    ref_cfg = dict(cfg.reference)
    restarts = int(ref_cfg.get("restarts", 5))
    budget = int(ref_cfg.get("budget_passes", 10000) * problem.n)
    x_ref, f_ref = reference_solution(problem, budget, restarts, seed=0,
                                      extra_starts=[r[2] for r in results])
    reference = {"problem_digest": problem.digest(), "f_ref": f_ref,
                 "grad_norm_sq": float(np.sum(problem.gradient(x_ref) ** 2)),
                 "restarts": restarts, "budget_calls": budget}
    with open(outdir / "reference.json", "w") as fh:
        json.dump(reference, fh, indent=2, sort_keys=True)
    with open(outdir / "experiment.json", "w") as fh:
        json.dump({"config": cfg.to_dict(), "config_digest": cfg.digest()}, fh, indent=2, sort_keys=True)
    diverged = [c.stem for c, status, _ in results if status != "ok"]
    return ExperimentResult([outdir / f"{c.stem}.csv" for c in cells], reference, diverged)


# --- summaries --------------------------------------------------------------

class SummaryError(ValueError):
    pass


@dataclass
class RunTrace:
    label: str
    seed: int
    n: int
    ifo: np.ndarray
    f: np.ndarray
    grad_norm_sq: np.ndarray
    f_ref: float


def read_run(path) -> RunTrace:
    path = Path(path)
    text = path.read_text()
    first, _, body = text.partition("\n")
    if first.strip() != f"# schema={CSV_SCHEMA}":
        raise SummaryError(f"{path}: unknown or missing schema line {first!r}")
    rows = list(csv.reader(io.StringIO(body)))
    if tuple(rows[0]) != CSV_COLUMNS:
        raise SummaryError(f"{path}: unexpected columns {rows[0]}")
    data = rows[1:]
    manifest = json.loads(path.with_suffix(".json").read_text())
    ref_path = path.parent / "reference.json"
    f_ref = 0.0
    if ref_path.exists():
        ref = json.loads(ref_path.read_text())
        if ref["problem_digest"] != manifest["problem_digest"]:
            raise SummaryError(f"{path}: reference solution belongs to a different problem")
        f_ref = ref["f_ref"]
    return RunTrace(
        label=manifest["label"], seed=int(manifest["seed"]), n=int(manifest["n"]),
        ifo=np.array([int(r[1]) for r in data]),
        f=np.array([float(r[2]) for r in data]),
        grad_norm_sq=np.array([float(r[3]) for r in data]),
        f_ref=f_ref,
    )


def value_at(ifo: np.ndarray, values: np.ndarray, checkpoint: float) -> float:
    """Last recorded value at or before ``checkpoint`` (step-function semantics)."""
    k = int(np.searchsorted(ifo, checkpoint, side="right")) - 1
    return float(values[k]) if k >= 0 else float("nan")


@dataclass
class Summary:
    rows: List[Dict]

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["label", "passes", "runs", "f_gap_median", "f_gap_iqr", "grad_norm_sq_median", "grad_norm_sq_iqr"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([r["label"], repr(r["passes"]), r["runs"]] + [repr(r[c]) for c in cols[3:]])
        return buf.getvalue()

    def to_text(self) -> str:
        header = ("label", "passes", "runs", "f-f* med", "f-f* iqr", "|g|^2 med", "|g|^2 iqr")
        lines = [[r["label"], f"{r['passes']:g}", str(r["runs"]),
                  *(f"{r[c]:.4e}" for c in ("f_gap_median", "f_gap_iqr", "grad_norm_sq_median", "grad_norm_sq_iqr"))]
                 for r in self.rows]
        widths = [max(len(h), *(len(l[i]) for l in lines)) if lines else len(h) for i, h in enumerate(header)]
        fmt = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
        return "\n".join([fmt(header)] + [fmt(l) for l in lines]) + "\n"


def summarize(run_files: Sequence, checkpoints: Sequence[float] | None = None) -> Summary:
    """Median and IQR across seeds of ``f - f_ref`` and ``|grad f|^2`` at IFO checkpoints ``k n``."""
    if not run_files:
        raise SummaryError("need at least one run file")
    runs = sorted((read_run(p) for p in run_files), key=lambda r: (r.label, r.seed))
    ns = {r.n for r in runs}
    if len(ns) != 1:
        raise SummaryError(f"inconsistent checkpoint grids: runs have different n {sorted(ns)}")
    n = ns.pop()
    if checkpoints is None:
        max_pass = max(int(r.ifo[-1] // n) for r in runs)
        checkpoints = list(range(1, max_pass + 1))
    rows = []
    for label in sorted({r.label for r in runs}):
        group = [r for r in runs if r.label == label]
        for k in checkpoints:
            c = k * n
            gaps = np.array([value_at(r.ifo, r.f, c) - r.f_ref for r in group])
            g2 = np.array([value_at(r.ifo, r.grad_norm_sq, c) for r in group])
            rows.append({
                "label": label, "passes": float(k), "runs": len(group),
                "f_gap_median": float(np.median(gaps)),
                "f_gap_iqr": float(np.subtract(*np.percentile(gaps, [75, 25]))),
                "grad_norm_sq_median": float(np.median(g2)),
                "grad_norm_sq_iqr": float(np.subtract(*np.percentile(g2, [75, 25]))),
            })
    return Summary(rows)


def best_sgd_label(run_files: Sequence, at_passes: float | None = None) -> str:
    """SGD grid cell with the lowest median training loss at ``at_passes`` (default: end)."""
    runs = [read_run(p) for p in run_files]
    sgd = [r for r in runs if r.label.startswith("sgd")]
    if not sgd:
        raise SummaryError("no SGD runs")
    scores = {}
    for label in {r.label for r in sgd}:
        vals = []
        for r in sgd:
            if r.label == label:
                c = r.ifo[-1] if at_passes is None else at_passes * r.n
                vals.append(value_at(r.ifo, r.f, c))
        scores[label] = float(np.median(vals))
    return min(sorted(scores), key=lambda k: scores[k])
