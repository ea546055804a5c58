"""Experiment harness: sample-complexity sweeps, dataset evaluation,
initialization robustness and the WNNLS comparison.

Grid points run in a thread pool (size capped by ``WF_THREADS``); each point
derives its own seed from ``(seed, point index)`` and rows are sorted before
they are returned, so tables do not depend on scheduling.
"""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics as mt
from . import workloads as wl
from .model import DataVector, StrategyMatrix
from .optimizer import OptimizerConfig, optimize
from .runtime import simulate, strategy_from_spec

RESULT_COLUMNS = (
    "workload",
    "strategy",
    "epsilon",
    "n",
    "alpha",
    "sample_complexity",
    "L_worst",
    "L_avg",
    "L_Q",
    "lower_bound",
    "wall_time_s",
)
DATASET_COLUMNS = RESULT_COLUMNS + ("data_sample_complexity", "worst_to_data")
INIT_COLUMNS = ("workload", "n", "epsilon", "m", "trial", "seed", "L_worst", "ratio_to_best", "wall_time_s")
SYNTH_KINDS = ("uniform", "powerlaw", "spike")


@dataclass
class ResultTable:
    rows: list
    columns: tuple = RESULT_COLUMNS
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return [r[name] for r in self.rows]

    def where(self, **match):
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]

    def to_csv(self, path, timing=True):
        """Write the table; ``timing=False`` zeroes ``wall_time_s`` so reruns are byte-identical."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.columns)
            for r in self.rows:
                out = []
                for c in self.columns:
                    v = r[c]
                    if c == "wall_time_s" and not timing:
                        v = 0.0
                    out.append(repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                writer.writerow(out)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = tuple(next(reader))
            except StopIteration:
                raise ValueError(f"{path}: empty table file") from None
            missing = {"strategy", "sample_complexity"} - set(header)
            if missing:
                raise ValueError(f"{path}: not a result table (missing {sorted(missing)})")
            rows = [dict(zip(header, (_parse_cell(v) for v in line))) for line in reader if line]
        return cls(rows, columns=header)


def _parse_cell(v):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def _sort_key(r):
    return tuple(r.get(k, "") for k in ("workload", "strategy", "epsilon", "n", "m", "trial"))


def worker_count():
    env = os.environ.get("WF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"WF_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _pool_map(fn, items):
    items = list(items)
    workers = min(worker_count(), max(1, len(items)))
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def point_seed(seed, index):
    """Independent integer seed for grid point ``index``."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def make_workload(spec, n=None):
    """Workload from a spec string; ``n`` (if given) overrides the spec's domain size."""
    name, params = wl.parse_spec(spec)
    if n is not None:
        params.pop("k", None)
        params["n"] = int(n)
    return wl.build_workload(name, **params)


def _evaluate(W, Q, alpha):
    Wm = W.matrix
    V = mt.optimal_V(Wm, Q)
    s = mt.per_type_variance(V, Q)
    p = Wm.shape[0]
    return {
        "sample_complexity": float(s.max() / (p * alpha)),
        "L_worst": float(s.max()),
        "L_avg": float(s.mean()),
        "L_Q": mt.objective_LQ(Q, Wm),
        "_V": V,
    }


def _strategy_row(W, spec, epsilon, alpha, seed, opt_kw):
    t0 = time.perf_counter()
    Q = strategy_from_spec(spec, W.matrix, epsilon, seed=seed, **(opt_kw or {}))
    ev = _evaluate(W, Q, alpha)
    ev.pop("_V")
    row = {
        "workload": W.kind,
        "strategy": _strategy_name(spec),
        "epsilon": float(epsilon),
        "n": W.n,
        "alpha": float(alpha),
        **ev,
        "lower_bound": mt.svd_lower_bound(W.matrix, epsilon),
        "wall_time_s": time.perf_counter() - t0,
    }
    return row, Q


def _strategy_name(spec):
    if isinstance(spec, StrategyMatrix):
        return spec.kind
    s = spec.strip().lower()
    return "optimized" if s in ("opt", "optimized") else s


def sweep_epsilon(workload_spec, strategy_specs, n, eps_list, alpha=0.01, seed=0, opt_kw=None):
    """Sample complexity of each strategy at each epsilon.

    ``L_worst`` and ``L_avg`` are per user (N = 1); ``lower_bound`` is the
    SVD bound on ``L_Q``.
    """
    W = make_workload(workload_spec, n)
    grid = [(s, float(e)) for e in eps_list for s in strategy_specs]

    def run(item):
        i, (spec, eps) = item
        return _strategy_row(W, spec, eps, alpha, point_seed(seed, i), opt_kw)[0]

    rows = _pool_map(run, enumerate(grid))
    return ResultTable(sorted(rows, key=_sort_key))


def loglog_slope(ns, values):
    """Least-squares slope of ``log(values)`` against ``log(ns)``."""
    x, y = np.log(np.asarray(ns, float)), np.log(np.asarray(values, float))
    if x.size < 2:
        return float("nan")
    A = np.column_stack([x, np.ones_like(x)])
    return float(np.linalg.lstsq(A, y, rcond=None)[0][0])


def sweep_domain(workload_kind, strategy_specs, n_list, epsilon, alpha=0.01, seed=0, opt_kw=None):
    """Sample complexity against domain size; ``extra["slopes"]`` has each strategy's log-log slope."""
    grid = [(s, int(n)) for n in n_list for s in strategy_specs]

    def run(item):
        i, (spec, n) = item
        W = make_workload(workload_kind, n)
        return _strategy_row(W, spec, epsilon, alpha, point_seed(seed, i), opt_kw)[0]

    rows = sorted(_pool_map(run, enumerate(grid)), key=_sort_key)
    slopes = {}
    for name in dict.fromkeys(r["strategy"] for r in rows):
        pts = sorted((r["n"], r["sample_complexity"]) for r in rows if r["strategy"] == name)
        slopes[name] = loglog_slope([p[0] for p in pts], [p[1] for p in pts])
    return ResultTable(rows, extra={"slopes": slopes})


def load_data(path) -> DataVector:
    """Single-column CSV with header ``count``."""
    return DataVector.from_csv(path)


def largest_remainder(weights, N):
    """Integer counts proportional to ``weights`` that sum to exactly ``N``."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with a positive sum")
    share = N * w / w.sum()
    counts = np.floor(share).astype(np.int64)
    short = int(N - counts.sum())
    if short > 0:
        order = np.argsort(-(share - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def synth_data(kind, n, N, seed=0) -> DataVector:
    """Synthetic data: ``uniform``, ``powerlaw`` (weights 1/i) or ``spike`` (all on type 0).

    ``seed`` only breaks ties; all three shapes are deterministic.
    """
    if n < 1 or N < 0:
        raise ValueError(f"need n >= 1 and N >= 0, got n={n}, N={N}")
    if kind == "uniform":
        w = np.ones(n)
    elif kind == "powerlaw":
        w = 1.0 / np.arange(1, n + 1)
    elif kind == "spike":
        w = np.zeros(n)
        w[0] = 1.0
    else:
        raise ValueError(f"unknown data kind {kind!r}; expected one of {SYNTH_KINDS}")
    return DataVector(largest_remainder(w, N) if N > 0 else np.zeros(n, dtype=np.int64))


def dataset_eval(workload_spec, strategy_specs, data, epsilon, alpha=0.01, seed=0, opt_kw=None):
    """Worst-case and data-dependent sample complexity on the data vector ``data``."""
    x = data.counts if isinstance(data, DataVector) else np.asarray(data)
    W = make_workload(workload_spec, x.size)

    def run(item):
        i, spec = item
        row, Q = _strategy_row(W, spec, epsilon, alpha, point_seed(seed, i), opt_kw)
        V = mt.optimal_V(W.matrix, Q)
        row["data_sample_complexity"] = mt.data_sample_complexity(V, Q, x, alpha, W.p)
        row["worst_to_data"] = row["sample_complexity"] / row["data_sample_complexity"]
        return row

    rows = _pool_map(run, enumerate(strategy_specs))
    return ResultTable(sorted(rows, key=_sort_key), columns=DATASET_COLUMNS)


def init_robustness(workload_spec, n, epsilon, m_list, trials=5, seed=0, opt_kw=None):
    """Optimize from ``trials`` random starts for each ``m``; ratios are to the best ``L_worst`` over all runs.

    ``extra["summary"]`` maps ``m`` to ``(median, min, max)`` of the ratio.
    """
    W = make_workload(workload_spec, n)
    grid = [(int(m), t) for m in m_list for t in range(trials)]

    def run(item):
        i, (m, t) = item
        s = point_seed(seed, i)
        t0 = time.perf_counter()
        res = optimize(W.matrix, OptimizerConfig(epsilon=epsilon, m=m, seed=s, **(opt_kw or {})))
        Q = res.Q.matrix
        L = mt.worst_case_variance(mt.optimal_V(W.matrix, Q), Q, 1)
        return {
            "workload": W.kind,
            "n": W.n,
            "epsilon": float(epsilon),
            "m": m,
            "trial": t,
            "seed": s,
            "L_worst": L,
            "wall_time_s": time.perf_counter() - t0,
        }

    rows = sorted(_pool_map(run, enumerate(grid)), key=_sort_key)
    best = min(r["L_worst"] for r in rows)
    for r in rows:
        r["ratio_to_best"] = r["L_worst"] / best
    summary = {}
    for m in dict.fromkeys(r["m"] for r in rows):
        ratios = [r["ratio_to_best"] for r in rows if r["m"] == m]
        summary[m] = (float(np.median(ratios)), min(ratios), max(ratios))
    return ResultTable(rows, columns=INIT_COLUMNS, extra={"summary": summary})


def wnnls_comparison(workload_spec, strategy, n, epsilon, N, data_kind="powerlaw", trials=100, seed=0, opt_kw=None):
    """Paired trials with and without WNNLS on the same responses.

    Returns the mean squared errors, their ratio (off / on), and a one-sided
    paired z statistic with its normal p-value.
    """
    W = make_workload(workload_spec, n)
    x = synth_data(data_kind, W.n, N)
    Q = strategy_from_spec(strategy, W.matrix, epsilon, seed=seed, **(opt_kw or {}))
    off = np.array([r["squared_error"] for r in simulate(W, Q, x, trials, seed=seed)])
    on = np.array([r["squared_error"] for r in simulate(W, Q, x, trials, seed=seed, use_wnnls=True)])
    diff = off - on
    sd = diff.std(ddof=1) if trials > 1 else 0.0
    z = diff.mean() / (sd / math.sqrt(trials)) if sd > 0 else (math.inf if diff.mean() > 0 else 0.0)
    return {
        "mse_without": float(off.mean()),
        "mse_with": float(on.mean()),
        "improvement": float(off.mean() / on.mean()) if on.mean() > 0 else math.inf,
        "z": float(z),
        "p_value": 0.5 * math.erfc(z / math.sqrt(2)),
        "trials": trials,
    }

