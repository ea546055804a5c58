"""Core value types: data vectors, workloads, strategy matrices and factorizations.

A strategy matrix ``Q`` (m x n) stores ``Pr[output o | user type u]`` in
``Q[o, u]``.  It is epsilon-LDP exactly when every column is a probability
distribution and every row stays within a factor ``e^eps`` of its minimum.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SUM_TOL = 1e-9
RATIO_TOL = 1e-9
FACTOR_TOL = 1e-6


class DimensionError(ValueError):
    """Array shapes that cannot be combined."""


class StrategyFormatError(ValueError):
    """A strategy or data file that does not match the expected schema."""


def _frozen(a, dtype=np.float64):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DataVector:
    """Histogram of users over the ``n`` user types."""

    counts: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.counts)
        if raw.ndim != 1 or raw.size < 1:
            raise ValueError("data vector must be a non-empty 1-d sequence")
        if np.any(raw < 0):
            raise ValueError("data vector counts must be nonnegative")
        if not np.all(np.equal(np.mod(raw, 1), 0)):
            raise ValueError("data vector counts must be integers")
        object.__setattr__(self, "counts", _frozen(raw, np.int64))

    @property
    def n(self) -> int:
        return int(self.counts.size)

    @property
    def N(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("count\n")
            for c in self.counts:
                fh.write(f"{int(c)}\n")

    @classmethod
    def from_csv(cls, path) -> "DataVector":
        text = Path(path).read_text().strip().splitlines()
        if not text or text[0].strip() != "count":
            raise StrategyFormatError(f"{path}: expected header line 'count'")
        values = []
        for lineno, line in enumerate(text[1:], start=2):
            line = line.strip()
            if not line:
                continue
            try:
                v = int(line)
            except ValueError:
                raise StrategyFormatError(f"{path}:{lineno}: not an integer: {line!r}") from None
            if v < 0:
                raise StrategyFormatError(f"{path}:{lineno}: negative count {v}")
            values.append(v)
        if not values:
            raise StrategyFormatError(f"{path}: no counts")
        return cls(values)


@dataclass(frozen=True, eq=False)
class Workload:
    """A p x n matrix of linear counting queries."""

    matrix: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        W = np.asarray(self.matrix, dtype=np.float64)
        if W.ndim == 1:
            W = W[None, :]
        if W.ndim != 2 or W.shape[0] < 1 or W.shape[1] < 1:
            raise ValueError("workload must be a non-empty 2-d matrix")
        if not np.all(np.isfinite(W)):
            raise ValueError("workload entries must be finite")
        object.__setattr__(self, "matrix", _frozen(W))

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def answers(self, x) -> np.ndarray:
        return self.matrix @ np.asarray(_counts(x), dtype=np.float64)

    def to_csv(self, path):
        np.savetxt(path, self.matrix, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, kind="custom") -> "Workload":
        return cls(np.loadtxt(path, delimiter=",", ndmin=2), kind=kind)


@dataclass(frozen=True, eq=False)
class StrategyMatrix:
    """An m x n column-stochastic randomizer with its privacy budget.

    ``z`` is the per-row floor used by the optimizer; when omitted it is the
    row minima, which is always a valid floor for an LDP matrix.
    """

    matrix: np.ndarray
    epsilon: float
    z: np.ndarray | None = None
    kind: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        Q = np.asarray(self.matrix, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] < 1 or Q.shape[1] < 1:
            raise DimensionError("strategy matrix must be a non-empty 2-d array")
        object.__setattr__(self, "matrix", _frozen(Q))
        z = row_minima(Q) if self.z is None else np.asarray(self.z, dtype=np.float64)
        if z.shape != (Q.shape[0],):
            raise DimensionError(f"z has shape {z.shape}, expected ({Q.shape[0]},)")
        object.__setattr__(self, "z", _frozen(z))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def validate(self, epsilon=None) -> "ValidationReport":
        return validate_strategy(self, self.epsilon if epsilon is None else epsilon)


def _counts(x):
    return x.counts if isinstance(x, DataVector) else x


def _matrix(a):
    if isinstance(a, (Workload, StrategyMatrix)):
        return a.matrix
    return np.asarray(a, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Factorization:
    """``W = V Q``: reconstruction matrix ``V`` paired with a strategy."""

    V: np.ndarray
    Q: StrategyMatrix
    W: Workload

    def __post_init__(self):
        V = _frozen(self.V)
        object.__setattr__(self, "V", V)
        W = self.W.matrix
        if V.shape != (W.shape[0], self.Q.m) or self.Q.n != W.shape[1]:
            raise DimensionError(
                f"V {V.shape}, Q {self.Q.matrix.shape} and W {W.shape} are inconsistent"
            )
        err = np.abs(W - V @ self.Q.matrix).max()
        if err > FACTOR_TOL * (1 + np.abs(W).max()):
            raise ValueError(f"V Q does not reproduce W (max error {err:.3g})")


@dataclass(frozen=True, eq=False)
class ResponseVector:
    """Histogram of the N randomized outputs over the m outcomes."""

    counts: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.counts)
        if raw.ndim != 1 or np.any(raw < 0):
            raise ValueError("response counts must be a nonnegative 1-d sequence")
        object.__setattr__(self, "counts", _frozen(raw, np.int64))

    @property
    def m(self) -> int:
        return int(self.counts.size)

    @property
    def N(self) -> int:
        return int(self.counts.sum())


@dataclass
class Violation:
    constraint: str
    index: tuple
    magnitude: float

    def __str__(self):
        return f"{self.constraint} at {self.index}: {self.magnitude:.3g}"


@dataclass
class ValidationReport:
    """Violated LDP constraints; an empty report means the strategy is valid.

    ``removable_rows`` lists all-zero rows.  They are legal but carry no
    information and can be dropped.
    """

    violations: list = field(default_factory=list)
    removable_rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def constraints(self) -> set:
        return {v.constraint for v in self.violations}

    def __str__(self):
        if self.ok:
            return "valid"
        return "; ".join(str(v) for v in self.violations)


def row_minima(Q) -> np.ndarray:
    """Per-row minimum of ``Q``: the tightest floor ``z`` with ``z <= q_u``."""
    return np.asarray(_matrix(Q), dtype=np.float64).min(axis=1)


def validate_strategy(Q, epsilon, z=None) -> ValidationReport:
    """Check ``Q`` against the epsilon-LDP constraints.

    Reports the worst offender for each of: negativity, column sums,
    row ratio, and (when a floor is available) z-bracketing.
    """
    if isinstance(Q, StrategyMatrix):
        z = Q.z if z is None else z
    Qm = _matrix(Q)
    if Qm.ndim != 2:
        raise DimensionError("strategy matrix must be 2-d")
    m, n = Qm.shape
    if z is not None:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (m,):
            raise DimensionError(f"z has shape {z.shape}, expected ({m},)")
    e = float(np.exp(epsilon))
    report = ValidationReport()

    neg = -Qm
    if neg.max() > 0:
        idx = np.unravel_index(np.argmax(neg), Qm.shape)
        report.violations.append(Violation("negativity", tuple(int(i) for i in idx), float(neg.max())))

    colerr = np.abs(Qm.sum(axis=0) - 1.0)
    if colerr.max() > SUM_TOL:
        u = int(np.argmax(colerr))
        report.violations.append(Violation("column_sum", (u,), float(colerr[u])))

    rmax = Qm.max(axis=1)
    rmin = Qm.min(axis=1)
    excess = rmax - e * rmin - RATIO_TOL * np.maximum(1.0, e * np.abs(rmin))
    if excess.max() > 0:
        o = int(np.argmax(excess))
        report.violations.append(
            Violation("row_ratio", (o, int(np.argmax(Qm[o])), int(np.argmin(Qm[o]))), float(rmax[o] - e * rmin[o]))
        )

    if z is not None:
        below = np.concatenate([-z, (z[:, None] - Qm).ravel()])
        # upper side of the bracket gets the same relative slack as the ratio check
        above = (Qm - e * z[:, None]) - RATIO_TOL * np.maximum(1.0, e * np.abs(z[:, None]))
        worst_below = below.max()
        if worst_below > SUM_TOL:
            k = int(np.argmax(below))
            idx = (k,) if k < m else tuple(int(i) for i in np.unravel_index(k - m, Qm.shape))
            report.violations.append(Violation("z_bracket", idx, float(worst_below)))
        elif above.max() > 0:
            idx = np.unravel_index(np.argmax(above), Qm.shape)
            report.violations.append(Violation("z_bracket", tuple(int(i) for i in idx), float(above.max())))

    report.removable_rows = [int(o) for o in np.flatnonzero(np.all(Qm == 0, axis=1))]
    return report


# --- strategy file format -------------------------------------------------
#
# line 1:     JSON header {n, m, epsilon, kind, seed, objective_value}
# lines 2...: m CSV rows of n full-precision decimals

def save_strategy(Q: StrategyMatrix, path, seed=None, objective_value=None):
    header = {
        "n": Q.n,
        "m": Q.m,
        "epsilon": Q.epsilon,
        "kind": Q.kind,
        "seed": seed if seed is not None else Q.meta.get("seed"),
        "objective_value": objective_value if objective_value is not None else Q.meta.get("objective_value"),
    }
    buf = io.StringIO()
    buf.write(json.dumps(header) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    for row in Q.matrix:
        writer.writerow([repr(float(v)) for v in row])
    Path(path).write_text(buf.getvalue())


def load_strategy(path) -> StrategyMatrix:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise StrategyFormatError(f"{path}: empty strategy file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise StrategyFormatError(f"{path}: bad JSON header ({exc})") from None
    missing = {"n", "m", "epsilon"} - set(header)
    if missing:
        raise StrategyFormatError(f"{path}: header missing {sorted(missing)}")
    rows = [r for r in csv.reader(lines[1:]) if r]
    try:
        Q = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise StrategyFormatError(f"{path}: {exc}") from None
    if Q.shape != (header["m"], header["n"]):
        raise StrategyFormatError(f"{path}: body is {Q.shape}, header says ({header['m']}, {header['n']})")
    meta = {k: header.get(k) for k in ("seed", "objective_value")}
    return StrategyMatrix(Q, header["epsilon"], kind=header.get("kind") or "custom", meta=meta)
