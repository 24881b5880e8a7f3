"""Consensus weight (stationary) solvers and democracy diagnostics.

A family is democratic when the maximum consensus weight vanishes as the
family grows, and weakly democratic when each fixed node's weight does.
``democracy_scan`` sweeps a family across sizes (optionally perturbed)
and records both diagnostics per size, with CSV/JSON emission.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .matrix import ProbabilityVector, strongly_connected_components
from .families import format_label
from .perturb import apply_perturbation, srw_profile

DIRECT_RESIDUAL_TOL = 1e-10
POWER_TOL = 1e-12
POWER_MAX_ITER = 10 ** 6

# sparse-LU roundoff on exponentially small components can dip just below
# zero; entries this close to 0 are clamped, anything lower is a failure
NEGATIVE_CLAMP = 1e-12


class ReducibleMatrixError(ValueError):
    """No unique stationary vector; carries the SCC decomposition."""

    def __init__(self, components):
        self.components = components
        super().__init__(
            f"matrix is reducible: {len(components)} strongly connected components")


class PowerIterationError(RuntimeError):
    """Iteration budget exhausted; carries the last iterate and residual."""

    def __init__(self, last_iterate, residual, iterations):
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"power iteration did not converge in {iterations} steps "
            f"(last L1 change {residual:.3e})")


def residual_l1(matrix, pi):
    """L1 residual of the invariance equation, ||pi^T P - pi^T||_1."""
    x = pi.values if isinstance(pi, ProbabilityVector) else np.asarray(pi)
    csr = matrix.to_scipy()
    return float(np.abs(csr.T @ x - x).sum())


def _require_irreducible(matrix):
    comps = strongly_connected_components(matrix)
    if len(comps) != 1:
        raise ReducibleMatrixError(comps)


def stationary_direct(matrix, residual_tol=DIRECT_RESIDUAL_TOL):
    """Solve pi^T P = pi^T, sum(pi) = 1 as a sparse linear system.

    The last equation of (P^T - I) pi = 0 is replaced by the
    normalization constraint, and the system is solved by sparse LU.
    Requires an irreducible matrix (the error carries the SCC
    decomposition otherwise); the reported residual must meet
    ``residual_tol``.
    """
    _require_irreducible(matrix)
    n = matrix.n
    csr = matrix.to_scipy()
    a = (csr.T - sp.eye(n, format="csr")).tocsr()
    last = sp.csr_matrix((np.ones(n), np.arange(n), [0, n]), shape=(1, n))
    a = sp.vstack([a[: n - 1], last], format="csc")
    b = np.zeros(n)
    b[n - 1] = 1.0
    x = spla.splu(a).solve(b)
    low = x.min()
    if low < -NEGATIVE_CLAMP:
        raise ArithmeticError(
            f"direct solve produced entry {low:.3e} below the clamp threshold")
    x[x < 0.0] = 0.0
    res = residual_l1(matrix, x)
    if res > residual_tol:
        raise ArithmeticError(
            f"direct solve residual {res:.3e} exceeds {residual_tol}")
    return ProbabilityVector(x)


def stationary_power(matrix, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    """Power iteration on the lazy transform (P + I)/2 from a uniform start.

    The transform preserves the stationary vector and removes
    periodicity; iteration stops when the L1 change drops to ``tol``.
    """
    _require_irreducible(matrix)
    n = matrix.n
    pt = matrix.to_scipy().T.tocsr()
    x = np.full(n, 1.0 / n)
    for _ in range(int(max_iter)):
        y = 0.5 * (pt @ x + x)
        y /= y.sum()
        change = float(np.abs(y - x).sum())
        x = y
        if change <= tol:
            return ProbabilityVector(x)
    raise PowerIterationError(last_iterate=x, residual=change, iterations=int(max_iter))


def reversible_stationary(conductance):
    """Closed-form stationary vector C_i / sum_j C_j of a reversible chain."""
    if not conductance.is_connected():
        raise ValueError("conductance graph must be connected")
    total = math.fsum(conductance.row_sums)
    return ProbabilityVector([s / total for s in conductance.row_sums])


def degree_bound(matrix):
    """Max degree over directed-edge count for an SRW on an undirected graph.

    The stationary weights of a (lazy) simple random walk are degree
    ratios, so ||pi||_inf <= max_degree / #directed_edges, with equality
    on regular graphs (the ordered-pair edge count makes the bound tight
    there).
    """
    _, degrees = srw_profile(matrix)
    for i in range(matrix.n):
        for j in matrix.out_neighbors(i):
            if i not in matrix.out_neighbors(j):
                raise ValueError("degree bound needs an undirected support graph")
    return float(degrees.max() / degrees.sum())


# ---------------------------------------------------------------------------
# democracy scan


@dataclass
class ScanRecord:
    """Per-size democracy diagnostics for a family sweep."""

    n: int
    state_count: int
    max_weight: float
    argmax_label: object
    tracked_weights: dict = field(default_factory=dict)
    degree_bound: float | None = None
    solver: str = "direct"
    residual: float = 0.0


class ScanError(RuntimeError):
    """Solver failure partway through a scan; carries the finished records."""

    def __init__(self, n, cause, records):
        self.n = n
        self.cause = cause
        self.records = records
        super().__init__(f"scan failed at n={n}: {cause}")


_SOLVERS = {"direct": lambda m: stationary_direct(m),
            "power": lambda m: stationary_power(m)}


def democracy_scan(fam, sizes, perturbation=None, tracked=(), solver="direct",
                   jobs=1):
    """Sweep a family across ascending sizes and collect ScanRecords.

    Emits the max-weight curve (democracy diagnostic) together with the
    tracked nodes' pointwise weights (weak-democracy diagnostic).  The
    degree bound is recorded when the scanned matrix is an SRW on an
    undirected graph, else left absent.  Sizes may be solved in parallel;
    records always come back in ascending size order.
    """
    sizes = [int(n) for n in sizes]
    if sizes != sorted(sizes) or len(set(sizes)) != len(sizes):
        raise ValueError("sizes must be strictly ascending")
    if solver not in _SOLVERS:
        raise ValueError(f"unknown solver {solver!r}")
    tracked = list(tracked)
    first_labels = set(fam.labels(sizes[0]))
    missing = [t for t in tracked if t not in first_labels]
    if missing:
        raise ValueError(f"tracked labels absent from the smallest size: {missing}")

    def solve_one(n):
        labels = fam.labels(n)
        m = fam.matrix(n)
        if perturbation is not None:
            m = apply_perturbation(perturbation, m, fam.label_index(n))
        pi = _SOLVERS[solver](m)
        try:
            bound = degree_bound(m)
        except ValueError:
            bound = None
        index = {lab: i for i, lab in enumerate(labels)}
        return ScanRecord(
            n=n,
            state_count=m.n,
            max_weight=pi.max_weight(),
            argmax_label=labels[pi.argmax()],
            tracked_weights={t: pi[index[t]] for t in tracked},
            degree_bound=bound,
            solver=solver,
            residual=residual_l1(m, pi),
        )

    records = []
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [(n, pool.submit(solve_one, n)) for n in sizes]
            for n, fut in futures:
                try:
                    records.append(fut.result())
                except Exception as exc:
                    raise ScanError(n, exc, records) from exc
    else:
        for n in sizes:
            try:
                records.append(solve_one(n))
            except Exception as exc:
                raise ScanError(n, exc, records) from exc
    return records


# ---------------------------------------------------------------------------
# scan output formats


def _fmt(x):
    return format(float(x), ".17g")


def scan_to_csv(records, tracked, target):
    """CSV schema: n,state_count,max_weight,argmax_label,degree_bound,
    residual, then one column per tracked label; 17 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    tracked_names = [format_label(t) for t in tracked]
    writer.writerow(["n", "state_count", "max_weight", "argmax_label",
                     "degree_bound", "residual"] + tracked_names)
    for rec in records:
        row = [str(rec.n), str(rec.state_count), _fmt(rec.max_weight),
               format_label(rec.argmax_label),
               "" if rec.degree_bound is None else _fmt(rec.degree_bound),
               _fmt(rec.residual)]
        row += [_fmt(rec.tracked_weights[t]) for t in tracked]
        writer.writerow(row)
    text = buf.getvalue()
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", newline="") as fh:
            fh.write(text)
    return text


def read_scan_csv(source):
    """Parse a scan CSV back into records (labels stay as text)."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, newline="") as fh:
            text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    tracked = header[6:]
    records = []
    for row in rows[1:]:
        records.append(ScanRecord(
            n=int(row[0]),
            state_count=int(row[1]),
            max_weight=float(row[2]),
            argmax_label=row[3],
            degree_bound=None if row[4] == "" else float(row[4]),
            solver="",
            residual=float(row[5]),
            tracked_weights={t: float(v) for t, v in zip(tracked, row[6:])},
        ))
    return records, tracked


def scan_to_json(records, tracked, target, family_doc=None, perturbation_doc=None):
    """JSON summary mirroring the CSV plus family/perturbation metadata."""
    doc = {
        "family": family_doc,
        "perturbation": perturbation_doc,
        "tracked": [format_label(t) for t in tracked],
        "records": [
            {
                "n": rec.n,
                "state_count": rec.state_count,
                "max_weight": rec.max_weight,
                "argmax_label": format_label(rec.argmax_label),
                "degree_bound": rec.degree_bound,
                "solver": rec.solver,
                "residual": rec.residual,
                "tracked_weights": {format_label(t): w
                                    for t, w in rec.tracked_weights.items()},
            }
            for rec in records
        ],
    }
    text = json.dumps(doc, indent=2) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w") as fh:
            fh.write(text)
    return text
