"""Generators for nested families of consensus matrices.

Each family maps a size index n to a matrix over stable node labels
(lattice coordinates or integers) with the nesting property: the label
set at size n is contained in the label set at size n+1.  Also houses
conductance matrices (time-reversible chains), the appended-cycle-tail
construction, the row-stabilization checker, and the FAM v1 file format.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass

from .matrix import SparseStochasticMatrix


# ---------------------------------------------------------------------------
# label helpers


def _lattice_labels(d, n):
    return list(itertools.product(range(-n, n + 1), repeat=d))


def label_to_json(label):
    return list(label) if isinstance(label, tuple) else label


def label_from_json(obj):
    return tuple(obj) if isinstance(obj, list) else obj


def format_label(label):
    """Canonical text form: '3' for integers, 'x,y' for lattice tuples."""
    if isinstance(label, tuple):
        return ",".join(str(c) for c in label)
    return str(label)


def parse_label(text):
    parts = text.split(",")
    if len(parts) == 1:
        return int(parts[0])
    return tuple(int(p) for p in parts)


# ---------------------------------------------------------------------------
# generators


def lazy_srw_grid(d, n, tau=0.0):
    """Lazy simple random walk on the grid [-n, n]^d.

    Self-loop weight tau, and (1 - tau)/degree to each grid neighbor;
    boundary nodes have fewer neighbors.
    """
    _check_dim_size(d, n)
    _check_tau(tau)
    labels = _lattice_labels(d, n)
    index = {lab: i for i, lab in enumerate(labels)}
    rows = []
    for lab in labels:
        nbrs = []
        for axis in range(d):
            for step in (-1, 1):
                t = lab[:axis] + (lab[axis] + step,) + lab[axis + 1:]
                if -n <= lab[axis] + step <= n:
                    nbrs.append(index[t])
        row = {j: (1.0 - tau) / len(nbrs) for j in nbrs}
        if tau > 0.0:
            row[index[lab]] = tau
        rows.append(row)
    return SparseStochasticMatrix.from_rows(rows, meta={"generator": "grid", "d": d, "tau": tau})


def directed_torus(d, n):
    """Directed torus on [-n, n]^d: one out-edge per +axis direction,
    each of probability 1/d, coordinates wrapping modulo 2n+1.
    Doubly stochastic, hence uniform consensus weights."""
    _check_dim_size(d, n)
    side = 2 * n + 1
    labels = _lattice_labels(d, n)
    index = {lab: i for i, lab in enumerate(labels)}
    rows = []
    for lab in labels:
        row = {}
        for axis in range(d):
            c = lab[axis] + 1
            c = ((c + n) % side) - n
            t = lab[:axis] + (c,) + lab[axis + 1:]
            row[index[t]] = 1.0 / d
        if len(row) != d:
            raise ValueError(f"degenerate torus: shifts collide at d={d}, n={n}")
        rows.append(row)
    return SparseStochasticMatrix.from_rows(rows, meta={"generator": "directed_torus", "d": d})


def lazy_torus(d, n, tau=0.0):
    """Lazy random walk on the undirected torus [-n, n]^d (2d neighbors,
    wraparound): self-loop tau and (1 - tau)/(2d) per neighbor."""
    _check_dim_size(d, n)
    _check_tau(tau)
    side = 2 * n + 1
    labels = _lattice_labels(d, n)
    index = {lab: i for i, lab in enumerate(labels)}
    rows = []
    for lab in labels:
        row = {}
        for axis in range(d):
            for step in (-1, 1):
                c = ((lab[axis] + step + n) % side) - n
                t = lab[:axis] + (c,) + lab[axis + 1:]
                row[index[t]] = (1.0 - tau) / (2 * d)
        if len(row) != 2 * d:
            raise ValueError(f"degenerate torus: shifts collide at d={d}, n={n}")
        if tau > 0.0:
            row[index[lab]] = tau
        rows.append(row)
    return SparseStochasticMatrix.from_rows(rows, meta={"generator": "lazy_torus", "d": d, "tau": tau})


def drift_line(n, delta):
    """Birth-death chain on states 1..n with right probability delta,
    left probability 1-delta, and boundary self-loops (1-delta at state 1,
    delta at state n)."""
    if n < 2:
        raise ValueError("drift_line needs n >= 2")
    _check_delta(delta)
    rows = []
    for i in range(n):
        row = {}
        if i < n - 1:
            row[i + 1] = delta
        else:
            row[i] = delta
        if i > 0:
            row[i - 1] = row.get(i - 1, 0.0) + (1.0 - delta)
        else:
            row[i] = row.get(i, 0.0) + (1.0 - delta)
        rows.append(row)
    return SparseStochasticMatrix.from_rows(rows, meta={"generator": "drift_line", "delta": delta})


def drift_line_stationary(n, delta):
    """Closed-form consensus weights of drift_line as a plain list.

    With r = delta/(1-delta) != 1 the weight of state i is
    r**(i-1) * (1-r) / (1-r**n); uniform when delta = 1/2.
    """
    if abs(delta - 0.5) < 1e-15:
        return [1.0 / n] * n
    r = delta / (1.0 - delta)
    return [r ** (i - 1) * (1.0 - r) / (1.0 - r ** n) for i in range(1, n + 1)]


def drift_cycle_labels(n):
    """Cycle labels -ceil(n/2) .. floor(n/2)-1 (endpoints identified)."""
    lo = -((n + 1) // 2)
    hi = n // 2 - 1
    return list(range(lo, hi + 1))


def drift_cycle(n, delta, perturb_zero=False):
    """Biased walk on the n-cycle, labels as in :func:`drift_cycle_labels`.

    Each state moves to its lower-labeled cyclic neighbor with
    probability delta and to the higher-labeled one with 1-delta, so for
    delta > 1/2 the walk drifts from the positive side down toward 0.
    With ``perturb_zero`` the row of state 0 is replaced: all outgoing
    mass goes up, delta onto the first cyclic successor and 1-delta onto
    the second (labels +1 and +2 once n >= 6).  In the growing-family
    limit that cuts the negative side off from state 0 while keeping
    returns to 0 fast, so the weight of 0 stays bounded away from zero
    while negative labels vanish.
    """
    if n < 3:
        raise ValueError("drift_cycle needs n >= 3")
    _check_delta(delta)
    labels = drift_cycle_labels(n)
    lo, hi = labels[0], labels[-1]
    index = {lab: i for i, lab in enumerate(labels)}

    def succ(lab):
        return lab + 1 if lab + 1 <= hi else lo

    def pred(lab):
        return lab - 1 if lab - 1 >= lo else hi

    rows = []
    for lab in labels:
        if perturb_zero and lab == 0:
            s1 = succ(0)
            s2 = succ(s1)
            rows.append({index[s1]: delta, index[s2]: 1.0 - delta})
        else:
            rows.append({index[pred(lab)]: delta, index[succ(lab)]: 1.0 - delta})
    meta = {"generator": "drift_cycle", "delta": delta, "perturb_zero": bool(perturb_zero)}
    if perturb_zero:
        meta["perturbed_row_targets"] = (succ(0), succ(succ(0)))
        meta["perturbed_row_probs"] = (delta, 1.0 - delta)
    return SparseStochasticMatrix.from_rows(rows, meta=meta)


def _check_dim_size(d, n):
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if n < 1:
        raise ValueError("size index must be >= 1")


def _check_tau(tau):
    if not 0.0 <= tau < 1.0:
        raise ValueError("self-confidence tau must lie in [0, 1)")


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")


# ---------------------------------------------------------------------------
# conductance matrices (time-reversible chains)


class ConductanceMatrix:
    """Symmetric nonnegative edge-conductance table over states 0..n-1.

    Entries must match bit-exactly across orientations and are drawn
    from a finite value set (declared, or inferred from the entries).
    """

    def __init__(self, n, entries, theta=None):
        if n < 1:
            raise ValueError("dimension must be >= 1")
        rows = [dict() for _ in range(n)]
        for (i, j), c in entries.items():
            c = float(c)
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"entry ({i}, {j}) out of range")
            if c <= 0.0 or not math.isfinite(c):
                raise ValueError("stored conductances must be positive and finite")
            for a, b in ((i, j), (j, i)):
                if b in rows[a] and rows[a][b] != c:
                    raise ValueError(f"asymmetric conductance at ({i}, {j})")
                rows[a][b] = c
        values = {c for row in rows for c in row.values()}
        if theta is not None:
            theta = frozenset(float(t) for t in theta)
            if not values <= theta:
                raise ValueError("conductance values outside the declared set")
        self.n = n
        self.rows = rows
        self.theta = theta if theta is not None else frozenset(values)
        self.row_sums = [math.fsum(sorted(row.values())) for row in rows]
        if any(s <= 0.0 for s in self.row_sums):
            raise ValueError("every state needs positive total conductance")

    @classmethod
    def from_edges(cls, n, edges, diagonal=(), theta=None):
        """Build from undirected (i, j, c) edges plus optional (i, c)
        self-conductances."""
        entries = {}
        for i, j, c in edges:
            entries[(i, j)] = c
        for i, c in diagonal:
            entries[(i, i)] = c
        return cls(n, entries, theta=theta)

    def neighbors(self, i):
        return sorted(self.rows[i])

    def is_connected(self):
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in self.rows[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == self.n

    def scaled(self, factor):
        entries = {(i, j): c * factor
                   for i, row in enumerate(self.rows) for j, c in row.items()}
        return ConductanceMatrix(self.n, entries)


def from_conductance(conductance):
    """Time-reversible transition matrix P_ij = C_ij / C_i."""
    if not conductance.is_connected():
        raise ValueError("conductance graph must be connected")
    rows = []
    for i in range(conductance.n):
        s = conductance.row_sums[i]
        rows.append({j: c / s for j, c in conductance.rows[i].items()})
    return SparseStochasticMatrix.from_rows(rows, meta={"generator": "conductance"})


# ---------------------------------------------------------------------------
# appended cycle tail


def append_cycle_tail(matrix, exit_node, entry_node, tail_length):
    """Attach a deterministic directed path of new states from
    ``exit_node`` back to ``entry_node``.

    The exit row's non-self mass is respread uniformly over its enlarged
    out-neighborhood (old neighbors plus the first tail state); any
    self-loop mass is preserved.  Tail rows are deterministic, so the
    expected return time of every tail state is at least the tail length.
    """
    n = matrix.n
    if not (0 <= exit_node < n and 0 <= entry_node < n):
        raise ValueError("exit or entry node out of range")
    if tail_length < 1:
        raise ValueError("tail length must be >= 1")
    m = int(tail_length)
    rows = [matrix.row_dict(i) for i in range(n)]
    tau = matrix.diagonal_entry(exit_node)
    nbrs = matrix.out_neighbors(exit_node) + [n]
    exit_row = {j: (1.0 - tau) / len(nbrs) for j in nbrs}
    if tau > 0.0:
        exit_row[exit_node] = tau
    rows[exit_node] = exit_row
    for k in range(m):
        target = n + k + 1 if k < m - 1 else entry_node
        rows.append({target: 1.0})
    return SparseStochasticMatrix.from_rows(
        rows, tolerance=matrix.tolerance,
        meta={"tail_first": n, "tail_length": m, "tail_entry": int(entry_node)})


def suggested_tail_length(matrix, exit_node):
    """Tail length (degree+1) * n / min_i q_i, where q_i is the
    probability product along a shortest (BFS) path from i to the exit.

    Long enough that every state's expected return time is at least n.
    """
    n = matrix.n
    if not 0 <= exit_node < n:
        raise ValueError("exit node out of range")
    # reverse BFS from the exit over directed edges, tracking the path
    # probability product along the (first found) shortest path
    preds = [[] for _ in range(n)]
    for i in range(n):
        idx, val = matrix.row(i)
        for j, p in zip(idx, val):
            if int(j) != i:
                preds[int(j)].append((i, float(p)))
    q = {exit_node: 1.0}
    queue = deque([exit_node])
    while queue:
        u = queue.popleft()
        for i, p in sorted(preds[u]):
            if i not in q:
                q[i] = p * q[u]
                queue.append(i)
    if len(q) != n:
        missing = sorted(set(range(n)) - set(q))
        raise ValueError(f"exit node unreachable from states {missing[:5]}")
    min_q = min(q.values())
    d_exit = matrix.out_degree(exit_node)
    return int(math.ceil((d_exit + 1) * n / min_q))


# ---------------------------------------------------------------------------
# graph families


_REGISTRY = {}


def _register(kind):
    def deco(cls):
        _REGISTRY[kind] = cls
        return cls
    return deco


class GraphFamily:
    """Parametrized generator of a nested sequence of consensus matrices.

    ``labels(n)`` returns the stable node labels in dense-index order and
    ``matrix(n)`` the transition matrix over them; labels at size n are a
    subset of labels at size n+1.
    """

    def __init__(self, kind, **params):
        if kind not in _REGISTRY:
            raise ValueError(f"unknown family kind {kind!r}; known: {sorted(_REGISTRY)}")
        self.kind = kind
        self._impl = _REGISTRY[kind](**params)
        self.params = dict(params)

    @property
    def min_size(self):
        return self._impl.min_size

    def labels(self, n):
        self._check_size(n)
        return self._impl.labels(n)

    def matrix(self, n):
        self._check_size(n)
        return self._impl.matrix(n)

    def label_index(self, n):
        return {lab: i for i, lab in enumerate(self.labels(n))}

    def _check_size(self, n):
        if n < self._impl.min_size:
            raise ValueError(f"family {self.kind!r} needs n >= {self._impl.min_size}")

    def to_dict(self):
        return {"format": "FAM", "version": 1, "kind": self.kind,
                "parameters": dict(self.params),
                "label_scheme": self._impl.label_scheme}

    @classmethod
    def from_dict(cls, obj):
        if obj.get("format") != "FAM" or obj.get("version") != 1:
            raise ValueError("not a FAM v1 document")
        return cls(obj["kind"], **obj.get("parameters", {}))

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"GraphFamily({self.kind!r}, {args})"


@_register("grid")
class _GridFamily:
    label_scheme = "lattice"
    min_size = 1

    def __init__(self, dim, tau=0.0):
        _check_dim_size(dim, 1)
        _check_tau(tau)
        self.dim = int(dim)
        self.tau = float(tau)

    def labels(self, n):
        return _lattice_labels(self.dim, n)

    def matrix(self, n):
        return lazy_srw_grid(self.dim, n, self.tau)


@_register("directed_torus")
class _DirectedTorusFamily:
    label_scheme = "lattice"
    min_size = 1

    def __init__(self, dim):
        _check_dim_size(dim, 1)
        self.dim = int(dim)

    def labels(self, n):
        return _lattice_labels(self.dim, n)

    def matrix(self, n):
        return directed_torus(self.dim, n)


@_register("lazy_torus")
class _LazyTorusFamily:
    label_scheme = "lattice"
    min_size = 1

    def __init__(self, dim, tau=0.0):
        _check_dim_size(dim, 1)
        _check_tau(tau)
        self.dim = int(dim)
        self.tau = float(tau)

    def labels(self, n):
        return _lattice_labels(self.dim, n)

    def matrix(self, n):
        return lazy_torus(self.dim, n, self.tau)


@_register("drift_line")
class _DriftLineFamily:
    label_scheme = "integer"
    min_size = 2

    def __init__(self, delta):
        _check_delta(delta)
        self.delta = float(delta)

    def labels(self, n):
        return list(range(1, n + 1))

    def matrix(self, n):
        return drift_line(n, self.delta)


@_register("drift_cycle")
class _DriftCycleFamily:
    label_scheme = "integer"
    min_size = 3

    def __init__(self, delta, perturb_zero=False):
        _check_delta(delta)
        self.delta = float(delta)
        self.perturb_zero = bool(perturb_zero)

    def labels(self, n):
        return drift_cycle_labels(n)

    def matrix(self, n):
        return drift_cycle(n, self.delta, self.perturb_zero)


@_register("conductance_line")
class _ConductanceLineFamily:
    """Growing path 1..n whose edge (k, k+1) takes conductance
    values[(k-1) mod len(values)]; a reversible chain with finite value set."""

    label_scheme = "integer"
    min_size = 2

    def __init__(self, values):
        values = tuple(float(v) for v in values)
        if not values or any(v <= 0 for v in values):
            raise ValueError("need a nonempty tuple of positive conductances")
        self.values = values

    def labels(self, n):
        return list(range(1, n + 1))

    def conductance(self, n):
        edges = [(k, k + 1, self.values[k % len(self.values)])
                 for k in range(n - 1)]
        return ConductanceMatrix.from_edges(n, edges, theta=self.values)

    def matrix(self, n):
        return from_conductance(self.conductance(n))


def family(kind, **params):
    return GraphFamily(kind, **params)


def read_fam(source):
    if hasattr(source, "read"):
        obj = json.load(source)
    else:
        with open(source) as fh:
            obj = json.load(fh)
    return GraphFamily.from_dict(obj)


def write_fam(fam, target):
    text = json.dumps(fam.to_dict(), indent=2) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# row stabilization


@dataclass
class StabilizationReport:
    """Smallest tested size from which a node's row stops changing."""

    node: object
    stabilization_index: int | None
    tested_range: tuple[int, int]

    @property
    def stabilized(self):
        return self.stabilization_index is not None


def check_stabilization(fam, node, n_range):
    """Find the smallest tested n_i from which the node's transition row
    (as a label -> probability map) is bit-identical for every tested
    n >= n_i.  A candidate appearing only at n_max counts as not
    stabilized: a single trailing point is no evidence of persistence.
    """
    n_min, n_max = n_range
    if n_min >= n_max:
        raise ValueError("need n_min < n_max to assess stabilization")
    if n_min < fam.min_size:
        raise ValueError(f"family {fam.kind!r} needs n >= {fam.min_size}")
    first_labels = fam.labels(n_min)
    if node not in first_labels:
        raise ValueError(f"node {node!r} absent from the smallest tested family member")
    rows = []
    for n in range(n_min, n_max + 1):
        labels = fam.labels(n)
        index = {lab: i for i, lab in enumerate(labels)}
        m = fam.matrix(n)
        idx, val = m.row(index[node])
        rows.append({labels[int(j)]: float(p) for j, p in zip(idx, val)})
    candidate = n_max
    for k in range(len(rows) - 2, -1, -1):
        if rows[k] == rows[k + 1]:
            candidate = n_min + k
        else:
            break
    stabilization_index = candidate if candidate < n_max else None
    return StabilizationReport(node=node, stabilization_index=stabilization_index,
                               tested_range=(n_min, n_max))
