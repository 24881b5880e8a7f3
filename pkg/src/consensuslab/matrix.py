"""Sparse row-stochastic matrices and structural checks.

The central type is :class:`SparseStochasticMatrix`, a CSR-layout sparse
matrix whose rows are validated (not silently renormalized) at
construction.  Module-level operations cover stochasticity reporting,
irreducibility and aperiodicity, entrywise blending, and local
neighborhood (ball) extraction, plus the SMAT v1 text format.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOLERANCE = 1e-12


class SmatFormatError(ValueError):
    """Raised when an SMAT v1 file is malformed or fails validation."""


@dataclass
class ValidationReport:
    """Outcome of a stochasticity check on a raw matrix."""

    ok: bool
    worst_row_sum_error: float
    negative_entries: list[tuple[int, int]] = field(default_factory=list)


class SparseStochasticMatrix:
    """Immutable sparse matrix with unit row sums, stored row-major.

    Rows hold (target index, probability) pairs with strictly increasing
    targets; exact zeros are never stored.  Row sums must be 1 within
    ``tolerance`` unless ``allow_deficient_rows`` is set (used for ball
    extracts, whose boundary rows legitimately sum to less than 1).
    """

    __slots__ = ("n", "indptr", "indices", "data", "tolerance", "meta", "_csr")

    def __init__(self, n, indptr, indices, data, tolerance=DEFAULT_TOLERANCE,
                 meta=None, allow_deficient_rows=False):
        n = int(n)
        if n < 1:
            raise ValueError("matrix dimension must be >= 1")
        indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        indices = np.ascontiguousarray(indices, dtype=np.int64)
        data = np.ascontiguousarray(data, dtype=np.float64)
        if indptr.shape != (n + 1,) or indptr[0] != 0 or indptr[-1] != len(indices):
            raise ValueError("malformed row pointer array")
        if len(indices) != len(data):
            raise ValueError("indices and data length mismatch")
        if np.any(np.diff(indptr) < 0):
            raise ValueError("row pointers must be non-decreasing")
        if len(indices) and (indices.min() < 0 or indices.max() >= n):
            raise ValueError("column index out of range")
        if np.any(data <= 0.0):
            raise ValueError("stored probabilities must be positive (omit zeros)")
        if np.any(data > 1.0 + tolerance):
            raise ValueError("stored probabilities must not exceed 1")
        for i in range(n):
            lo, hi = indptr[i], indptr[i + 1]
            if hi > lo and np.any(np.diff(indices[lo:hi]) <= 0):
                raise ValueError(f"row {i}: targets must be strictly increasing")
            s = math.fsum(data[lo:hi])
            if allow_deficient_rows:
                if s > 1.0 + tolerance:
                    raise ValueError(f"row {i}: sum {s} exceeds 1")
            elif abs(s - 1.0) > tolerance:
                raise ValueError(f"row {i}: sum {s} deviates from 1 beyond {tolerance}")
        for arr in (indptr, indices, data):
            arr.setflags(write=False)
        self.n = n
        self.indptr = indptr
        self.indices = indices
        self.data = data
        self.tolerance = float(tolerance)
        self.meta = dict(meta) if meta else {}
        self._csr = None

    # -- constructors -------------------------------------------------

    @classmethod
    def from_rows(cls, rows, tolerance=DEFAULT_TOLERANCE, meta=None,
                  allow_deficient_rows=False):
        """Build from an iterable of rows, each a mapping or iterable of
        (target, probability) pairs.  Zero entries are dropped, rows sorted."""
        indptr = [0]
        indices = []
        data = []
        for row in rows:
            items = row.items() if hasattr(row, "items") else row
            entries = sorted((int(j), float(p)) for j, p in items if p != 0.0)
            seen = [j for j, _ in entries]
            if len(set(seen)) != len(seen):
                raise ValueError("duplicate target in row")
            for j, p in entries:
                indices.append(j)
                data.append(p)
            indptr.append(len(indices))
        return cls(len(indptr) - 1, indptr, indices, data, tolerance=tolerance,
                   meta=meta, allow_deficient_rows=allow_deficient_rows)

    @classmethod
    def from_dense(cls, array, tolerance=DEFAULT_TOLERANCE, meta=None):
        a = np.asarray(array, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("dense input must be square")
        rows = [[(j, a[i, j]) for j in range(a.shape[1]) if a[i, j] != 0.0]
                for i in range(a.shape[0])]
        return cls.from_rows(rows, tolerance=tolerance, meta=meta)

    @classmethod
    def from_scipy(cls, m, tolerance=DEFAULT_TOLERANCE, meta=None):
        csr = m.tocsr().sorted_indices()
        csr.eliminate_zeros()
        return cls(csr.shape[0], csr.indptr, csr.indices, csr.data,
                   tolerance=tolerance, meta=meta)

    # -- accessors ----------------------------------------------------

    @property
    def dimension(self):
        return self.n

    @property
    def nnz(self):
        return len(self.data)

    def row(self, i):
        """(targets, probabilities) views for row i."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def row_dict(self, i):
        idx, val = self.row(i)
        return {int(j): float(p) for j, p in zip(idx, val)}

    def diagonal_entry(self, i):
        idx, val = self.row(i)
        k = np.searchsorted(idx, i)
        if k < len(idx) and idx[k] == i:
            return float(val[k])
        return 0.0

    def out_neighbors(self, i):
        """Targets of row i excluding i itself."""
        idx, _ = self.row(i)
        return [int(j) for j in idx if j != i]

    def out_degree(self, i):
        idx, _ = self.row(i)
        return int(len(idx) - (i in idx))

    def row_sum_error(self):
        return max(abs(math.fsum(self.row(i)[1]) - 1.0) for i in range(self.n))

    def to_scipy(self):
        import scipy.sparse as sp

        if self._csr is None:
            csr = sp.csr_matrix(
                (self.data.copy(), self.indices.copy(), self.indptr.copy()),
                shape=(self.n, self.n))
            csr.has_sorted_indices = True
            self._csr = csr
        return self._csr

    def to_dense(self):
        return self.to_scipy().toarray()

    def with_rows(self, new_rows, meta=None, tolerance=None):
        """Copy of the matrix with selected rows replaced.

        ``new_rows`` maps row index -> {target: probability}.  Untouched
        rows are spliced from the original storage arrays, so they stay
        bit-identical.
        """
        tol = self.tolerance if tolerance is None else tolerance
        indptr = [0]
        indices = []
        data = []
        for i in range(self.n):
            if i in new_rows:
                entries = sorted((int(j), float(p))
                                 for j, p in new_rows[i].items() if p != 0.0)
                for j, p in entries:
                    indices.append(j)
                    data.append(p)
            else:
                idx, val = self.row(i)
                indices.extend(idx.tolist())
                data.extend(val.tolist())
            indptr.append(len(indices))
        return SparseStochasticMatrix(self.n, indptr, indices, data,
                                      tolerance=tol, meta=meta)

    def rows_equal(self, other, row_indices=None):
        """Bit-exact row comparison against another matrix."""
        if self.n != other.n:
            return False
        rng = range(self.n) if row_indices is None else row_indices
        for i in rng:
            ai, av = self.row(i)
            bi, bv = other.row(i)
            if not (np.array_equal(ai, bi) and np.array_equal(av, bv)):
                return False
        return True

    def __eq__(self, other):
        if not isinstance(other, SparseStochasticMatrix):
            return NotImplemented
        return (self.n == other.n
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.n, self.data.tobytes(), self.indices.tobytes()))

    def __repr__(self):
        return f"SparseStochasticMatrix(n={self.n}, nnz={self.nnz})"


class ProbabilityVector:
    """Nonnegative vector summing to 1 within tolerance (consensus weights)."""

    __slots__ = ("values",)

    def __init__(self, values, tolerance=DEFAULT_TOLERANCE):
        v = np.ascontiguousarray(values, dtype=np.float64)
        if v.ndim != 1 or len(v) < 1:
            raise ValueError("probability vector must be one-dimensional and nonempty")
        if np.any(v < 0.0):
            raise ValueError("probability vector entries must be >= 0")
        total = math.fsum(v)
        if abs(total - 1.0) > tolerance:
            raise ValueError(f"probability vector sums to {total}, not 1")
        v.setflags(write=False)
        self.values = v

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return float(self.values[i])

    def __iter__(self):
        return iter(self.values)

    def max_weight(self):
        return float(self.values.max())

    def argmax(self):
        """Index of the maximum weight; ties resolve to the smallest index."""
        return int(self.values.argmax())

    def min_weight(self):
        return float(self.values.min())

    def to_list(self):
        return [float(x) for x in self.values]

    def __repr__(self):
        return f"ProbabilityVector(n={len(self.values)}, max={self.max_weight():.6g})"


@dataclass
class BallExtract:
    """Restriction of a matrix to a graph ball around a center state.

    ``submatrix`` keeps only entries with both endpoints inside the ball
    and is *not* renormalized: rows losing mass across the boundary are
    listed (by local index) in ``deficient_rows``.  ``vertex_map[k]`` is
    the original index of local state k; the center is local state 0.
    """

    submatrix: SparseStochasticMatrix
    vertex_map: list[int]
    center: int
    radius: int
    deficient_rows: list[int] = field(default_factory=list)


# ---------------------------------------------------------------------------
# structural checks


def check_stochastic(matrix, tolerance=DEFAULT_TOLERANCE):
    """Report row-sum deviations and negative entries of a raw matrix.

    Accepts a SparseStochasticMatrix, a dense 2-D array, or a list of
    rows given as (target, value) pairs.  Never raises on bad values:
    this is the reporting operation used to validate inputs.
    """
    negatives = []
    worst = 0.0
    if isinstance(matrix, SparseStochasticMatrix):
        for i in range(matrix.n):
            idx, val = matrix.row(i)
            worst = max(worst, abs(math.fsum(val) - 1.0))
            negatives.extend((i, int(j)) for j, p in zip(idx, val) if p < 0)
    else:
        rows = _raw_rows(matrix)
        for i, row in enumerate(rows):
            worst = max(worst, abs(math.fsum(p for _, p in row) - 1.0))
            negatives.extend((i, j) for j, p in row if p < 0)
    ok = worst <= tolerance and not negatives
    return ValidationReport(ok=ok, worst_row_sum_error=worst,
                            negative_entries=negatives)


def _raw_rows(matrix):
    """Normalize raw input into a list of rows of (target, value) pairs."""
    if isinstance(matrix, np.ndarray):
        if matrix.ndim != 2:
            raise ValueError("dense input must be two-dimensional")
        return [[(j, float(matrix[i, j])) for j in range(matrix.shape[1])
                 if matrix[i, j] != 0.0] for i in range(matrix.shape[0])]
    rows = list(matrix)
    if rows and rows[0] and not isinstance(rows[0][0], (tuple, list)):
        return _raw_rows(np.asarray(rows, dtype=np.float64))
    return [[(int(j), float(p)) for j, p in row] for row in rows]


def strongly_connected_components(matrix):
    """Tarjan's algorithm (iterative) over the support graph.

    Returns components as lists of states, in reverse topological order.
    """
    n = matrix.n
    indptr, indices = matrix.indptr, matrix.indices
    index = [-1] * n
    lowlink = [0] * n
    on_stack = [False] * n
    stack = []
    components = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, ei = work.pop()
            if ei == 0:
                index[v] = lowlink[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            recurse = False
            row = indices[indptr[v]:indptr[v + 1]]
            for k in range(ei, len(row)):
                w = int(row[k])
                if index[w] == -1:
                    work.append((v, k + 1))
                    work.append((w, 0))
                    recurse = True
                    break
                if on_stack[w]:
                    lowlink[v] = min(lowlink[v], index[w])
            if recurse:
                continue
            if lowlink[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                components.append(comp)
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
    return components


def is_irreducible(matrix):
    """True iff the support graph is strongly connected."""
    return len(strongly_connected_components(matrix)) == 1


def is_aperiodic(matrix):
    """True iff every component with a cycle has cycle-length gcd 1.

    Computed per strongly connected component from BFS levels: each
    intra-component edge (u, v) contributes level(u) + 1 - level(v) to
    the gcd.  Components without any cycle impose no constraint.
    """
    comps = strongly_connected_components(matrix)
    for comp in comps:
        comp_set = set(comp)
        level = {comp[0]: 0}
        queue = deque([comp[0]])
        order = []
        while queue:
            u = queue.popleft()
            order.append(u)
            for j in matrix.row(u)[0]:
                j = int(j)
                if j in comp_set and j not in level:
                    level[j] = level[u] + 1
                    queue.append(j)
        g = 0
        for u in order:
            for j in matrix.row(u)[0]:
                j = int(j)
                if j in comp_set:
                    g = math.gcd(g, level[u] + 1 - level[j])
        if g not in (0, 1):
            return False
    return True


def blend(p, p_tilde, weight):
    """Entrywise convex combination weight*P + (1-weight)*P_tilde.

    The result inherits the stricter of the two input tolerances.
    """
    if not isinstance(p, SparseStochasticMatrix) or not isinstance(p_tilde, SparseStochasticMatrix):
        raise TypeError("blend expects SparseStochasticMatrix operands")
    if p.n != p_tilde.n:
        raise ValueError(f"dimension mismatch: {p.n} vs {p_tilde.n}")
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must lie in [0, 1]")
    w = float(weight)
    cw = 1.0 - w
    rows = []
    for i in range(p.n):
        a = p.row_dict(i)
        b = p_tilde.row_dict(i)
        merged = {}
        for j in set(a) | set(b):
            v = w * a.get(j, 0.0) + cw * b.get(j, 0.0)
            if v != 0.0:
                merged[j] = v
        rows.append(merged)
    return SparseStochasticMatrix.from_rows(
        rows, tolerance=min(p.tolerance, p_tilde.tolerance))


def symmetrized_adjacency(matrix):
    """Undirected neighbor lists: an edge in either direction counts."""
    adj = [set() for _ in range(matrix.n)]
    for i in range(matrix.n):
        for j in matrix.row(i)[0]:
            j = int(j)
            if j != i:
                adj[i].add(j)
                adj[j].add(i)
    return [sorted(s) for s in adj]


def extract_ball(matrix, center, radius):
    """BFS ball of the given radius around ``center``.

    Distance is over the symmetrized edge relation (an edge in either
    direction contributes distance 1).  The restricted rows keep only
    in-ball targets and are not renormalized.
    """
    if not 0 <= center < matrix.n:
        raise ValueError("center out of range")
    if radius < 0:
        raise ValueError("radius must be >= 0")
    adj = symmetrized_adjacency(matrix)
    dist = {center: 0}
    order = [center]
    queue = deque([center])
    while queue:
        u = queue.popleft()
        if dist[u] == radius:
            continue
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                order.append(v)
                queue.append(v)
    local = {orig: k for k, orig in enumerate(order)}
    rows = []
    deficient = []
    for k, orig in enumerate(order):
        idx, val = matrix.row(orig)
        kept = {local[int(j)]: float(p) for j, p in zip(idx, val) if int(j) in local}
        rows.append(kept)
        if math.fsum(kept.values()) < 1.0 - matrix.tolerance:
            deficient.append(k)
    sub = SparseStochasticMatrix.from_rows(
        rows, tolerance=matrix.tolerance,
        meta={"distance": "symmetrized", "center": int(center), "radius": int(radius)},
        allow_deficient_rows=True)
    return BallExtract(submatrix=sub, vertex_map=[int(o) for o in order],
                       center=int(center), radius=int(radius),
                       deficient_rows=deficient)


# ---------------------------------------------------------------------------
# SMAT v1 text format


def write_smat(matrix, target):
    """Write the SMAT v1 text form: header, (row col prob) triples, END."""
    lines = [f"SMAT 1 {matrix.n}"]
    for i in range(matrix.n):
        idx, val = matrix.row(i)
        for j, p in zip(idx, val):
            lines.append(f"{i} {int(j)} {float(p)!r}")
    lines.append("END")
    text = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w") as fh:
            fh.write(text)


def read_smat(source, tolerance=1e-9):
    """Parse an SMAT v1 file; reject malformed or non-stochastic content."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source) as fh:
            text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise SmatFormatError("empty SMAT file")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "SMAT" or header[1] != "1":
        raise SmatFormatError(f"bad SMAT header: {lines[0]!r}")
    try:
        n = int(header[2])
    except ValueError:
        raise SmatFormatError(f"bad dimension in header: {header[2]!r}") from None
    if n < 1:
        raise SmatFormatError("dimension must be >= 1")
    if not lines[-1].strip() == "END":
        raise SmatFormatError("missing END line")
    rows = [[] for _ in range(n)]
    prev = (-1, -1)
    for lineno, line in enumerate(lines[1:-1], start=2):
        parts = line.split()
        if len(parts) != 3:
            raise SmatFormatError(f"line {lineno}: expected 'row col prob'")
        try:
            r, c, p = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise SmatFormatError(f"line {lineno}: unparsable triple") from None
        if not (0 <= r < n and 0 <= c < n):
            raise SmatFormatError(f"line {lineno}: index out of range")
        if (r, c) <= prev:
            raise SmatFormatError(f"line {lineno}: triples not in ascending (row, col) order")
        prev = (r, c)
        rows[r].append((c, p))
    report = check_stochastic(rows, tolerance=tolerance)
    if not report.ok:
        raise SmatFormatError(
            f"matrix fails stochasticity at {tolerance}: worst row-sum error "
            f"{report.worst_row_sum_error}, negatives {report.negative_entries[:5]}")
    try:
        return SparseStochasticMatrix.from_rows(rows, tolerance=tolerance)
    except ValueError as exc:
        raise SmatFormatError(str(exc)) from None
