"""Expected hitting and return times via sparse linear solves.

On a finite irreducible chain the stationary weight of a state is the
reciprocal of its expected return time, which links the consensus
weights to trajectory quantities; ``kac_check`` verifies that identity
with both sides computed by independent solves.  A gambler's-ruin closed
form serves as an external oracle for absorbing two-barrier walks.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .matrix import SparseStochasticMatrix, strongly_connected_components
from .stationary import ReducibleMatrixError, stationary_direct


class HittingDiagnosisError(ValueError):
    """Hitting time is infinite; carries the trap states responsible."""

    def __init__(self, start, targets, trapped):
        self.start = start
        self.targets = sorted(targets)
        self.trapped = sorted(trapped)
        super().__init__(
            f"expected hitting time from {start} to {self.targets} is infinite: "
            f"the walk can reach states {self.trapped[:8]} that never hit the target set")


@dataclass
class HittingQuery:
    """A target state set plus a start state (or 'all' starts)."""

    target_set: frozenset
    start: object = "all"

    def __post_init__(self):
        if not self.target_set:
            raise ValueError("target set must be nonempty")


def _can_reach(matrix, targets):
    """States from which the target set is reachable (targets included)."""
    preds = [[] for _ in range(matrix.n)]
    for i in range(matrix.n):
        for j in matrix.row(i)[0]:
            preds[int(j)].append(i)
    seen = set(targets)
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for v in preds[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def hitting_times(matrix, targets):
    """Expected steps to first reach the target set, from every state.

    Solves h = 0 on the targets and h_i = 1 + sum_j P_ij h_j elsewhere.
    Every non-target state must be able to reach the targets (always true
    on irreducible chains, and on absorbing chains whose only closed
    classes are the targets); otherwise the expectation is infinite and a
    diagnosis error is raised.
    """
    targets = {int(t) for t in targets}
    if not targets:
        raise ValueError("target set must be nonempty")
    if any(not 0 <= t < matrix.n for t in targets):
        raise ValueError("target state out of range")
    reach = _can_reach(matrix, targets)
    trapped = set(range(matrix.n)) - reach
    if trapped:
        raise HittingDiagnosisError("all", targets, trapped)
    comp = np.array(sorted(set(range(matrix.n)) - targets), dtype=np.int64)
    h = np.zeros(matrix.n)
    if len(comp):
        csr = matrix.to_scipy()
        sub = csr[comp][:, comp]
        a = (sp.eye(len(comp), format="csr") - sub).tocsc()
        h[comp] = spla.splu(a).solve(np.ones(len(comp)))
    return h


def expected_hitting(matrix, targets, start):
    """Expected steps from ``start`` until the walk first enters ``targets``.

    Zero when the start is already inside.  If the walk can reach (while
    avoiding the targets) a state from which the targets are unreachable,
    the expectation is infinite and a diagnosis error is raised.
    """
    targets = {int(t) for t in targets} if not isinstance(targets, int) else {targets}
    start = int(start)
    if not 0 <= start < matrix.n:
        raise ValueError("start state out of range")
    if start in targets:
        return 0.0
    if any(not 0 <= t < matrix.n for t in targets):
        raise ValueError("target state out of range")
    # forward reachability from the start, stopping at targets
    forward = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for j in matrix.row(u)[0]:
            j = int(j)
            if j not in forward and j not in targets:
                forward.add(j)
                queue.append(j)
    reach = _can_reach(matrix, targets)
    trapped = forward - reach
    if trapped:
        raise HittingDiagnosisError(start, targets, trapped)
    comp = np.array(sorted(forward), dtype=np.int64)
    csr = matrix.to_scipy()
    sub = csr[comp][:, comp]
    a = (sp.eye(len(comp), format="csr") - sub).tocsc()
    h = spla.splu(a).solve(np.ones(len(comp)))
    return float(h[np.searchsorted(comp, start)])


def expected_return(matrix, state):
    """Expected first return time to ``state`` on an irreducible chain.

    One hitting-time solve with target {state}: the return time is
    1 + sum_j P_state,j * h_j.
    """
    comps = strongly_connected_components(matrix)
    if len(comps) != 1:
        raise ReducibleMatrixError(comps)
    state = int(state)
    h = hitting_times(matrix, {state})
    idx, val = matrix.row(state)
    return 1.0 + float(np.dot(val, h[idx]))


@dataclass
class KacReport:
    """Per-node deviations |pi_i * E_i(return) - 1| and the overall verdict."""

    deviations: dict = field(default_factory=dict)
    tol: float = 1e-8

    @property
    def passed(self):
        return all(d <= self.tol for d in self.deviations.values())

    @property
    def worst(self):
        return max(self.deviations.values()) if self.deviations else 0.0


def kac_check(matrix, nodes="all", tol=1e-8, pi=None):
    """Verify pi_i = 1/E_i(return) per node, by independent solves.

    Each node costs one hitting-time solve (the stationary side is one
    shared direct solve).  ``pi`` may be supplied to reuse that solve
    when checking node subsets of the same matrix in parallel.
    """
    comps = strongly_connected_components(matrix)
    if len(comps) != 1:
        raise ReducibleMatrixError(comps)
    if nodes == "all":
        nodes = range(matrix.n)
    nodes = [int(i) for i in nodes]
    if pi is None:
        pi = stationary_direct(matrix)
    n = matrix.n
    csr = matrix.to_scipy()
    eye = sp.eye(n - 1, format="csr")
    deviations = {}
    for i in nodes:
        comp = np.concatenate([np.arange(i), np.arange(i + 1, n)])
        sub = csr[comp][:, comp]
        h_comp = spla.splu((eye - sub).tocsc()).solve(np.ones(n - 1))
        h = np.zeros(n)
        h[comp] = h_comp
        idx, val = matrix.row(i)
        e_ret = 1.0 + float(np.dot(val, h[idx]))
        deviations[i] = abs(pi[i] * e_ret - 1.0)
    return KacReport(deviations=deviations, tol=tol)


def max_hitting_from(matrix, sources, target):
    """max over the given source states of the expected hitting time of
    ``target``; diagnostic for probing growth over a finite probe set."""
    h = hitting_times(matrix, {int(target)})
    return max(float(h[int(i)]) for i in sources)


# ---------------------------------------------------------------------------
# gambler's ruin oracle


def gamblers_ruin_expected(barrier, p, start):
    """Expected absorption time of the two-barrier biased walk.

    Walk on 0..barrier, absorbing at both ends, right probability p,
    started at ``start``.  Closed forms: k(N-k) in the symmetric case,
    else k/(q-p) - (N/(q-p)) * (1-(q/p)^k) / (1-(q/p)^N) with q = 1-p.
    The symmetric branch engages within 1e-12 of p = 1/2 to dodge the
    0/0 singularity.
    """
    n, k = int(barrier), int(start)
    if not 0 < k < n:
        raise ValueError("start must lie strictly between the barriers")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if abs(p - 0.5) < 1e-12:
        return float(k * (n - k))
    q = 1.0 - p
    ratio = q / p
    return k / (q - p) - (n / (q - p)) * (1.0 - ratio ** k) / (1.0 - ratio ** n)


def ruin_chain(barrier, p):
    """The explicit absorbing two-barrier chain on states 0..barrier."""
    n = int(barrier)
    if n < 2:
        raise ValueError("need barrier >= 2")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    rows = [{0: 1.0}]
    for k in range(1, n):
        rows.append({k - 1: 1.0 - p, k + 1: p})
    rows.append({n: 1.0})
    return SparseStochasticMatrix.from_rows(rows, meta={"generator": "ruin_chain", "p": p})
