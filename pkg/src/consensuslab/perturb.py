"""Local perturbations confined to a finite community of nodes.

Three kinds: direct row replacement, homophily reweighting of a lazy
simple random walk, and one-directional edge cuts.  Every kind leaves
rows outside the community bit-identical, and reports (never enforces)
connectivity of the result, since reducible perturbed limits are a
legitimate object of study.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .matrix import SparseStochasticMatrix, is_irreducible
from .families import label_from_json, label_to_json

KINDS = ("replace_rows", "homophily", "cut_edges")


def srw_profile(matrix):
    """Return (tau, degrees) when the matrix is a lazy simple random walk.

    Requires one shared self-confidence value on every diagonal (possibly
    zero, i.e. no self-loops at all) and, per row, identical off-diagonal
    weights equal to (1 - tau)/degree.  Raises ValueError otherwise.
    """
    tau = matrix.diagonal_entry(0)
    degrees = np.zeros(matrix.n, dtype=np.int64)
    for i in range(matrix.n):
        idx, val = matrix.row(i)
        off = [(int(j), float(p)) for j, p in zip(idx, val) if int(j) != i]
        if matrix.diagonal_entry(i) != tau:
            raise ValueError("not a lazy SRW: inconsistent self-loop weights")
        if not off:
            raise ValueError(f"not a lazy SRW: state {i} has no neighbors")
        d = len(off)
        expected = (1.0 - tau) / d
        if any(p != expected for _, p in off):
            raise ValueError(f"not a lazy SRW: row {i} is not uniform over neighbors")
        degrees[i] = d
    return tau, degrees


def replace_rows(matrix, rows_by_state):
    """Replace whole transition rows at the given states.

    Replacement rows must be valid stochastic rows over in-range targets.
    The result records irreducibility in ``meta['irreducible']`` instead
    of enforcing it.
    """
    checked = {}
    for i, row in rows_by_state.items():
        i = int(i)
        if not 0 <= i < matrix.n:
            raise ValueError(f"replacement row index {i} out of range")
        entries = {int(j): float(p) for j, p in row.items() if p != 0.0}
        if any(not 0 <= j < matrix.n for j in entries):
            raise ValueError(f"replacement row {i}: target out of range")
        if any(p < 0 for p in entries.values()):
            raise ValueError(f"replacement row {i}: negative probability")
        s = math.fsum(sorted(entries.values()))
        if abs(s - 1.0) > matrix.tolerance:
            raise ValueError(f"replacement row {i} sums to {s}, not 1")
        checked[i] = entries
    out = matrix.with_rows(checked, meta=dict(matrix.meta))
    out.meta["perturbation"] = "replace_rows"
    out.meta["community"] = sorted(checked)
    out.meta["irreducible"] = is_irreducible(out)
    return out


def homophily(matrix, community, lam):
    """Reweight a community's rows so in-community neighbors receive
    ``lam`` times the weight of out-community neighbors.

    For i in the community with degree d_i, of which d_iW neighbors lie
    inside the community (i itself never counts), each in-community
    neighbor gets lam*(1-tau) / (d_i + (lam-1)*d_iW), each outside
    neighbor (1-tau) / (d_i + (lam-1)*d_iW), and the self-loop stays tau.
    Requires a lazy-SRW input; lam = 1 returns the input unchanged.
    The formula stays well-defined for community nodes with no
    out-of-community neighbors and is applied verbatim in that case.
    """
    if lam < 1.0:
        raise ValueError("homophily factor must be >= 1")
    community = {int(i) for i in community}
    if not community:
        raise ValueError("community must be nonempty")
    if any(not 0 <= i < matrix.n for i in community):
        raise ValueError("community index out of range")
    tau, _ = srw_profile(matrix)
    if lam == 1.0:
        return matrix
    new_rows = {}
    for i in sorted(community):
        nbrs = matrix.out_neighbors(i)
        d_i = len(nbrs)
        d_iw = sum(1 for j in nbrs if j in community)
        denom = d_i + (lam - 1.0) * d_iw
        row = {j: (lam * (1.0 - tau) / denom if j in community
                   else (1.0 - tau) / denom)
               for j in nbrs}
        if tau > 0.0:
            row[i] = tau
        new_rows[i] = row
    out = matrix.with_rows(new_rows, meta=dict(matrix.meta))
    out.meta["perturbation"] = "homophily"
    out.meta["community"] = sorted(community)
    out.meta["homophily_factor"] = float(lam)
    out.meta["irreducible"] = is_irreducible(out)
    return out


def cut_directed_edges(matrix, edges):
    """Remove directed edges of a lazy SRW and rebuild the affected rows
    as lazy SRWs over the reduced out-neighborhoods.

    Every source node forms the implied community.  Removing a row's
    last out-edge is an error; loss of strong connectivity is reported
    in ``meta['strongly_connected']``, not enforced.
    """
    tau, _ = srw_profile(matrix)
    cuts = {}
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise ValueError("self-loops are not cuttable edges")
        if j not in matrix.out_neighbors(i):
            raise ValueError(f"({i}, {j}) is not an existing edge")
        cuts.setdefault(i, set()).add(j)
    new_rows = {}
    for i, removed in cuts.items():
        remaining = [j for j in matrix.out_neighbors(i) if j not in removed]
        if not remaining:
            raise ValueError(f"cutting all out-edges of state {i}")
        row = {j: (1.0 - tau) / len(remaining) for j in remaining}
        if tau > 0.0:
            row[i] = tau
        new_rows[i] = row
    out = matrix.with_rows(new_rows, meta=dict(matrix.meta)) if new_rows else matrix
    if new_rows:
        out.meta["perturbation"] = "cut_edges"
        out.meta["community"] = sorted(cuts)
        out.meta["strongly_connected"] = is_irreducible(out)
    return out


# ---------------------------------------------------------------------------
# label-space specification


@dataclass
class PerturbationSpec:
    """A community of node labels plus the row rewrite applied there.

    Payload by kind: ``replace_rows`` carries ``rows`` (label -> {target
    label: probability}); ``homophily`` carries ``lam``; ``cut_edges``
    carries ``edges`` (directed label pairs, community = sources).
    """

    kind: str
    community: list = field(default_factory=list)
    rows: dict = field(default_factory=dict)
    lam: float = 1.0
    edges: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "homophily" and self.lam < 1.0:
            raise ValueError("homophily factor must be >= 1")
        if self.kind == "cut_edges":
            self.community = sorted({i for i, _ in self.edges})
        if self.kind == "replace_rows":
            self.community = sorted(self.rows)

    @classmethod
    def replacement(cls, rows):
        return cls(kind="replace_rows", rows=dict(rows))

    @classmethod
    def homophily(cls, community, lam):
        return cls(kind="homophily", community=sorted(community), lam=float(lam))

    @classmethod
    def cut(cls, edges):
        return cls(kind="cut_edges", edges=[tuple(e) for e in edges])

    def to_dict(self):
        doc = {"format": "PERT", "version": 1, "kind": self.kind,
               "community": [label_to_json(l) for l in self.community]}
        if self.kind == "replace_rows":
            doc["payload"] = {"rows": [
                [label_to_json(lab),
                 [[label_to_json(t), p] for t, p in sorted(row.items(), key=str)]]
                for lab, row in sorted(self.rows.items(), key=str)]}
        elif self.kind == "homophily":
            doc["payload"] = {"lambda": self.lam}
        else:
            doc["payload"] = {"edges": [[label_to_json(a), label_to_json(b)]
                                        for a, b in self.edges]}
        return doc

    @classmethod
    def from_dict(cls, obj):
        if obj.get("format") != "PERT" or obj.get("version") != 1:
            raise ValueError("not a PERT v1 document")
        kind = obj["kind"]
        payload = obj.get("payload", {})
        if kind == "replace_rows":
            rows = {label_from_json(lab): {label_from_json(t): float(p)
                                           for t, p in row}
                    for lab, row in payload["rows"]}
            return cls.replacement(rows)
        if kind == "homophily":
            community = [label_from_json(l) for l in obj.get("community", [])]
            return cls.homophily(community, payload["lambda"])
        if kind == "cut_edges":
            edges = [(label_from_json(a), label_from_json(b))
                     for a, b in payload["edges"]]
            return cls.cut(edges)
        raise ValueError(f"unknown perturbation kind {kind!r}")


def apply_perturbation(spec, matrix, label_index=None):
    """Apply a spec to a matrix, translating node labels to state indices.

    ``label_index`` maps labels to dense indices; omitted, labels are
    taken to be the state indices themselves.
    """
    def resolve(label):
        if label_index is None:
            if not isinstance(label, int):
                raise ValueError(f"label {label!r} needs a label index map")
            return label
        try:
            return label_index[label]
        except KeyError:
            raise ValueError(f"label {label!r} not present in the matrix") from None

    if spec.kind == "replace_rows":
        rows = {resolve(lab): {resolve(t): p for t, p in row.items()}
                for lab, row in spec.rows.items()}
        return replace_rows(matrix, rows)
    if spec.kind == "homophily":
        return homophily(matrix, [resolve(l) for l in spec.community], spec.lam)
    if spec.kind == "cut_edges":
        return cut_directed_edges(matrix, [(resolve(a), resolve(b))
                                           for a, b in spec.edges])
    raise ValueError(f"unknown perturbation kind {spec.kind!r}")


def read_pert(source):
    if hasattr(source, "read"):
        obj = json.load(source)
    else:
        with open(source) as fh:
            obj = json.load(fh)
    return PerturbationSpec.from_dict(obj)


def write_pert(spec, target):
    text = json.dumps(spec.to_dict(), indent=2) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w") as fh:
            fh.write(text)
