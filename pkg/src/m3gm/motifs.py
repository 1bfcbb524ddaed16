"""Combinatory graph motif features: registry, census, and exact edge deltas.

A feature is a small-subgraph template instantiated with a tuple of relation
labels. The 17-template basis expands combinatorially over the relation
inventory (singletons, pairs, triples), canonicalized per template symmetry:

  edge_count    (r,)          non-self-loop edges labeled r
  cycle2        {r1, r2}      antiparallel edge pairs, labels unordered
  cycle3        (r1, r2, r3)  directed triangles, canonical under rotation
  path2         (r1, r2)      u -> v -> w paths over distinct nodes, ordered
  transitivity  (r1, r2, r3)  fraction of (r1, r2)-paths closed by an r3 edge
  out_exactly / in_exactly / out_at_least / in_at_least
                multiset of 1..3 relations: per-node degree-profile buckets

A degree bucket constrains only the relations in its multiset: a node with
out-degrees {hypernym: 2} matches out_exactly[hypernym, hypernym] but not
out_exactly[hypernym]. Self-loops are storable in the graph but join no motif
instance of any template. Every entry is an integer count except
transitivity, which materializes as numerator over the matching path2 count
(0 when no paths exist); the numerator is kept as an exact integer internally.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionError, DuplicateEdgeError, EdgeNotFoundError, GraphError
from .graph import Edge, MultiRelGraph

# dense n*n adjacency censuses are faster up to a few hundred nodes; above
# that the per-relation matrices stop fitting comfortably in memory
_DENSE_NODE_LIMIT = 600


class TemplateKind(IntEnum):
    EDGE_COUNT = 0
    CYCLE2 = 1
    CYCLE3 = 2
    PATH2 = 3
    TRANSITIVITY = 4
    OUT_EXACTLY = 5
    IN_EXACTLY = 6
    OUT_AT_LEAST = 7
    IN_AT_LEAST = 8


KIND_LABELS = {
    TemplateKind.EDGE_COUNT: "edge_count",
    TemplateKind.CYCLE2: "cycle2",
    TemplateKind.CYCLE3: "cycle3",
    TemplateKind.PATH2: "path2",
    TemplateKind.TRANSITIVITY: "transitivity",
    TemplateKind.OUT_EXACTLY: "out_exactly",
    TemplateKind.IN_EXACTLY: "in_exactly",
    TemplateKind.OUT_AT_LEAST: "out_at_least",
    TemplateKind.IN_AT_LEAST: "in_at_least",
}

LABEL_KINDS = {label: kind for kind, label in KIND_LABELS.items()}


def canonical_cycle3(rels: Sequence[int]) -> tuple[int, int, int]:
    """Smallest rotation of a label triple; direction around the cycle is kept."""
    a, b, c = rels
    return min((a, b, c), (b, c, a), (c, a, b))


class FeatureRegistry:
    """Enumerated combinatory feature space over a fixed relation inventory.

    Feature order is deterministic: template kinds in declaration order, then
    canonical relation tuples in lexicographic order. Transitivity features
    carry a pointer to the path2 feature that serves as their denominator.
    """

    def __init__(self, n_relations: int):
        if n_relations < 1:
            raise GraphError("registry needs at least one relation")
        self.n_relations = n_relations
        R = n_relations
        ec = TemplateKind.EDGE_COUNT
        feats: list[tuple[TemplateKind, tuple[int, ...]]] = []
        feats += [(ec, (r,)) for r in range(R)]
        feats += [
            (TemplateKind.CYCLE2, (r1, r2))
            for r1 in range(R)
            for r2 in range(r1, R)
        ]
        cyc3 = {canonical_cycle3(t) for t in itertools.product(range(R), repeat=3)}
        feats += [(TemplateKind.CYCLE3, t) for t in sorted(cyc3)]
        feats += [(TemplateKind.PATH2, t) for t in itertools.product(range(R), repeat=2)]
        feats += [
            (TemplateKind.TRANSITIVITY, t)
            for t in itertools.product(range(R), repeat=3)
        ]
        multisets = sorted(
            ms
            for k in (1, 2, 3)
            for ms in itertools.combinations_with_replacement(range(R), k)
        )
        for kind in (
            TemplateKind.OUT_EXACTLY,
            TemplateKind.IN_EXACTLY,
            TemplateKind.OUT_AT_LEAST,
            TemplateKind.IN_AT_LEAST,
        ):
            feats += [(kind, ms) for ms in multisets]
        self.features = feats
        self.index = {f: i for i, f in enumerate(feats)}
        self.trans_to_path2: dict[int, int] = {}
        self.path2_to_trans: dict[int, list[int]] = {}
        for fid, (kind, rels) in enumerate(feats):
            if kind is TemplateKind.TRANSITIVITY:
                p2 = self.index[(TemplateKind.PATH2, rels[:2])]
                self.trans_to_path2[fid] = p2
                self.path2_to_trans.setdefault(p2, []).append(fid)
        self._trans_ids = np.array(sorted(self.trans_to_path2), dtype=np.int64)
        self._trans_dens = np.array(
            [self.trans_to_path2[f] for f in self._trans_ids], dtype=np.int64
        )
        self._bucket_cache: dict[tuple, tuple[int, ...]] = {}

    @property
    def size(self) -> int:
        return len(self.features)

    def __len__(self) -> int:
        return len(self.features)

    def label(self, fid: int, relation_names: Sequence[str] | None = None) -> tuple[str, str]:
        """Return (template label, comma-joined relation names) for a feature."""
        kind, rels = self.features[fid]
        if relation_names is None:
            names = [f"r{r}" for r in rels]
        else:
            names = [relation_names[r] for r in rels]
        return KIND_LABELS[kind], ",".join(names)

    def bucket_features(self, profile: Mapping[int, int], out: bool) -> tuple[int, ...]:
        """Feature ids of every degree bucket a node with this profile occupies.

        profile maps relation -> non-self-loop degree; zero entries may be
        present or absent, the result is the same.
        """
        items = tuple(sorted((r, d) for r, d in profile.items() if d > 0))
        key = (out, items)
        got = self._bucket_cache.get(key)
        if got is not None:
            return got
        if out:
            exact, atleast = TemplateKind.OUT_EXACTLY, TemplateKind.OUT_AT_LEAST
        else:
            exact, atleast = TemplateKind.IN_EXACTLY, TemplateKind.IN_AT_LEAST
        idx = self.index
        feats: list[int] = []
        # exact buckets: pick relations whose degree is pinned by the multiset
        small = [(r, d) for r, d in items if d <= 3]
        for size in (1, 2, 3):
            for combo in itertools.combinations(small, size):
                if sum(d for _, d in combo) <= 3:
                    ms = tuple(r for r, d in combo for _ in range(d))
                    feats.append(idx[(exact, ms)])
        # at-least buckets: any multiset of size 1..3 dominated by the profile
        degmap = dict(items)
        eligible = [r for r, _ in items]
        for k in (1, 2, 3):
            for ms in itertools.combinations_with_replacement(eligible, k):
                if all(ms.count(r) <= degmap[r] for r in set(ms)):
                    feats.append(idx[(atleast, ms)])
        result = tuple(feats)
        self._bucket_cache[key] = result
        return result


@dataclass(eq=False)
class FeatureVector:
    """Raw integer census aligned to a registry.

    counts holds exact integers for every feature; transitivity rows hold the
    closed-path numerator. materialize() converts those rows to proportions.
    """

    registry: FeatureRegistry
    counts: np.ndarray

    def materialize(self) -> np.ndarray:
        vals = self.counts.astype(np.float64)
        reg = self.registry
        num = vals[reg._trans_ids]
        den = self.counts[reg._trans_dens].astype(np.float64)
        vals[reg._trans_ids] = np.divide(
            num, den, out=np.zeros_like(num), where=den > 0
        )
        return vals

    def value(self, fid: int) -> float:
        kind, _ = self.registry.features[fid]
        if kind is TemplateKind.TRANSITIVITY:
            den = int(self.counts[self.registry.trans_to_path2[fid]])
            return int(self.counts[fid]) / den if den else 0.0
        return float(self.counts[fid])

    def apply_delta(self, delta: "FeatureDelta") -> "FeatureVector":
        if delta.size != len(self.registry):
            raise DimensionError(
                f"delta over {delta.size} features, vector has {len(self.registry)}"
            )
        counts = self.counts.copy()
        for fid, change in delta.count_changes.items():
            counts[fid] += change
        return FeatureVector(self.registry, counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return len(self.registry) == len(other.registry) and np.array_equal(
            self.counts, other.counts
        )


@dataclass
class FeatureDelta:
    """Sparse change in the census caused by one edge removal/insertion pair.

    count_changes is exact integer arithmetic on the raw census;
    value_changes is the same move in materialized space, where transitivity
    entries shift whenever their numerator or their path2 denominator moved.
    score_delta() consumes value_changes.
    """

    size: int
    count_changes: dict[int, int]
    value_changes: dict[int, float]


def score_delta(theta: np.ndarray, delta: FeatureDelta) -> float:
    """theta . f(G after) - theta . f(G before), using only changed features."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.shape[0] != delta.size:
        raise DimensionError(
            f"weights of shape {theta.shape} against {delta.size} features"
        )
    return float(sum(theta[f] * dv for f, dv in delta.value_changes.items()))


# -- full census ------------------------------------------------------------


def count_all(
    graph: MultiRelGraph, registry: FeatureRegistry, method: str = "auto"
) -> FeatureVector:
    """Census of every registered feature over the whole graph.

    method selects the edge-template strategy: "dense" builds per-relation
    adjacency matrices (fast for small graphs), "sparse" walks adjacency
    lists. "auto" picks by node count. Results are identical.
    """
    if graph.n_relations > registry.n_relations:
        raise GraphError(
            f"graph has {graph.n_relations} relations, registry only "
            f"{registry.n_relations}"
        )
    if method == "auto":
        method = "dense" if graph.n_nodes <= _DENSE_NODE_LIMIT else "sparse"
    counts = np.zeros(registry.size, dtype=np.int64)
    if method == "dense":
        _census_dense(graph, registry, counts)
    elif method == "sparse":
        _census_sparse(graph, registry, counts)
    else:
        raise ValueError(f"unknown census method: {method!r}")
    _census_degrees(graph, registry, counts)
    return FeatureVector(registry, counts)


def _census_dense(g: MultiRelGraph, reg: FeatureRegistry, counts: np.ndarray) -> None:
    R, n, idx = g.n_relations, g.n_nodes, reg.index
    M = np.zeros((R, n, n), dtype=np.float64)
    for s, r, t in g.edges():
        if s != t:
            M[r, s, t] = 1.0
    for r in range(R):
        counts[idx[(TemplateKind.EDGE_COUNT, (r,))]] = int(M[r].sum())
    for r1 in range(R):
        for r2 in range(r1, R):
            pairs = int((M[r1] * M[r2].T).sum())
            if r1 == r2:
                # each antiparallel pair seen from both of its edges
                assert pairs % 2 == 0
                pairs //= 2
            counts[idx[(TemplateKind.CYCLE2, (r1, r2))]] = pairs
    cyc = Counter()
    for r1 in range(R):
        for r2 in range(R):
            # P[u, w] = number of u -> v -> w walks; diagonals are never read
            # as path endpoints since strictness demands u != w
            P = M[r1] @ M[r2]
            counts[idx[(TemplateKind.PATH2, (r1, r2))]] = int(P.sum() - np.trace(P))
            for r3 in range(R):
                cyc[canonical_cycle3((r1, r2, r3))] += int((P * M[r3].T).sum())
                counts[idx[(TemplateKind.TRANSITIVITY, (r1, r2, r3))]] = int(
                    (P * M[r3]).sum()
                )
    for key, c in cyc.items():
        # every triangle is found from each of its three pivots
        assert c % 3 == 0
        counts[idx[(TemplateKind.CYCLE3, key)]] = c // 3


def _census_sparse(g: MultiRelGraph, reg: FeatureRegistry, counts: np.ndarray) -> None:
    R, idx = g.n_relations, reg.index
    self_loops = [0] * R
    for s, r, t in g.edges():
        if s == t:
            self_loops[r] += 1
    for r in range(R):
        counts[idx[(TemplateKind.EDGE_COUNT, (r,))]] = g.num_edges(r) - self_loops[r]
    pairs: Counter = Counter()
    for r1 in range(R):
        for s, _, t in g.edges(r1):
            if s == t:
                continue
            for r2 in range(r1, R):
                if g.has_edge(t, r2, s):
                    pairs[(r1, r2)] += 1
    for (r1, r2), c in pairs.items():
        if r1 == r2:
            assert c % 2 == 0
            c //= 2
        counts[idx[(TemplateKind.CYCLE2, (r1, r2))]] = c
    cyc: Counter = Counter()
    for v in g.active_nodes():
        ins_by_rel = [[u for u in g.in_neighbors(v, r) if u != v] for r in range(R)]
        outs_by_rel = [[w for w in g.out_neighbors(v, r) if w != v] for r in range(R)]
        for r1 in range(R):
            ins = ins_by_rel[r1]
            if not ins:
                continue
            ins_set = set(ins)
            for r2 in range(R):
                outs = outs_by_rel[r2]
                if not outs:
                    continue
                overlap = sum(1 for w in outs if w in ins_set)
                counts[idx[(TemplateKind.PATH2, (r1, r2))]] += (
                    len(ins) * len(outs) - overlap
                )
                for u in ins:
                    for w in outs:
                        if u == w:
                            continue
                        for r3 in range(R):
                            if g.has_edge(w, r3, u):
                                cyc[canonical_cycle3((r1, r2, r3))] += 1
                            if g.has_edge(u, r3, w):
                                counts[
                                    idx[(TemplateKind.TRANSITIVITY, (r1, r2, r3))]
                                ] += 1
    for key, c in cyc.items():
        assert c % 3 == 0
        counts[idx[(TemplateKind.CYCLE3, key)]] = c // 3


def _census_degrees(g: MultiRelGraph, reg: FeatureRegistry, counts: np.ndarray) -> None:
    R = g.n_relations
    for v in g.active_nodes():
        out_prof: dict[int, int] = {}
        in_prof: dict[int, int] = {}
        for r in range(R):
            loop = 1 if g.has_edge(v, r, v) else 0
            d = g.out_degree(v, r) - loop
            if d > 0:
                out_prof[r] = d
            d = g.in_degree(v, r) - loop
            if d > 0:
                in_prof[r] = d
        if out_prof:
            for fid in reg.bucket_features(out_prof, out=True):
                counts[fid] += 1
        if in_prof:
            for fid in reg.bucket_features(in_prof, out=False):
                counts[fid] += 1


# -- exact deltas under single-edge changes ----------------------------------


class _MaskView:
    """Read-only view of a graph with one edge hidden.

    Lets the insertion side of a substitution enumerate companion edges in
    G minus the removed edge without mutating the shared graph.
    """

    def __init__(self, graph: MultiRelGraph, masked: tuple[int, int, int]):
        self._g = graph
        self._masked = masked

    def has_edge(self, s: int, r: int, t: int) -> bool:
        if (s, r, t) == self._masked:
            return False
        return self._g.has_edge(s, r, t)

    def out_neighbors(self, v: int, r: int) -> Sequence[int]:
        ms, mr, mt = self._masked
        lst = self._g.out_neighbors(v, r)
        if v == ms and r == mr:
            return [t for t in lst if t != mt]
        return lst

    def in_neighbors(self, v: int, r: int) -> Sequence[int]:
        ms, mr, mt = self._masked
        lst = self._g.in_neighbors(v, r)
        if v == mt and r == mr:
            return [s for s in lst if s != ms]
        return lst


def _edge_instances(view, s: int, r: int, t: int, reg: FeatureRegistry,
                    sign: int, acc: dict[int, int]) -> None:
    """Accumulate sign * (motif instances that contain edge (s, r, t)).

    The anchor edge itself is never queried, so the edge does not need to be
    present in the view; companion edges are read from the view. Works for
    both the removal term (view = the full graph) and the insertion term
    (view = graph minus the removed edge). Self-loops join nothing.
    """
    if s == t:
        return
    R, idx = reg.n_relations, reg.index

    def bump(key, amount=1):
        fid = idx[key]
        acc[fid] = acc.get(fid, 0) + sign * amount

    bump((TemplateKind.EDGE_COUNT, (r,)))
    for r2 in range(R):
        if view.has_edge(t, r2, s):
            bump((TemplateKind.CYCLE2, (min(r, r2), max(r, r2))))
    for r2 in range(R):
        # anchored triangle s -> t -> x -> s; each instance found once
        for x in view.out_neighbors(t, r2):
            if x == s or x == t:
                continue
            for r3 in range(R):
                if view.has_edge(x, r3, s):
                    bump((TemplateKind.CYCLE3, canonical_cycle3((r, r2, r3))))
    for r2 in range(R):
        # paths with the anchor as first hop, s -> t -> w
        n = sum(1 for w in view.out_neighbors(t, r2) if w != s and w != t)
        if n:
            bump((TemplateKind.PATH2, (r, r2)), n)
    for r1 in range(R):
        # paths with the anchor as second hop, u -> s -> t
        n = sum(1 for u in view.in_neighbors(s, r1) if u != s and u != t)
        if n:
            bump((TemplateKind.PATH2, (r1, r)), n)
    # transitivity numerators: the anchor fills one of three roles
    for r2 in range(R):
        # first hop of the path: s -> t -> w, closed by s -> w
        for w in view.out_neighbors(t, r2):
            if w == s or w == t:
                continue
            for r3 in range(R):
                if view.has_edge(s, r3, w):
                    bump((TemplateKind.TRANSITIVITY, (r, r2, r3)))
    for r1 in range(R):
        # second hop: u -> s -> t, closed by u -> t
        for u in view.in_neighbors(s, r1):
            if u == s or u == t:
                continue
            for r3 in range(R):
                if view.has_edge(u, r3, t):
                    bump((TemplateKind.TRANSITIVITY, (r1, r, r3)))
    for r1 in range(R):
        # closing edge: path s -> v -> t, the anchor closes it
        for v in view.out_neighbors(s, r1):
            if v == s or v == t:
                continue
            for r2 in range(R):
                if view.has_edge(v, r2, t):
                    bump((TemplateKind.TRANSITIVITY, (r1, r2, r)))


def _degree_changes(g: MultiRelGraph, removed, added, reg: FeatureRegistry,
                    acc: dict[int, int]) -> None:
    """Bucket membership moves for every node whose degree profile shifts."""
    R = g.n_relations
    d_out: Counter = Counter()
    d_in: Counter = Counter()
    for edges, sgn in ((removed, -1), (added, 1)):
        for a, rr, b in edges:
            if a == b:
                continue
            d_out[(a, rr)] += sgn
            d_in[(b, rr)] += sgn

    def shift(node, adjust, out):
        before: dict[int, int] = {}
        for r in range(R):
            loop = 1 if g.has_edge(node, r, node) else 0
            d = (g.out_degree(node, r) if out else g.in_degree(node, r)) - loop
            if d > 0:
                before[r] = d
        after = dict(before)
        for r, dd in adjust.items():
            nd = after.get(r, 0) + dd
            assert nd >= 0
            if nd:
                after[r] = nd
            else:
                after.pop(r, None)
        if before == after:
            return
        for fid in reg.bucket_features(before, out=out):
            acc[fid] = acc.get(fid, 0) - 1
        for fid in reg.bucket_features(after, out=out):
            acc[fid] = acc.get(fid, 0) + 1

    for node in {v for v, _ in d_out}:
        adjust = {rr: dd for (v, rr), dd in d_out.items() if v == node and dd}
        if adjust:
            shift(node, adjust, out=True)
    for node in {v for v, _ in d_in}:
        adjust = {rr: dd for (v, rr), dd in d_in.items() if v == node and dd}
        if adjust:
            shift(node, adjust, out=False)


def _materialize_changes(reg: FeatureRegistry, fv_before: FeatureVector,
                         count_changes: dict[int, int]) -> dict[int, float]:
    out: dict[int, float] = {}
    affected_trans: set[int] = set()
    for fid, c in count_changes.items():
        kind, _ = reg.features[fid]
        if kind is TemplateKind.TRANSITIVITY:
            affected_trans.add(fid)
            continue
        out[fid] = float(c)
        if kind is TemplateKind.PATH2:
            affected_trans.update(reg.path2_to_trans.get(fid, ()))
    base = fv_before.counts
    for tf in affected_trans:
        p2 = reg.trans_to_path2[tf]
        old_num, old_den = int(base[tf]), int(base[p2])
        new_num = old_num + count_changes.get(tf, 0)
        new_den = old_den + count_changes.get(p2, 0)
        old_val = old_num / old_den if old_den else 0.0
        new_val = new_num / new_den if new_den else 0.0
        if new_val != old_val:
            out[tf] = new_val - old_val
    return out


def _check_delta_inputs(g: MultiRelGraph, reg: FeatureRegistry,
                        fv_before: FeatureVector) -> None:
    if g.n_relations > reg.n_relations:
        raise GraphError(
            f"graph has {g.n_relations} relations, registry only {reg.n_relations}"
        )
    if len(fv_before.counts) != reg.size:
        raise DimensionError(
            f"base vector has {len(fv_before.counts)} entries, registry {reg.size}"
        )


def delta_substitute(g: MultiRelGraph, reg: FeatureRegistry, removed: Edge,
                     added: Edge, fv_before: FeatureVector) -> FeatureDelta:
    """Exact census change when `removed` is swapped for `added`.

    Both edges must share source and relation (a target substitution), the
    removed edge must be present and the added one absent. The graph itself
    is not modified.
    """
    _check_delta_inputs(g, reg, fv_before)
    s, r, t_old = removed
    s2, r2, t_new = added
    if s2 != s or r2 != r:
        raise GraphError(
            "substitution must keep source and relation fixed: "
            f"removing ({s}, {r}, {t_old}), adding ({s2}, {r2}, {t_new})"
        )
    if not g.has_edge(s, r, t_old):
        raise EdgeNotFoundError(f"edge ({s}, {r}, {t_old}) not present")
    if g.has_edge(s, r, t_new):
        raise DuplicateEdgeError(f"edge ({s}, {r}, {t_new}) already present")
    changes: dict[int, int] = {}
    _edge_instances(g, s, r, t_old, reg, -1, changes)
    view = _MaskView(g, (s, r, t_old))
    _edge_instances(view, s, r, t_new, reg, 1, changes)
    _degree_changes(g, [removed], [added], reg, changes)
    changes = {fid: c for fid, c in changes.items() if c}
    return FeatureDelta(reg.size, changes, _materialize_changes(reg, fv_before, changes))


def delta_add(g: MultiRelGraph, reg: FeatureRegistry, added: Edge,
              fv_before: FeatureVector) -> FeatureDelta:
    """Exact census change when a single absent edge is inserted."""
    _check_delta_inputs(g, reg, fv_before)
    s, r, t = added
    if g.has_edge(s, r, t):
        raise DuplicateEdgeError(f"edge ({s}, {r}, {t}) already present")
    changes: dict[int, int] = {}
    _edge_instances(g, s, r, t, reg, 1, changes)
    _degree_changes(g, [], [added], reg, changes)
    changes = {fid: c for fid, c in changes.items() if c}
    return FeatureDelta(reg.size, changes, _materialize_changes(reg, fv_before, changes))
