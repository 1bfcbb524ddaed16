"""Filtered ranking evaluation, reciprocal-edge rule, and top-K re-ranking.

Every eval triple (s, r, t) becomes two prediction instances: complete
(s, r, ?) with gold t, and complete (?, r, t) with gold s. A candidate pool
is all nodes minus known-true completions (from train and the eval splits)
minus the query entity; the gold completion itself is never filtered. The
rank of gold is 1 plus the number of strictly better candidates; reports
carry MR, and MRR / H@10 / H@1 scaled by 100.

Instances of symmetric relations are routed to the reciprocal-edge rule no
matter which system is under evaluation. Asymmetric instances go to the
system: raw association ranking, or association re-ranked in its top-K
window by hypothetical-edge motif deltas, interpolated per relation by
alpha (alpha = 0 means association only, 1 means graph score only).
"""

from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ArtifactMismatchError, ConfigError, DataFormatError
from .graph import Edge, MultiRelGraph, RelationTable
from .motifs import FeatureRegistry, FeatureVector, delta_add, score_delta

_ALPHA_MAGIC = "m3gm-alpha 1"


class EvalInstance(NamedTuple):
    source: int
    relation: int
    target: int
    direction: str  # which side is hidden: "target" or "source"

    @property
    def query(self) -> int:
        return self.source if self.direction == "target" else self.target

    @property
    def gold(self) -> int:
        return self.target if self.direction == "target" else self.source


def build_instances(triples) -> list[EvalInstance]:
    """Two instances per triple: hide the target, then hide the source."""
    out = []
    for s, r, t in np.asarray(triples, dtype=np.int64):
        out.append(EvalInstance(int(s), int(r), int(t), "target"))
        out.append(EvalInstance(int(s), int(r), int(t), "source"))
    return out


class FilterSet:
    """Known completions per (direction, query entity, relation).

    Built from the training graph plus any number of eval triple arrays.
    removed() never contains the instance's own gold completion, and always
    contains the query entity itself.
    """

    def __init__(self, n_nodes: int):
        self.n_nodes = n_nodes
        self._known: dict[tuple, set[int]] = defaultdict(set)

    @classmethod
    def build(cls, graph: MultiRelGraph, *triple_arrays) -> "FilterSet":
        fs = cls(graph.n_nodes)
        for s, r, t in graph.edges():
            fs._add(s, r, t)
        for arr in triple_arrays:
            for s, r, t in np.asarray(arr, dtype=np.int64):
                fs._add(int(s), int(r), int(t))
        return fs

    def _add(self, s: int, r: int, t: int) -> None:
        self._known[("target", s, r)].add(t)
        self._known[("source", t, r)].add(s)

    def known(self, direction: str, query: int, relation: int) -> frozenset:
        return frozenset(self._known.get((direction, query, relation), ()))

    def removed(self, inst: EvalInstance) -> set[int]:
        """Entities excluded from the candidate pool of this instance."""
        out = set(self._known.get((inst.direction, inst.query, inst.relation), ()))
        out.discard(inst.gold)
        out.add(inst.query)
        return out


def filtered_rank(scores: np.ndarray, gold: int, removed) -> int:
    """1 + number of unfiltered candidates scoring strictly above gold."""
    keep = np.ones(len(scores), dtype=bool)
    for v in removed:
        keep[v] = False
    keep[gold] = True
    return 1 + int(np.count_nonzero(scores[keep] > scores[gold]))


def positional_rank(scores: np.ndarray, gold: int, removed) -> int:
    """Rank under the deterministic ordering (score desc, node id asc)."""
    keep = np.ones(len(scores), dtype=bool)
    for v in removed:
        keep[v] = False
    keep[gold] = True
    better = scores > scores[gold]
    tied_ahead = (scores == scores[gold]) & (np.arange(len(scores)) < gold)
    return 1 + int(np.count_nonzero(keep & (better | tied_ahead)))


# -- systems -------------------------------------------------------------------


class AssociationSystem:
    """Ranks candidates by raw association score alone."""

    def __init__(self, assoc):
        self.assoc = assoc

    def rank_instance(self, inst: EvalInstance, filters: FilterSet) -> float:
        scores = (
            self.assoc.score_targets(inst.query, inst.relation)
            if inst.direction == "target"
            else self.assoc.score_sources(inst.relation, inst.query)
        )
        return float(filtered_rank(scores, inst.gold, filters.removed(inst)))


def reciprocal_completions(graph: MultiRelGraph, query: int, relation: int,
                           direction: str):
    """Train entities completing the instance via a reversed edge."""
    if direction == "target":
        return graph.in_neighbors(query, relation)
    return graph.out_neighbors(query, relation)


def rule_predict(graph: MultiRelGraph, query: int, relation: int,
                 direction: str) -> bool:
    """Whether any reciprocal train edge offers a completion here."""
    return len(reciprocal_completions(graph, query, relation, direction)) > 0


class RuleBaseline:
    """Reciprocal-edge predictor for symmetric relations.

    When a reciprocal train edge names the gold completion, rank is 1. All
    other instances fall back to `shuffle` (gold lands uniformly in the
    unfiltered pool, seeded per instance) or `expected-rank` (the exact mean
    of that shuffle, (pool + 1) / 2).
    """

    FALLBACKS = ("shuffle", "expected-rank")

    def __init__(self, graph: MultiRelGraph, relations: RelationTable,
                 fallback: str = "shuffle", seed: int = 0):
        if fallback not in self.FALLBACKS:
            raise ConfigError(
                f"unknown fallback {fallback!r}, expected one of {self.FALLBACKS}"
            )
        self.graph = graph
        self.relations = relations
        self.fallback = fallback
        self.seed = seed

    def rank_instance(self, inst: EvalInstance, filters: FilterSet) -> float:
        if self.relations.symmetric[inst.relation]:
            recips = reciprocal_completions(
                self.graph, inst.query, inst.relation, inst.direction
            )
            if recips:
                if inst.gold in recips:
                    return 1.0
                # the rule fired on someone else; gold gets no credit
        removed = filters.removed(inst)
        pool = self.graph.n_nodes - len(removed)
        if self.fallback == "expected-rank":
            return (pool + 1) / 2
        rng = np.random.default_rng(
            (self.seed, inst.query, inst.relation, inst.gold,
             0 if inst.direction == "target" else 1)
        )
        return float(1 + rng.integers(pool))


class RerankedSystem:
    """Association ranking with motif-delta re-scoring of the top-K window.

    Each top-K candidate edge is hypothetically added to the graph; its
    combined score is alpha_r * (theta . feature delta) + (1 - alpha_r) *
    association score. Candidates outside the window keep their association
    ranks, so gold falling outside top-K is scored exactly as the raw
    association system would (under the positional ordering).
    """

    def __init__(self, assoc, theta, registry: FeatureRegistry,
                 graph: MultiRelGraph, fv: FeatureVector, alpha, k: int = 100):
        self.assoc = assoc
        self.theta = np.asarray(theta, dtype=np.float64)
        self.registry = registry
        self.graph = graph
        self.fv = fv
        self.alpha = alpha
        self.k = k

    def _candidate_edge(self, inst: EvalInstance, cand: int) -> Edge:
        if inst.direction == "target":
            return Edge(inst.query, inst.relation, cand)
        return Edge(cand, inst.relation, inst.query)

    def graph_delta_score(self, inst: EvalInstance, cand: int) -> float:
        """theta . (census change from hypothetically adding the candidate edge)."""
        delta = delta_add(self.graph, self.registry, self._candidate_edge(inst, cand), self.fv)
        return score_delta(self.theta, delta)

    def window(self, inst: EvalInstance, filters: FilterSet):
        """Top-K candidates with (ids, association scores, graph scores)."""
        removed = filters.removed(inst)
        ranked = self.assoc.rank_candidates(
            inst.query, inst.relation, inst.direction, exclude=removed, k=self.k
        )
        ids, a_scores, g_scores = [], [], []
        for cand, a_sc in ranked:
            edge = self._candidate_edge(inst, cand)
            if self.graph.has_edge(*edge):
                warnings.warn(
                    f"candidate edge {tuple(edge)} already in graph; skipped"
                )
                continue
            ids.append(cand)
            a_scores.append(a_sc)
            g_scores.append(self.graph_delta_score(inst, cand))
        return removed, np.array(ids), np.array(a_scores), np.array(g_scores)

    def rank_instance(self, inst: EvalInstance, filters: FilterSet) -> float:
        removed, ids, a_scores, g_scores = self.window(inst, filters)
        a_r = self.alpha[inst.relation]
        if inst.gold in ids:
            combined = a_r * g_scores + (1.0 - a_r) * a_scores
            gold_pos = int(np.flatnonzero(ids == inst.gold)[0])
            return float(reorder_rank(combined, gold_pos))
        scores = (
            self.assoc.score_targets(inst.query, inst.relation)
            if inst.direction == "target"
            else self.assoc.score_sources(inst.relation, inst.query)
        )
        return float(positional_rank(scores, inst.gold, removed))


def reorder_rank(combined: np.ndarray, gold_pos: int) -> int:
    """Stable descending rank of the gold entry within the window."""
    better = combined > combined[gold_pos]
    tied_ahead = (combined == combined[gold_pos]) & (
        np.arange(len(combined)) < gold_pos
    )
    return 1 + int(np.count_nonzero(better | tied_ahead))


# -- metrics -------------------------------------------------------------------


@dataclass
class EvalReport:
    mr: float
    mrr: float
    h10: float
    h1: float
    n_instances: int
    per_relation: dict[int, "EvalReport"] = field(default_factory=dict)

    @classmethod
    def from_ranks(cls, ranks) -> "EvalReport":
        arr = np.asarray(ranks, dtype=np.float64)
        if arr.size == 0:
            return cls(0.0, 0.0, 0.0, 0.0, 0)
        return cls(
            mr=float(arr.mean()),
            mrr=float(100.0 * (1.0 / arr).mean()),
            h10=float(100.0 * (arr <= 10).mean()),
            h1=float(100.0 * (arr <= 1).mean()),
            n_instances=int(arr.size),
        )

    def machine_lines(self) -> list[str]:
        return [
            f"mr\t{self.mr!r}",
            f"mrr\t{self.mrr!r}",
            f"h@10\t{self.h10!r}",
            f"h@1\t{self.h1!r}",
            f"instances\t{self.n_instances}",
        ]

    def as_text(self, relation_names=None, per_relation: bool = False) -> str:
        rows = [
            ("MR", f"{self.mr:.2f}"),
            ("MRR", f"{self.mrr:.2f}"),
            ("H@10", f"{self.h10:.2f}"),
            ("H@1", f"{self.h1:.2f}"),
            ("instances", str(self.n_instances)),
        ]
        width = max(len(k) for k, _ in rows)
        lines = [f"{k:<{width}}  {v}" for k, v in rows]
        if per_relation and self.per_relation:
            lines.append("")
            for r, sub in sorted(self.per_relation.items()):
                name = relation_names[r] if relation_names else f"r{r}"
                lines.append(
                    f"{name}: MR {sub.mr:.2f}  MRR {sub.mrr:.2f}  "
                    f"H@10 {sub.h10:.2f}  H@1 {sub.h1:.2f}  n {sub.n_instances}"
                )
        return "\n".join(lines)


def evaluate(system, triples, filters: FilterSet, relations: RelationTable,
             rule: RuleBaseline | None = None) -> EvalReport:
    """Filtered both-direction evaluation with symmetric-relation routing.

    Symmetric-relation instances are always ranked by the rule; a rule must
    be supplied whenever the eval split contains any.
    """
    instances = build_instances(triples)
    ranks = []
    by_relation: dict[int, list[float]] = defaultdict(list)
    for inst in instances:
        removed = filters.removed(inst)
        assert inst.gold not in removed, "gold completion must never be filtered"
        if relations.symmetric[inst.relation]:
            if rule is None:
                raise ConfigError(
                    "symmetric-relation instances present but no rule supplied"
                )
            rank = rule.rank_instance(inst, filters)
        else:
            rank = system.rank_instance(inst, filters)
        ranks.append(rank)
        by_relation[inst.relation].append(rank)
    report = EvalReport.from_ranks(ranks)
    report.per_relation = {
        r: EvalReport.from_ranks(v) for r, v in sorted(by_relation.items())
    }
    return report


# -- alpha tuning ---------------------------------------------------------------


def tune_alpha(dev_triples, relations: RelationTable, filters: FilterSet,
               reranked: RerankedSystem, steps: int = 101) -> dict[int, float]:
    """Per-relation grid search of the interpolation weight on dev MRR.

    The grid is alpha = i / (steps - 1). Ties break toward the smallest
    alpha; non-symmetric relations with no dev instances get alpha 0 with a
    warning. Symmetric relations are excluded (the rule handles them).
    """
    instances = [
        inst
        for inst in build_instances(dev_triples)
        if not relations.symmetric[inst.relation]
    ]
    grouped: dict[int, list] = defaultdict(list)
    for inst in instances:
        removed, ids, a_scores, g_scores = reranked.window(inst, filters)
        if inst.gold in ids:
            gold_pos = int(np.flatnonzero(ids == inst.gold)[0])
            grouped[inst.relation].append((a_scores, g_scores, gold_pos, None))
        else:
            scores = (
                reranked.assoc.score_targets(inst.query, inst.relation)
                if inst.direction == "target"
                else reranked.assoc.score_sources(inst.relation, inst.query)
            )
            fixed = positional_rank(scores, inst.gold, removed)
            grouped[inst.relation].append((None, None, None, fixed))

    alphas: dict[int, float] = {}
    for r in range(len(relations)):
        if relations.symmetric[r]:
            continue
        if not grouped[r]:
            warnings.warn(
                f"no dev instances for relation {relations.names[r]!r}; alpha 0"
            )
            alphas[r] = 0.0
            continue
        best_alpha, best_mrr = 0.0, -1.0
        for i in range(steps):
            alpha = i / (steps - 1)
            rr = 0.0
            for a_scores, g_scores, gold_pos, fixed in grouped[r]:
                if fixed is not None:
                    rr += 1.0 / fixed
                    continue
                combined = alpha * g_scores + (1.0 - alpha) * a_scores
                rr += 1.0 / reorder_rank(combined, gold_pos)
            mrr = rr / len(grouped[r])
            if mrr > best_mrr:
                best_alpha, best_mrr = alpha, mrr
        alphas[r] = best_alpha
    return alphas


def write_alpha(path, alphas: dict[int, float], relations: RelationTable,
                config_hash: str = "-") -> None:
    """One line per non-symmetric relation: name, alpha (tab-separated)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {_ALPHA_MAGIC} config {config_hash}\n")
        for r in sorted(alphas):
            fh.write(f"{relations.names[r]}\t{float(alphas[r])!r}\n")


def read_alpha(path, relations: RelationTable) -> tuple[dict[int, float], str]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(f"# {_ALPHA_MAGIC} config "):
        raise DataFormatError(f"{path}: missing alpha table header")
    config_hash = lines[0].split()[-1]
    by_name = {name: r for r, name in enumerate(relations.names)}
    alphas: dict[int, float] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataFormatError(f"{path}:{lineno}: expected 2 tab-separated fields")
        name, value = parts
        if name not in by_name:
            raise ArtifactMismatchError(f"{path}:{lineno}: unknown relation {name!r}")
        try:
            alpha = float(value)
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-numeric alpha") from None
        if not 0.0 <= alpha <= 1.0:
            raise DataFormatError(f"{path}:{lineno}: alpha {alpha} outside [0, 1]")
        alphas[by_name[name]] = alpha
    return alphas, config_hash
