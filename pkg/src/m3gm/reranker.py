"""Global graph scoring and max-margin weight training.

The whole training graph G gets a log-score

  log psi(G) = theta . f(G) + sum over edges of A(r)(s, t)

where f(G) is the motif census and theta the weights being learned. Training
never materializes negative graphs: each negative is the training graph with
one edge's target substituted, so score differences reduce to a sparse
feature delta plus a two-term association swap. Per positive edge, T corrupt
targets are drawn from a proposal distribution proportional to association
scores of absent edges (softmax over the top candidates, since raw scores
may be negative). The hinge loss with margin 1 takes AdaGrad subgradient
steps on theta; an L2 term decays theta once per epoch.

Edges of symmetric relations are never corrupted, but they do sit in the
graph and therefore in f(G) and in every feature delta.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import (
    ArtifactMismatchError,
    DataFormatError,
    DimensionError,
    GraphError,
    NoCandidateError,
)
from .graph import Edge, MultiRelGraph, RelationTable
from .motifs import (
    FeatureRegistry,
    FeatureVector,
    TemplateKind,
    count_all,
    delta_substitute,
    score_delta,
)
from .optim import AdaGrad
from .validation import check_fitted

_THETA_MAGIC = "m3gm-theta 1"


def log_score(theta, fv, assoc_sum: float) -> float:
    """theta . f(G) + summed association scores, all in log space."""
    theta = np.asarray(theta, dtype=np.float64)
    values = fv.materialize() if isinstance(fv, FeatureVector) else np.asarray(fv)
    if theta.shape != values.shape:
        raise DimensionError(
            f"weights of shape {theta.shape} against features of shape {values.shape}"
        )
    return float(theta @ values) + float(assoc_sum)


def hinge_loss(log_score_g: float, log_score_neg: float, margin: float = 1.0) -> float:
    """max(0, margin - log_score_g + log_score_neg)."""
    return max(0.0, margin - log_score_g + log_score_neg)


def association_sum(graph: MultiRelGraph, assoc) -> float:
    """Sum of association scores over every edge of the graph."""
    triples = [(s, r, t) for s, r, t in graph.edges()]
    if not triples:
        return 0.0
    return float(assoc.score_triples(triples).sum())


def proposal_weights(graph: MultiRelGraph, assoc, s: int, r: int,
                     cutoff: int = 500):
    """Truncated-softmax proposal over absent targets for (s, r).

    Candidates are every node with no (s, r, .) edge, the source itself
    excluded; only the `cutoff` best association scores keep mass. Returns
    (candidate ids, probabilities). Raises NoCandidateError when every node
    is already linked.
    """
    ranked = assoc.rank_candidates(
        s, r, direction="target", exclude=graph.out_neighbors(s, r), k=cutoff
    )
    if not ranked:
        raise NoCandidateError(f"no absent target candidate for ({s}, relation {r})")
    ids = np.array([v for v, _ in ranked], dtype=np.int64)
    scores = np.array([sc for _, sc in ranked], dtype=np.float64)
    w = np.exp(scores - scores.max())
    return ids, w / w.sum()


def sample_negative(s: int, r: int, graph: MultiRelGraph, assoc, rng,
                    cutoff: int = 500) -> int:
    """One corrupt target drawn from the proposal distribution for (s, r)."""
    ids, probs = proposal_weights(graph, assoc, s, r, cutoff)
    return int(rng.choice(ids, p=probs))


class M3GMReranker(BaseEstimator):
    """Max-margin trainer for motif weights over a frozen training graph.

    Hyperparameters are constructor arguments; after fit():

      theta_           weight per registry feature
      registry_        the feature registry used
      relations_       relation table seen at fit time
      feature_vector_  census of the training graph
      loss_history_    mean hinge loss per epoch

    With fine_tune=True the association model passed to fit() is updated in
    place, and the L2 decay covers its parameters too.
    """

    def __init__(self, margin=1.0, l2=0.01, negatives=10, epochs=4,
                 learning_rate=0.1, proposal_cutoff=500, fine_tune=False,
                 seed=0):
        self.margin = margin
        self.l2 = l2
        self.negatives = negatives
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.proposal_cutoff = proposal_cutoff
        self.fine_tune = fine_tune
        self.seed = seed

    def fit(self, graph: MultiRelGraph, relations: RelationTable, assoc,
            registry: FeatureRegistry | None = None):
        check_fitted(assoc, ["node_emb_", "rel_params_"])
        if len(relations) != graph.n_relations:
            raise GraphError(
                f"{len(relations)} relations in table, graph has {graph.n_relations}"
            )
        if registry is None:
            registry = FeatureRegistry(graph.n_relations)
        elif registry.n_relations != graph.n_relations:
            raise GraphError(
                f"registry spans {registry.n_relations} relations, "
                f"graph has {graph.n_relations}"
            )
        edges = [e for e in graph.edges() if not relations.symmetric[e.relation]]
        if not edges:
            raise GraphError("no non-symmetric edges to sample substitutions from")

        rng = np.random.default_rng(self.seed)
        fv = count_all(graph, registry)
        theta = np.zeros(registry.size, dtype=np.float64)
        opt = AdaGrad(theta.shape, self.learning_rate)
        edge_count_ids = frozenset(
            fid for fid, (kind, _) in enumerate(registry.features)
            if kind is TemplateKind.EDGE_COUNT
        )
        if self.fine_tune:
            opt_emb = AdaGrad(assoc.node_emb_.shape, self.learning_rate)
            opt_rel = AdaGrad(assoc.rel_params_.shape, self.learning_rate)
        proposals: dict[tuple[int, int], tuple] = {}

        self.loss_history_ = []
        for _epoch in range(self.epochs):
            opt.step(theta, 2.0 * self.l2 * theta)
            if self.fine_tune:
                opt_emb.step(assoc.node_emb_, 2.0 * self.l2 * assoc.node_emb_)
                opt_rel.step(assoc.rel_params_, 2.0 * self.l2 * assoc.rel_params_)
            total, n_samples = 0.0, 0
            for j in rng.permutation(len(edges)):
                s, r, t = edges[j]
                try:
                    if self.fine_tune:
                        # scores move under our feet, so no reuse across edges
                        cands, probs = proposal_weights(
                            graph, assoc, s, r, self.proposal_cutoff
                        )
                    else:
                        key = (s, r)
                        if key not in proposals:
                            proposals[key] = proposal_weights(
                                graph, assoc, s, r, self.proposal_cutoff
                            )
                        cands, probs = proposals[key]
                except NoCandidateError:
                    continue
                draws = rng.choice(cands, size=self.negatives, p=probs)
                score_t = assoc.assoc_score(s, r, t)
                for t_neg in draws:
                    t_neg = int(t_neg)
                    delta = delta_substitute(
                        graph, registry, Edge(s, r, t), Edge(s, r, t_neg), fv
                    )
                    # substitution keeps edge counts fixed by construction
                    assert not edge_count_ids & delta.count_changes.keys()
                    if self.fine_tune:
                        score_t = assoc.assoc_score(s, r, t)
                    diff = (
                        score_delta(theta, delta)
                        + assoc.assoc_score(s, r, t_neg)
                        - score_t
                    )
                    loss = self.margin + diff
                    n_samples += 1
                    if loss <= 0.0:
                        continue
                    total += loss
                    idx = np.fromiter(
                        delta.value_changes.keys(), dtype=np.int64,
                        count=len(delta.value_changes),
                    )
                    grads = np.fromiter(
                        delta.value_changes.values(), dtype=np.float64,
                        count=len(delta.value_changes),
                    )
                    opt.step_indexes(theta, idx, grads)
                    if self.fine_tune:
                        self._fine_tune_step(
                            assoc, opt_emb, opt_rel, s, r, t, t_neg
                        )
            self.loss_history_.append(total / n_samples if n_samples else 0.0)

        self.theta_ = theta
        self.registry_ = registry
        self.relations_ = relations
        self.feature_vector_ = fv
        return self

    @staticmethod
    def _fine_tune_step(assoc, opt_emb, opt_rel, s, r, t, t_neg):
        # d loss / d A(s,r,t_neg) = +1 and d loss / d A(s,r,t) = -1
        gs_n, gr_n, gt_n = assoc.score_gradient(s, r, t_neg)
        gs_p, gr_p, gt_p = assoc.score_gradient(s, r, t)
        rows = np.array([s, t_neg, s, t], dtype=np.int64)
        grads = np.stack([gs_n, gt_n, -gs_p, -gt_p])
        opt_emb.step_rows(assoc.node_emb_, rows, grads)
        opt_rel.step_rows(assoc.rel_params_, np.array([r]), (gr_n - gr_p)[None])

    def save_theta(self, path, relation_names=None, config_hash: str = "-") -> None:
        check_fitted(self, ["theta_", "registry_"])
        if relation_names is None:
            relation_names = self.relations_.names
        write_theta(path, self.theta_, self.registry_, relation_names, config_hash)


def train_m3gm(graph, relations, assoc, registry=None, **params) -> np.ndarray:
    """Functional wrapper around M3GMReranker.fit; returns the weight vector."""
    model = M3GMReranker(**params)
    model.fit(graph, relations, assoc, registry)
    return model.theta_


# -- weight snapshots ---------------------------------------------------------


def write_theta(path, theta, registry: FeatureRegistry, relation_names,
                config_hash: str = "-") -> None:
    """One line per feature: template, relation tuple, weight (tab-separated)."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (registry.size,):
        raise DimensionError(
            f"weights of shape {theta.shape} against {registry.size} features"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {_THETA_MAGIC} config {config_hash}\n")
        for fid in range(registry.size):
            kind, rels = registry.label(fid, relation_names)
            fh.write(f"{kind}\t{rels}\t{float(theta[fid])!r}\n")


def read_theta(path, registry: FeatureRegistry, relation_names) -> tuple[np.ndarray, str]:
    """Load weights, checking every line against the expected feature layout.

    Returns (theta, config hash recorded at write time). A snapshot written
    against a different registry or relation naming fails with
    ArtifactMismatchError rather than silently misaligning weights.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(f"# {_THETA_MAGIC} config "):
        raise DataFormatError(f"{path}: missing weight snapshot header")
    config_hash = lines[0].split()[-1]
    body = lines[1:]
    if len(body) != registry.size:
        raise ArtifactMismatchError(
            f"{path}: {len(body)} weight lines, registry has {registry.size} features"
        )
    theta = np.empty(registry.size, dtype=np.float64)
    for fid, line in enumerate(body):
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataFormatError(f"{path}:{fid + 2}: expected 3 tab-separated fields")
        kind, rels = registry.label(fid, relation_names)
        if (parts[0], parts[1]) != (kind, rels):
            raise ArtifactMismatchError(
                f"{path}:{fid + 2}: feature ({parts[0]}, {parts[1]}) does not "
                f"match registry entry ({kind}, {rels})"
            )
        try:
            theta[fid] = float(parts[2])
        except ValueError:
            raise DataFormatError(f"{path}:{fid + 2}: non-numeric weight") from None
    return theta, config_hash
