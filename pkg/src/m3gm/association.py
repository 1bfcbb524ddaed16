"""Local edge scoring: translation, bilinear, and diagonal-bilinear operators.

A(r)(s, t) scores a single candidate edge from node embeddings and
per-relation parameters:

  transe    -|| e_s + e_r - e_t ||   (Euclidean norm, always <= 0)
  bilin     e_s^T W_r e_t            (full d x d matrix per relation)
  distmult  sum_k e_s[k] e_r[k] e_t[k]  (bilin restricted to a diagonal)

Training minimizes, per positive edge, the negative log-likelihood of a
softmax over the gold completion and a fixed number of uniformly sampled
corruptions, corrupting the target on even instances and the source on odd
ones. Raw scores are the softmax logits. Optimization is AdaGrad; early
stopping tracks filtered mean reciprocal rank over non-symmetric dev
instances. Edges of symmetric relations join the training stream only on
every cadence-th epoch.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import (
    ConfigError,
    DataFormatError,
    DimensionError,
    GraphError,
    MissingParametersError,
    VocabularyError,
)
from .embeddings import SynsetEmbeddings
from .graph import MultiRelGraph, RelationTable
from .optim import AdaGrad
from .validation import check_fitted, check_triples

VARIANTS = ("transe", "bilin", "distmult")

_MAGIC = "m3gm-assoc 1"


class AssociationModel(BaseEstimator):
    """Trainable local edge scorer over a fixed entity and relation inventory.

    Hyperparameters are constructor arguments (sklearn conventions); learned
    state lives in trailing-underscore attributes after fit():

      node_emb_    (n_nodes, dim) embedding matrix, trained in place
      rel_params_  (R, dim) vectors, or (R, dim, dim) matrices for bilin
      relations_   the RelationTable seen at fit time
      history_     dev MRR per epoch (when dev triples were given)
      best_epoch_  epoch index of the returned parameters
    """

    def __init__(self, variant="transe", negatives=10, learning_rate=0.01,
                 max_epochs=100, patience=5, symmetric_cadence=5, seed=0):
        self.variant = variant
        self.negatives = negatives
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.symmetric_cadence = symmetric_cadence
        self.seed = seed

    # -- scoring -----------------------------------------------------------

    def _check_scorable(self, r: int) -> None:
        check_fitted(self, ["node_emb_", "rel_params_"])
        if not 0 <= r < self.rel_params_.shape[0]:
            raise MissingParametersError(
                f"no parameters for relation id {r}; "
                f"{self.rel_params_.shape[0]} relations were trained"
            )

    def assoc_score(self, s: int, r: int, t: int) -> float:
        """A(r)(s, t) for one candidate edge."""
        self._check_scorable(r)
        es, et = self.node_emb_[s], self.node_emb_[t]
        if self.variant == "transe":
            return float(-np.linalg.norm(es + self.rel_params_[r] - et))
        if self.variant == "distmult":
            return float(np.sum(es * self.rel_params_[r] * et))
        return float(es @ self.rel_params_[r] @ et)

    def score_triples(self, triples) -> np.ndarray:
        """Vectorized assoc_score over an (n, 3) array of (s, r, t) rows."""
        check_fitted(self, ["node_emb_", "rel_params_"])
        arr = check_triples(triples, self.node_emb_.shape[0], self.rel_params_.shape[0])
        S, R, T = arr[:, 0], arr[:, 1], arr[:, 2]
        es, et = self.node_emb_[S], self.node_emb_[T]
        if self.variant == "transe":
            return -np.linalg.norm(es + self.rel_params_[R] - et, axis=1)
        if self.variant == "distmult":
            return np.sum(es * self.rel_params_[R] * et, axis=1)
        return np.einsum("bi,bij,bj->b", es, self.rel_params_[R], et)

    def score_targets(self, s: int, r: int) -> np.ndarray:
        """A(r)(s, v) for every node v, as one vector."""
        self._check_scorable(r)
        E = self.node_emb_
        if self.variant == "transe":
            return -np.linalg.norm(E[s] + self.rel_params_[r] - E, axis=1)
        if self.variant == "distmult":
            return E @ (E[s] * self.rel_params_[r])
        return E @ (self.rel_params_[r].T @ E[s])

    def score_sources(self, r: int, t: int) -> np.ndarray:
        """A(r)(v, t) for every node v, as one vector."""
        self._check_scorable(r)
        E = self.node_emb_
        if self.variant == "transe":
            return -np.linalg.norm(E + self.rel_params_[r] - E[t], axis=1)
        if self.variant == "distmult":
            return E @ (self.rel_params_[r] * E[t])
        return E @ (self.rel_params_[r] @ E[t])

    def rank_candidates(self, s: int, r: int, direction: str = "target",
                        exclude=(), k: int | None = None):
        """Descending-score candidate list, the query entity and exclusions removed.

        Every node is scored; no type restriction. Ties break toward the
        smaller node id so rankings are reproducible. Returns (node, score)
        pairs, truncated to k when given.
        """
        if direction == "target":
            scores = self.score_targets(s, r)
        elif direction == "source":
            scores = self.score_sources(r, s)
        else:
            raise ConfigError(f"unknown direction: {direction!r}")
        keep = np.ones(len(scores), dtype=bool)
        for v in exclude:
            keep[v] = False
        keep[s] = False
        ids = np.flatnonzero(keep)
        order = np.lexsort((ids, -scores[ids]))
        ranked = [(int(ids[i]), float(scores[ids[i]])) for i in order]
        return ranked[:k] if k is not None else ranked

    # -- training ----------------------------------------------------------

    def fit(self, graph: MultiRelGraph, relations: RelationTable,
            embeddings: SynsetEmbeddings, dev_triples=None):
        """Train on a graph's edges; dev triples drive early stopping.

        Without dev triples, exactly max_epochs epochs run. The embedding
        matrix is copied, never mutated in place on the caller's object.
        """
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"unknown variant {self.variant!r}, expected one of {VARIANTS}"
            )
        if len(relations) != graph.n_relations:
            raise VocabularyError(
                f"{len(relations)} relations in table, graph has {graph.n_relations}"
            )
        if len(embeddings) != graph.n_nodes:
            raise DimensionError(
                f"{len(embeddings)} embedding rows, graph has {graph.n_nodes} nodes"
            )
        if graph.num_edges() == 0:
            raise GraphError("cannot train on an empty graph")
        dev = None
        if dev_triples is not None:
            dev = check_triples(dev_triples, graph.n_nodes, graph.n_relations)

        rng = np.random.default_rng(self.seed)
        d = embeddings.dim
        R = len(relations)
        half = 0.5 / d
        self.node_emb_ = embeddings.vectors.astype(np.float64).copy()
        if self.variant == "bilin":
            # near-identity start keeps early scores close to dot products
            self.rel_params_ = np.tile(np.eye(d), (R, 1, 1)) + rng.uniform(
                -half, half, size=(R, d, d)
            )
        else:
            self.rel_params_ = rng.uniform(-half, half, size=(R, d))
        self.relations_ = relations
        self.dim_ = d

        opt_emb = AdaGrad(self.node_emb_.shape, self.learning_rate)
        opt_rel = AdaGrad(self.rel_params_.shape, self.learning_rate)

        nonsym = [e for e in graph.edges() if not relations.symmetric[e.relation]]
        sym = [e for e in graph.edges() if relations.symmetric[e.relation]]

        known = _known_completions(graph, dev)

        best_mrr, best_params, best_epoch = -1.0, None, -1
        self.history_ = []
        bad = 0
        for epoch in range(self.max_epochs):
            edges = list(nonsym)
            if self.symmetric_cadence and (epoch + 1) % self.symmetric_cadence == 0:
                edges += sym
            order = rng.permutation(len(edges))
            for i, j in enumerate(order):
                s, r, t = edges[j]
                side = "target" if i % 2 == 0 else "source"
                self._train_step(graph, s, r, t, side, rng, opt_emb, opt_rel)
            if dev is None:
                continue
            mrr = self._dev_mrr(dev, relations, known)
            self.history_.append(mrr)
            if mrr > best_mrr:
                best_mrr, best_epoch = mrr, epoch
                best_params = (self.node_emb_.copy(), self.rel_params_.copy())
                bad = 0
            else:
                bad += 1
                if bad >= self.patience:
                    break
        if best_params is not None:
            self.node_emb_, self.rel_params_ = best_params
        self.best_epoch_ = best_epoch if dev is not None else self.max_epochs - 1
        self.dev_mrr_ = best_mrr if dev is not None else None
        return self

    def _train_step(self, graph, s, r, t, side, rng, opt_emb, opt_rel):
        if side == "target":
            exclude = set(graph.out_neighbors(s, r))
            exclude.add(s)
            cands = _sample_corruptions(rng, graph.n_nodes, exclude, self.negatives)
            if cands is None:
                return
            entities = np.concatenate(([t], cands))
        else:
            exclude = set(graph.in_neighbors(t, r))
            exclude.add(t)
            cands = _sample_corruptions(rng, graph.n_nodes, exclude, self.negatives)
            if cands is None:
                return
            entities = np.concatenate(([s], cands))
        g, grads = self._nll_backward(s, r, t, entities, side)
        rows = np.concatenate(([s if side == "target" else t], entities))
        opt_emb.step_rows(self.node_emb_, rows, np.vstack([grads["fixed"], grads["entities"]]))
        opt_rel.step_rows(self.rel_params_, np.array([r]), grads["rel"][None])

    def _nll_backward(self, s, r, t, entities, side):
        """dNLL/dscore propagated to embeddings and relation parameters.

        entities[0] is the gold completion; the rest are corruptions. Returns
        (softmax weights minus gold indicator, gradient arrays).
        """
        E = self.node_emb_[entities]
        rel = self.rel_params_[r]
        fixed_vec = self.node_emb_[s] if side == "target" else self.node_emb_[t]
        if self.variant == "transe":
            if side == "target":
                D = (fixed_vec + rel)[None, :] - E
                sign = 1.0
            else:
                D = E + rel - fixed_vec[None, :]
                sign = -1.0
            raw = np.linalg.norm(D, axis=1)
            n = np.where(raw == 0, 1.0, raw)
            g = _softmax_minus_gold(-raw)
            # d(-||D||)/dD = -D/||D||; the candidate enters D with opposite
            # signs on the two sides, the relation always with +1
            U = g[:, None] * D / n[:, None]
            total = U.sum(axis=0)
            return g, {
                "fixed": -sign * total,
                "entities": sign * U,
                "rel": -total,
            }
        if self.variant == "distmult":
            u = fixed_vec * rel
            scores = E @ u
            g = _softmax_minus_gold(scores)
            z = E.T @ g
            return g, {
                "fixed": rel * z,
                "entities": np.outer(g, u),
                "rel": fixed_vec * z,
            }
        # bilin
        if side == "target":
            v = fixed_vec @ rel
            scores = E @ v
            g = _softmax_minus_gold(scores)
            z = E.T @ g
            return g, {
                "fixed": rel @ z,
                "entities": np.outer(g, v),
                "rel": np.outer(fixed_vec, z),
            }
        w = rel @ fixed_vec
        scores = E @ w
        g = _softmax_minus_gold(scores)
        z = E.T @ g
        return g, {
            "fixed": rel.T @ z,
            "entities": np.outer(g, w),
            "rel": np.outer(z, fixed_vec),
        }

    def _dev_mrr(self, dev, relations, known):
        """Filtered MRR over both directions of non-symmetric dev triples."""
        rr, count = 0.0, 0
        for s, r, t in dev:
            if relations.symmetric[r]:
                continue
            for side, gold, query in (("target", t, s), ("source", s, t)):
                scores = (
                    self.score_targets(query, r)
                    if side == "target"
                    else self.score_sources(r, query)
                )
                keep = np.ones(len(scores), dtype=bool)
                for v in known[(side, query, r)]:
                    keep[v] = False
                keep[query] = False
                keep[gold] = True
                rank = 1 + int(np.count_nonzero(scores[keep] > scores[gold]))
                rr += 1.0 / rank
                count += 1
        return rr / count if count else 0.0

    def score_gradient(self, s: int, r: int, t: int):
        """Gradients of assoc_score(s, r, t) w.r.t. (e_s, relation params, e_t).

        Used when hinge training backpropagates into the association model.
        """
        self._check_scorable(r)
        es, et = self.node_emb_[s], self.node_emb_[t]
        rel = self.rel_params_[r]
        if self.variant == "transe":
            D = es + rel - et
            n = np.linalg.norm(D)
            if n == 0:
                z = np.zeros_like(D)
                return z, z.copy(), z.copy()
            return -D / n, -D / n, D / n
        if self.variant == "distmult":
            return rel * et, es * et, es * rel
        return rel @ et, np.outer(es, et), rel.T @ es

    # -- numerical validation ----------------------------------------------

    def batch_loss(self, instances) -> float:
        """Summed NLL over (s, r, t, entities, side) instances; pure function of params."""
        total = 0.0
        for s, r, t, entities, side in instances:
            E = self.node_emb_[entities]
            rel = self.rel_params_[r]
            fixed_vec = self.node_emb_[s] if side == "target" else self.node_emb_[t]
            if self.variant == "transe":
                if side == "target":
                    D = (fixed_vec + rel)[None, :] - E
                else:
                    D = E + rel - fixed_vec[None, :]
                scores = -np.linalg.norm(D, axis=1)
            elif self.variant == "distmult":
                scores = E @ (fixed_vec * rel)
            elif side == "target":
                scores = E @ (fixed_vec @ rel)
            else:
                scores = E @ (rel @ fixed_vec)
            shifted = scores - scores.max()
            total += float(np.log(np.exp(shifted).sum()) - shifted[0])
        return total

    def gradient_check(self, triples, seed=0, h=1e-4) -> float:
        """Max relative error between analytic and central-difference gradients."""
        check_fitted(self, ["node_emb_", "rel_params_"])
        rng = np.random.default_rng(seed)
        n = self.node_emb_.shape[0]
        instances = []
        for i, (s, r, t) in enumerate(np.asarray(triples, dtype=np.int64)):
            side = "target" if i % 2 == 0 else "source"
            gold = t if side == "target" else s
            pool = np.array([v for v in range(n) if v != gold])
            cands = rng.choice(pool, size=min(self.negatives, len(pool)), replace=True)
            instances.append((int(s), int(r), int(t), np.concatenate(([gold], cands)), side))

        emb_grad = np.zeros_like(self.node_emb_)
        rel_grad = np.zeros_like(self.rel_params_)
        for s, r, t, entities, side in instances:
            _, grads = self._nll_backward(s, r, t, entities, side)
            np.add.at(emb_grad, np.concatenate(([s if side == "target" else t], entities)),
                      np.vstack([grads["fixed"], grads["entities"]]))
            rel_grad[r] += grads["rel"]

        worst = 0.0
        for param, grad in ((self.node_emb_, emb_grad), (self.rel_params_, rel_grad)):
            flat_p = param.ravel()
            flat_g = grad.ravel()
            for i in range(flat_p.size):
                orig = flat_p[i]
                flat_p[i] = orig + h
                up = self.batch_loss(instances)
                flat_p[i] = orig - h
                down = self.batch_loss(instances)
                flat_p[i] = orig
                fd = (up - down) / (2 * h)
                err = abs(flat_g[i] - fd) / max(abs(flat_g[i]), abs(fd), 1e-6)
                worst = max(worst, err)
        return worst

    # -- persistence ---------------------------------------------------------

    def save(self, path, config_hash: str = "-") -> None:
        check_fitted(self, ["node_emb_", "rel_params_", "relations_"])
        rels = self.relations_
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{_MAGIC}\n")
            fh.write(f"config {config_hash}\n")
            fh.write(f"variant {self.variant}\n")
            fh.write(f"dim {self.dim_}\n")
            fh.write(f"nodes {self.node_emb_.shape[0]}\n")
            fh.write(f"relations {len(rels)}\n")
            for r, name in enumerate(rels.names):
                fh.write(f"rel {r} {name} {int(rels.symmetric[r])}\n")
            _write_block(fh, "emb", self.node_emb_)
            if self.variant == "bilin":
                _write_block(fh, "relmat", self.rel_params_.reshape(len(rels) * self.dim_, self.dim_))
            else:
                _write_block(fh, "relvec", self.rel_params_)

    @classmethod
    def load(cls, path) -> tuple["AssociationModel", str]:
        """Read a snapshot; returns (model, config hash recorded at save time)."""
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        it = iter(enumerate(lines, start=1))

        def expect(prefix):
            try:
                lineno, line = next(it)
            except StopIteration:
                raise DataFormatError(f"{path}: truncated snapshot") from None
            if not line.startswith(prefix + " ") and line != prefix:
                raise DataFormatError(f"{path}:{lineno}: expected {prefix!r} line")
            return line[len(prefix) + 1 :]

        if lines[:1] != [_MAGIC]:
            raise DataFormatError(f"{path}: bad magic, expected {_MAGIC!r}")
        next(it)
        config_hash = expect("config")
        variant = expect("variant")
        if variant not in VARIANTS:
            raise DataFormatError(f"{path}: unknown variant {variant!r}")
        dim = int(expect("dim"))
        n_nodes = int(expect("nodes"))
        n_rels = int(expect("relations"))
        names, flags = [], []
        for _ in range(n_rels):
            parts = expect("rel").split()
            if len(parts) != 3:
                raise DataFormatError(f"{path}: malformed relation line {parts!r}")
            names.append(parts[1])
            flags.append(bool(int(parts[2])))
        model = cls(variant=variant)
        model.dim_ = dim
        model.relations_ = RelationTable(names, flags)
        model.node_emb_ = _read_block(it, "emb", (n_nodes, dim), path)
        if variant == "bilin":
            flat = _read_block(it, "relmat", (n_rels * dim, dim), path)
            model.rel_params_ = flat.reshape(n_rels, dim, dim)
        else:
            model.rel_params_ = _read_block(it, "relvec", (n_rels, dim), path)
        model.history_ = []
        model.best_epoch_ = None
        model.dev_mrr_ = None
        return model, config_hash


def _softmax_minus_gold(scores: np.ndarray) -> np.ndarray:
    """Softmax probabilities with 1 subtracted at the gold (first) slot."""
    shifted = scores - scores.max()
    p = np.exp(shifted)
    p /= p.sum()
    p[0] -= 1.0
    return p


def _sample_corruptions(rng, n_nodes, exclude, count):
    """count uniform draws from the complement of exclude, or None if empty."""
    out: list[int] = []
    for _ in range(8):
        if len(out) >= count:
            break
        draw = rng.integers(n_nodes, size=4 * count)
        out.extend(int(x) for x in draw if int(x) not in exclude)
    if len(out) >= count:
        return np.array(out[:count], dtype=np.int64)
    pool = np.array([v for v in range(n_nodes) if v not in exclude], dtype=np.int64)
    if pool.size == 0:
        return None
    return rng.choice(pool, size=count, replace=True)


def _known_completions(graph, dev):
    """(side, query, relation) -> completions seen in train or dev."""
    from collections import defaultdict

    known = defaultdict(set)
    for s, r, t in graph.edges():
        known[("target", s, r)].add(t)
        known[("source", t, r)].add(s)
    if dev is not None:
        for s, r, t in dev:
            known[("target", s, r)].add(int(t))
            known[("source", t, r)].add(int(s))
    return known


def _write_block(fh, name, matrix):
    fh.write(f"{name} {matrix.shape[0]} {matrix.shape[1]}\n")
    for row in matrix:
        fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def _read_block(it, name, shape, path):
    def take():
        try:
            return next(it)
        except StopIteration:
            raise DataFormatError(f"{path}: truncated snapshot") from None

    lineno, line = take()
    parts = line.split()
    if parts[:1] != [name] or (int(parts[1]), int(parts[2])) != shape:
        raise DataFormatError(f"{path}:{lineno}: expected block {name} {shape}")
    rows = np.empty(shape, dtype=np.float64)
    for i in range(shape[0]):
        lineno, line = take()
        vals = line.split()
        if len(vals) != shape[1]:
            raise DataFormatError(f"{path}:{lineno}: expected {shape[1]} values")
        try:
            rows[i] = [float(x) for x in vals]
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-numeric value") from None
    return rows
