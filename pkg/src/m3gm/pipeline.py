"""End-to-end orchestration: ingest, train, tune, evaluate, persist.

Stage layout inside the output directory:

  bundle/          interned splits and name tables
  assoc.txt        association model snapshot
  theta.tsv        motif weights (plus assoc-tuned.txt under fine-tuning)
  alpha.tsv        per-relation interpolation weights from the dev grid
  report.tsv       machine-readable test metrics

Every artifact embeds the config hash; stages that read artifacts refuse
inputs whose hashes disagree. The motif weights train on the train+dev
graph by default (train_only turns that off), alpha is tuned by scoring
dev queries as hypothetical additions to the train-only graph (dev edges
must look absent while they are being predicted), and the test evaluation
re-ranks against the same graph the weights were trained on. The
reciprocal-edge rule always consults the train-only graph.

Errors raised inside a stage are re-raised with the stage name prefixed.
"""

from __future__ import annotations

import warnings
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .association import AssociationModel
from .config import RunConfig
from .data import DatasetBundle, load_dataset, write_bundle
from .embeddings import WordVectorTable, build_synset_embeddings, read_lemma_file
from .errors import ArtifactMismatchError, DataFormatError, M3GMError
from .evaluation import (
    AssociationSystem,
    EvalReport,
    FilterSet,
    RerankedSystem,
    RuleBaseline,
    evaluate,
    tune_alpha,
    write_alpha,
)
from .motifs import FeatureRegistry, count_all
from .reranker import M3GMReranker

_REPORT_MAGIC = "m3gm-report 1"


@contextmanager
def _stage(name: str):
    try:
        yield
    except M3GMError as err:
        raise type(err)(f"[{name}] {err}") from err
    except OSError as err:
        raise DataFormatError(f"[{name}] {err}") from err


def check_artifact_hashes(current: str | None = None, **observed: str) -> None:
    """Refuse to mix artifacts stamped with different config hashes.

    When `current` is given and the (agreeing) artifacts were produced
    under some other config, that is only warned about: exploratory flag
    changes are legitimate, but the divergence should be visible.
    """
    distinct = sorted(set(observed.values()))
    if len(distinct) > 1:
        listing = ", ".join(f"{k}={v}" for k, v in sorted(observed.items()))
        raise ArtifactMismatchError(
            f"artifacts from different configs mixed: {listing}"
        )
    if current is not None and distinct and distinct[0] != current:
        warnings.warn(
            f"inputs were built under config {distinct[0]}, current config "
            f"hashes to {current}; new outputs are stamped with the current hash"
        )


def build_embeddings(cfg: RunConfig, names: list[str]):
    """Synset vectors from the configured word-vector file, or random rows."""
    wv = WordVectorTable.from_file(cfg.vectors_path) if cfg.vectors_path else None
    lemmas = read_lemma_file(cfg.lemmas_path) if cfg.lemmas_path else None
    return build_synset_embeddings(
        names, wv, dim=cfg.dim, seed=cfg.stage_seed("embed"), lemmas=lemmas
    )


def train_association_stage(cfg: RunConfig, bundle: DatasetBundle) -> AssociationModel:
    embeddings = build_embeddings(cfg, bundle.entities.names)
    model = AssociationModel(
        variant=cfg.model,
        negatives=cfg.assoc_negatives,
        learning_rate=cfg.assoc_learning_rate,
        max_epochs=cfg.assoc_epochs,
        patience=cfg.patience,
        symmetric_cadence=cfg.symmetric_cadence,
        seed=cfg.stage_seed("assoc"),
    )
    dev = bundle.dev if len(bundle.dev) else None
    model.fit(bundle.graph(), bundle.relations, embeddings, dev_triples=dev)
    return model


def train_reranker_stage(cfg: RunConfig, bundle: DatasetBundle,
                         assoc: AssociationModel) -> M3GMReranker:
    graph = bundle.graph(include_dev=not cfg.train_only)
    registry = FeatureRegistry(len(bundle.relations))
    model = M3GMReranker(
        margin=cfg.margin,
        l2=cfg.l2,
        negatives=cfg.m3gm_negatives,
        epochs=cfg.m3gm_epochs,
        learning_rate=cfg.m3gm_learning_rate,
        proposal_cutoff=cfg.proposal_cutoff,
        fine_tune=cfg.fine_tune,
        seed=cfg.stage_seed("m3gm"),
    )
    model.fit(graph, bundle.relations, assoc, registry)
    return model


def alpha_array(alphas: dict[int, float], n_relations: int) -> np.ndarray:
    arr = np.zeros(n_relations, dtype=np.float64)
    for r, a in alphas.items():
        arr[r] = a
    return arr


def tune_alpha_stage(cfg: RunConfig, bundle: DatasetBundle, assoc: AssociationModel,
                     theta: np.ndarray, registry: FeatureRegistry) -> dict[int, float]:
    """Grid-search per-relation alpha on dev queries over the train graph."""
    graph = bundle.graph()
    fv = count_all(graph, registry)
    filters = FilterSet.build(graph, bundle.dev, bundle.test)
    system = RerankedSystem(
        assoc, theta, registry, graph, fv,
        alpha=np.zeros(len(bundle.relations)), k=cfg.k,
    )
    return tune_alpha(bundle.dev, bundle.relations, filters, system,
                      steps=cfg.alpha_steps)


def evaluate_split(cfg: RunConfig, bundle: DatasetBundle, assoc: AssociationModel,
                   split: str, theta: np.ndarray | None = None,
                   registry: FeatureRegistry | None = None,
                   alphas: dict[int, float] | None = None) -> EvalReport:
    """Report for one split; association-only unless weights are given.

    Dev queries are ranked against the train graph, test queries against
    the graph the weights saw at training time (train+dev unless the run
    is train_only). The rule consults train edges in both cases.
    """
    triples = bundle.split(split)
    train_graph = bundle.graph()
    filters = FilterSet.build(train_graph, bundle.dev, bundle.test)
    rule = RuleBaseline(train_graph, bundle.relations, fallback=cfg.fallback,
                        seed=cfg.stage_seed("eval"))
    if theta is None:
        system = AssociationSystem(assoc)
    else:
        include_dev = split == "test" and not cfg.train_only
        graph = bundle.graph(include_dev=include_dev)
        fv = count_all(graph, registry)
        system = RerankedSystem(
            assoc, theta, registry, graph, fv,
            alpha=alpha_array(alphas or {}, len(bundle.relations)), k=cfg.k,
        )
    return evaluate(system, triples, filters, bundle.relations, rule=rule)


def write_report(path, report: EvalReport, config_hash: str = "-",
                 relation_names=None) -> None:
    """Machine lines, with per-relation blocks when names are supplied."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {_REPORT_MAGIC} config {config_hash}\n")
        for line in report.machine_lines():
            fh.write(line + "\n")
        if relation_names is not None:
            for r, sub in sorted(report.per_relation.items()):
                for line in sub.machine_lines():
                    fh.write(f"{relation_names[r]}.{line}\n")


def run_pipeline(cfg: RunConfig, log=None) -> tuple[dict[str, Path], EvalReport]:
    """All five stages in order; returns artifact paths and the test report."""
    say = log if log is not None else (lambda msg: None)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = cfg.hash()
    paths = {
        "bundle": out / "bundle",
        "assoc": out / "assoc.txt",
        "theta": out / "theta.tsv",
        "alpha": out / "alpha.tsv",
        "report": out / "report.tsv",
    }

    with _stage("ingest"):
        bundle = load_dataset(cfg.train_path, cfg.dev_path, cfg.test_path,
                              symmetric=cfg.symmetric_set())
        write_bundle(paths["bundle"], bundle, h)
        say(
            f"ingest: {len(bundle.entities)} entities, "
            f"{len(bundle.relations)} relations, "
            f"{len(bundle.train)}/{len(bundle.dev)}/{len(bundle.test)} triples"
        )

    with _stage("train-assoc"):
        assoc = train_association_stage(cfg, bundle)
        assoc.save(paths["assoc"], h)
        note = (
            f"best dev MRR {100.0 * assoc.dev_mrr_:.2f}"
            if assoc.dev_mrr_ is not None
            else "no dev split"
        )
        say(f"train-assoc: {cfg.model} d={assoc.node_emb_.shape[1]}, {note}")

    with _stage("train-m3gm"):
        reranker = train_reranker_stage(cfg, bundle, assoc)
        reranker.save_theta(paths["theta"], bundle.relations.names, h)
        if cfg.fine_tune:
            paths["assoc_tuned"] = out / "assoc-tuned.txt"
            assoc.save(paths["assoc_tuned"], h)
        say(f"train-m3gm: {reranker.registry_.size} features, "
            f"final mean hinge {reranker.loss_history_[-1]:.4f}")

    with _stage("tune-alpha"):
        alphas = tune_alpha_stage(cfg, bundle, assoc, reranker.theta_,
                                  reranker.registry_)
        write_alpha(paths["alpha"], alphas, bundle.relations, h)
        say("tune-alpha: " + ", ".join(
            f"{bundle.relations.names[r]}={alphas[r]:.2f}" for r in sorted(alphas)
        ))

    with _stage("eval"):
        report = evaluate_split(cfg, bundle, assoc, "test",
                                theta=reranker.theta_,
                                registry=reranker.registry_, alphas=alphas)
        write_report(paths["report"], report, h, bundle.relations.names)
        say("eval: " + report.as_text().replace("\n", "  "))

    return paths, report
