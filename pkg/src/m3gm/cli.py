"""Subcommand CLI over the pipeline stages.

Every stage is exposed standalone (ingest, train-assoc, train-m3gm,
tune-alpha, rerank, eval, count-motifs, inspect-weights) plus run-pipeline
for the whole sequence. Settings come from a flat config file, M3GM_*
environment variables, and command-line flags, in increasing precedence;
whatever wins is hashed and stamped into produced artifacts. Exit code 0 on
success; errors map to stable per-class codes and a one-line message.

Artifact locations default to conventional names under the configured
output directory, so a config file alone is enough to drive every stage.
"""

from __future__ import annotations

import logging
import warnings
from pathlib import Path

import click
import numpy as np

from .association import VARIANTS, AssociationModel
from .config import RunConfig
from .data import read_bundle, write_bundle, load_dataset
from .errors import ConfigError, M3GMError
from .evaluation import (
    EvalInstance,
    FilterSet,
    RerankedSystem,
    RuleBaseline,
    build_instances,
    read_alpha,
    write_alpha,
)
from .motifs import FeatureRegistry, count_all
from .pipeline import (
    alpha_array,
    check_artifact_hashes,
    evaluate_split,
    run_pipeline,
    train_association_stage,
    train_reranker_stage,
    tune_alpha_stage,
    write_report,
)
from .reranker import read_theta

_DEF = RunConfig()


class _ExitCodeGroup(click.Group):
    """Translate library errors into per-class exit codes with one message."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except M3GMError as err:
            click.echo(f"error: {err}", err=True)
            ctx.exit(err.exit_code)
        except OSError as err:
            click.echo(f"error: {err}", err=True)
            ctx.exit(1)


@click.group(cls=_ExitCodeGroup)
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker count; only sequential execution is implemented.")
@click.option("-v", "--verbose", is_flag=True, help="Log progress at INFO level.")
def main(threads: int, verbose: bool) -> None:
    """Link prediction on a multirelational graph: local association scores
    re-ranked by global graph-motif weights."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(name)s: %(message)s",
    )
    if threads > 1:
        warnings.warn("parallel execution is not implemented; running on one thread")


_config_option = click.option(
    "--config", "config_path",
    type=click.Path(exists=True, dir_okay=False), default=None,
    help="Flat key=value run configuration file.",
)


def _effective_config(ctx, config_path, **flags) -> RunConfig:
    """Config file plus environment, with explicitly given flags on top."""
    overrides = {}
    for key, value in flags.items():
        source = ctx.get_parameter_source(key)
        if source is not None and source.name == "COMMANDLINE":
            overrides[key] = value
    return RunConfig.from_file(config_path, overrides=overrides)


def _artifact(cfg: RunConfig, given, default_name: str) -> Path:
    return Path(given) if given else Path(cfg.out_dir) / default_name


def _require_paths(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if not getattr(cfg, n)]
    if missing:
        raise ConfigError(
            "missing required path settings: " + ", ".join(sorted(missing))
        )


def _load_bundle_assoc(cfg, bundle_dir, assoc_path):
    bundle, bundle_hash = read_bundle(_artifact(cfg, bundle_dir, "bundle"))
    assoc, assoc_hash = AssociationModel.load(_artifact(cfg, assoc_path, "assoc.txt"))
    if assoc.relations_.names != bundle.relations.names:
        raise ConfigError("association snapshot was trained on other relations")
    return bundle, assoc, {"bundle": bundle_hash, "assoc": assoc_hash}


# -- ingest ---------------------------------------------------------------------


@main.command()
@_config_option
@click.option("--train", "train_path", type=click.Path(), default=_DEF.train_path,
              help="Training triple file.")
@click.option("--dev", "dev_path", type=click.Path(), default=_DEF.dev_path,
              help="Development triple file.")
@click.option("--test", "test_path", type=click.Path(), default=_DEF.test_path,
              help="Test triple file.")
@click.option("--out", "out_dir", type=click.Path(), default=_DEF.out_dir,
              show_default=True, help="Output directory for all artifacts.")
@click.option("--symmetric", "symmetric_relations",
              default=_DEF.symmetric_relations, show_default=True,
              help="Comma-separated relation names treated as symmetric.")
@click.pass_context
def ingest(ctx, config_path, **flags):
    """Intern raw triple files into a bundle directory."""
    cfg = _effective_config(ctx, config_path, **flags)
    _require_paths(cfg, "train_path", "dev_path", "test_path")
    bundle = load_dataset(cfg.train_path, cfg.dev_path, cfg.test_path,
                          symmetric=cfg.symmetric_set())
    write_bundle(Path(cfg.out_dir) / "bundle", bundle, cfg.hash())
    click.echo(
        f"{len(bundle.entities)} entities, {len(bundle.relations)} relations; "
        f"train/dev/test = {len(bundle.train)}/{len(bundle.dev)}/{len(bundle.test)}"
    )
    click.echo(f"bundle written to {Path(cfg.out_dir) / 'bundle'} "
               f"(config {cfg.hash()})")


# -- train-assoc ----------------------------------------------------------------


@main.command("train-assoc")
@_config_option
@click.option("--bundle", "bundle_dir", type=click.Path(), default=None,
              help="Bundle directory (default: <out>/bundle).")
@click.option("--out", "out_dir", type=click.Path(), default=_DEF.out_dir,
              show_default=True)
@click.option("--model", type=click.Choice(VARIANTS), default=_DEF.model,
              show_default=True, help="Association scorer variant.")
@click.option("--dim", type=int, default=_DEF.dim, show_default=True,
              help="Embedding dimension; must match --vectors when given.")
@click.option("--neg", "assoc_negatives", type=int, default=_DEF.assoc_negatives,
              show_default=True, help="Uniform corruptions per instance.")
@click.option("--lr", "assoc_learning_rate", type=float,
              default=_DEF.assoc_learning_rate, show_default=True)
@click.option("--epochs", "assoc_epochs", type=int, default=_DEF.assoc_epochs,
              show_default=True, help="Epoch cap; dev MRR stops earlier.")
@click.option("--patience", type=int, default=_DEF.patience, show_default=True)
@click.option("--cadence", "symmetric_cadence", type=int,
              default=_DEF.symmetric_cadence, show_default=True,
              help="Train symmetric-relation edges every Nth epoch.")
@click.option("--seed", type=int, default=_DEF.seed, show_default=True)
@click.option("--vectors", "vectors_path", type=click.Path(), default=_DEF.vectors_path,
              help="Pretrained word-vector text file for initialization.")
@click.option("--lemmas", "lemmas_path", type=click.Path(), default=_DEF.lemmas_path,
              help="Optional synset-to-lemmas file for vector averaging.")
@click.pass_context
def train_assoc(ctx, config_path, bundle_dir, **flags):
    """Train the local edge scorer on the training graph."""
    cfg = _effective_config(ctx, config_path, **flags)
    bundle, bundle_hash = read_bundle(_artifact(cfg, bundle_dir, "bundle"))
    check_artifact_hashes(cfg.hash(), bundle=bundle_hash)
    model = train_association_stage(cfg, bundle)
    out = Path(cfg.out_dir) / "assoc.txt"
    model.save(out, cfg.hash())
    note = (
        f"best dev MRR {100.0 * model.dev_mrr_:.2f} at epoch {model.best_epoch_ + 1}"
        if model.dev_mrr_ is not None
        else f"{model.best_epoch_ + 1} epochs, no dev split"
    )
    click.echo(f"{cfg.model} d={model.node_emb_.shape[1]}: {note}")
    click.echo(f"snapshot written to {out}")


# -- train-m3gm -----------------------------------------------------------------


@main.command("train-m3gm")
@_config_option
@click.option("--bundle", "bundle_dir", type=click.Path(), default=None)
@click.option("--assoc", "assoc_path", type=click.Path(), default=None,
              help="Association snapshot (default: <out>/assoc.txt).")
@click.option("--out", "out_dir", type=click.Path(), default=_DEF.out_dir,
              show_default=True)
@click.option("--margin", type=float, default=_DEF.margin, show_default=True)
@click.option("--l2", type=float, default=_DEF.l2, show_default=True)
@click.option("--neg", "m3gm_negatives", type=int, default=_DEF.m3gm_negatives,
              show_default=True, help="Substitution negatives per edge.")
@click.option("--epochs", "m3gm_epochs", type=int, default=_DEF.m3gm_epochs,
              show_default=True)
@click.option("--lr", "m3gm_learning_rate", type=float,
              default=_DEF.m3gm_learning_rate, show_default=True)
@click.option("--cutoff", "proposal_cutoff", type=int, default=_DEF.proposal_cutoff,
              show_default=True, help="Proposal support size per (source, relation).")
@click.option("--fine-tune", "fine_tune", is_flag=True, default=_DEF.fine_tune,
              help="Also update association parameters during training.")
@click.option("--train-only", "train_only", is_flag=True, default=_DEF.train_only,
              help="Train motif weights on the train graph without dev edges.")
@click.option("--seed", type=int, default=_DEF.seed, show_default=True)
@click.pass_context
def train_m3gm(ctx, config_path, bundle_dir, assoc_path, **flags):
    """Train motif weights with the max-margin substitution objective."""
    cfg = _effective_config(ctx, config_path, **flags)
    bundle, assoc, hashes = _load_bundle_assoc(cfg, bundle_dir, assoc_path)
    check_artifact_hashes(cfg.hash(), **hashes)
    model = train_reranker_stage(cfg, bundle, assoc)
    out = Path(cfg.out_dir) / "theta.tsv"
    model.save_theta(out, bundle.relations.names, cfg.hash())
    click.echo(
        f"{model.registry_.size} features; mean hinge per epoch: "
        + ", ".join(f"{x:.4f}" for x in model.loss_history_)
    )
    click.echo(f"weights written to {out}")
    if cfg.fine_tune:
        tuned = Path(cfg.out_dir) / "assoc-tuned.txt"
        assoc.save(tuned, cfg.hash())
        click.echo(f"fine-tuned association snapshot written to {tuned}")


# -- tune-alpha -----------------------------------------------------------------


@main.command("tune-alpha")
@_config_option
@click.option("--bundle", "bundle_dir", type=click.Path(), default=None)
@click.option("--assoc", "assoc_path", type=click.Path(), default=None)
@click.option("--theta", "theta_path", type=click.Path(), default=None,
              help="Motif weight file (default: <out>/theta.tsv).")
@click.option("--k", type=int, default=_DEF.k, show_default=True,
              help="Re-ranked window size.")
@click.option("--steps", "alpha_steps", type=int, default=_DEF.alpha_steps,
              show_default=True, help="Grid resolution over [0, 1].")
@click.option("--out", "out_dir", type=click.Path(), default=_DEF.out_dir,
              show_default=True)
@click.pass_context
def tune_alpha_command(ctx, config_path, bundle_dir, assoc_path, theta_path, **flags):
    """Grid-search per-relation interpolation weights on the dev split.

    Dev queries are scored as hypothetical additions to the train-only
    graph; the chosen weights are reused unchanged at test time.
    """
    cfg = _effective_config(ctx, config_path, **flags)
    bundle, assoc, hashes = _load_bundle_assoc(cfg, bundle_dir, assoc_path)
    registry = FeatureRegistry(len(bundle.relations))
    theta, hashes["theta"] = read_theta(
        _artifact(cfg, theta_path, "theta.tsv"), registry, bundle.relations.names
    )
    check_artifact_hashes(cfg.hash(), **hashes)
    if not len(bundle.dev):
        raise ConfigError("cannot tune interpolation weights: dev split is empty")
    alphas = tune_alpha_stage(cfg, bundle, assoc, theta, registry)
    out = Path(cfg.out_dir) / "alpha.tsv"
    write_alpha(out, alphas, bundle.relations, cfg.hash())
    for r in sorted(alphas):
        click.echo(f"{bundle.relations.names[r]}\t{alphas[r]:.2f}")
    click.echo(f"alpha table written to {out}")


# -- rerank ---------------------------------------------------------------------


@main.command()
@_config_option
@click.option("--bundle", "bundle_dir", type=click.Path(), default=None)
@click.option("--assoc", "assoc_path", type=click.Path(), default=None)
@click.option("--theta", "theta_path", type=click.Path(), default=None)
@click.option("--alpha-file", "alpha_path", type=click.Path(), default=None,
              help="Per-relation interpolation table (default: <out>/alpha.tsv).")
@click.option("--k", type=int, default=_DEF.k, show_default=True)
@click.option("--split", type=click.Choice(("dev", "test")), default="test",
              show_default=True, help="Split whose instances are re-ranked.")
@click.option("--query", "query_name", default=None,
              help="Synset name: print the re-ranked window for one query.")
@click.option("--relation", "relation_name", default=None,
              help="Relation name for --query.")
@click.option("--direction", type=click.Choice(("target", "source")),
              default="target", show_default=True,
              help="Which side of the edge --query fills.")
@click.pass_context
def rerank(ctx, config_path, bundle_dir, assoc_path, theta_path, alpha_path,
           split, query_name, relation_name, direction, **flags):
    """Re-rank candidates; per-instance gold ranks, or one query's window.

    Without --query, emits "source relation target direction rank" lines
    for every instance of the split (symmetric relations ranked by the
    rule). With --query and --relation, prints the re-ranked window for
    that single completion as "rank synset combined graph assoc" lines.
    """
    cfg = _effective_config(ctx, config_path, **flags)
    bundle, assoc, hashes = _load_bundle_assoc(cfg, bundle_dir, assoc_path)
    registry = FeatureRegistry(len(bundle.relations))
    theta, hashes["theta"] = read_theta(
        _artifact(cfg, theta_path, "theta.tsv"), registry, bundle.relations.names
    )
    alphas, hashes["alpha"] = read_alpha(
        _artifact(cfg, alpha_path, "alpha.tsv"), bundle.relations
    )
    check_artifact_hashes(cfg.hash(), **hashes)

    names = bundle.entities.names
    rel_names = bundle.relations.names
    use_dev_edges = split == "test" and not cfg.train_only
    graph = bundle.graph(include_dev=use_dev_edges)
    fv = count_all(graph, registry)
    system = RerankedSystem(
        assoc, theta, registry, graph, fv,
        alpha=alpha_array(alphas, len(bundle.relations)), k=cfg.k,
    )
    filters = FilterSet.build(bundle.graph(), bundle.dev, bundle.test)

    if query_name is not None:
        if relation_name is None:
            raise ConfigError("--query needs --relation")
        q = bundle.entities.id_of(query_name)
        r = bundle.relations.index[relation_name]
        inst = (
            EvalInstance(q, r, -1, "target")
            if direction == "target"
            else EvalInstance(-1, r, q, "source")
        )
        _, ids, a_scores, g_scores = system.window(inst, filters)
        a_r = system.alpha[r]
        combined = a_r * g_scores + (1.0 - a_r) * a_scores
        for rank, pos in enumerate(np.argsort(-combined, kind="stable"), start=1):
            click.echo(
                f"{rank}\t{names[ids[pos]]}\t{combined[pos]:.4f}"
                f"\t{g_scores[pos]:.4f}\t{a_scores[pos]:.4f}"
            )
        return

    rule = RuleBaseline(bundle.graph(), bundle.relations, fallback=cfg.fallback,
                        seed=cfg.stage_seed("eval"))
    for inst in build_instances(bundle.split(split)):
        ranker = rule if bundle.relations.symmetric[inst.relation] else system
        rank = ranker.rank_instance(inst, filters)
        click.echo(
            f"{names[inst.source]}\t{rel_names[inst.relation]}\t{names[inst.target]}"
            f"\t{inst.direction}\t{rank:g}"
        )


# -- eval -----------------------------------------------------------------------


@main.command("eval")
@_config_option
@click.option("--bundle", "bundle_dir", type=click.Path(), default=None)
@click.option("--assoc", "assoc_path", type=click.Path(), default=None)
@click.option("--theta", "theta_path", type=click.Path(), default=None,
              help="Motif weights; with --alpha-file switches on re-ranking.")
@click.option("--alpha-file", "alpha_path", type=click.Path(), default=None)
@click.option("--rerank/--no-rerank", "use_rerank", default=True, show_default=True,
              help="Evaluate the re-ranked system instead of raw association.")
@click.option("--split", type=click.Choice(("dev", "test")), default="test",
              show_default=True)
@click.option("--k", type=int, default=_DEF.k, show_default=True)
@click.option("--fallback", type=click.Choice(("shuffle", "expected-rank")),
              default=_DEF.fallback, show_default=True,
              help="Rule rank when no reciprocal edge fires.")
@click.option("--per-relation", is_flag=True, help="Break metrics down by relation.")
@click.option("--out", "report_path", type=click.Path(), default=None,
              help="Also write machine-readable report lines to this file.")
@click.pass_context
def eval_command(ctx, config_path, bundle_dir, assoc_path, theta_path, alpha_path,
                 use_rerank, split, per_relation, report_path, **flags):
    """Filtered ranking metrics on a split, as aligned text and machine lines."""
    cfg = _effective_config(ctx, config_path, **flags)
    bundle, assoc, hashes = _load_bundle_assoc(cfg, bundle_dir, assoc_path)
    theta = registry = alphas = None
    if use_rerank:
        registry = FeatureRegistry(len(bundle.relations))
        theta, hashes["theta"] = read_theta(
            _artifact(cfg, theta_path, "theta.tsv"), registry, bundle.relations.names
        )
        alphas, hashes["alpha"] = read_alpha(
            _artifact(cfg, alpha_path, "alpha.tsv"), bundle.relations
        )
    check_artifact_hashes(cfg.hash(), **hashes)
    report = evaluate_split(cfg, bundle, assoc, split, theta=theta,
                            registry=registry, alphas=alphas)
    click.echo(report.as_text(bundle.relations.names, per_relation=per_relation))
    click.echo("")
    for line in report.machine_lines():
        click.echo(line)
    if report_path:
        write_report(report_path, report, cfg.hash(),
                     bundle.relations.names if per_relation else None)
        click.echo(f"report written to {report_path}", err=True)


# -- count-motifs ---------------------------------------------------------------


@main.command("count-motifs")
@_config_option
@click.option("--bundle", "bundle_dir", type=click.Path(), default=None)
@click.option("--include-dev", is_flag=True,
              help="Census over the train+dev graph instead of train only.")
@click.option("--nonzero", is_flag=True, help="Drop zero-valued features.")
@click.pass_context
def count_motifs(ctx, config_path, bundle_dir, include_dev, nonzero):
    """Emit the full motif census, one "template relations value" line each."""
    cfg = _effective_config(ctx, config_path)
    bundle, _ = read_bundle(_artifact(cfg, bundle_dir, "bundle"))
    registry = FeatureRegistry(len(bundle.relations))
    fv = count_all(bundle.graph(include_dev=include_dev), registry)
    values = fv.materialize()
    click.echo(
        f"{registry.size} features over {len(bundle.relations)} relations",
        err=True,
    )
    for fid in range(registry.size):
        v = float(values[fid])
        if nonzero and v == 0.0:
            continue
        kind, rels = registry.label(fid, bundle.relations.names)
        text = str(int(v)) if v.is_integer() else repr(v)
        click.echo(f"{kind}\t{rels}\t{text}")


# -- inspect-weights ------------------------------------------------------------


@main.command("inspect-weights")
@_config_option
@click.option("--bundle", "bundle_dir", type=click.Path(), default=None)
@click.option("--theta", "theta_path", type=click.Path(), default=None)
@click.option("--top", type=int, default=20, show_default=True,
              help="How many weights to show, by descending magnitude.")
@click.pass_context
def inspect_weights(ctx, config_path, bundle_dir, theta_path, top):
    """Largest-magnitude motif weights, one "template relations weight" line each."""
    cfg = _effective_config(ctx, config_path)
    bundle, bundle_hash = read_bundle(_artifact(cfg, bundle_dir, "bundle"))
    registry = FeatureRegistry(len(bundle.relations))
    theta, theta_hash = read_theta(
        _artifact(cfg, theta_path, "theta.tsv"), registry, bundle.relations.names
    )
    check_artifact_hashes(bundle=bundle_hash, theta=theta_hash)
    order = np.argsort(-np.abs(theta), kind="stable")
    for fid in order[: max(top, 0)]:
        kind, rels = registry.label(int(fid), bundle.relations.names)
        click.echo(f"{kind}\t{rels}\t{float(theta[fid])!r}")


# -- run-pipeline ---------------------------------------------------------------


@main.command("run-pipeline")
@_config_option
@click.option("--train", "train_path", type=click.Path(), default=_DEF.train_path)
@click.option("--dev", "dev_path", type=click.Path(), default=_DEF.dev_path)
@click.option("--test", "test_path", type=click.Path(), default=_DEF.test_path)
@click.option("--vectors", "vectors_path", type=click.Path(),
              default=_DEF.vectors_path)
@click.option("--lemmas", "lemmas_path", type=click.Path(), default=_DEF.lemmas_path)
@click.option("--out", "out_dir", type=click.Path(), default=_DEF.out_dir,
              show_default=True)
@click.option("--seed", type=int, default=_DEF.seed, show_default=True)
@click.pass_context
def run_pipeline_command(ctx, config_path, **flags):
    """Ingest, train both models, tune interpolation, evaluate the test split."""
    cfg = _effective_config(ctx, config_path, **flags)
    _require_paths(cfg, "train_path", "dev_path", "test_path")
    _, report = run_pipeline(cfg, log=click.echo)
    click.echo("")
    click.echo(report.as_text(per_relation=False))
