"""Shared fixtures: the hand-scored 6-node knowledge base and a toy workspace."""

from pathlib import Path

import numpy as np
import pytest

from m3gm.association import AssociationModel
from m3gm.config import RunConfig
from m3gm.evaluation import FilterSet
from m3gm.graph import MultiRelGraph, RelationTable
from m3gm.pipeline import run_pipeline


def manual_distmult(emb, rel, symmetric=None):
    """Association model with parameters set directly, skipping fit."""
    model = AssociationModel(variant="distmult")
    model.node_emb_ = np.asarray(emb, dtype=np.float64)
    model.rel_params_ = np.asarray(rel, dtype=np.float64)
    model.dim_ = model.node_emb_.shape[1]
    n_rel = model.rel_params_.shape[0]
    if symmetric is None:
        symmetric = [False] * n_rel
    model.relations_ = RelationTable([f"r{i}" for i in range(n_rel)], symmetric)
    return model


def kb6():
    """Six nodes, two relations, two eval triples; every rank known by hand.

    Embeddings are scalars e_i = i + 1 with unit relation vectors, so the
    distmult score of (s, r, t) is (s+1)(t+1). Train edges:

        (0, likes, 1), (2, likes, 1), (3, likes, 4), (5, similar_to, 1)

    Eval triples and their instance-by-instance ranks (expected-rank rule
    fallback, filters from train plus the eval split itself):

        (2, likes, 4)       target side: keep {0,3,4,5}, scores 3/12/15/18,
                            gold 15 beaten once               -> rank 2
                            source side: keep {0,1,2,5}, scores 5/10/15/30,
                            gold 15 beaten once               -> rank 2
        (0, similar_to, 3)  no reciprocal edge either way; pool is
                            6 - |{query}| = 5                 -> rank 3.0 twice

    Report: MR 2.5, MRR 100*(1/2+1/2+1/3+1/3)/4 = 41.666,
    H@10 100, H@1 0. Per relation: likes MR 2 MRR 50, similar_to MR 3
    MRR 33.333.
    """
    graph = MultiRelGraph(6, 2)
    graph.add_edge(0, 0, 1)
    graph.add_edge(2, 0, 1)
    graph.add_edge(3, 0, 4)
    graph.add_edge(5, 1, 1)
    relations = RelationTable(["likes", "similar_to"], [False, True])
    emb = np.arange(1.0, 7.0)[:, None]
    assoc = manual_distmult(emb, np.ones((2, 1)), symmetric=[False, True])
    eval_triples = np.array([[2, 0, 4], [0, 1, 3]], dtype=np.int64)
    filters = FilterSet.build(graph, eval_triples)
    expected_ranks = [2.0, 2.0, 3.0, 3.0]
    return {
        "graph": graph,
        "relations": relations,
        "assoc": assoc,
        "eval_triples": eval_triples,
        "filters": filters,
        "expected_ranks": expected_ranks,
    }


def make_toy_dataset(root: Path) -> dict[str, Path]:
    """20 synsets, 3 relations, a config file; all splits fully deterministic.

    Train: a hypernym tree, a part_of shift pattern, 4 similar_to pairs.
    Dev and test take 8 absent triples each from a fixed enumeration, so
    both contain symmetric and non-symmetric instances.
    """
    nodes = [f"n{i:02d}.x.01" for i in range(20)]
    train = [(nodes[i], "hypernym", nodes[(i - 1) // 2]) for i in range(1, 20)]
    train += [(nodes[i], "part_of", nodes[(i + 3) % 20]) for i in range(15)]
    train += [(nodes[2 * i], "similar_to", nodes[2 * i + 1]) for i in range(4)]
    seen = set(train)
    held = []
    for i in range(20):
        for rel, j in (
            ("hypernym", (i + 7) % 20),
            ("part_of", (i + 9) % 20),
            ("similar_to", (i + 5) % 20),
        ):
            cand = (nodes[i], rel, nodes[j])
            if i != j and cand not in seen:
                held.append(cand)
                seen.add(cand)
    splits = {"train": train, "dev": held[:8], "test": held[8:16]}
    paths = {}
    for name, rows in splits.items():
        paths[name] = root / f"{name}.tsv"
        with open(paths[name], "w", encoding="utf-8") as fh:
            for s, r, t in rows:
                fh.write(f"{s}\t{r}\t{t}\n")
    paths["config"] = root / "run.cfg"
    paths["out"] = root / "run"
    paths["config"].write_text(
        f"""dim = 8
assoc_epochs = 15
patience = 4
m3gm_epochs = 2
proposal_cutoff = 30
k = 10
alpha_steps = 21
seed = 3
train_path = {paths['train']}
dev_path = {paths['dev']}
test_path = {paths['test']}
out_dir = {paths['out']}
""",
        encoding="utf-8",
    )
    return paths


@pytest.fixture(scope="session")
def toy_workspace(tmp_path_factory):
    return make_toy_dataset(tmp_path_factory.mktemp("toy"))


@pytest.fixture(scope="session")
def toy_run(toy_workspace):
    """The full pipeline executed once over the toy workspace."""
    cfg = RunConfig.from_file(toy_workspace["config"], env={})
    artifacts, report = run_pipeline(cfg)
    return {"cfg": cfg, "artifacts": artifacts, "report": report, **toy_workspace}
