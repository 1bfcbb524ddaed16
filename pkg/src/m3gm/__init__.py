"""Link prediction on multirelational graphs with global motif re-ranking.

The package layers a log-linear model over graph motif counts on top of a
local embedding association model. Association models propose and score
candidate target entities; the motif model re-scores each candidate by the
change it would cause in global graph statistics.

Typical flow: load_dataset -> build_synset_embeddings -> AssociationModel
-> M3GMReranker -> tune_alpha -> evaluate; run_pipeline strings the stages
together, and the `m3gm` CLI exposes each one.
"""

from .association import AssociationModel
from .config import RunConfig
from .data import DatasetBundle, load_dataset, read_bundle, write_bundle
from .embeddings import (
    SynsetEmbeddings,
    WordVectorTable,
    build_synset_embeddings,
    load_synset_vectors,
    save_synset_vectors,
)
from .errors import M3GMError
from .evaluation import (
    AssociationSystem,
    EvalInstance,
    EvalReport,
    FilterSet,
    RerankedSystem,
    RuleBaseline,
    build_instances,
    evaluate,
    read_alpha,
    tune_alpha,
    write_alpha,
)
from .graph import Edge, MultiRelGraph, RelationTable, Vocabulary, read_graph, write_graph
from .motifs import (
    FeatureDelta,
    FeatureRegistry,
    FeatureVector,
    count_all,
    delta_add,
    delta_substitute,
    score_delta,
)
from .pipeline import evaluate_split, run_pipeline
from .reranker import (
    M3GMReranker,
    proposal_weights,
    read_theta,
    sample_negative,
    train_m3gm,
    write_theta,
)

__version__ = "0.1.0"

__all__ = [
    "AssociationModel",
    "AssociationSystem",
    "DatasetBundle",
    "Edge",
    "EvalInstance",
    "EvalReport",
    "FeatureDelta",
    "FeatureRegistry",
    "FeatureVector",
    "FilterSet",
    "M3GMError",
    "M3GMReranker",
    "MultiRelGraph",
    "RelationTable",
    "RerankedSystem",
    "RuleBaseline",
    "RunConfig",
    "SynsetEmbeddings",
    "Vocabulary",
    "WordVectorTable",
    "__version__",
    "build_instances",
    "build_synset_embeddings",
    "count_all",
    "delta_add",
    "delta_substitute",
    "evaluate",
    "evaluate_split",
    "load_dataset",
    "load_synset_vectors",
    "proposal_weights",
    "read_alpha",
    "read_bundle",
    "read_graph",
    "read_theta",
    "run_pipeline",
    "sample_negative",
    "save_synset_vectors",
    "score_delta",
    "train_m3gm",
    "tune_alpha",
    "write_alpha",
    "write_bundle",
    "write_graph",
    "write_theta",
]
