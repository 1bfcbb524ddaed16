"""Triple file ingestion, interning, and split bookkeeping.

Input files carry one edge per line, "source<TAB>relation<TAB>target", with
synsets and relations named by strings. Entity ids are assigned by sorted
name so ingestion order never changes an id. The relation inventory is fixed
by the training split; dev and test may not introduce new relations, but may
(with a warning) mention entities absent from training. Four relation names
are symmetric by default, which routes their eval instances to the
reciprocal-edge rule and keeps their edges out of substitution sampling.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ArtifactMismatchError,
    DataFormatError,
    DuplicateEdgeError,
    VocabularyError,
)
from .graph import MultiRelGraph, RelationTable, Vocabulary

DEFAULT_SYMMETRIC = (
    "also_see",
    "derivationally_related_form",
    "similar_to",
    "verb_group",
)

SPLITS = ("train", "dev", "test")

logger = logging.getLogger("m3gm.data")


def read_triple_file(path) -> list[tuple[int, str, str, str]]:
    """Parse (lineno, source, relation, target) rows from a tab-separated file."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise DataFormatError(
                    f"{path}:{lineno}: expected 3 non-empty tab-separated fields"
                )
            rows.append((lineno, parts[0], parts[1], parts[2]))
    return rows


@dataclass
class DatasetBundle:
    """Interned triples for all three splits over shared name tables."""

    entities: Vocabulary
    relations: RelationTable
    train: np.ndarray
    dev: np.ndarray
    test: np.ndarray

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise VocabularyError(f"unknown split {name!r}, expected one of {SPLITS}")
        return getattr(self, name)

    def graph(self, include_dev: bool = False) -> MultiRelGraph:
        """Training graph, optionally densified with the dev edges."""
        g = MultiRelGraph(len(self.entities), len(self.relations))
        for s, r, t in self.train:
            g.add_edge(int(s), int(r), int(t))
        if include_dev:
            for s, r, t in self.dev:
                g.add_edge(int(s), int(r), int(t))
        return g


def load_dataset(train_path, dev_path, test_path,
                 symmetric=DEFAULT_SYMMETRIC) -> DatasetBundle:
    """Read, validate, and intern the three splits.

    Errors: malformed lines, relations outside the training inventory,
    duplicate triples within or across splits. Entities seen only outside
    the training split are kept but flagged with a warning, and self-loops
    are logged.
    """
    paths = {"train": train_path, "dev": dev_path, "test": test_path}
    raw = {name: read_triple_file(p) for name, p in paths.items()}

    rel_names = sorted({r for _, _, r, _ in raw["train"]})
    rel_ids = {name: i for i, name in enumerate(rel_names)}
    for split in ("dev", "test"):
        for lineno, _, r, _ in raw[split]:
            if r not in rel_ids:
                raise VocabularyError(
                    f"{paths[split]}:{lineno}: relation {r!r} not in training split"
                )

    entity_names = sorted(
        {s for rows in raw.values() for _, s, _, _ in rows}
        | {t for rows in raw.values() for _, _, _, t in rows}
    )
    entities = Vocabulary(entity_names)
    train_entities = {s for _, s, _, _ in raw["train"]} | {
        t for _, _, _, t in raw["train"]
    }
    unseen = len(entity_names) - len(train_entities)
    if unseen:
        warnings.warn(
            f"{unseen} entities appear only in dev/test; their embeddings "
            "never receive training updates"
        )

    seen: dict[tuple[int, int, int], str] = {}
    arrays = {}
    for split in SPLITS:
        rows = []
        loops = 0
        for lineno, s, r, t in raw[split]:
            trip = (entities.id_of(s), rel_ids[r], entities.id_of(t))
            if trip in seen:
                raise DuplicateEdgeError(
                    f"{paths[split]}:{lineno}: triple ({s}, {r}, {t}) "
                    f"already present in {seen[trip]} split"
                )
            seen[trip] = split
            if trip[0] == trip[2]:
                loops += 1
            rows.append(trip)
        if loops:
            logger.warning("%s: %d self-loop triples", paths[split], loops)
        arrays[split] = (
            np.array(rows, dtype=np.int64)
            if rows
            else np.empty((0, 3), dtype=np.int64)
        )

    symmetric = set(symmetric)
    flags = [name in symmetric for name in rel_names]
    relations = RelationTable(rel_names, flags)
    return DatasetBundle(entities, relations, arrays["train"], arrays["dev"], arrays["test"])


# -- bundle directories ----------------------------------------------------------


_BUNDLE_MAGIC = "m3gm-bundle 1"


def write_bundle(directory, bundle: DatasetBundle, config_hash: str = "-") -> None:
    """Serialize an interned bundle as five text files in a directory."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    header = f"# {_BUNDLE_MAGIC} config {config_hash}\n"
    with open(d / "entities.txt", "w", encoding="utf-8") as fh:
        fh.write(header)
        for name in bundle.entities.names:
            fh.write(name + "\n")
    with open(d / "relations.tsv", "w", encoding="utf-8") as fh:
        fh.write(header)
        for name, flag in zip(bundle.relations.names, bundle.relations.symmetric):
            fh.write(f"{name}\t{int(flag)}\n")
    for split in SPLITS:
        with open(d / f"{split}.tsv", "w", encoding="utf-8") as fh:
            fh.write(header)
            for s, r, t in bundle.split(split):
                fh.write(f"{s}\t{r}\t{t}\n")


def _read_lines(path) -> tuple[list[str], str]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(f"# {_BUNDLE_MAGIC} config "):
        raise DataFormatError(f"{path}: missing bundle header")
    return lines[1:], lines[0].split()[-1]


def read_bundle(directory) -> tuple[DatasetBundle, str]:
    """Load a bundle directory; all five files must share one config hash."""
    d = Path(directory)
    hashes = {}

    names, hashes["entities"] = _read_lines(d / "entities.txt")
    entities = Vocabulary(names)

    rel_lines, hashes["relations"] = _read_lines(d / "relations.tsv")
    rel_names, flags = [], []
    for lineno, line in enumerate(rel_lines, start=2):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataFormatError(f"{d / 'relations.tsv'}:{lineno}: bad relation line")
        rel_names.append(parts[0])
        flags.append(bool(int(parts[1])))
    relations = RelationTable(rel_names, flags)

    arrays = {}
    for split in SPLITS:
        path = d / f"{split}.tsv"
        rows, hashes[split] = _read_lines(path)
        triples = np.empty((len(rows), 3), dtype=np.int64)
        for i, line in enumerate(rows):
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataFormatError(f"{path}:{i + 2}: bad triple line")
            triples[i] = [int(x) for x in parts]
        if len(rows) and (
            triples[:, [0, 2]].max() >= len(entities)
            or triples[:, 1].max() >= len(relations)
            or triples.min() < 0
        ):
            raise DataFormatError(f"{path}: id outside bundle tables")
        arrays[split] = triples

    if len(set(hashes.values())) != 1:
        raise ArtifactMismatchError(
            f"{directory}: bundle files carry mixed config hashes {hashes}"
        )
    bundle = DatasetBundle(
        entities, relations, arrays["train"], arrays["dev"], arrays["test"]
    )
    return bundle, hashes["entities"]
