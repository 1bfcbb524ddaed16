"""Node embeddings from word vectors: lemma averaging with seeded fallback.

A synset like "find_out.v.01" is represented by the mean of the word vectors
of all wordform tokens of all its lemmas, splitting multiword lemmas on
underscores and keeping token multiplicity (a token naming the synset twice
weighs twice). Synsets with no covered token get a deterministic random
vector, uniform in [-0.5/d, 0.5/d] per coordinate. Vectors can also be loaded
verbatim from a text file, bypassing averaging entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DimensionError, VocabularyError

PROVENANCE_KINDS = ("averaged", "random", "loaded")


class WordVectorTable:
    """Case-insensitive token -> vector lookup with a uniform dimension."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        if not vectors:
            raise DimensionError("word vector table is empty")
        self._table: dict[str, np.ndarray] = {}
        self.dim = -1
        for token, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1:
                raise DimensionError(f"vector for {token!r} is not 1-dimensional")
            if self.dim < 0:
                self.dim = arr.shape[0]
            elif arr.shape[0] != self.dim:
                raise DimensionError(
                    f"vector for {token!r} has dimension {arr.shape[0]}, "
                    f"table uses {self.dim}"
                )
            self._table.setdefault(token.lower(), arr)

    @classmethod
    def from_file(cls, path) -> "WordVectorTable":
        """Read "token v1 ... vd" lines; a word2vec-style count/dim header is skipped."""
        vectors: dict[str, np.ndarray] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.rstrip("\n").split(" ")
                if lineno == 1 and len(parts) == 2:
                    try:
                        int(parts[0]), int(parts[1])
                        continue
                    except ValueError:
                        pass
                if len(parts) < 2:
                    raise DataFormatError(f"{path}:{lineno}: no vector values")
                try:
                    vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
                except ValueError:
                    raise DataFormatError(
                        f"{path}:{lineno}: non-numeric vector component"
                    ) from None
                if parts[0].lower() not in vectors:
                    vectors[parts[0].lower()] = vec
        return cls(vectors)

    def get(self, token: str) -> np.ndarray | None:
        return self._table.get(token.lower())

    def __contains__(self, token: str) -> bool:
        return token.lower() in self._table

    def __len__(self) -> int:
        return len(self._table)


@dataclass
class SynsetEmbeddings:
    """Dense |V| x d matrix aligned to synset handles, with per-row provenance."""

    vectors: np.ndarray
    provenance: list[str]

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise DimensionError("embedding matrix must be 2-dimensional")
        if len(self.provenance) != self.vectors.shape[0]:
            raise DimensionError("provenance length does not match matrix rows")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def coverage(self) -> dict[str, int]:
        out = {kind: 0 for kind in PROVENANCE_KINDS}
        for p in self.provenance:
            out[p] += 1
        return out

    def coverage_report(self) -> str:
        n = max(len(self), 1)
        parts = [
            f"{kind}: {count} ({100.0 * count / n:.1f}%)"
            for kind, count in self.coverage().items()
        ]
        return f"{len(self)} synsets; " + ", ".join(parts)


def default_lemmas(synset_name: str) -> list[str]:
    """The word part of a dotted synset name; the name itself when undotted.

    "find_out.v.01" -> ["find_out"]. Datasets that ship a richer lemma
    inventory pass it explicitly instead.
    """
    parts = synset_name.split(".")
    if len(parts) >= 3:
        return [".".join(parts[:-2])]
    return [synset_name]


def read_lemma_file(path) -> dict[str, list[str]]:
    """Parse "synset<TAB>lemma..." lines into a lemma inventory."""
    lemmas: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 2 or not all(parts):
                raise DataFormatError(
                    f"{path}:{lineno}: expected synset plus at least one lemma"
                )
            if parts[0] in lemmas:
                raise DataFormatError(f"{path}:{lineno}: duplicate synset {parts[0]!r}")
            lemmas[parts[0]] = parts[1:]
    return lemmas


def average_synset(lemmas: list[str], wv: WordVectorTable) -> np.ndarray | None:
    """Mean vector over all covered wordform tokens, or None if none covered.

    Lemmas split on underscores; token multiplicity is kept, so a wordform
    shared by two lemmas weighs twice. Uncovered tokens do not count toward
    the divisor.
    """
    total = np.zeros(wv.dim, dtype=np.float64)
    covered = 0
    for lemma in lemmas:
        for token in lemma.split("_"):
            if not token:
                continue
            vec = wv.get(token)
            if vec is not None:
                total += vec
                covered += 1
    if covered == 0:
        return None
    return total / covered


def build_synset_embeddings(
    names: list[str],
    wv: WordVectorTable | None = None,
    *,
    dim: int | None = None,
    seed: int = 0,
    lemmas: dict[str, list[str]] | None = None,
) -> SynsetEmbeddings:
    """Averaged vectors where the word table covers a synset, random elsewhere.

    With wv=None every synset gets a random vector (dim is then required).
    Random rows are drawn in synset order from one seeded generator, so the
    result is a pure function of (names, wv, seed, lemmas).
    """
    if wv is not None:
        if dim is not None and dim != wv.dim:
            raise DimensionError(
                f"requested dimension {dim}, word vectors have {wv.dim}"
            )
        dim = wv.dim
    elif dim is None:
        raise DimensionError("dim is required when no word vectors are given")
    rng = np.random.default_rng(seed)
    vectors = np.empty((len(names), dim), dtype=np.float64)
    provenance = []
    half = 0.5 / dim
    for i, name in enumerate(names):
        row = None
        if wv is not None:
            lem = lemmas.get(name, []) if lemmas is not None else default_lemmas(name)
            row = average_synset(lem, wv)
        if row is None:
            vectors[i] = rng.uniform(-half, half, size=dim)
            provenance.append("random")
        else:
            vectors[i] = row
            provenance.append("averaged")
    return SynsetEmbeddings(vectors, provenance)


def save_synset_vectors(path, names: list[str], emb: SynsetEmbeddings) -> None:
    """One "name v1 ... vd" line per synset; floats printed to round-trip exactly."""
    if len(names) != len(emb):
        raise DimensionError(
            f"{len(names)} names against {len(emb)} embedding rows"
        )
    with open(path, "w", encoding="utf-8") as fh:
        for name, row in zip(names, emb.vectors):
            fh.write(name + " " + " ".join(repr(float(x)) for x in row) + "\n")


def load_synset_vectors(path, names: list[str], dim: int | None = None) -> SynsetEmbeddings:
    """Read a synset-vector file and align rows to the given name order."""
    index = {name: i for i, name in enumerate(names)}
    vectors = np.zeros((len(names), 0), dtype=np.float64)
    seen = np.zeros(len(names), dtype=bool)
    file_dim = dim
    rows: np.ndarray | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                raise DataFormatError(f"{path}:{lineno}: no vector values")
            name = parts[0]
            if name not in index:
                raise VocabularyError(f"{path}:{lineno}: unknown synset {name!r}")
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError:
                raise DataFormatError(
                    f"{path}:{lineno}: non-numeric vector component"
                ) from None
            if file_dim is None:
                file_dim = vec.shape[0]
            if vec.shape[0] != file_dim:
                raise DimensionError(
                    f"{path}:{lineno}: dimension {vec.shape[0]}, expected {file_dim}"
                )
            if rows is None:
                rows = np.zeros((len(names), file_dim), dtype=np.float64)
            i = index[name]
            if seen[i]:
                raise DataFormatError(f"{path}:{lineno}: duplicate synset {name!r}")
            rows[i] = vec
            seen[i] = True
    if rows is None:
        raise DataFormatError(f"{path}: empty vector file")
    if not seen.all():
        missing = names[int(np.flatnonzero(~seen)[0])]
        raise VocabularyError(f"{path}: no vector for synset {missing!r}")
    return SynsetEmbeddings(rows, ["loaded"] * len(names))
