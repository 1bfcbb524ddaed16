"""Flat key=value run configuration with env overrides and a stable hash.

One RunConfig drives every pipeline stage. Hyperparameter fields feed a
sha256 content hash that each produced artifact embeds in its header, so a
later stage can refuse inputs built under different settings. Path fields
locate files but stay out of the hash: moving a workspace does not orphan
its artifacts, and cross-dataset mixups are caught structurally when an
artifact is checked against the bundle it is loaded with.

Precedence, lowest to highest: dataclass defaults, config file, environment
variables (M3GM_<FIELD>), explicit overrides (CLI flags).
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass

from .errors import ConfigError

_PATH_FIELDS = (
    "train_path",
    "dev_path",
    "test_path",
    "vectors_path",
    "lemmas_path",
    "out_dir",
)

ENV_PREFIX = "M3GM_"


@dataclass
class RunConfig:
    # association model
    model: str = "transe"
    dim: int = 300
    assoc_negatives: int = 10
    assoc_learning_rate: float = 0.01
    assoc_epochs: int = 100
    patience: int = 5
    symmetric_cadence: int = 5
    # graph reranker
    margin: float = 1.0
    l2: float = 0.01
    m3gm_negatives: int = 10
    m3gm_epochs: int = 4
    m3gm_learning_rate: float = 0.1
    proposal_cutoff: int = 500
    fine_tune: bool = False
    train_only: bool = False
    # reranking and evaluation
    k: int = 100
    alpha_steps: int = 101
    fallback: str = "shuffle"
    # shared
    seed: int = 0
    symmetric_relations: str = "also_see,derivationally_related_form,similar_to,verb_group"
    # file locations, excluded from the hash
    train_path: str = ""
    dev_path: str = ""
    test_path: str = ""
    vectors_path: str = ""
    lemmas_path: str = ""
    out_dir: str = "run"

    def symmetric_set(self) -> tuple[str, ...]:
        parts = [p.strip() for p in self.symmetric_relations.split(",")]
        return tuple(p for p in parts if p)

    def to_text(self) -> str:
        """Canonical rendering: every field, sorted by name, one per line."""
        lines = []
        for f in sorted(dataclasses.fields(self), key=lambda f: f.name):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        """12-hex digest over the non-path fields."""
        lines = [
            f"{f.name} = {getattr(self, f.name)}"
            for f in sorted(dataclasses.fields(self), key=lambda f: f.name)
            if f.name not in _PATH_FIELDS
        ]
        blob = "\n".join(lines).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]

    def stage_seed(self, stage: str) -> int:
        """Distinct deterministic seed per pipeline stage from the root seed."""
        digest = hashlib.sha256(f"{self.seed}/{stage}".encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big")

    @classmethod
    def from_file(cls, path=None, env=None, overrides=None) -> "RunConfig":
        values: dict[str, object] = {}
        if path is not None:
            values.update(_parse_file(path))
        for key, raw in _env_pairs(env if env is not None else os.environ):
            values[key] = _coerce(key, raw)
        if overrides:
            for key, val in overrides.items():
                _field(key)
                values[key] = val
        return cls(**values)


def _field(name: str) -> dataclasses.Field:
    by_name = {f.name: f for f in dataclasses.fields(RunConfig)}
    if name not in by_name:
        raise ConfigError(f"unknown config key {name!r}")
    return by_name[name]


def _coerce(key: str, raw: str):
    kind = _field(key).type
    raw = raw.strip()
    try:
        if kind == "bool":
            lowered = raw.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from None


def _parse_file(path) -> dict[str, object]:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            values[key.strip()] = _coerce(key.strip(), raw)
    return values


def _env_pairs(env) -> list[tuple[str, str]]:
    names = {f.name for f in dataclasses.fields(RunConfig)}
    pairs = []
    for key in sorted(env):
        if not key.startswith(ENV_PREFIX):
            continue
        field_name = key[len(ENV_PREFIX):].lower()
        if field_name in names:
            pairs.append((field_name, env[key]))
    return pairs
