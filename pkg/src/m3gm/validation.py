"""Input validation helpers shared by the estimators and the graph layer."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, IdOutOfRangeError, NotFittedError


def check_fitted(estimator, attributes: list[str]) -> None:
    """Raise unless every learned attribute (trailing underscore) is set."""
    missing = [a for a in attributes if getattr(estimator, a, None) is None]
    if missing:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; "
            f"missing attributes: {', '.join(missing)}. Call fit() first."
        )


def check_ids(ids, upper: int, what: str) -> np.ndarray:
    """Coerce to an int64 array and verify every id lies in [0, upper)."""
    arr = np.asarray(ids, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= upper):
        bad = arr[(arr < 0) | (arr >= upper)][0]
        raise IdOutOfRangeError(f"{what} id {bad} out of range [0, {upper})")
    return arr


def check_matrix(X, n_cols: int | None, what: str) -> np.ndarray:
    """Coerce to a 2-d float64 array, optionally pinning the column count."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{what} must be 2-dimensional, got shape {arr.shape}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise DimensionError(
            f"{what} must have {n_cols} columns, got {arr.shape[1]}"
        )
    if not np.isfinite(arr).all():
        raise DimensionError(f"{what} contains non-finite values")
    return arr


def check_triples(triples, n_nodes: int, n_relations: int) -> np.ndarray:
    """Coerce to an (n, 3) int64 array of (source, relation, target) rows."""
    arr = np.asarray(triples, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DimensionError(
            f"triples must have shape (n, 3), got {arr.shape}"
        )
    check_ids(arr[:, 0], n_nodes, "source")
    check_ids(arr[:, 1], n_relations, "relation")
    check_ids(arr[:, 2], n_nodes, "target")
    return arr
