"""Shared domain types, validation helpers and the exception hierarchy.

Categories are 1-based contiguous integers ``1..S``; string labels only exist
at the CSV boundary (see :mod:`pram_forge.mechanism`).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

DIST_TOL = 1e-9
ROW_TOL = 1e-12


class PramError(ValueError):
    """Base class for every error raised by this package."""


class NegativeMassError(PramError):
    pass


class NotNormalizedError(PramError):
    pass


class TooFewCategoriesError(PramError):
    pass


class DimensionMismatchError(PramError):
    pass


class OutOfRangeError(PramError):
    pass


class CategoryOutOfRangeError(PramError):
    pass


class LengthMismatchError(PramError):
    pass


class EmptyInputError(PramError):
    pass


class InconsistentTablesError(PramError):
    pass


class NotApplicableError(PramError):
    pass


class TooLargeError(PramError):
    pass


class InfeasibleStrategyError(PramError):
    pass


class SingularMatrixError(PramError):
    pass


class MissingColumnError(PramError):
    pass


class EmptyFileError(PramError):
    pass


class UnknownLabelError(PramError):
    pass


class IoFailureError(PramError):
    pass


class CertificationError(PramError):
    """A mechanism failed its differential-privacy certificate."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CategoricalDistribution:
    """Probability vector over ``S >= 2`` categories."""

    probs: np.ndarray

    @property
    def size(self) -> int:
        return len(self.probs)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)


def validate_distribution(probs) -> CategoricalDistribution:
    """Check and (within 1e-9) renormalize a probability vector.

    Raises :class:`NegativeMassError`, :class:`NotNormalizedError` or
    :class:`TooFewCategoriesError`.
    """
    if isinstance(probs, CategoricalDistribution):
        return probs
    p = np.array(probs, dtype=float).ravel()
    if p.size == 0:
        raise TooFewCategoriesError("empty probability vector")
    if not np.all(np.isfinite(p)):
        raise NotNormalizedError("probability vector has non-finite entries")
    if np.any(p < 0):
        raise NegativeMassError(f"negative probability mass: {p.min()!r}")
    total = math.fsum(p)
    if abs(total - 1.0) > DIST_TOL:
        raise NotNormalizedError(f"probabilities sum to {total!r}, not 1")
    if p.size < 2:
        raise TooFewCategoriesError("need at least 2 categories")
    if total != 1.0:
        p = p / total
    return CategoricalDistribution(_frozen(p))


def as_probs(p) -> np.ndarray:
    return np.asarray(validate_distribution(p).probs)


def check_alpha(alpha) -> float:
    """Validate a privacy level: finite and nonnegative (nats)."""
    try:
        a = float(alpha)
    except (TypeError, ValueError) as exc:
        raise OutOfRangeError(f"alpha must be a real number, got {alpha!r}") from exc
    if not math.isfinite(a) or a < 0:
        raise OutOfRangeError(f"alpha must be finite and >= 0, got {alpha!r}")
    return a


def as_retention(q, size: int | None = None) -> np.ndarray:
    """Validate a retention vector: entries in [0, 1], optional length check."""
    q = np.array(q, dtype=float).ravel()
    if size is not None and q.size != size:
        raise DimensionMismatchError(f"retention vector has length {q.size}, expected {size}")
    if q.size < 2:
        raise TooFewCategoriesError("need at least 2 categories")
    if not np.all(np.isfinite(q)) or np.any(q < 0) or np.any(q > 1):
        raise OutOfRangeError("retention probabilities must lie in [0, 1]")
    return _frozen(q)


@dataclass(frozen=True)
class PramMatrix:
    """Randomizing matrix with diagonal ``q`` and uniform off-diagonal rows."""

    q: np.ndarray

    @property
    def size(self) -> int:
        return len(self.q)

    @property
    def matrix(self) -> np.ndarray:
        S = self.size
        off = (1.0 - self.q) / (S - 1)
        M = np.repeat(off[:, None], S, axis=1)
        np.fill_diagonal(M, self.q)
        return M

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass(frozen=True)
class MicrodataColumn:
    """Ordered category ids in ``1..size`` plus an id -> label map."""

    records: np.ndarray
    size: int
    labels: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        r = np.array(self.records, dtype=np.int64).ravel()
        if self.size < 1:
            raise TooFewCategoriesError("column must have at least one category")
        if r.size and (r.min() < 1 or r.max() > self.size):
            raise CategoryOutOfRangeError(f"record ids must lie in 1..{self.size}")
        object.__setattr__(self, "records", _frozen(r))
        object.__setattr__(self, "labels", dict(self.labels))

    def __len__(self) -> int:
        return len(self.records)


def make_column(records: Sequence[int], size: int | None = None, labels=None) -> MicrodataColumn:
    r = np.asarray(records, dtype=np.int64)
    if size is None:
        size = int(r.max()) if r.size else 1
    return MicrodataColumn(r, size, labels or {})


def frequencies(column: MicrodataColumn) -> np.ndarray:
    """Count table ``counts[k-1] = #{i : records[i] == k}``."""
    return np.bincount(column.records - 1, minlength=column.size).astype(np.int64)


def thread_count(threads: int | None = None) -> int:
    """Worker cap: explicit argument, else ``PRAM_FORGE_THREADS``, else CPU count."""
    if threads is None:
        env = os.environ.get("PRAM_FORGE_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))
