"""Apply a PRAM matrix to microdata, plus CSV I/O.

Randomness is counter based: record ``i`` consumes 64-bit word ``i % 4`` of
Philox block ``i // 4`` under key ``seed``. The output therefore depends only
on ``(x, M, seed)`` and not on chunking or thread scheduling.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    CategoryOutOfRangeError,
    CertificationError,
    EmptyFileError,
    IoFailureError,
    MicrodataColumn,
    MissingColumnError,
    OutOfRangeError,
    PramMatrix,
    UnknownLabelError,
    as_probs,
    as_retention,
    check_alpha,
    thread_count,
)
from .dp_constraints import Certificate, certify

_WORDS_PER_BLOCK = 4
DEFAULT_CHUNK = 1 << 16


def build_matrix(q) -> PramMatrix:
    """Matrix with ``M[k, k] = q_k`` and ``M[k, j] = (1 - q_k) / (S - 1)``."""
    return PramMatrix(as_retention(q))


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise OutOfRangeError("seed must be an unsigned 64-bit integer")
    return seed


def record_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniforms in [0, 1) for records ``start .. start+count-1`` (start % 4 == 0)."""
    if start % _WORDS_PER_BLOCK:
        raise ValueError("start must be a multiple of 4")
    gen = np.random.Philox(key=_check_seed(seed), counter=start // _WORDS_PER_BLOCK)
    raw = gen.random_raw(count)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _privatize_chunk(x: np.ndarray, q: np.ndarray, seed: int, start: int) -> np.ndarray:
    S = len(q)
    u = record_uniforms(seed, start, len(x))
    qx = q[x - 1]
    keep = u < qx
    # rescale the leftover mass onto the S-1 other categories, natural order
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(keep, 0.0, (u - qx) / (1.0 - qx))
    j = np.minimum((v * (S - 1)).astype(np.int64), S - 2)
    other = np.where(j + 1 < x, j + 1, j + 2)
    return np.where(keep, x, other)


def privatize(x: MicrodataColumn, M: PramMatrix, seed: int, threads: int | None = None,
              chunk: int = DEFAULT_CHUNK) -> MicrodataColumn:
    """Draw ``Z_i`` from row ``X_i`` of ``M`` independently for every record."""
    S = M.size
    if len(x) and x.records.max() > S:
        raise CategoryOutOfRangeError(f"record ids exceed matrix size {S}")
    seed = _check_seed(seed)
    chunk = max(_WORDS_PER_BLOCK, chunk - chunk % _WORDS_PER_BLOCK)
    recs = x.records
    q = np.asarray(M.q)
    starts = range(0, len(recs), chunk)

    def run(s):
        return _privatize_chunk(recs[s:s + chunk], q, seed, s)

    workers = thread_count(threads)
    if workers == 1 or len(starts) <= 1:
        parts = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    z = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    return MicrodataColumn(z, S, x.labels)


def sample_column(p, n: int, seed: int) -> MicrodataColumn:
    """``n`` i.i.d. draws from ``p`` (1-based ids)."""
    p = as_probs(p)
    rng = np.random.default_rng(seed)
    return MicrodataColumn(rng.choice(len(p), size=n, p=p) + 1, len(p))


def fingerprint(column: MicrodataColumn) -> str:
    h = hashlib.sha256()
    h.update(str(column.size).encode())
    h.update(np.ascontiguousarray(column.records, dtype="<i8").tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class PrivatizationRun:
    input_fingerprint: str
    matrix: PramMatrix
    seed: int
    alpha: float
    certificate: Certificate

    @classmethod
    def create(cls, x: MicrodataColumn, M: PramMatrix, seed: int, alpha: float) -> "PrivatizationRun":
        """Certify ``M`` at ``alpha``; raises :class:`CertificationError` on failure."""
        alpha = check_alpha(alpha)
        cert = certify(M, alpha)
        if not cert.passed:
            raise CertificationError(
                f"dp ratio {cert.dp_ratio:.6g} exceeds e^alpha = {cert.exp_alpha:.6g}")
        return cls(fingerprint(x), M, _check_seed(seed), alpha, cert)

    def to_dict(self) -> dict:
        return {
            "input_fingerprint": self.input_fingerprint,
            "q": [float(v) for v in self.matrix.q],
            "seed": self.seed,
            "alpha": self.alpha,
            "certificate": self.certificate.to_dict(),
        }


def run_privatization(x: MicrodataColumn, M: PramMatrix, seed: int, alpha: float,
                      threads: int | None = None) -> tuple[PrivatizationRun, MicrodataColumn]:
    """Certificate first, then privatize; no output without a passing certificate."""
    run = PrivatizationRun.create(x, M, seed, alpha)
    return run, privatize(x, M, seed, threads)


def load_column(path, column: str, labels: dict[str, int] | None = None) -> MicrodataColumn:
    """Read one CSV column and encode it as 1-based ids.

    Without ``labels``, ids follow first appearance. With ``labels``
    (label -> id), unseen values raise :class:`UnknownLabelError`.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise EmptyFileError(f"{path}: no header row")
            if column not in header:
                raise MissingColumnError(f"{path}: no column {column!r} in {header}")
            col = header.index(column)
            values = [row[col] for row in reader if row]
    except OSError as exc:
        raise IoFailureError(str(exc)) from exc
    if labels is None:
        mapping: dict[str, int] = {}
        for v in values:
            mapping.setdefault(v, len(mapping) + 1)
    else:
        mapping = {str(k): int(v) for k, v in labels.items()}
        missing = sorted(set(values) - mapping.keys())
        if missing:
            raise UnknownLabelError(f"values not in label map: {missing[:5]}")
    size = max(mapping.values(), default=1)
    records = np.array([mapping[v] for v in values], dtype=np.int64)
    return MicrodataColumn(records, size, {i: s for s, i in mapping.items()})


def save_column(column: MicrodataColumn, path, column_name: str) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([column_name])
            lab = column.labels
            w.writerows([lab.get(int(r), str(int(r)))] for r in column.records)
    except OSError as exc:
        raise IoFailureError(str(exc)) from exc


def write_manifest(run: PrivatizationRun, path) -> None:
    try:
        Path(path).write_text(json.dumps(run.to_dict(), indent=2) + os.linesep)
    except OSError as exc:
        raise IoFailureError(str(exc)) from exc
