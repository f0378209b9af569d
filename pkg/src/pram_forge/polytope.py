"""Vertices of the DP polytope.

Two independent routes:

* :func:`enumerate_vertices_prop2` builds the closed-form vertex families
  (constant, sign-mixed, and the two single-special-coordinate shapes) from
  the four levels in :class:`VertexValues`.
* :func:`enumerate_vertices_oracle` solves every square subsystem of the
  linear constraint rows and keeps the feasible solutions. It knows nothing
  about the closed form and is capped at ``S <= 5``.

A vertex from the closed form is described by a code vector, one level per
coordinate, with codes ordered ``V_MAX < V_PLUS < V_MINUS < V_MIN``. That
order is also the tie-break order used by the optimizer.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import NotApplicableError, TooFewCategoriesError, TooLargeError, check_alpha
from .dp_constraints import FEASIBILITY_TOL, build_constraint_system

V_MAX, V_PLUS, V_MINUS, V_MIN = 0, 1, 2, 3
LEVEL_NAMES = ("v_max", "v_plus", "v_minus", "v_min")

ORACLE_MAX_S = 5
DEDUP_TOL = 1e-7
_ORACLE_CHUNK = 1 << 18


@dataclass(frozen=True)
class VertexValues:
    v_plus: float
    v_minus: float
    v_min: float
    v_max: float

    def levels(self) -> np.ndarray:
        """Values indexed by level code."""
        return np.array([self.v_max, self.v_plus, self.v_minus, self.v_min])


def vertex_values(S: int, alpha: float) -> VertexValues:
    if S < 2:
        raise TooFewCategoriesError("need at least 2 categories")
    alpha = check_alpha(alpha)
    ea, ema = math.exp(alpha), math.exp(-alpha)
    return VertexValues(
        v_plus=ea / (ea + S - 1),
        v_minus=ema / (ema + S - 1),
        v_min=ema / (ea + S - 1),
        v_max=ea / (ema + S - 1),
    )


def prop2_threshold(S: int) -> float:
    """Largest alpha for which the closed-form vertex list is complete (S >= 4)."""
    if S < 4:
        return -math.inf
    return math.log((S - 2 + math.sqrt(S * (S - 4))) / 2)


def prop2_applicable(S: int, alpha: float) -> bool:
    if S < 2:
        raise TooFewCategoriesError("need at least 2 categories")
    return S >= 4 and check_alpha(alpha) <= prop2_threshold(S)


@dataclass(frozen=True)
class VertexCandidate:
    pattern: str  # all_plus | all_minus | mixed | min_special | max_special
    codes: tuple[int, ...]
    q: np.ndarray
    special: int | None = None  # 0-based index of the special coordinate

    def counts(self) -> dict[str, int]:
        return pattern_counts(self.codes)


def pattern_counts(codes) -> dict[str, int]:
    c = np.bincount(np.asarray(codes, dtype=np.int64), minlength=4)
    return {"v_plus": int(c[V_PLUS]), "v_minus": int(c[V_MINUS]),
            "v_min": int(c[V_MIN]), "v_max": int(c[V_MAX])}


def classify_codes(codes) -> tuple[str, int | None] | None:
    """Name the vertex family of a code vector, or ``None`` if it is not a vertex."""
    c = np.asarray(codes)
    S = c.size
    n_plus = int(np.sum(c == V_PLUS))
    n_minus = int(np.sum(c == V_MINUS))
    if n_plus == S:
        return "all_plus", None
    if n_minus == S:
        return "all_minus", None
    if n_plus + n_minus == S:
        return ("mixed", None) if 2 <= n_plus <= S - 2 else None
    if n_plus == S - 1 and np.sum(c == V_MIN) == 1:
        return "min_special", int(np.flatnonzero(c == V_MIN)[0])
    if n_minus == S - 1 and np.sum(c == V_MAX) == 1:
        return "max_special", int(np.flatnonzero(c == V_MAX)[0])
    return None


def sign_codes(masks: np.ndarray, S: int) -> np.ndarray:
    """Code rows for sign masks; bit ``S-1-i`` set means coordinate ``i`` is minus.

    Ascending masks therefore give lexicographically ascending code rows.
    """
    shifts = np.arange(S - 1, -1, -1, dtype=np.int64)
    bits = (np.asarray(masks, dtype=np.int64)[:, None] >> shifts) & 1
    return (V_PLUS + bits).astype(np.int8)


def special_codes(S: int) -> np.ndarray:
    """MinSpecial(i) rows for i = 0..S-1, then MaxSpecial(i)."""
    mins = np.full((S, S), V_PLUS, dtype=np.int8)
    np.fill_diagonal(mins, V_MIN)
    maxs = np.full((S, S), V_MINUS, dtype=np.int8)
    np.fill_diagonal(maxs, V_MAX)
    return np.vstack([mins, maxs])


def iter_prop2_code_blocks(S: int, chunk: int = 1 << 16) -> Iterator[np.ndarray]:
    """Code blocks in the canonical candidate order (2^S rows in total)."""
    yield np.vstack([np.full(S, V_PLUS, dtype=np.int8), np.full(S, V_MINUS, dtype=np.int8)])
    total = 1 << S
    for start in range(0, total, chunk):
        masks = np.arange(start, min(start + chunk, total), dtype=np.int64)
        n_minus = np.bitwise_count(masks) if hasattr(np, "bitwise_count") else _popcount(masks)
        n_plus = S - n_minus
        keep = (n_plus >= 2) & (n_plus <= S - 2)
        if keep.any():
            yield sign_codes(masks[keep], S)
    yield special_codes(S)


def _popcount(masks: np.ndarray) -> np.ndarray:
    return np.array([bin(int(m)).count("1") for m in masks], dtype=np.int64)


def codes_to_q(codes, values: VertexValues) -> np.ndarray:
    return values.levels()[np.asarray(codes, dtype=np.int64)]


def enumerate_vertices_prop2(S: int, alpha: float) -> Iterator[VertexCandidate]:
    """Closed-form vertex list, 2^S candidates, in canonical order.

    Order: AllPlus, AllMinus, Mixed (lexicographic in codes), MinSpecial(i),
    MaxSpecial(i).
    """
    if not prop2_applicable(S, alpha):
        raise NotApplicableError(
            f"closed-form vertices need S >= 4 and alpha <= {prop2_threshold(S):.6g} "
            f"(got S={S}, alpha={alpha})"
        )
    vals = vertex_values(S, alpha)
    for block in iter_prop2_code_blocks(S):
        for row in block:
            pattern, special = classify_codes(row)
            q = codes_to_q(row, vals)
            q.setflags(write=False)
            yield VertexCandidate(pattern, tuple(int(c) for c in row), q, special)


def _row_combinations(R: int, S: int, chunk: int) -> Iterator[np.ndarray]:
    combos = itertools.combinations(range(R), S)
    while True:
        flat = np.fromiter(
            itertools.chain.from_iterable(itertools.islice(combos, chunk)), dtype=np.intp
        )
        if flat.size == 0:
            return
        yield flat.reshape(-1, S)


def _dedup(points: np.ndarray, tol: float) -> np.ndarray:
    if len(points) == 0:
        return points
    order = np.lexsort(points.T[::-1])
    points = points[order]
    kept: list[np.ndarray] = []
    for pt in points:
        if not any(np.max(np.abs(pt - k)) <= tol for k in kept):
            kept.append(pt)
    return np.array(kept)


def enumerate_vertices_oracle(S: int, alpha: float, tol: float = FEASIBILITY_TOL) -> np.ndarray:
    """Brute-force vertex set: solve every nonsingular S-row subsystem.

    Returns a ``(V, S)`` array sorted lexicographically, deduplicated within
    L-infinity distance 1e-7.
    """
    if S < 2:
        raise TooFewCategoriesError("need at least 2 categories")
    if S > ORACLE_MAX_S:
        raise TooLargeError(f"oracle enumeration is capped at S={ORACLE_MAX_S}")
    system = build_constraint_system(S, alpha)
    A, b = np.asarray(system.coeffs), np.asarray(system.bounds)
    touches = A != 0
    row_norm = np.linalg.norm(A, axis=1)
    found = []
    for idx in _row_combinations(len(b), S, _ORACLE_CHUNK):
        # every variable must appear in some chosen row, otherwise singular
        idx = idx[touches[idx].any(axis=1).all(axis=1)]
        if len(idx) == 0:
            continue
        As = A[idx]
        # Hadamard ratio: |det| relative to the product of row norms
        scale = np.prod(row_norm[idx], axis=1)
        ok = np.abs(np.linalg.det(As)) > 1e-10 * scale
        if not ok.any():
            continue
        X = np.linalg.solve(As[ok], b[idx[ok]][..., None])[..., 0]
        feas = np.all(X @ A.T <= b + tol, axis=1)
        if feas.any():
            # coarse pre-dedup; the exact merge happens below
            X = X[feas]
            _, first = np.unique(np.round(X, 10), axis=0, return_index=True)
            found.append(X[first])
    if not found:
        return np.empty((0, S))
    pts = np.unique(np.vstack(found), axis=0)
    return _dedup(pts, DEDUP_TOL) + 0.0  # drop signed zeros
