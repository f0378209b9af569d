"""Linearized alpha-DP feasible set for the retention vector ``q``.

For every ordered pair ``(k, l)``, ``k != l``, with ``x = q_k`` and ``y = q_l``:

* family 1: ``(S-1) x + e^a y <= e^a``
* family 2: ``-x - (S-1) e^a y <= -1``
* family 3: ``e^a y - x <= e^a - 1``   (only when ``S >= 3``)

These are the three likelihood-ratio bounds of the uniform-off-diagonal
channel cleared of denominators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DimensionMismatchError,
    PramMatrix,
    TooFewCategoriesError,
    check_alpha,
)

FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class ConstraintSystem:
    """Rows ``coeffs @ q <= bounds``; ``keys[r] = (k, l, family)`` (0-based k, l)."""

    coeffs: np.ndarray
    bounds: np.ndarray
    keys: tuple[tuple[int, int, int], ...]
    alpha: float
    size: int

    def __len__(self) -> int:
        return len(self.bounds)

    def slack(self, q) -> np.ndarray:
        return self.bounds - self.coeffs @ np.asarray(q, dtype=float)


def build_constraint_system(S: int, alpha: float) -> ConstraintSystem:
    if S < 2:
        raise TooFewCategoriesError("need at least 2 categories")
    alpha = check_alpha(alpha)
    ea = math.exp(alpha)
    families = (1, 2, 3) if S >= 3 else (1, 2)
    rows, bounds, keys = [], [], []
    for k in range(S):
        for l in range(S):
            if k == l:
                continue
            for fam in families:
                row = np.zeros(S)
                if fam == 1:
                    row[k], row[l], b = S - 1, ea, ea
                elif fam == 2:
                    row[k], row[l], b = -1.0, -(S - 1) * ea, -1.0
                else:
                    row[k], row[l], b = -1.0, ea, ea - 1.0
                rows.append(row)
                bounds.append(b)
                keys.append((k, l, fam))
    coeffs = np.array(rows)
    bvec = np.array(bounds)
    coeffs.setflags(write=False)
    bvec.setflags(write=False)
    return ConstraintSystem(coeffs, bvec, tuple(keys), alpha, S)


def is_feasible(q, system: ConstraintSystem, tol: float = FEASIBILITY_TOL) -> bool:
    q = np.asarray(q, dtype=float)
    if q.shape != (system.size,):
        raise DimensionMismatchError(f"q has shape {q.shape}, system expects ({system.size},)")
    return bool(np.all(system.coeffs @ q <= system.bounds + tol))


def feasible_mask(Q, system: ConstraintSystem, tol: float = FEASIBILITY_TOL) -> np.ndarray:
    """Vectorized :func:`is_feasible` over the rows of ``Q`` (shape ``(B, S)``)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[1] != system.size:
        raise DimensionMismatchError("column count does not match system size")
    return np.all(Q @ system.coeffs.T <= system.bounds + tol, axis=1)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # 0/0 is an event impossible under both inputs: no constraint.
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / den
    r = np.where(den == 0, np.where(num > 0, np.inf, 0.0), r)
    return r


def _ratio_tables(q: np.ndarray) -> list[np.ndarray]:
    S = len(q)
    x = np.broadcast_to(q[:, None], (S, S))  # q_k
    y = np.broadcast_to(q[None, :], (S, S))  # q_k'
    tables = [_ratio((S - 1) * x, 1 - y), _ratio(1 - x, (S - 1) * y)]
    if S >= 3:
        tables.append(_ratio(1 - x, 1 - y))
    off = ~np.eye(S, dtype=bool)
    return [np.where(off, t, -np.inf) for t in tables]


def dp_ratio(M) -> float:
    """Largest likelihood ratio ``Q(z|x) / Q(z|x')`` over ``x != x'`` and ``z``."""
    q = np.asarray(M.q if isinstance(M, PramMatrix) else M, dtype=float)
    if q.size < 2:
        raise TooFewCategoriesError("need at least 2 categories")
    return float(max(t.max() for t in _ratio_tables(q)))


@dataclass(frozen=True)
class Certificate:
    dp_ratio: float
    exp_alpha: float
    passed: bool
    argmax: tuple[int, int, int]  # (k, k', family), 1-based categories

    def to_dict(self) -> dict:
        k, kp, fam = self.argmax
        ratio = self.dp_ratio if math.isfinite(self.dp_ratio) else "inf"
        return {
            "dp_ratio": ratio,
            "exp_alpha": self.exp_alpha,
            "pass": self.passed,
            "argmax": {"k": k, "kprime": kp, "family": fam},
        }


def certify(M, alpha: float, tol: float = FEASIBILITY_TOL) -> Certificate:
    """Compute the DP ratio of ``M`` and compare it with ``e^alpha``.

    Passes iff ``dp_ratio <= e^alpha * (1 + tol)``. The arg-max is reported
    with 1-based categories; ties resolve to the first (k, k', family) in
    lexicographic order.
    """
    alpha = check_alpha(alpha)
    q = np.asarray(M.q if isinstance(M, PramMatrix) else M, dtype=float)
    tables = _ratio_tables(q)
    best, arg = -np.inf, (0, 0, 0)
    for k in range(len(q)):
        for kp in range(len(q)):
            if k == kp:
                continue
            for fam, t in enumerate(tables, start=1):
                if t[k, kp] > best:
                    best, arg = t[k, kp], (k + 1, kp + 1, fam)
    ea = math.exp(alpha)
    return Certificate(float(best), ea, bool(best <= ea * (1 + tol)), arg)
