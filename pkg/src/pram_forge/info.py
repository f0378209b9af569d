"""Entropy and mutual information in nats.

``mutual_information`` is the closed form for the uniform-off-diagonal
channel and costs O(S); ``plugin_mi`` is the empirical three-entropy
estimate from paired columns.
"""
from __future__ import annotations

import numpy as np
from scipy.special import xlogy

from .core import (
    DimensionMismatchError,
    EmptyInputError,
    LengthMismatchError,
    MicrodataColumn,
    as_probs,
)


def entropy(d) -> float:
    p = as_probs(d)
    return float(max(-xlogy(p, p).sum(), 0.0))


def _entropy_counts(counts: np.ndarray) -> float:
    n = counts.sum()
    c = counts[counts > 0].astype(float)
    # H = log n - (1/n) sum c log c, exact for integer tables
    return float(np.log(n) - xlogy(c, c).sum() / n)


def _check_q(p: np.ndarray, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != p.shape[-1]:
        raise DimensionMismatchError(f"p has {p.shape[-1]} categories, q has {q.shape[-1]}")
    return q


def _marginal(p: np.ndarray, Q: np.ndarray) -> np.ndarray:
    S = p.shape[-1]
    leak = p * (1.0 - Q) / (S - 1)
    shared = leak.sum(axis=-1, keepdims=True)
    return p * Q + shared - leak


def marginal_z(p, q) -> np.ndarray:
    """Law of the privatized value, ``m_j = p_j q_j + sum_{k!=j} p_k (1-q_k)/(S-1)``."""
    p = as_probs(p)
    q = _check_q(p, q)
    return _marginal(p, q)


def mi_batch(p: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Row-wise f(q) for a stack of retention vectors ``Q`` of shape ``(B, S)``.

    ``p`` must already be validated. Negative round-off is clamped to 0.
    """
    S = p.shape[-1]
    Q = np.atleast_2d(Q)
    R = 1.0 - Q
    cond = (p * (xlogy(Q, Q) + xlogy(R, R / (S - 1)))).sum(axis=-1)
    m = _marginal(p, Q)
    f = cond - xlogy(m, m).sum(axis=-1)
    return np.maximum(f, 0.0)


def mutual_information(p, q) -> float:
    p = as_probs(p)
    q = _check_q(p, q)
    if q.ndim != 1:
        raise DimensionMismatchError("q must be a vector")
    return float(mi_batch(p, q[None, :])[0])


def plugin_mi_counts(joint: np.ndarray) -> float:
    """Three-entropy estimate ``H(X) + H(Z) - H(X,Z)`` from a joint count table."""
    joint = np.asarray(joint)
    if joint.sum() <= 0:
        raise EmptyInputError("empty joint table")
    hx = _entropy_counts(joint.sum(axis=1))
    hz = _entropy_counts(joint.sum(axis=0))
    hxz = _entropy_counts(joint.ravel())
    return max(hx + hz - hxz, 0.0)


def plugin_mi(x: MicrodataColumn, z: MicrodataColumn) -> float:
    if len(x) != len(z):
        raise LengthMismatchError(f"columns have lengths {len(x)} and {len(z)}")
    if len(x) == 0:
        raise EmptyInputError("plug-in MI needs at least one record")
    kx, kz = x.size, z.size
    joint = np.bincount((x.records - 1) * kz + (z.records - 1), minlength=kx * kz)
    return plugin_mi_counts(joint.reshape(kx, kz))

