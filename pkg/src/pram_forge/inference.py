"""Recover the raw distribution from privatized data; disclosure-risk indices."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .core import (
    CategoricalDistribution,
    EmptyInputError,
    InconsistentTablesError,
    LengthMismatchError,
    MicrodataColumn,
    PramMatrix,
    SingularMatrixError,
    frequencies,
    validate_distribution,
)

MAX_CONDITION = 1e12
EM_TOL = 1e-10
EM_MAX_ITER = 10_000


@dataclass(frozen=True)
class EstimationResult:
    p_hat: CategoricalDistribution
    method: str  # "inversion" | "em"
    iterations: int = 0
    log_likelihood: float | None = None
    projected: bool = False
    history: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "p_hat": [float(v) for v in self.p_hat.probs],
            "method": self.method,
            "iterations": self.iterations,
            "log_likelihood": self.log_likelihood,
            "projected": self.projected,
        }


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    rho = np.flatnonzero(u - css / idx > 0)[-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _counts(z) -> np.ndarray:
    if isinstance(z, MicrodataColumn):
        return frequencies(z)
    return np.asarray(z)


def estimate_p_inversion(z, M: PramMatrix) -> EstimationResult:
    """Moment estimator: solve ``M^T p = m_hat``, project if it leaves the simplex.

    ``z`` is a column or a frequency vector (real-valued frequencies are
    accepted so exact moments can be supplied).
    """
    counts = _counts(z).astype(float)
    n = counts.sum()
    if n <= 0:
        raise EmptyInputError("no records to estimate from")
    A = M.matrix.T
    if np.linalg.cond(A) > MAX_CONDITION:
        raise SingularMatrixError("PRAM matrix is (numerically) singular")
    p = np.linalg.solve(A, counts / n)
    projected = bool(np.any(p < 0))
    p = project_to_simplex(p) if projected else np.clip(p, 0.0, None)
    p = p / p.sum()
    return EstimationResult(validate_distribution(p), "inversion", projected=projected)


def _loglik(counts: np.ndarray, m: np.ndarray) -> float:
    return math.fsum(xlogy(counts, m))


def _em_step(p: np.ndarray, Mx: np.ndarray, counts: np.ndarray, n: float) -> np.ndarray:
    m = p @ Mx
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(m > 0, counts / m, 0.0)
    p_new = p * (Mx @ ratio) / n
    return p_new / p_new.sum()


def _squarem(p, Mx, counts, n):
    """One SQUAREM cycle: two EM steps, an extrapolation, one stabilizing step.

    Falls back to the second plain EM step whenever the extrapolated point
    leaves the simplex or scores worse, so the cycle never lowers the
    likelihood below what EM alone would reach.
    """
    p1 = _em_step(p, Mx, counts, n)
    p2 = _em_step(p1, Mx, counts, n)
    ll2 = _loglik(counts, p2 @ Mx)
    r = p1 - p
    v = p2 - p1 - r
    nv = np.linalg.norm(v)
    if nv == 0:
        return p2, ll2
    a = min(-np.linalg.norm(r) / nv, -1.0)
    pe = p - 2 * a * r + a * a * v
    if np.any(pe < 0):
        return p2, ll2
    pe = _em_step(pe / pe.sum(), Mx, counts, n)
    lle = _loglik(counts, pe @ Mx)
    if lle >= ll2:
        return pe, lle
    return p2, ll2


def estimate_p_em(z, M: PramMatrix, tol: float = EM_TOL, max_iter: int = EM_MAX_ITER) -> EstimationResult:
    """Maximum-likelihood estimate of p from privatized data via EM.

    Records only enter through their category counts ``c_j``, so each step is
    O(S^2): ``w_jk ∝ p_k M_kj`` and ``p_k <- sum_j c_j w_jk / n``. Plain EM
    crawls when the optimum sits near a face of the simplex, so iterations
    are SQUAREM cycles (extrapolated EM with a monotone fallback). Starts at
    the uniform vector and stops once the log-likelihood gain of a cycle
    drops below ``tol``. A gain below zero can only be round-off, so that
    cycle is discarded.
    """
    counts = _counts(z).astype(float)
    n = counts.sum()
    if n <= 0:
        raise EmptyInputError("no records to estimate from")
    Mx = M.matrix
    S = Mx.shape[0]
    p = np.full(S, 1.0 / S)
    ll = _loglik(counts, p @ Mx)
    history = [ll]
    it = 0
    while it < max_iter:
        p_new, ll_new = _squarem(p, Mx, counts, n)
        if ll_new < ll:
            break
        it += 1
        gain = ll_new - ll
        p, ll = p_new, ll_new
        history.append(ll)
        if gain < tol:
            break
    return EstimationResult(validate_distribution(p), "em", it, ll, history=tuple(history))


@dataclass(frozen=True)
class RiskReport:
    tau1: float
    tau2: float
    per_record: dict[int, tuple[int, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tau1": self.tau1,
            "tau2": self.tau2,
            "per_record": {str(k): {"r1": r1, "r2": r2} for k, (r1, r2) in self.per_record.items()},
        }


def risk_indices(sample, population) -> RiskReport:
    """Per-record and file-level risk with the population frequencies known.

    On every sample-unique cell ``k`` (``f_k = 1``): ``r1 = 1{F_k = 1}`` and
    ``r2 = 1 / F_k``. ``tau1``, ``tau2`` sum these over sample uniques. Cell
    keys in ``per_record`` are 1-based.
    """
    f = np.asarray(sample, dtype=np.int64)
    F = np.asarray(population, dtype=np.int64)
    if f.shape != F.shape:
        raise LengthMismatchError(f"tables have lengths {f.size} and {F.size}")
    if np.any(f < 0) or np.any(F < 0) or np.any(f > F):
        raise InconsistentTablesError("need 0 <= sample <= population cellwise")
    per = {}
    for k in np.flatnonzero(f == 1):
        Fk = int(F[k])
        per[int(k) + 1] = (int(Fk == 1), 1.0 / Fk)
    tau1 = float(sum(r1 for r1, _ in per.values()))
    tau2 = math.fsum(r2 for _, r2 in per.values())
    return RiskReport(tau1, tau2, per)
