"""Maximize mutual information over the DP polytope.

f is convex in q, so the maximum sits on a vertex; every strategy here
scores vertices only.

Dispatch for ``strategy="auto"``:

* alpha = 0: the polytope is the single point 1/S (``closed_form_symmetric``)
* S = 2: the two symmetric endpoints (``closed_form_binary``)
* S = 3, or closed-form vertex list not applicable with S <= 5: brute-force
  oracle vertices (``oracle``)
* closed form applicable and S <= 24: all 2^S candidates (``exhaustive``)
* closed form applicable, larger S: hill climbing (``local_search``)

Ties (within 1e-12 nats) resolve to the lexicographically smallest level
signature, ordering ``v_max < v_plus < v_minus < v_min`` per coordinate.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    InfeasibleStrategyError,
    NotApplicableError,
    as_probs,
    check_alpha,
    thread_count,
)
from .info import mi_batch, mutual_information
from .polytope import (
    LEVEL_NAMES,
    V_MAX,
    V_MIN,
    V_MINUS,
    V_PLUS,
    classify_codes,
    enumerate_vertices_oracle,
    iter_prop2_code_blocks,
    pattern_counts,
    prop2_applicable,
    vertex_values,
)

TIE_TOL = 1e-12
DOMINANCE_TOL = 1e-9
EXHAUSTIVE_MAX_S = 24
ORACLE_MAX_S = 5
DEFAULT_RESTARTS = 32
MAX_REPORTED_TIES = 100
_UNMATCHED = 4


@dataclass
class OptimizationReport:
    q_star: np.ndarray
    mi_nats: float
    pattern_summary: dict[str, int]
    method: str
    candidates_evaluated: int
    ties: list[dict] = field(default_factory=list)
    signature: tuple[int, ...] = ()
    alpha: float = 0.0
    dominance: dict | None = None

    def to_dict(self) -> dict:
        d = {
            "q_star": [float(x) for x in self.q_star],
            "mi_nats": float(self.mi_nats),
            "pattern_summary": dict(self.pattern_summary),
            "method": self.method,
            "candidates_evaluated": int(self.candidates_evaluated),
            "ties": self.ties,
            "alpha": self.alpha,
        }
        if self.dominance is not None:
            d["dominance"] = self.dominance
        return d


def _match_levels(q: np.ndarray, S: int, alpha: float, tol: float = 1e-9) -> np.ndarray:
    """Level code per coordinate, ``_UNMATCHED`` where q_k is none of the four levels."""
    levels = vertex_values(S, alpha).levels()
    codes = np.full(len(q), _UNMATCHED, dtype=np.int8)
    for code in (V_MAX, V_PLUS, V_MINUS, V_MIN):
        hit = (codes == _UNMATCHED) & (np.abs(q - levels[code]) <= tol)
        codes[hit] = code
    return codes


def _summary(codes) -> dict[str, int]:
    c = np.asarray(codes)
    return pattern_counts(c[c != _UNMATCHED])


def _lex_first(codes: np.ndarray) -> np.ndarray:
    """Row order sorting code rows lexicographically."""
    return np.lexsort(codes.T[::-1])


def _tie_entries(codes: np.ndarray, Q: np.ndarray) -> list[dict]:
    return [
        {"signature": [LEVEL_NAMES[c] if c < 4 else "other" for c in row],
         "q": [float(x) for x in qrow],
         "pattern_summary": _summary(row)}
        for row, qrow in zip(codes[:MAX_REPORTED_TIES], Q[:MAX_REPORTED_TIES])
    ]


def _report(p, alpha, codes, Q, f, method, evaluated) -> OptimizationReport:
    """Pick the best row of (codes, Q, f) with the lexicographic tie-break."""
    best = f.max()
    tied = np.flatnonzero(f >= best - TIE_TOL)
    order = tied[_lex_first(codes[tied])]
    # collapse exact duplicates (e.g. alpha = 0, where all levels coincide)
    _, first = np.unique(np.round(Q[order], 12), axis=0, return_index=True)
    order = order[np.sort(first)]
    win = order[0]
    q_star = Q[win].copy()
    return OptimizationReport(
        q_star=q_star,
        mi_nats=mutual_information(p, q_star),
        pattern_summary=_summary(codes[win]),
        method=method,
        candidates_evaluated=int(evaluated),
        ties=_tie_entries(codes[order[1:]], Q[order[1:]]),
        signature=tuple(int(c) for c in codes[win]),
        alpha=alpha,
    )


def optimize_binary(alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """The two optimal binary retention vectors ``(v, v)`` and ``(w, w)``, independent of p."""
    alpha = check_alpha(alpha)
    v = math.exp(alpha) / (1 + math.exp(alpha))
    w = 1 / (1 + math.exp(alpha))
    return np.array([v, v]), np.array([w, w])


def optimize_symmetric(S: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Endpoints of the feasible interval when all q_k are constrained equal."""
    alpha = check_alpha(alpha)
    lo = math.exp(-alpha) / (S - 1 + math.exp(-alpha))
    hi = math.exp(alpha) / (S - 1 + math.exp(alpha))
    return np.full(S, lo), np.full(S, hi)


def _score_blocks(p, levels, blocks, threads):
    def score(block):
        return mi_batch(p, levels[block.astype(np.int64)])

    if threads == 1:
        return [score(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(score, blocks))


def _exhaustive(p, alpha, S, threads) -> OptimizationReport:
    levels = vertex_values(S, alpha).levels()
    scores = _score_blocks(p, levels, iter_prop2_code_blocks(S), threads)
    best = max(float(s.max()) for s in scores)
    # second pass over the same deterministic block order to gather ties
    keep_codes, keep_f = [], []
    for block, s in zip(iter_prop2_code_blocks(S), scores):
        hit = s >= best - TIE_TOL
        if hit.any():
            keep_codes.append(block[hit])
            keep_f.append(s[hit])
    codes = np.vstack(keep_codes)
    f = np.concatenate(keep_f)
    evaluated = sum(len(s) for s in scores)
    return _report(p, alpha, codes, levels[codes.astype(np.int64)], f, "exhaustive", evaluated)


def _oracle(p, alpha, S) -> OptimizationReport:
    V = enumerate_vertices_oracle(S, alpha)
    f = mi_batch(p, V)
    codes = np.array([_match_levels(v, S, alpha) for v in V])
    # V comes sorted by q and lexsort is stable, so equal signatures fall back to q order
    return _report(p, alpha, codes, V, f, "oracle", len(V))


def _closed_binary(p, alpha) -> OptimizationReport:
    V = np.vstack(optimize_binary(alpha))
    codes = np.array([[V_PLUS, V_PLUS], [V_MINUS, V_MINUS]], dtype=np.int8)
    return _report(p, alpha, codes, V, mi_batch(p, V), "closed_form_binary", 2)


def _closed_symmetric(p, alpha, S) -> OptimizationReport:
    lo, hi = optimize_symmetric(S, alpha)
    V = np.vstack([hi, lo])
    codes = np.array([np.full(S, V_PLUS), np.full(S, V_MINUS)], dtype=np.int8)
    return _report(p, alpha, codes, V, mi_batch(p, V), "closed_form_symmetric", 2)


# -- local search ---------------------------------------------------------

def _valid_states(C: np.ndarray) -> np.ndarray:
    """Hypercube sign patterns plus the two special-vertex shapes."""
    S = C.shape[1]
    n_plus = (C == V_PLUS).sum(axis=1)
    n_minus = (C == V_MINUS).sum(axis=1)
    hyper = n_plus + n_minus == S
    min_sp = (n_plus == S - 1) & ((C == V_MIN).sum(axis=1) == 1)
    max_sp = (n_minus == S - 1) & ((C == V_MAX).sum(axis=1) == 1)
    return hyper | min_sp | max_sp


def _neighbors(c: np.ndarray) -> np.ndarray:
    """Single-coordinate level changes plus relocation of a special coordinate."""
    S = len(c)
    out = []
    for i in range(S):
        for lvl in (V_MAX, V_PLUS, V_MINUS, V_MIN):
            if lvl != c[i]:
                n = c.copy()
                n[i] = lvl
                out.append(n)
    special = np.flatnonzero((c == V_MIN) | (c == V_MAX))
    if len(special) == 1:
        i = special[0]
        base = V_PLUS if c[i] == V_MIN else V_MINUS
        for j in range(S):
            if j != i:
                n = c.copy()
                n[i], n[j] = base, c[i]
                out.append(n)
    N = np.array(out, dtype=np.int8)
    return N[_valid_states(N)]


def _best_row(codes: np.ndarray, f: np.ndarray) -> int:
    tied = np.flatnonzero(f >= f.max() - TIE_TOL)
    return int(tied[_lex_first(codes[tied])[0]])


def _climb(p, levels, start):
    cur = start.copy()
    f_cur = float(mi_batch(p, levels[cur.astype(np.int64)])[0])
    evaluated = 1
    while True:
        N = _neighbors(cur)
        fN = mi_batch(p, levels[N.astype(np.int64)])
        evaluated += len(N)
        k = _best_row(N, fN)
        if fN[k] <= f_cur + TIE_TOL:
            return cur, f_cur, evaluated
        cur, f_cur = N[k], float(fN[k])


def _to_vertex(p, levels, c):
    """Replace a non-vertex hypercube point by the better end of its segment.

    A pattern with one odd sign lies on the segment between a constant
    pattern and a special vertex; convexity puts the max at an end.
    """
    if classify_codes(c) is not None:
        return c
    S = len(c)
    if (c == V_MINUS).sum() == 1:
        i = int(np.flatnonzero(c == V_MINUS)[0])
        a, b = np.full(S, V_PLUS, dtype=np.int8), np.full(S, V_PLUS, dtype=np.int8)
        b[i] = V_MIN
    else:
        i = int(np.flatnonzero(c == V_PLUS)[0])
        a, b = np.full(S, V_MINUS, dtype=np.int8), np.full(S, V_MINUS, dtype=np.int8)
        b[i] = V_MAX
    ends = np.vstack([a, b])
    f = mi_batch(p, levels[ends.astype(np.int64)])
    return ends[_best_row(ends, f)]


def local_search(p, alpha: float, restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> OptimizationReport:
    """Steepest-ascent hill climbing over closed-form vertex patterns.

    Starts: AllPlus, AllMinus, then ``restarts - 2`` random sign vectors drawn
    from ``numpy.random.default_rng(seed)``.
    """
    p = as_probs(p)
    alpha = check_alpha(alpha)
    S = len(p)
    if not prop2_applicable(S, alpha):
        raise NotApplicableError(f"local search needs the closed-form vertex list (S={S}, alpha={alpha})")
    levels = vertex_values(S, alpha).levels()
    rng = np.random.default_rng(seed)
    starts = [np.full(S, V_PLUS, dtype=np.int8), np.full(S, V_MINUS, dtype=np.int8)]
    for _ in range(max(restarts - 2, 0)):
        starts.append(rng.integers(V_PLUS, V_MINUS + 1, size=S).astype(np.int8))
    optima, evaluated = [], 0
    for s in starts:
        c, _, n = _climb(p, levels, s)
        evaluated += n
        optima.append(_to_vertex(p, levels, c))
    codes = np.unique(np.array(optima), axis=0)
    Q = levels[codes.astype(np.int64)]
    f = mi_batch(p, Q)
    evaluated += len(codes)
    return _report(p, alpha, codes, Q, f, "local_search", evaluated)


def optimize(p, alpha: float, strategy: str = "auto", seed: int = 0,
             restarts: int = DEFAULT_RESTARTS, threads: int | None = None) -> OptimizationReport:
    """Return the MI-maximizing DP retention vector for distribution ``p``."""
    p = as_probs(p)
    alpha = check_alpha(alpha)
    S = len(p)
    applicable = prop2_applicable(S, alpha)
    if strategy == "exhaustive":
        if not applicable or S > EXHAUSTIVE_MAX_S:
            raise InfeasibleStrategyError(
                f"exhaustive sweep needs the closed-form vertex list and S <= {EXHAUSTIVE_MAX_S}")
        return _exhaustive(p, alpha, S, thread_count(threads))
    if strategy == "local_search":
        return local_search(p, alpha, restarts, seed)
    if strategy != "auto":
        raise InfeasibleStrategyError(f"unknown strategy {strategy!r}")
    if alpha == 0:
        return _closed_symmetric(p, alpha, S)
    if S == 2:
        return _closed_binary(p, alpha)
    if S == 3 or (not applicable and S <= ORACLE_MAX_S):
        return _oracle(p, alpha, S)
    if applicable and S <= EXHAUSTIVE_MAX_S:
        return _exhaustive(p, alpha, S, thread_count(threads))
    if applicable:
        return local_search(p, alpha, restarts, seed)
    raise NotApplicableError(
        f"no exact method for S={S} at alpha={alpha}: the closed-form vertex list does not "
        f"apply and brute-force enumeration is capped at S={ORACLE_MAX_S}")


def _codes_with_counts(S: int, counts: dict[str, int], cap: int = 2_000_000) -> np.ndarray:
    n_plus, n_minus = counts.get("v_plus", 0), counts.get("v_minus", 0)
    n_min, n_max = counts.get("v_min", 0), counts.get("v_max", 0)
    if n_plus + n_minus + n_min + n_max != S:
        raise ValueError(f"pattern counts must sum to {S}")
    if n_min + n_max > 1 or (n_min and n_minus) or (n_max and n_plus):
        raise ValueError(f"counts {counts} do not describe a closed-form vertex")
    if n_min or n_max:
        codes = np.full((S, S), V_PLUS if n_min else V_MINUS, dtype=np.int8)
        np.fill_diagonal(codes, V_MIN if n_min else V_MAX)
        return codes
    if math.comb(S, n_plus) > cap:
        raise ValueError(f"too many placements ({math.comb(S, n_plus)})")
    rows = []
    for pos in itertools.combinations(range(S), n_plus):
        row = np.full(S, V_MINUS, dtype=np.int8)
        row[list(pos)] = V_PLUS
        rows.append(row)
    return np.array(rows)


def best_with_counts(p, alpha: float, counts: dict[str, int]) -> tuple[np.ndarray, float]:
    """Best retention vector among all placements of a given level-count pattern."""
    p = as_probs(p)
    levels = vertex_values(len(p), alpha).levels()
    codes = _codes_with_counts(len(p), counts)
    f = mi_batch(p, levels[codes.astype(np.int64)])
    k = _best_row(codes, f)
    q = levels[codes[k].astype(np.int64)]
    return q, mutual_information(p, q)


def check_against_pattern(report: OptimizationReport, p, counts: dict[str, int]) -> dict:
    """Compare a report with a reference pattern and attach the dominance record.

    ``flagged`` is true when the counts differ and the report's vertex beats
    every placement of the reference counts by more than 1e-9 nats.
    """
    ref = {k: int(counts.get(k, 0)) for k in ("v_plus", "v_minus", "v_min", "v_max")}
    _, f_ref = best_with_counts(p, report.alpha, ref)
    margin = report.mi_nats - f_ref
    matches = all(report.pattern_summary.get(k, 0) == v for k, v in ref.items())
    record = {
        "reference_counts": ref,
        "matches_reference": bool(matches),
        "reference_best_mi": f_ref,
        "margin_nats": margin,
        "flagged": bool(not matches and margin > DOMINANCE_TOL),
    }
    report.dominance = record
    return record
