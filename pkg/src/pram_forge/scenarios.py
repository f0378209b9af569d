"""Simulation scenarios and the seeded Monte Carlo harness behind ``pram-forge scenario``."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import MicrodataColumn, OutOfRangeError, as_probs, check_alpha, frequencies, thread_count
from .inference import estimate_p_em, risk_indices
from .mechanism import build_matrix, privatize, sample_column
from .optimizer import check_against_pattern, optimize

SCENARIO_I = (0.3, 0.1, 0.2, 0.08, 0.02, 0.04, 0.06, 0.1, 0.01, 0.09)
SCENARIO_II = (0.0336, 0.1059, 0.1697, 0.0962, 0.0180, 0.0062, 0.1097, 0.0005, 0.1233, 0.3369)
SCENARIO_IV = (0.05,) + (0.95 / 29,) * 29
DEFAULT_ALPHAS = (0.5, 1.0, 1.5, 2.0)

# Published solver output: (v_plus, v_minus, v_min, v_max) per alpha.
REFERENCE_PATTERNS = {
    "I": {0.5: (4, 6, 0, 0), 1.0: (5, 5, 0, 0), 1.5: (2, 8, 0, 0), 2.0: (0, 9, 0, 1)},
    "II": {0.5: (7, 3, 0, 0), 1.0: (6, 4, 0, 0), 1.5: (6, 4, 0, 0), 2.0: (0, 9, 0, 1)},
    "III": {0.5: (29, 0, 1, 0), 1.0: (29, 0, 1, 0), 1.5: (30, 0, 0, 0), 2.0: (29, 0, 1, 0)},
    "IV": {0.5: (0, 29, 0, 1), 1.0: (30, 0, 0, 0), 1.5: (30, 0, 0, 0), 2.0: (30, 0, 0, 0)},
}


def counts_dict(counts) -> dict[str, int]:
    return dict(zip(("v_plus", "v_minus", "v_min", "v_max"), (int(c) for c in counts)))


def gamma_probabilities(S: int = 30, shape: float = 1.0, scale: float = 5.0, seed: int = 0) -> np.ndarray:
    """Normalized independent Gamma(shape, scale) draws."""
    g = np.random.default_rng(seed).gamma(shape, scale, size=S)
    return g / g.sum()


@dataclass
class ScenarioConfig:
    scenario: str = "I"
    p: tuple[float, ...] | None = None
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    n: int = 10_000
    replications: int = 100
    seed: int = 0
    strategy: str = "auto"
    gamma_shape: float = 1.0
    gamma_scale: float = 5.0
    population: int | None = None

    def __post_init__(self):
        self.scenario = str(self.scenario).upper() if self.scenario != "custom" else "custom"
        if self.p is None:
            self.p = tuple(self._default_p())
        self.p = tuple(float(x) for x in as_probs(self.p))
        if not self.alphas:
            raise OutOfRangeError("alpha list must be nonempty")
        self.alphas = tuple(check_alpha(a) for a in self.alphas)
        if self.n < 1 or self.replications < 1:
            raise OutOfRangeError("n and replications must be >= 1")
        if self.population is not None and self.population < self.n:
            raise OutOfRangeError("population must be at least n")

    def _default_p(self):
        if self.scenario == "I":
            return SCENARIO_I
        if self.scenario == "II":
            return SCENARIO_II
        if self.scenario == "III":
            return gamma_probabilities(30, self.gamma_shape, self.gamma_scale, self.seed)
        if self.scenario == "IV":
            return SCENARIO_IV
        raise OutOfRangeError(f"scenario {self.scenario!r} needs an explicit p")


@dataclass
class AlphaResult:
    alpha: float
    report: dict
    estimates: np.ndarray  # (replications, S)
    tv: np.ndarray  # (replications,)
    risk: list[dict] = field(default_factory=list)


def _replication_seeds(seed: int, alpha_index: int, rep: int) -> tuple[int, int]:
    ss = np.random.SeedSequence([seed, alpha_index, rep])
    a, b = ss.generate_state(2, dtype=np.uint64)
    return int(a), int(b)


def run_scenario(cfg: ScenarioConfig, threads: int | None = None) -> list[AlphaResult]:
    """Optimize q for each alpha, then replicate sample -> privatize -> EM estimate."""
    p = np.asarray(cfg.p)
    ref = REFERENCE_PATTERNS.get(cfg.scenario, {})
    pop = None
    if cfg.population is not None:
        pop = sample_column(p, cfg.population, cfg.seed)
        pop_counts = frequencies(pop)
    workers = thread_count(threads)
    out = []
    for ai, alpha in enumerate(cfg.alphas):
        rep = optimize(p, alpha, cfg.strategy, seed=cfg.seed)
        if alpha in ref:
            check_against_pattern(rep, p, counts_dict(ref[alpha]))
        M = build_matrix(rep.q_star)

        def one(r, alpha_index=ai, M=M):
            s_x, s_z = _replication_seeds(cfg.seed, alpha_index, r)
            if pop is None:
                x = sample_column(p, cfg.n, s_x)
                risk = None
            else:
                idx = np.random.default_rng(s_x).choice(len(pop), size=cfg.n, replace=False)
                x = MicrodataColumn(pop.records[np.sort(idx)], pop.size)
                risk = risk_indices(frequencies(x), pop_counts).to_dict()
            z = privatize(x, M, s_z, threads=1)
            return estimate_p_em(z, M).p_hat.probs, risk

        if workers == 1:
            results = [one(r) for r in range(cfg.replications)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(one, range(cfg.replications)))
        est = np.array([r[0] for r in results])
        tv = 0.5 * np.abs(est - p).sum(axis=1)
        risks = [r[1] for r in results if r[1] is not None]
        out.append(AlphaResult(alpha, rep.to_dict(), est, tv, risks))
    return out


def summarize(cfg: ScenarioConfig, results: list[AlphaResult]) -> dict:
    rows = []
    for res in results:
        row = {
            "alpha": res.alpha,
            "pattern_summary": res.report["pattern_summary"],
            "mi_nats": res.report["mi_nats"],
            "method": res.report["method"],
            "q_star": res.report["q_star"],
            "mean_tv": float(res.tv.mean()),
            "mean_estimate": [float(v) for v in res.estimates.mean(axis=0)],
        }
        if "dominance" in res.report:
            row["dominance"] = res.report["dominance"]
        if res.risk:
            row["mean_tau1"] = math.fsum(r["tau1"] for r in res.risk) / len(res.risk)
            row["mean_tau2"] = math.fsum(r["tau2"] for r in res.risk) / len(res.risk)
        rows.append(row)
    return {
        "scenario": cfg.scenario,
        "p": list(cfg.p),
        "n": cfg.n,
        "replications": cfg.replications,
        "seed": cfg.seed,
        "alphas": rows,
    }
