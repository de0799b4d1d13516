"""Committed-fraction allocations and initial conditions.

Opinion 0 is A (the largest committed group), opinion 1 is B (the initially
dominant, uncommitted-majority opinion in the tipping-point setups), and the
remaining opinions form the minority committed group.  Generators are pure
functions of their arguments and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import InfeasibleScenarioError

S0_RESAMPLE_LIMIT = 1000


@dataclass
class ScenarioConfig:
    """Committed fractions plus the initial allocation of uncommitted agents
    over single opinions (all mixed states start empty)."""

    m: int
    P: np.ndarray
    x0: np.ndarray
    label: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.P.shape != (self.m,) or self.x0.shape != (self.m,):
            raise ValueError("P and x0 must both have length m")
        if self.P.min(initial=0.0) < 0 or self.x0.min(initial=0.0) < 0:
            raise InfeasibleScenarioError("negative committed fraction or allocation")
        mass = self.P.sum() + self.x0.sum()
        if abs(mass - 1.0) > 1e-12:
            raise InfeasibleScenarioError(f"total mass {mass} != 1")
        if self.label == "s2" and self.P[0] <= max(self.P[1:], default=0.0):
            raise InfeasibleScenarioError("polarized scenario requires P_A strictly largest")

    @property
    def P_A(self) -> float:
        return float(self.P[0])

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "P": [float(v) for v in self.P],
            "x0": [float(v) for v in self.x0],
            "label": self.label,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(d["m"], d["P"], d["x0"], d.get("label", "custom"), d.get("meta", {}))


def _all_on_b(m: int, P: np.ndarray) -> np.ndarray:
    x0 = np.zeros(m)
    x0[1] = 1.0 - P.sum()
    if x0[1] < 0:
        raise InfeasibleScenarioError("committed fractions leave no uncommitted agents")
    return x0


def make_s1(m: int, P_A: float, P_tilde: float) -> ScenarioConfig:
    """Perfectly symmetric minority group: m-2 opinions, p_0 = P_tilde/(m-2) each."""
    if m < 3:
        raise ValueError("symmetric scenario needs m >= 3")
    if P_A < 0 or P_tilde < 0 or P_A + P_tilde >= 1.0:
        raise InfeasibleScenarioError("need P_A, P_tilde >= 0 and P_A + P_tilde < 1")
    p0 = P_tilde / (m - 2)
    P = np.concatenate([[P_A, 0.0], np.full(m - 2, p0)])
    return ScenarioConfig(m, P, _all_on_b(m, P), "s1", {"p0": p0, "P_tilde": P_tilde})


def make_s2(m: int, P_A: float, P_tilde: float) -> ScenarioConfig:
    """Maximally polarized minority group.

    The largest minority fraction is p_1 = P_A - 1e-3, replicated over
    n_1 = floor(P_tilde / p_1) opinions; the remainder p_2 = P_tilde - n_1 p_1
    goes to one more opinion, and m - n_1 - 3 opinions get no committed agents.
    """
    if m < 3:
        raise ValueError("polarized scenario needs m >= 3")
    p1 = P_A - 1e-3
    if p1 <= 0:
        raise InfeasibleScenarioError("P_A too small: largest minority fraction P_A - 1e-3 <= 0")
    n1 = int(math.floor(P_tilde / p1)) if P_tilde > 0 else 0
    p2 = P_tilde - n1 * p1
    if m - n1 - 3 < 0:
        raise InfeasibleScenarioError(
            f"polarized scenario infeasible: m - n_1 - 3 = {m - n1 - 3} < 0 "
            f"(m={m}, n_1={n1})"
        )
    if P_A + P_tilde >= 1.0:
        raise InfeasibleScenarioError("need P_A + P_tilde < 1")
    P = np.concatenate([[P_A, 0.0], np.full(n1, p1), [p2], np.zeros(m - n1 - 3)])
    return ScenarioConfig(
        m, P, _all_on_b(m, P), "s2",
        {"p1": p1, "n1": n1, "p2": p2, "P_tilde": P_tilde},
    )


def make_s0(m: int, P_A: float, P_tilde: float, sigma: float = 0.02, seed=0) -> ScenarioConfig:
    """Randomly distributed minority group.

    Minority fractions are truncated-Gaussian draws on [0, P_tilde] with mean
    p_0 = P_tilde/(m-2) and nominal standard deviation ``sigma``, rescaled
    multiplicatively so their sum is exactly P_tilde.  Draws are rejected
    until every entry stays strictly below P_A; the realized spread therefore
    differs from the nominal one.
    """
    if m < 3:
        raise ValueError("random scenario needs m >= 3")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if P_A < 0 or P_tilde < 0 or P_A + P_tilde >= 1.0:
        raise InfeasibleScenarioError("need P_A, P_tilde >= 0 and P_A + P_tilde < 1")
    p0 = P_tilde / (m - 2)
    rng = np.random.default_rng(seed)
    a, b = (0.0 - p0) / sigma, (P_tilde - p0) / sigma
    for attempt in range(S0_RESAMPLE_LIMIT):
        draws = stats.truncnorm.rvs(a, b, loc=p0, scale=sigma, size=m - 2, random_state=rng)
        total = draws.sum()
        if total <= 0:
            continue
        scaled = draws * (P_tilde / total)
        if P_tilde == 0.0 or scaled.max() < P_A:
            P = np.concatenate([[P_A, 0.0], scaled])
            return ScenarioConfig(
                m, P, _all_on_b(m, P), "s0",
                {
                    "p0": p0, "P_tilde": P_tilde, "sigma": sigma, "seed": seed,
                    "resamples": attempt,
                    "realized_sd": float(scaled.std(ddof=0)),
                    "max_Pi": float(scaled.max()),
                    "sum_constraint": "multiplicative rescale",
                },
            )
    raise InfeasibleScenarioError(
        f"could not draw minority fractions below P_A={P_A} in {S0_RESAMPLE_LIMIT} resamples"
    )


def make_network_sym(m: int, P_A: float, p_0: float) -> ScenarioConfig:
    """Network setup: all m-1 non-A opinions committed at p_0 each, with the
    uncommitted agents split equally among them as initial pure supporters."""
    if m < 2:
        raise ValueError("need at least two opinions")
    P = np.concatenate([[P_A], np.full(m - 1, p_0)])
    u = 1.0 - P.sum()
    if u < 0:
        raise InfeasibleScenarioError("committed fractions exceed the population")
    x0 = np.concatenate([[0.0], np.full(m - 1, u / (m - 1))])
    return ScenarioConfig(m, P, x0, "network_sym", {"p0": p_0, "P_tilde": (m - 1) * p_0})


def apportion(weights, total: int) -> np.ndarray:
    """Largest-remainder integer allocation of ``total`` among ``weights``.

    Deterministic: remainders tie-break toward the lowest index, so the bias
    per class is below one unit.
    """
    weights = np.asarray(weights, dtype=float)
    if total < 0:
        raise ValueError("total must be non-negative")
    if weights.min(initial=0.0) < 0:
        raise ValueError("weights must be non-negative")
    s = weights.sum()
    if s == 0:
        if total:
            raise ValueError("cannot apportion a positive total over zero weights")
        return np.zeros(len(weights), dtype=np.int64)
    quotas = weights * (total / s)
    counts = np.floor(quotas).astype(np.int64)
    rem = total - counts.sum()
    if rem > 0:
        frac = quotas - counts
        order = np.lexsort((np.arange(len(weights)), -frac))
        counts[order[:rem]] += 1
    return counts
