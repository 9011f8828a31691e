"""Mann-Whitney U rank test for comparing per-cycle metric distributions."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import stats as _sps

ALPHA = 0.05
EXACT_MAX_TOTAL = 20


class EmptySample(ValueError):
    pass


class Method(str, Enum):
    EXACT = "exact"
    NORMAL_APPROX = "normal_approx"


@dataclass(frozen=True)
class RankTestResult:
    u: float  # U of the first sample: pairs where a > b, ties counted half
    p: float  # two-sided
    n1: int
    n2: int
    method: Method

    def __post_init__(self):
        if not 0 <= self.u <= self.n1 * self.n2:
            raise ValueError(f"U={self.u} outside [0, {self.n1 * self.n2}]")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p={self.p} outside [0, 1]")

    @property
    def significant(self) -> bool:
        return self.p < ALPHA

    @property
    def star(self) -> str:
        return "*" if self.significant else ""


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float]) -> RankTestResult:
    """Two-sided Mann-Whitney U test.

    Exact null distribution when the samples total at most 20 values with no
    ties; otherwise the normal approximation with tie and continuity
    corrections.
    """
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be non-empty")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    pooled = np.concatenate([a, b])
    ties = np.unique(pooled).size < pooled.size
    method = Method.EXACT if pooled.size <= EXACT_MAX_TOTAL and not ties else Method.NORMAL_APPROX
    res = _sps.mannwhitneyu(
        a,
        b,
        alternative="two-sided",
        method="exact" if method is Method.EXACT else "asymptotic",
        use_continuity=True,
    )
    p = float(res.pvalue)
    if np.isnan(p):
        p = 1.0  # every value tied: no evidence of a difference
    return RankTestResult(float(res.statistic), min(max(p, 0.0), 1.0), int(a.size), int(b.size), method)
