"""Source-number detection from snapshots with missing entries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .em import EmConfig, ObservedBlocks, run_em
from .linalg import hermitian_evd
from .mstep import ConstraintSet
from .scene import SnapshotSet, sample_covariance, zero_filled_sample_covariance

__all__ = (
    "PENALTY_RULES",
    "DETECTION_METHODS",
    "PenaltyRule",
    "DetectionScore",
    "DetectionResult",
    "penalty",
    "eigen_statistic",
    "classical_detect",
    "em_fit_statistics",
    "detect_from_statistics",
    "detect_sources",
    "zero_fill_detect",
    "complete_detect",
)

PENALTY_RULES = ("aic", "mdl", "hqc")
DETECTION_METHODS = ("complete", "em", "em_fb", "zero_fill")


@dataclass(frozen=True)
class PenaltyRule:
    kind: str

    def __post_init__(self):
        if self.kind not in PENALTY_RULES:
            raise ValueError(f"penalty rule must be one of {PENALTY_RULES}, got {self.kind!r}")

    def __call__(self, d: int, n: int, k: int) -> float:
        return penalty(self, d, n, k)


def _rule(rule) -> str:
    kind = rule.kind if isinstance(rule, PenaltyRule) else str(rule).lower()
    if kind not in PENALTY_RULES:
        raise ValueError(f"penalty rule must be one of {PENALTY_RULES}, got {rule!r}")
    return kind


def penalty(rule, d: int, n: int, k: int) -> float:
    """Model-order penalty for ``d`` sources, ``n`` sensors, ``k`` snapshots.

    AIC ``d(2N-d)``, MDL ``[d(2N-d)+1] ln(K) / 2``, HQC ``[d(2N-d)+1] ln ln K``.
    """
    kind = _rule(rule)
    if not 0 <= d <= n - 1:
        raise ValueError(f"d must lie in [0, {n - 1}], got {d}")
    dof = d * (2 * n - d)
    if kind == "aic":
        return float(dof)
    if kind == "mdl":
        return 0.5 * (dof + 1) * math.log(k)
    if k <= math.e:
        raise ValueError(f"HQC needs K > e so that ln ln K is defined, got K={k}")
    return (dof + 1) * math.log(math.log(k))


def eigen_statistic(eigenvalues, d: int, k: int) -> float:
    """``K (N-d) ln(AM / GM)`` of the ``N-d`` smallest eigenvalues."""
    lam = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    n = lam.size
    if not 0 <= d <= n - 1:
        raise ValueError(f"d must lie in [0, {n - 1}], got {d}")
    if np.any(lam <= 0):
        raise ValueError("eigen_statistic needs strictly positive eigenvalues")
    tail = lam[d:]
    log_am = math.log(float(np.mean(tail)))
    log_gm = float(np.mean(np.log(tail)))
    # AM >= GM; clip rounding below zero
    return max(0.0, k * (n - d) * (log_am - log_gm))


@dataclass(frozen=True)
class DetectionScore:
    d: int
    statistic: float
    penalty: float

    @property
    def total(self) -> float:
        return self.statistic + self.penalty


@dataclass
class DetectionResult:
    d_hat: int
    scores: list[DetectionScore]
    method: str
    em_iterations: list[int] = field(default_factory=list)


def _argmin(scores: list[DetectionScore]) -> int:
    totals = [s.total for s in scores]
    return scores[int(np.argmin(totals))].d


def classical_detect(sample_cov, rule, k1: int, k: int, method: str = "complete") -> DetectionResult:
    """Eigenvalue-statistic detector on a sample covariance matrix."""
    lam = hermitian_evd(sample_cov).eigenvalues
    n = lam.size
    scores = [
        DetectionScore(d, eigen_statistic(lam, d, k), penalty(rule, d, n, k)) for d in range(k1 + 1)
    ]
    return DetectionResult(_argmin(scores), scores, method)


def em_fit_statistics(
    data: SnapshotSet, k1: int, config: EmConfig | None = None, fb: bool = False
) -> tuple[list[float], list[int]]:
    """Fit statistic of the fixed-rank EM estimate for every ``d`` in ``0..k1``.

    Each rank is fitted independently from the same initialization.
    """
    config = config or EmConfig()
    if not 0 <= k1 <= data.n - 1:
        raise ValueError(f"k1 must lie in [0, {data.n - 1}], got {k1}")
    stats, iters = [], []
    for d in range(k1 + 1):
        constraint = (
            ConstraintSet.fixed_rank_centro_hermitian(d) if fb else ConstraintSet.fixed_rank(d)
        )
        result = run_em(data, constraint, config)
        stats.append(ObservedBlocks(result.estimate, data).fit_statistic())
        iters.append(result.iterations)
    return stats, iters


def detect_from_statistics(stats, rule, n: int, k: int, fb: bool, method: str) -> DetectionResult:
    weight = 0.5 if fb else 1.0
    scores = [
        DetectionScore(d, float(s), weight * penalty(rule, d, n, k)) for d, s in enumerate(stats)
    ]
    return DetectionResult(_argmin(scores), scores, method)


def detect_sources(
    data: SnapshotSet,
    rule,
    k1: int,
    config: EmConfig | None = None,
    fb: bool = False,
) -> DetectionResult:
    """Fixed-rank EM order selection.

    The FB variant uses the centro-Hermitian fixed-rank set and halves the
    penalty.
    """
    stats, iters = em_fit_statistics(data, k1, config, fb)
    result = detect_from_statistics(stats, rule, data.n, data.k, fb, "em_fb" if fb else "em")
    result.em_iterations = iters
    return result


def zero_fill_detect(data: SnapshotSet, rule, k1: int) -> DetectionResult:
    return classical_detect(zero_filled_sample_covariance(data), rule, k1, data.k, "zero_fill")


def complete_detect(complete, rule, k1: int) -> DetectionResult:
    complete = np.atleast_2d(complete)
    return classical_detect(sample_covariance(complete), rule, k1, complete.shape[0], "complete")
