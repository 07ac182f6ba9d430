"""EM estimation of a structured covariance from snapshots with missing entries."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .linalg import NotPositiveDefiniteError, as_hermitian, solve_hpd
from .mstep import ConstraintSet, mstep_noise_floor
from .scene import SnapshotSet, SelectionPattern, zero_filled_sample_covariance

__all__ = (
    "COND_CAP",
    "IllConditionedSnapshotError",
    "LikelihoodDecreaseError",
    "EmConfig",
    "ConditionalMoments",
    "EmResult",
    "ObservedBlocks",
    "observed_log_likelihood",
    "observed_fit_statistic",
    "conditional_moments",
    "e_step",
    "initial_estimate",
    "run_em",
)

log = logging.getLogger(__name__)

COND_CAP = 1e12
MONOTONE_RTOL = 1e-9


class IllConditionedSnapshotError(np.linalg.LinAlgError):
    def __init__(self, index: int, cond: float):
        self.index = index
        self.cond = cond
        self._whitened = None
        super().__init__(
            f"observed covariance block of snapshot {index} is numerically singular "
            f"(condition number {cond:.3e} > {COND_CAP:.0e})"
        )


class LikelihoodDecreaseError(RuntimeError):
    """EM produced a likelihood decrease beyond rounding slack."""


class MStep(Protocol):
    def project(self, sigma: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class EmConfig:
    """Stopping rule and initialization for :func:`run_em`.

    ``init`` is ``"fml_zero_filled"`` (noise-floor projection of the
    zero-filled sample covariance at ``init_floor``) or an explicit positive
    definite matrix.  ``init_floor`` defaults to the constraint's floor when
    it has one, otherwise 1.0.
    """

    eps_likelihood: float = 1e-7
    eps_param: float = 1e-7
    max_iters: int = 10000
    init: str | np.ndarray = "fml_zero_filled"
    init_floor: float | None = None
    check_monotone: bool = True

    def __post_init__(self):
        if not self.eps_likelihood > 0:
            raise ValueError(f"eps_likelihood must be > 0, got {self.eps_likelihood}")
        if not self.eps_param > 0:
            raise ValueError(f"eps_param must be > 0, got {self.eps_param}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be an integer >= 1, got {self.max_iters}")
        if isinstance(self.init, str) and self.init != "fml_zero_filled":
            raise ValueError(f"init must be 'fml_zero_filled' or a matrix, got {self.init!r}")
        if self.init_floor is not None and not self.init_floor > 0:
            raise ValueError(f"init_floor must be > 0, got {self.init_floor}")


@dataclass
class ConditionalMoments:
    """Conditional moments of one complete snapshot given its observed part.

    ``mu`` and ``gamma`` live on the missing indices; ``c`` is the full
    ``N x N`` conditional correlation ``E[r r^H | y]``.
    """

    mu: np.ndarray
    gamma: np.ndarray
    c: np.ndarray


@dataclass
class EmResult:
    estimate: np.ndarray
    likelihood_trace: list[float]
    iterations: int
    termination: str
    iterates: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def log_likelihood(self) -> float:
        return self.likelihood_trace[-1]


class ObservedBlocks:
    """Inverses and log-determinants of all observed blocks ``A_i M A_i^H``.

    Every snapshot's block is embedded in an ``N x N`` matrix with the missing
    diagonal filled by the largest observed diagonal entry of ``M``; that
    value lies inside the block's spectrum, so the embedded 1-norm condition
    number equals the block's own.  ``precision[i]`` is ``A_i^H (A_i M
    A_i^H)^-1 A_i``, zero on missing rows and columns.
    """

    def __init__(self, m: np.ndarray, data: SnapshotSet):
        self.m = m
        self.data = data
        mask = data.mask
        n = data.n
        outer = mask[:, :, None] & mask[:, None, :]
        self.outer = outer
        diag = np.real(np.diagonal(m))
        fill = np.max(np.where(mask, diag[None, :], -np.inf), axis=1)
        blocks = np.where(outer, m[None, :, :], 0)
        idx = np.arange(n)
        blocks[:, idx, idx] += np.where(mask, 0.0, fill[:, None])
        inv = np.linalg.inv(blocks)
        cond = np.abs(blocks).sum(axis=1).max(axis=1) * np.abs(inv).sum(axis=1).max(axis=1)
        bad = np.flatnonzero(~(cond <= COND_CAP))
        if bad.size:
            raise IllConditionedSnapshotError(int(bad[0]), float(cond[bad[0]]))
        try:
            chol = np.linalg.cholesky(blocks)
        except np.linalg.LinAlgError:
            w = np.linalg.eigvalsh(blocks)[:, 0]
            raise IllConditionedSnapshotError(int(np.argmin(w)), np.inf) from None
        logdet = 2.0 * np.sum(np.log(np.real(np.diagonal(chol, axis1=1, axis2=2))), axis=1)
        n_missing = n - data.observed_counts
        self.logdet = logdet - n_missing * np.log(fill)
        self.precision = np.where(outer, inv, 0)
        self.cond = cond
        self._whitened = None

    @property
    def whitened(self) -> np.ndarray:
        """Rows ``P_i y_i``."""
        if self._whitened is None:
            self._whitened = (self.precision @ self.data.values[:, :, None])[:, :, 0]
        return self._whitened

    @property
    def quadratic(self) -> np.ndarray:
        """``y_i^H (A_i M A_i^H)^-1 y_i`` per snapshot."""
        return np.real(np.sum(self.data.values.conj() * self.whitened, axis=1))

    def fit_statistic(self) -> float:
        return float(np.sum(self.logdet + self.quadratic))

    def log_likelihood(self) -> float:
        p = self.data.observed_counts.sum()
        return float(-p * np.log(np.pi) - self.fit_statistic())

    def conditional_means(self) -> np.ndarray:
        """Rows are the completed snapshots ``E[r_i | y_i]``."""
        r = self.whitened @ self.m.T
        return np.where(self.data.mask, self.data.values, r)

    def e_step(self) -> np.ndarray:
        data = self.data
        r = self.conditional_means()
        k = data.k
        sigma = (r.T @ r.conj()) / k
        if data.has_missing:
            miss = ~data.mask
            miss_outer = miss[:, :, None] & miss[:, None, :]
            mpm = self.m[None] @ self.precision @ self.m[None]
            gamma = np.where(miss_outer, self.m[None] - mpm, 0)
            sigma = sigma + gamma.sum(axis=0) / k
        return 0.5 * (sigma + sigma.conj().T)


def observed_log_likelihood(m, data: SnapshotSet) -> float:
    """Observed-data Gaussian log-likelihood, including the ``-sum p_i ln pi`` term."""
    return ObservedBlocks(as_hermitian(m), data).log_likelihood()


def observed_fit_statistic(m_hat, data: SnapshotSet) -> float:
    """``sum_i ln det(A_i M A_i^H) + y_i^H (A_i M A_i^H)^-1 y_i``."""
    return ObservedBlocks(as_hermitian(m_hat), data).fit_statistic()


def conditional_moments(m, pattern: SelectionPattern, y) -> ConditionalMoments:
    m = as_hermitian(m)
    y = np.asarray(y, dtype=complex).ravel()
    if y.size != len(pattern):
        raise ValueError(f"y has {y.size} entries but the pattern observes {len(pattern)}")
    obs = list(pattern.observed)
    mis = list(pattern.missing)
    m_oo = m[np.ix_(obs, obs)]
    m_mo = m[np.ix_(mis, obs)]
    m_mm = m[np.ix_(mis, mis)]
    w = np.linalg.cond(m_oo)
    if not w <= COND_CAP:
        raise IllConditionedSnapshotError(0, float(w))
    mu = m_mo @ solve_hpd(m_oo, y)
    gamma = m_mm - m_mo @ solve_hpd(m_oo, m_mo.conj().T)
    gamma = 0.5 * (gamma + gamma.conj().T)
    full = np.zeros(pattern.n, dtype=complex)
    full[obs] = y
    full[mis] = mu
    c = np.outer(full, full.conj())
    c[np.ix_(mis, mis)] += gamma
    return ConditionalMoments(mu=mu, gamma=gamma, c=c)


def e_step(m_prev, data: SnapshotSet) -> np.ndarray:
    """Average conditional correlation ``(1/K) sum_i E[r_i r_i^H | y_i]``."""
    return ObservedBlocks(as_hermitian(m_prev), data).e_step()


def initial_estimate(data: SnapshotSet, constraint, config: EmConfig) -> np.ndarray:
    if not isinstance(config.init, str):
        m0 = as_hermitian(config.init)
        if m0.shape != (data.n, data.n):
            raise ValueError(f"initial matrix has shape {m0.shape}, expected {(data.n, data.n)}")
        if np.linalg.eigvalsh(m0)[0] <= 0:
            raise NotPositiveDefiniteError("initial covariance estimate is not positive definite")
        return m0
    floor = config.init_floor
    if floor is None:
        floor = getattr(constraint, "sigma2", None) or 1.0
    return mstep_noise_floor(zero_filled_sample_covariance(data), floor)


def run_em(
    data: SnapshotSet,
    constraint: MStep | None = None,
    config: EmConfig | None = None,
    record_iterates: bool = False,
) -> EmResult:
    """Alternate E-steps and the constraint's M-step until convergence.

    Stops when the likelihood change is at most ``eps_likelihood`` or the
    Frobenius distance between successive estimates is at most
    ``eps_param``, whichever happens first, or after ``max_iters``.
    """
    constraint = constraint if constraint is not None else ConstraintSet()
    config = config or EmConfig()
    if isinstance(constraint, ConstraintSet):
        constraint.validate_for(data.n)
    # the starting point must be a member of the set for the ascent property
    m = constraint.project(initial_estimate(data, constraint, config))
    blocks = ObservedBlocks(m, data)
    trace = [blocks.log_likelihood()]
    iterates = [m] if record_iterates else []
    termination = "max_iters"
    h = 0
    for h in range(1, config.max_iters + 1):
        sigma = blocks.e_step()
        m_new = constraint.project(sigma)
        blocks = ObservedBlocks(m_new, data)
        p = blocks.log_likelihood()
        prev = trace[-1]
        if config.check_monotone and p < prev - MONOTONE_RTOL * abs(prev):
            raise LikelihoodDecreaseError(
                f"log-likelihood decreased at iteration {h}: {prev:.12g} -> {p:.12g}"
            )
        trace.append(p)
        step = float(np.linalg.norm(m_new - m))
        m = m_new
        if record_iterates:
            iterates.append(m)
        if abs(p - prev) <= config.eps_likelihood:
            termination = "likelihood_tol"
            break
        if step <= config.eps_param:
            termination = "param_tol"
            break
    log.debug("EM stopped after %d iterations (%s)", h, termination)
    return EmResult(estimate=m, likelihood_trace=trace, iterations=h, termination=termination,
                    iterates=iterates)
