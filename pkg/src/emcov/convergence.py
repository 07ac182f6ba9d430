"""Convergence-rate analysis of the EM iteration.

The linear rate of EM near a maximizer is the spectral radius of
``R = I - F_obs^{1/2} F_EM^{-1} F_obs^{1/2}``, with ``F_obs`` the observed
information and ``F_EM`` the expected complete-data information, both taken
with respect to a real parameter vector ``theta`` of the covariance model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .em import EmConfig, ObservedBlocks, run_em
from .mstep import ConstraintSet
from .linalg import hermitian_evd, spectral_radius
from .scene import (
    MissingnessModel,
    SelectionPattern,
    SnapshotSet,
    make_rng,
    sample_covariance,
    sample_snapshots,
)

__all__ = (
    "Parameterization",
    "rank_one_free",
    "ConvergenceReport",
    "RankOneKnownSubspace",
    "CaseStudySummary",
    "CASE_STUDY_DROPPED_PAIRS",
    "case_study_patterns",
    "observed_information",
    "expected_complete_information",
    "rate_analysis",
    "remark1_case_study",
)

# 1-based element pairs left unobserved, used cyclically
CASE_STUDY_DROPPED_PAIRS = ((1, 3), (2, 5), (4, 7), (6, 8), (9, 10))


@dataclass
class Parameterization:
    """Smooth map ``theta -> M(theta)`` with its first and second derivatives.

    Derivative callables may be omitted, in which case central finite
    differences of ``pack`` are used (step ``fd_step * (1 + |theta_l|)``).
    """

    dim: int
    pack: Callable[[np.ndarray], np.ndarray]
    first: Callable[[np.ndarray], np.ndarray] | None = None
    second: Callable[[np.ndarray], np.ndarray] | None = None
    unpack: Callable[[np.ndarray], np.ndarray] | None = None
    fd_step: float = 1e-5

    def first_derivs(self, theta) -> np.ndarray:
        """Array of shape ``(V, N, N)``."""
        theta = np.asarray(theta, dtype=float)
        if self.first is not None:
            return np.asarray(self.first(theta), dtype=complex)
        out = []
        for l in range(self.dim):
            h = self.fd_step * (1 + abs(theta[l]))
            e = np.zeros(self.dim)
            e[l] = h
            out.append((self.pack(theta + e) - self.pack(theta - e)) / (2 * h))
        return np.array(out, dtype=complex)

    def second_derivs(self, theta) -> np.ndarray:
        """Array of shape ``(V, V, N, N)``."""
        theta = np.asarray(theta, dtype=float)
        if self.second is not None:
            return np.asarray(self.second(theta), dtype=complex)
        v = self.dim
        m0 = self.pack(theta)
        n = m0.shape[0]
        out = np.zeros((v, v, n, n), dtype=complex)
        steps = [self.fd_step * 10 * (1 + abs(t)) for t in theta]
        for l in range(v):
            for m in range(l, v):
                el = np.zeros(v)
                em = np.zeros(v)
                el[l] = steps[l]
                em[m] = steps[m]
                if l == m:
                    d2 = (self.pack(theta + el) - 2 * m0 + self.pack(theta - el)) / steps[l] ** 2
                else:
                    d2 = (
                        self.pack(theta + el + em)
                        - self.pack(theta + el - em)
                        - self.pack(theta - el + em)
                        + self.pack(theta - el - em)
                    ) / (4 * steps[l] * steps[m])
                out[l, m] = out[m, l] = d2
        return out

    @classmethod
    def rank_one(cls, n: int, direction=None) -> "Parameterization":
        """``M = sigma2 I + s v v^H`` with ``theta = (sigma2, s)`` and fixed unit ``v``."""
        v = _unit(n, direction)
        vv = np.outer(v, v.conj())
        eye = np.eye(n, dtype=complex)

        def pack(theta):
            return theta[0] * eye + theta[1] * vv

        def unpack(m):
            a = float(np.real(np.vdot(v, m @ v)))
            sigma2 = (float(np.real(np.trace(m))) - a) / (n - 1)
            return np.array([sigma2, a - sigma2])

        return cls(
            dim=2,
            pack=pack,
            first=lambda theta: np.array([eye, vv]),
            second=lambda theta: np.zeros((2, 2, n, n), dtype=complex),
            unpack=unpack,
        )


def rank_one_free(n: int) -> Parameterization:
    """``M = sigma2 I + u u^H`` with free ``u`` whose first entry is real.

    ``theta = (sigma2, Re u_0..Re u_{n-1}, Im u_1..Im u_{n-1})`` has
    ``2n`` entries; fixing the phase of ``u_0`` removes the one direction
    along which ``M`` does not change.
    """
    eye = np.eye(n, dtype=complex)
    basis = np.eye(n, dtype=complex)
    dim = 2 * n

    def to_u(theta):
        u = np.array(theta[1 : n + 1], dtype=complex)
        u[1:] += 1j * np.asarray(theta[n + 1 :])
        return u

    def pack(theta):
        u = to_u(theta)
        return theta[0] * eye + np.outer(u, u.conj())

    def first(theta):
        u = to_u(theta)
        out = np.empty((dim, n, n), dtype=complex)
        out[0] = eye
        for k in range(n):
            eu = np.outer(basis[k], u.conj())
            out[1 + k] = eu + eu.conj().T
            if k:
                out[n + k] = 1j * eu - 1j * eu.conj().T
        return out

    def second(theta):
        out = np.zeros((dim, dim, n, n), dtype=complex)
        for k in range(n):
            for l in range(n):
                sym = np.outer(basis[k], basis[l]) + np.outer(basis[l], basis[k])
                out[1 + k, 1 + l] = sym
                if k and l:
                    out[n + k, n + l] = sym
                if l:
                    # d/dRe u_k d/dIm u_l
                    mixed = -1j * np.outer(basis[k], basis[l]) + 1j * np.outer(basis[l], basis[k])
                    out[1 + k, n + l] = mixed
                    out[n + l, 1 + k] = mixed
        return out

    def unpack(m):
        evd = hermitian_evd(m)
        lam = evd.eigenvalues
        sigma2 = float(np.mean(lam[1:]))
        phi = evd.eigenvectors[:, 0]
        phase = phi[0] / abs(phi[0]) if abs(phi[0]) > 0 else 1.0
        u = np.sqrt(max(lam[0] - sigma2, 0.0)) * phi / phase
        return np.concatenate([[sigma2], u.real, u.imag[1:]])

    return Parameterization(dim=dim, pack=pack, first=first, second=second, unpack=unpack)


def _unit(n, direction):
    if direction is None:
        v = np.zeros(n, dtype=complex)
        v[0] = 1.0
        return v
    v = np.asarray(direction, dtype=complex).ravel()
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class RankOneKnownSubspace:
    """Fixed-rank set with one source along a known direction.

    The M-step maximizes the EM score over ``sigma2 I + s v v^H`` with
    ``s >= 0``: ``sigma2 + s = v^H Sigma v`` and ``sigma2`` the mean power in
    the orthogonal complement, falling back to ``s = 0, sigma2 = tr(Sigma)/N``
    when that would make ``s`` negative.
    """

    n: int
    direction: tuple | None = None

    @property
    def v(self) -> np.ndarray:
        return _unit(self.n, self.direction)

    def parameterization(self) -> Parameterization:
        return Parameterization.rank_one(self.n, self.v)

    def project(self, sigma) -> np.ndarray:
        v = self.v
        n = self.n
        a = float(np.real(np.vdot(v, sigma @ v)))
        t = float(np.real(np.trace(sigma)))
        sigma2 = (t - a) / (n - 1)
        s = a - sigma2
        if s < 0:
            sigma2, s = t / n, 0.0
        return sigma2 * np.eye(n, dtype=complex) + s * np.outer(v, v.conj())


@dataclass
class ConvergenceReport:
    f_obs: np.ndarray
    f_em: np.ndarray
    rate_matrix: np.ndarray
    spectral_radius_value: float
    warnings: list[str] = field(default_factory=list)


def _traces(param, theta, precision, weights_outer):
    """Shared trace algebra for both information matrices.

    ``precision`` is ``(B, N, N)`` and ``weights_outer`` ``(B, N, N)`` is the
    matrix ``P X P`` for each batch entry, ``X`` being ``y y^H`` or ``Sigma``.
    Returns the ``(V, V)`` sum over the batch of the Hessian of
    ``ln det M + tr(M^-1 X)``.
    """
    d1 = param.first_derivs(theta)
    d2 = param.second_derivs(theta)
    v = param.dim
    pd = np.einsum("bij,ljk->lbik", precision, d1)  # P dM_l
    out = np.zeros((v, v))
    for l in range(v):
        for m in range(l, v):
            # tr(-P dl P dm + P d2)
            t1 = -np.einsum("bij,bji->", pd[l], pd[m]) + np.einsum("bij,ji->", precision, d2[l, m])
            # tr(P dl P dm P X) + tr(P dm P dl P X) - tr(P d2 P X)
            w = weights_outer
            t2 = (
                np.einsum("ij,bjk,bki->", d1[l], pd[m], w)
                + np.einsum("ij,bjk,bki->", d1[m], pd[l], w)
                - np.einsum("ij,bji->", d2[l, m], w)
            )
            out[l, m] = out[m, l] = float(np.real(t1 + t2))
    return out


def observed_information(param: Parameterization, theta_hat, data: SnapshotSet) -> np.ndarray:
    """Negative Hessian of the observed-data log-likelihood at ``theta_hat``."""
    if data is None or len(data) == 0:
        return np.zeros((param.dim, param.dim))
    m = param.pack(np.asarray(theta_hat, dtype=float))
    blocks = ObservedBlocks(m, data)
    w = blocks.whitened
    pyyp = w[:, :, None] * w.conj()[:, None, :]
    return _traces(param, theta_hat, blocks.precision, pyyp)


def expected_complete_information(
    param: Parameterization, theta_hat, data: SnapshotSet
) -> np.ndarray:
    """Conditional expectation of the complete-data negative Hessian.

    Uses the E-step matrix at ``M(theta_hat)`` in place of the complete-data
    sample covariance.
    """
    m = param.pack(np.asarray(theta_hat, dtype=float))
    sigma_star = ObservedBlocks(m, data).e_step()
    m_inv = np.linalg.inv(m)
    m_inv = 0.5 * (m_inv + m_inv.conj().T)
    psp = m_inv @ sigma_star @ m_inv
    return data.k * _traces(param, theta_hat, m_inv[None], psp[None])


def _psd_sqrt(f, tol=1e-10):
    evd = hermitian_evd(0.5 * (f + f.T))
    lam = np.where(evd.eigenvalues > tol * max(1.0, abs(evd.eigenvalues[0])), evd.eigenvalues, 0.0)
    u = evd.eigenvectors
    return np.real((u * np.sqrt(lam)) @ u.conj().T)


def rate_analysis(param: Parameterization, theta_hat, data: SnapshotSet) -> ConvergenceReport:
    f_obs = observed_information(param, theta_hat, data)
    f_em = expected_complete_information(param, theta_hat, data)
    warnings = []
    if np.linalg.cond(f_em) > 1e14:
        raise np.linalg.LinAlgError("expected complete information matrix is singular")
    if np.max(np.abs(f_em - f_em.T)) > 1e-8 * max(1.0, np.max(np.abs(f_em))):
        warnings.append("F_EM is not symmetric")
    root = _psd_sqrt(f_obs)
    rate = np.eye(param.dim) - root @ np.linalg.solve(f_em, root)
    rho = spectral_radius(rate)
    if not 0 <= rho <= 1 + 1e-9:
        warnings.append(f"spectral radius {rho:.6g} outside [0, 1]")
    return ConvergenceReport(f_obs, f_em, rate, rho, warnings)


def case_study_patterns(n: int = 10) -> list[SelectionPattern]:
    pats = []
    for a, b in CASE_STUDY_DROPPED_PAIRS:
        drop = {a - 1, b - 1}
        pats.append(SelectionPattern(tuple(i for i in range(n) if i not in drop), n))
    return pats


@dataclass
class CaseStudySummary:
    k: int
    trials: int
    avg_rho: float
    avg_iterations: float
    avg_final_distance: float
    rhos: list[float]
    iterations: list[int]
    final_distances: list[float]
    error_curves: list[list[float]] = field(repr=False)
    empirical_rates: list[float] = field(default_factory=list, repr=False)


def _empirical_rate(errors, floor=1e-9):
    """Median successive error ratio over the tail that stays above ``floor``."""
    e = np.asarray(errors)
    keep = np.flatnonzero(e > floor * max(e[0], 1e-300))
    if keep.size < 4:
        return float("nan")
    tail = e[: keep[-1] + 1]
    ratios = tail[1:] / tail[:-1]
    start = len(ratios) // 2
    return float(np.median(ratios[start:]))


def remark1_case_study(
    k: int,
    trials: int,
    seed: int = 0,
    n: int = 10,
    signal_power: float = 10.0,
    noise_power: float = 1.0,
    eps: float = 1e-7,
    limit_eps: float = 1e-12,
    max_iters: int = 10000,
) -> CaseStudySummary:
    """Rank-one source on element 1, five cyclic two-element dropout patterns.

    For every trial the EM run (tolerance ``eps``, started from the sample
    covariance of ``2n`` auxiliary complete snapshots) is compared with its own
    limit obtained at ``limit_eps``; the rate matrix is evaluated there.
    """
    if k < n:
        raise ValueError(f"k must be >= n = {n}, got {k}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    constraint = ConstraintSet.fixed_rank(1)
    param = rank_one_free(n)
    m_true = noise_power * np.eye(n, dtype=complex)
    m_true[0, 0] += signal_power
    miss = MissingnessModel.cyclic(case_study_patterns(n))
    rhos, iters, finals, curves, emp = [], [], [], [], []
    for t in range(trials):
        rng = make_rng([seed, k, t])
        data = sample_snapshots(m_true, k, miss, rng).data
        aux = sample_snapshots(m_true, 2 * n, None, rng).complete
        cfg = EmConfig(eps_likelihood=eps, eps_param=eps, max_iters=max_iters,
                       init=sample_covariance(aux))
        run = run_em(data, constraint, cfg, record_iterates=True)
        limit = run_em(
            data,
            constraint,
            EmConfig(eps_likelihood=limit_eps, eps_param=limit_eps, max_iters=max_iters,
                     init=run.estimate),
        )
        theta_star = param.unpack(limit.estimate)
        errors = [float(np.linalg.norm(param.unpack(x) - theta_star)) for x in run.iterates]
        report = rate_analysis(param, theta_star, data)
        rhos.append(report.spectral_radius_value)
        iters.append(run.iterations)
        finals.append(errors[-1])
        curves.append(errors)
        emp.append(_empirical_rate(errors))
    return CaseStudySummary(
        k=k,
        trials=trials,
        avg_rho=float(np.mean(rhos)),
        avg_iterations=float(np.mean(iters)),
        avg_final_distance=float(np.mean(finals)),
        rhos=rhos,
        iterations=iters,
        final_distances=finals,
        error_curves=curves,
        empirical_rates=emp,
    )
