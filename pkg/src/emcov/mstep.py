"""Closed-form maximizers of the EM score for each supported covariance set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_hermitian, fb_average, hermitian_evd

__all__ = (
    "ConstraintSet",
    "FixedRankParams",
    "CONSTRAINT_KINDS",
    "score",
    "mstep_unconstrained",
    "mstep_noise_floor",
    "mstep_centro_hermitian",
    "mstep_noise_floor_centro_hermitian",
    "mstep_fixed_rank",
    "mstep_fixed_rank_fb",
    "centro_hermitian_violation",
)

CONSTRAINT_KINDS = (
    "unconstrained",
    "noise_floor",
    "centro_hermitian",
    "noise_floor_centro_hermitian",
    "fixed_rank",
    "fixed_rank_centro_hermitian",
)


@dataclass(frozen=True)
class FixedRankParams:
    top_eigenvalues: np.ndarray
    noise_power: float
    top_eigenvectors: np.ndarray  # (N, d), columns aligned with top_eigenvalues

    @property
    def rank(self) -> int:
        return self.top_eigenvalues.size


def score(m, sigma, k: int = 1) -> float:
    """EM score ``-K [N ln(pi) + ln det M + tr(M^-1 Sigma)]``."""
    m = as_hermitian(m)
    n = m.shape[0]
    sign, logdet = np.linalg.slogdet(m)
    if sign.real <= 0:
        return -np.inf
    tr = np.trace(np.linalg.solve(m, sigma)).real
    return float(-k * (n * np.log(np.pi) + logdet + tr))


def mstep_unconstrained(sigma) -> np.ndarray:
    return as_hermitian(sigma)


def _clamp(evd, floor):
    lam = np.maximum(evd.eigenvalues, floor)
    u = evd.eigenvectors
    out = (u * lam) @ u.conj().T
    return 0.5 * (out + out.conj().T)


def mstep_noise_floor(sigma, sigma2_floor: float) -> np.ndarray:
    """Clamp the spectrum of ``sigma`` from below at ``sigma2_floor``."""
    if not sigma2_floor > 0:
        raise ValueError(f"noise floor must be > 0, got {sigma2_floor}")
    return _clamp(hermitian_evd(sigma), sigma2_floor)


def mstep_centro_hermitian(sigma) -> np.ndarray:
    return fb_average(as_hermitian(sigma))


def mstep_noise_floor_centro_hermitian(sigma, sigma2_floor: float) -> np.ndarray:
    """Forward-backward average, then spectral clamp at the floor.

    The clamped reconstruction loses exact centro-Hermitian symmetry to
    rounding, so it is averaged once more; that second average only moves
    entries at machine-precision level and cannot lower any eigenvalue
    below the floor by more than rounding.
    """
    if not sigma2_floor > 0:
        raise ValueError(f"noise floor must be > 0, got {sigma2_floor}")
    sfb = fb_average(as_hermitian(sigma))
    return fb_average(_clamp(hermitian_evd(sfb), sigma2_floor))


def _fixed_rank(s, d):
    n = s.shape[0]
    if int(d) != d or not 0 <= d <= n - 1:
        raise ValueError(f"rank d must be an integer in [0, {n - 1}], got {d}")
    d = int(d)
    evd = hermitian_evd(s)
    lam = evd.eigenvalues
    # mean of the N - d smallest eigenvalues
    noise = float(np.mean(lam[d:]))
    u = evd.eigenvectors[:, :d]
    m = noise * np.eye(n, dtype=complex) + (u * (lam[:d] - noise)) @ u.conj().T
    m = 0.5 * (m + m.conj().T)
    return m, FixedRankParams(lam[:d].copy(), noise, u.copy())


def mstep_fixed_rank(sigma, d: int) -> tuple[np.ndarray, FixedRankParams]:
    return _fixed_rank(as_hermitian(sigma), d)


def mstep_fixed_rank_fb(sigma, d: int) -> tuple[np.ndarray, FixedRankParams]:
    m, params = _fixed_rank(fb_average(as_hermitian(sigma)), d)
    return fb_average(m), params


def centro_hermitian_violation(m) -> float:
    """``||M - J M^* J||_F``."""
    m = np.asarray(m)
    return float(np.linalg.norm(m - m.conj()[::-1, ::-1]))


@dataclass(frozen=True)
class ConstraintSet:
    """A covariance uncertainty set together with its M-step.

    ``sigma2`` is the known white-noise floor (floor kinds) and ``rank`` the
    signal-subspace dimension (fixed-rank kinds).
    """

    kind: str = "unconstrained"
    sigma2: float | None = None
    rank: int | None = None

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ValueError(f"constraint kind must be one of {CONSTRAINT_KINDS}, got {self.kind!r}")
        if "noise_floor" in self.kind:
            if self.sigma2 is None or not self.sigma2 > 0:
                raise ValueError(f"sigma2 must be > 0 for {self.kind}, got {self.sigma2}")
        if "fixed_rank" in self.kind:
            if self.rank is None or int(self.rank) != self.rank or self.rank < 0:
                raise ValueError(f"rank must be a nonnegative integer for {self.kind}, got {self.rank}")

    @classmethod
    def unconstrained(cls):
        return cls("unconstrained")

    @classmethod
    def noise_floor(cls, sigma2: float):
        return cls("noise_floor", sigma2=sigma2)

    @classmethod
    def centro_hermitian(cls):
        return cls("centro_hermitian")

    @classmethod
    def noise_floor_centro_hermitian(cls, sigma2: float):
        return cls("noise_floor_centro_hermitian", sigma2=sigma2)

    @classmethod
    def fixed_rank(cls, d: int):
        return cls("fixed_rank", rank=d)

    @classmethod
    def fixed_rank_centro_hermitian(cls, d: int):
        return cls("fixed_rank_centro_hermitian", rank=d)

    def validate_for(self, n: int) -> None:
        if self.rank is not None and self.rank > n - 1:
            raise ValueError(f"rank must be <= N-1 = {n - 1}, got {self.rank}")

    def project(self, sigma) -> np.ndarray:
        """Maximize the EM score over this set given the E-step matrix."""
        kind = self.kind
        if kind == "unconstrained":
            return mstep_unconstrained(sigma)
        if kind == "noise_floor":
            return mstep_noise_floor(sigma, self.sigma2)
        if kind == "centro_hermitian":
            return mstep_centro_hermitian(sigma)
        if kind == "noise_floor_centro_hermitian":
            return mstep_noise_floor_centro_hermitian(sigma, self.sigma2)
        if kind == "fixed_rank":
            return mstep_fixed_rank(sigma, self.rank)[0]
        return mstep_fixed_rank_fb(sigma, self.rank)[0]

    def contains(self, m, rtol: float = 1e-9) -> bool:
        """Numerical set-membership check used by tests and diagnostics."""
        m = as_hermitian(m)
        lam = hermitian_evd(m).eigenvalues
        if lam[-1] <= 0:
            return False
        scale = max(1.0, float(np.linalg.norm(m)))
        if "centro_hermitian" in self.kind and centro_hermitian_violation(m) > 1e-12 * scale:
            return False
        if "noise_floor" in self.kind and lam[-1] < self.sigma2 * (1 - rtol):
            return False
        if "fixed_rank" in self.kind:
            noise = float(np.mean(lam[self.rank:]))
            if np.any(np.abs(lam[self.rank:] - noise) > rtol * lam[0]):
                return False
        return True

    def __str__(self) -> str:
        if self.sigma2 is not None:
            return f"{self.kind}(sigma2={self.sigma2:g})"
        if self.rank is not None:
            return f"{self.kind}(d={self.rank})"
        return self.kind
