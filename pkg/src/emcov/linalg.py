"""Dense complex linear algebra shared by the estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = (
    "HERMITIAN_ATOL",
    "NotHermitianError",
    "NotPositiveDefiniteError",
    "Evd",
    "as_hermitian",
    "exchange_matrix",
    "fb_average",
    "hermitian_evd",
    "spectral_radius",
    "solve_hpd",
)

HERMITIAN_ATOL = 1e-12


class NotHermitianError(ValueError):
    pass


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Evd:
    """Eigen-decomposition with eigenvalues sorted in descending order.

    ``eigenvectors[:, k]`` pairs with ``eigenvalues[k]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T


def _square(m, name="matrix"):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def as_hermitian(m, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Validate Hermitian symmetry and return ``(m + m^H) / 2``.

    The tolerance is absolute, scaled by ``max(1, max|m|)`` so that large
    covariances built from sums of outer products still pass.
    """
    m = _square(np.asarray(m, dtype=complex))
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    gap = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    if gap > atol * scale:
        raise NotHermitianError(f"matrix is not Hermitian: max |M - M^H| = {gap:.3e}")
    return 0.5 * (m + m.conj().T)


def hermitian_evd(m) -> Evd:
    h = as_hermitian(m)
    w, u = np.linalg.eigh(h)
    # eigh returns ascending order; flip keeps ties in reversed native order
    order = np.argsort(-w, kind="stable")
    return Evd(eigenvalues=w[order], eigenvectors=u[:, order])


def spectral_radius(m) -> float:
    m = _square(m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def solve_hpd(m, rhs) -> np.ndarray:
    """Solve ``m @ x = rhs`` for Hermitian positive definite ``m``.

    Raises
    ------
    NotPositiveDefiniteError
        If the Cholesky factorization fails; the message carries the
        smallest eigenvalue and condition number for diagnosis.
    """
    h = as_hermitian(m)
    try:
        factor = scipy.linalg.cho_factor(h, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(h)
        cond = np.inf if w[0] <= 0 else w[-1] / w[0]
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (min eigenvalue {w[0]:.3e}, "
            f"condition number {cond:.3e})"
        ) from None
    return scipy.linalg.cho_solve(factor, np.asarray(rhs, dtype=complex))


def exchange_matrix(n: int) -> np.ndarray:
    return np.eye(n)[::-1]


def fb_average(m) -> np.ndarray:
    """Forward-backward average ``(M + J M^* J) / 2``."""
    m = np.asarray(m, dtype=complex)
    # J X J reverses both axes
    return 0.5 * (m + m.conj()[::-1, ::-1])
