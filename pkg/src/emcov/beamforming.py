"""MVDR (Capon) weights, beampatterns and the normalized S/I metric."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .em import EmConfig, run_em
from .linalg import solve_hpd
from .scene import ArrayGeometry, SnapshotSet, steering_vector

__all__ = (
    "BeamformerWeights",
    "mvdr_weights",
    "beampattern",
    "beampattern_power",
    "default_theta_grid",
    "sinr",
    "normalized_si",
    "normalized_si_linear",
    "adaptive_beamform",
)


@dataclass(frozen=True)
class BeamformerWeights:
    w: np.ndarray
    steering_doa: float

    def response(self, geom: ArrayGeometry, theta_degrees: float) -> complex:
        return complex(np.vdot(self.w, steering_vector(geom, theta_degrees)))


def mvdr_weights(m, geom: ArrayGeometry, theta0_degrees: float = 0.0) -> BeamformerWeights:
    """``w = M^-1 v / (v^H M^-1 v)`` for the look direction ``theta0``."""
    v = steering_vector(geom, theta0_degrees)
    x = solve_hpd(m, v)
    return BeamformerWeights(w=x / np.vdot(v, x), steering_doa=float(theta0_degrees))


def default_theta_grid() -> np.ndarray:
    return np.linspace(-90.0, 90.0, 721)


def beampattern_power(w: BeamformerWeights, geom: ArrayGeometry, thetas=None) -> np.ndarray:
    """Linear ``|w^H v(theta)|^2`` normalized to the look direction."""
    thetas = default_theta_grid() if thetas is None else np.asarray(thetas, dtype=float)
    u = np.sin(np.radians(thetas))
    k = np.arange(geom.n_elements)
    v = np.exp(1j * 2 * np.pi * geom.spacing_over_wavelength * np.outer(k, u))
    gain = np.abs(w.w.conj() @ v) ** 2
    return gain / abs(w.response(geom, w.steering_doa)) ** 2


def beampattern(w: BeamformerWeights, geom: ArrayGeometry, thetas=None) -> list[tuple[float, float]]:
    thetas = default_theta_grid() if thetas is None else np.asarray(thetas, dtype=float)
    power = beampattern_power(w, geom, thetas)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(power)
    return list(zip(thetas.tolist(), db.tolist()))


def sinr(w, m_true, geom: ArrayGeometry, theta0_degrees: float) -> float:
    w = w.w if isinstance(w, BeamformerWeights) else np.asarray(w)
    v = steering_vector(geom, theta0_degrees)
    num = abs(np.vdot(w, v)) ** 2
    den = float(np.real(np.vdot(w, np.asarray(m_true) @ w)))
    return num / den


def normalized_si_linear(w, m_true, geom: ArrayGeometry, theta0_degrees: float) -> float:
    """SINR of ``w`` over the clairvoyant optimum ``v^H M^-1 v`` (in (0, 1])."""
    v = steering_vector(geom, theta0_degrees)
    optimum = float(np.real(np.vdot(v, solve_hpd(m_true, v))))
    return sinr(w, m_true, geom, theta0_degrees) / optimum


def normalized_si(w, m_true, geom: ArrayGeometry, theta0_degrees: float) -> float:
    return float(10.0 * np.log10(normalized_si_linear(w, m_true, geom, theta0_degrees)))


def adaptive_beamform(
    data: SnapshotSet,
    constraint,
    config: EmConfig | None,
    geom: ArrayGeometry,
    theta0_degrees: float = 0.0,
) -> BeamformerWeights:
    """EM covariance estimate under ``constraint`` followed by MVDR weights."""
    result = run_em(data, constraint, config)
    return mvdr_weights(result.estimate, geom, theta0_degrees)
