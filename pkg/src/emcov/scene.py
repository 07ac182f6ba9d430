"""Simulation world: ULA steering, jammer/source covariances, snapshot sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .linalg import NotPositiveDefiniteError, as_hermitian

__all__ = (
    "ArrayGeometry",
    "JammerSpec",
    "SourceSpec",
    "SelectionPattern",
    "MissingnessModel",
    "SnapshotSet",
    "SampleDraw",
    "SSBW_NUMERATOR",
    "steering_vector",
    "steering_vector_u",
    "disturbance_covariance",
    "source_covariance",
    "sample_snapshots",
    "zero_filled_sample_covariance",
    "sample_covariance",
    "make_rng",
)

SSBW_NUMERATOR = 0.891


@dataclass(frozen=True)
class ArrayGeometry:
    n_elements: int
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if int(self.n_elements) != self.n_elements or self.n_elements < 2:
            raise ValueError(f"n_elements must be an integer >= 2, got {self.n_elements}")
        if not self.spacing_over_wavelength > 0:
            raise ValueError(
                f"spacing_over_wavelength must be > 0, got {self.spacing_over_wavelength}"
            )

    @property
    def ssbw(self) -> float:
        """3 dB single-side beamwidth in directional-cosine space."""
        return SSBW_NUMERATOR / self.n_elements


@dataclass(frozen=True)
class JammerSpec:
    doa_degrees: float
    jnr_db: float
    fractional_bandwidth: float = 0.0

    def __post_init__(self):
        if not abs(self.doa_degrees) < 90:
            raise ValueError(f"doa_degrees must satisfy |doa| < 90, got {self.doa_degrees}")
        if self.fractional_bandwidth < 0:
            raise ValueError(
                f"fractional_bandwidth must be >= 0, got {self.fractional_bandwidth}"
            )


@dataclass(frozen=True)
class SourceSpec:
    directional_cosine: float
    power: float

    def __post_init__(self):
        if not abs(self.directional_cosine) < 1:
            raise ValueError(
                f"directional_cosine must satisfy |u| < 1, got {self.directional_cosine}"
            )
        if not self.power > 0:
            raise ValueError(f"power must be > 0, got {self.power}")


@dataclass(frozen=True)
class SelectionPattern:
    """Observed sensor indices of one snapshot (rows of the selection matrix)."""

    observed: tuple[int, ...]
    n: int

    def __post_init__(self):
        obs = tuple(int(i) for i in self.observed)
        object.__setattr__(self, "observed", obs)
        if not obs:
            raise ValueError("selection pattern must observe at least one element")
        if any(b <= a for a, b in zip(obs, obs[1:])):
            raise ValueError(f"observed indices must be strictly increasing: {obs}")
        if obs[0] < 0 or obs[-1] >= self.n:
            raise ValueError(f"observed indices must lie in [0, {self.n}): {obs}")

    @classmethod
    def full(cls, n: int) -> "SelectionPattern":
        return cls(tuple(range(n)), n)

    @classmethod
    def from_mask(cls, mask) -> "SelectionPattern":
        mask = np.asarray(mask, dtype=bool)
        return cls(tuple(np.flatnonzero(mask).tolist()), mask.size)

    @property
    def missing(self) -> tuple[int, ...]:
        obs = set(self.observed)
        return tuple(i for i in range(self.n) if i not in obs)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[list(self.observed)] = True
        return m

    def selection_matrix(self) -> np.ndarray:
        return np.eye(self.n)[list(self.observed)]

    def __len__(self) -> int:
        return len(self.observed)


@dataclass(frozen=True)
class MissingnessModel:
    """How observation patterns are drawn.

    ``kind`` is ``"none"``, ``"bernoulli"`` (each entry missing independently
    with probability ``p_m``) or ``"cyclic"`` (the listed patterns are used in
    turn, snapshot ``i`` taking ``patterns[i % len(patterns)]``).
    """

    kind: str = "none"
    p_m: float = 0.0
    patterns: tuple[SelectionPattern, ...] = ()
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("none", "bernoulli", "cyclic"):
            raise ValueError(f"missingness kind must be none/bernoulli/cyclic, got {self.kind!r}")
        if self.kind == "bernoulli" and not 0 <= self.p_m < 1:
            raise ValueError(f"p_m must satisfy 0 <= p_m < 1, got {self.p_m}")
        if self.kind == "cyclic" and not self.patterns:
            raise ValueError("cyclic missingness needs at least one pattern")
        object.__setattr__(self, "patterns", tuple(self.patterns))

    @classmethod
    def bernoulli(cls, p_m: float, seed: int | None = None) -> "MissingnessModel":
        return cls("bernoulli", p_m=p_m, seed=seed)

    @classmethod
    def cyclic(cls, patterns: Sequence[SelectionPattern]) -> "MissingnessModel":
        return cls("cyclic", patterns=tuple(patterns))


@dataclass
class SnapshotSet:
    """Observed snapshots stored densely.

    ``mask[i, k]`` tells whether element ``k`` of snapshot ``i`` was observed
    and ``values`` holds the zero-filled snapshots (missing entries are 0).
    """

    n: int
    mask: np.ndarray
    values: np.ndarray
    resampled_patterns: int = field(default=0, compare=False)

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self.values = np.asarray(self.values, dtype=complex)
        if self.mask.ndim != 2 or self.mask.shape[1] != self.n:
            raise ValueError(f"mask must have shape (K, {self.n}), got {self.mask.shape}")
        if self.values.shape != self.mask.shape:
            raise ValueError("values and mask shapes differ")
        if self.mask.shape[0] == 0:
            raise ValueError("snapshot set must contain at least one snapshot")
        empty = np.flatnonzero(~self.mask.any(axis=1))
        if empty.size:
            raise ValueError(f"snapshot {int(empty[0])} has no observed entries")
        self.values = np.where(self.mask, self.values, 0)

    @classmethod
    def from_records(cls, n: int, records) -> "SnapshotSet":
        """Build from an iterable of ``(SelectionPattern | indices, y)`` pairs."""
        masks, rows = [], []
        for idx, (pattern, y) in enumerate(records):
            if not isinstance(pattern, SelectionPattern):
                pattern = SelectionPattern(tuple(pattern), n)
            if pattern.n != n:
                raise ValueError(f"record {idx}: pattern is for n={pattern.n}, expected {n}")
            y = np.asarray(y, dtype=complex).ravel()
            if y.size != len(pattern):
                raise ValueError(
                    f"record {idx}: y has {y.size} entries but pattern observes {len(pattern)}"
                )
            row = np.zeros(n, dtype=complex)
            row[list(pattern.observed)] = y
            masks.append(pattern.mask)
            rows.append(row)
        if not rows:
            raise ValueError("snapshot set must contain at least one snapshot")
        return cls(n, np.array(masks), np.array(rows))

    @classmethod
    def complete(cls, snapshots) -> "SnapshotSet":
        """Wrap fully observed snapshots given as rows of a ``(K, N)`` array."""
        snapshots = np.atleast_2d(np.asarray(snapshots, dtype=complex))
        return cls(snapshots.shape[1], np.ones(snapshots.shape, dtype=bool), snapshots)

    def __len__(self) -> int:
        return self.mask.shape[0]

    @property
    def k(self) -> int:
        return self.mask.shape[0]

    @property
    def observed_counts(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    @property
    def has_missing(self) -> bool:
        return not bool(self.mask.all())

    def pattern(self, i: int) -> SelectionPattern:
        return SelectionPattern.from_mask(self.mask[i])

    def observation(self, i: int) -> np.ndarray:
        return self.values[i, self.mask[i]]

    def records(self) -> Iterator[tuple[SelectionPattern, np.ndarray]]:
        for i in range(self.k):
            yield self.pattern(i), self.observation(i)


@dataclass
class SampleDraw:
    """Output of :func:`sample_snapshots`; ``complete`` is kept for oracle use."""

    data: SnapshotSet
    complete: np.ndarray

    @property
    def resampled_patterns(self) -> int:
        return self.data.resampled_patterns


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def steering_vector_u(geom: ArrayGeometry, u: float) -> np.ndarray:
    """Steering vector for directional cosine ``u = sin(theta)``."""
    k = np.arange(geom.n_elements)
    return np.exp(1j * 2 * np.pi * geom.spacing_over_wavelength * k * u)


def steering_vector(geom: ArrayGeometry, theta_degrees: float) -> np.ndarray:
    if not abs(theta_degrees) <= 90:
        raise ValueError(f"theta must satisfy |theta| <= 90 degrees, got {theta_degrees}")
    return steering_vector_u(geom, math.sin(math.radians(theta_degrees)))


def _sinc(x):
    # sin(x)/x with radian argument, unlike np.sinc
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = np.sin(x[nz]) / x[nz]
    return out


def disturbance_covariance(
    geom: ArrayGeometry, jammers: Sequence[JammerSpec], white_noise_power: float = 1.0
) -> np.ndarray:
    """Jammer-plus-noise covariance.

    Narrow-band jammers (``fractional_bandwidth == 0``) add rank-one terms
    ``p v v^H``; wide-band jammers add the sinc-tapered Toeplitz term
    ``p sinc(0.5 B (n-m) z) exp(j (n-m) z)`` with ``z = pi sin(theta)``.
    Jammer power is ``JNR * white_noise_power``.
    """
    if not white_noise_power > 0:
        raise ValueError(f"white_noise_power must be > 0, got {white_noise_power}")
    n = geom.n_elements
    m = white_noise_power * np.eye(n, dtype=complex)
    lag = np.subtract.outer(np.arange(n), np.arange(n))
    for jam in jammers:
        power = white_noise_power * 10.0 ** (jam.jnr_db / 10.0)
        if jam.fractional_bandwidth == 0:
            v = steering_vector(geom, jam.doa_degrees)
            m += power * np.outer(v, v.conj())
        else:
            zeta = np.pi * math.sin(math.radians(jam.doa_degrees))
            m += power * _sinc(0.5 * jam.fractional_bandwidth * lag * zeta) * np.exp(
                1j * lag * zeta
            )
    return m


def source_covariance(
    geom: ArrayGeometry, sources: Sequence[SourceSpec], white_noise_power: float = 1.0
) -> np.ndarray:
    if not white_noise_power > 0:
        raise ValueError(f"white_noise_power must be > 0, got {white_noise_power}")
    m = white_noise_power * np.eye(geom.n_elements, dtype=complex)
    for src in sources:
        v = steering_vector_u(geom, src.directional_cosine)
        m += src.power * np.outer(v, v.conj())
    return m


def _draw_mask(miss: MissingnessModel, k: int, n: int, rng) -> tuple[np.ndarray, int]:
    if miss.kind == "none" or (miss.kind == "bernoulli" and miss.p_m == 0):
        return np.ones((k, n), dtype=bool), 0
    if miss.kind == "cyclic":
        for p in miss.patterns:
            if p.n != n:
                raise ValueError(f"cyclic pattern is for n={p.n}, array has {n} elements")
        masks = np.array([p.mask for p in miss.patterns])
        return masks[np.arange(k) % len(masks)], 0
    mask = rng.random((k, n)) >= miss.p_m
    resampled = 0
    empty = np.flatnonzero(~mask.any(axis=1))
    while empty.size:
        resampled += empty.size
        mask[empty] = rng.random((empty.size, n)) >= miss.p_m
        empty = empty[~mask[empty].any(axis=1)]
    return mask, resampled


def sample_snapshots(m, k: int, miss: MissingnessModel | None = None, seed=None) -> SampleDraw:
    """Draw ``k`` snapshots from CN(0, m) and apply a missingness pattern.

    Each complete snapshot is ``L z`` with ``m = L L^H`` and ``z`` having
    independent real and imaginary N(0, 1/2) parts.  The mask is drawn after
    the snapshots from the same generator, so a given seed yields the same
    complete data for every missingness model.  Bernoulli patterns with no
    observed entry are redrawn; the count is stored on the result.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    miss = miss or MissingnessModel()
    h = as_hermitian(m)
    try:
        chol = np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("covariance for sampling is not positive definite") from None
    rng = make_rng(seed if seed is not None else miss.seed)
    n = h.shape[0]
    z = (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))) / np.sqrt(2.0)
    complete = z @ chol.T
    mask, resampled = _draw_mask(miss, k, n, rng)
    data = SnapshotSet(n, mask, complete, resampled_patterns=resampled)
    return SampleDraw(data=data, complete=complete)


def sample_covariance(snapshots) -> np.ndarray:
    """``(1/K) sum r r^H`` for snapshots stored as rows."""
    r = np.atleast_2d(np.asarray(snapshots, dtype=complex))
    return (r.T @ r.conj()) / r.shape[0]


def zero_filled_sample_covariance(data: SnapshotSet) -> np.ndarray:
    return sample_covariance(data.values)
