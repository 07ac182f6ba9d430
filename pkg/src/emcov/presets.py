"""Interference and source geometries used by the reference experiments."""

from __future__ import annotations

from .scene import ArrayGeometry, JammerSpec, SourceSpec

# directional cosines in units of the single-side beamwidth, per source count
CLUSTER_OFFSETS = {
    2: (-0.5, 0.5),
    3: (-0.5, 0.5, 1.5),
    4: (-0.5, 0.5, 1.5, -1.5),
}


def jammer_doas() -> list[float]:
    return [10.0 + 10.0 * l for l in range(1, 6)]


def scenario1(jnr_db: float = 30.0) -> list[JammerSpec]:
    """Five narrow-band jammers at 20..60 degrees."""
    return [JammerSpec(doa, jnr_db) for doa in jammer_doas()]


def scenario2(jnr_db: float = 30.0, fractional_bandwidth: float = 0.03) -> list[JammerSpec]:
    """Five wide-band jammers at 20..60 degrees."""
    return [JammerSpec(doa, jnr_db, fractional_bandwidth) for doa in jammer_doas()]


def scenario_jammers(which: int | str) -> list[JammerSpec]:
    key = str(which).lower().removeprefix("scenario")
    if key == "1":
        return scenario1()
    if key == "2":
        return scenario2()
    raise ValueError(f"unknown jammer scenario {which!r}; expected 1 or 2")


def clustered_cosines(d: int, geom: ArrayGeometry) -> list[float]:
    if d not in CLUSTER_OFFSETS:
        raise ValueError(f"clustered defines d in {sorted(CLUSTER_OFFSETS)}, got {d}")
    return [c * geom.ssbw for c in CLUSTER_OFFSETS[d]]


def clustered_sources(d: int, geom: ArrayGeometry, power: float = 1.0) -> list[SourceSpec]:
    return [SourceSpec(u, power) for u in clustered_cosines(d, geom)]


def source_power_for_asnr(asnr_db: float, n: int, noise_power: float = 1.0) -> float:
    """Per-source power giving array SNR ``N sigma_s^2 / sigma_n^2``."""
    return 10.0 ** (asnr_db / 10.0) * noise_power / n
