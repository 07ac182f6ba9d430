"""Monte Carlo drivers behind the command-line tool.

Every sweep uses a paired design: the snapshots of a trial are drawn once
and handed to every method.  Trial seeds are derived from the scenario seed
and the trial coordinates, so results do not depend on how trials are split
across workers, and reductions run in trial order.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .beamforming import (
    beampattern_power,
    default_theta_grid,
    mvdr_weights,
    normalized_si_linear,
)
from .config import ScenarioConfig
from .convergence import remark1_case_study
from .detection import (
    classical_detect,
    detect_from_statistics,
    em_fit_statistics,
)
from .em import run_em
from .linalg import hermitian_evd
from .mstep import ConstraintSet, mstep_noise_floor
from .presets import source_power_for_asnr
from .scene import (
    MissingnessModel,
    disturbance_covariance,
    sample_covariance,
    sample_snapshots,
    source_covariance,
    zero_filled_sample_covariance,
)

__all__ = (
    "BEAMFORM_COLUMNS",
    "BEAMPATTERN_COLUMNS",
    "DETECT_COLUMNS",
    "CONVERGENCE_COLUMNS",
    "Table",
    "run_trials",
    "beamform_sweep",
    "beampattern_average",
    "null_depths",
    "detection_sweep",
    "convergence_sweep",
    "pd_crossing",
    "with_missingness",
)

BEAMFORM_COLUMNS = ("K", "p_m", "scenario", "method", "avg_si_db", "trials")
BEAMPATTERN_COLUMNS = ("method", "theta_deg", "gain_db")
DETECT_COLUMNS = ("rule", "asnr_db", "method", "p_m", "K", "pd", "trials", "excluded_trials")
CONVERGENCE_COLUMNS = ("K", "avg_rho", "avg_iterations", "avg_final_distance", "trials")

RANK_TOL = 1e-10
MAX_EXCLUDED = 100


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.6f}"
    return str(value)


@dataclass
class Table:
    """Rows with a fixed column order and deterministic text rendering."""

    columns: tuple[str, ...]
    rows: list[dict]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in self.columns])
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path

    def where(self, **match) -> list[dict]:
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]


def run_trials(fn, tasks, threads: int = 1) -> list:
    """Ordered map of ``fn`` over ``tasks``, in a process pool when ``threads > 1``."""
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


# ---------------------------------------------------------------- beamforming


def _true_covariance(sc: ScenarioConfig) -> np.ndarray:
    return disturbance_covariance(sc.geometry, sc.jammers, sc.noise_power)


def _beamform_estimates(sc: ScenarioConfig, m_true, draw) -> dict[str, np.ndarray | None]:
    n = sc.n
    sigma2 = sc.noise_power
    s = sample_covariance(draw.complete)
    sy = zero_filled_sample_covariance(draw.data)
    out: dict[str, np.ndarray | None] = {}
    for method in sc.beamform.methods:
        if method == "clairvoyant":
            out[method] = m_true
        elif method == "complete_S":
            out[method] = s if draw.data.k >= n else None
        elif method == "complete_FML":
            out[method] = mstep_noise_floor(s, sigma2)
        elif method == "FML_of_Sy":
            out[method] = mstep_noise_floor(sy, sigma2)
        elif method == "EM_FML":
            out[method] = run_em(draw.data, ConstraintSet.noise_floor(sigma2), sc.em).estimate
        elif method == "EM_FML_FB":
            cons = ConstraintSet.noise_floor_centro_hermitian(sigma2)
            out[method] = run_em(draw.data, cons, sc.em).estimate
        else:
            raise ValueError(f"unknown beamforming method {method!r}")
    return out


def _si_trial(task):
    sc, k, t = task
    m_true = _true_covariance(sc)
    draw = sample_snapshots(m_true, k, sc.missingness, [sc.seed, k, t])
    est = _beamform_estimates(sc, m_true, draw)
    out = {}
    for method, m in est.items():
        if m is None:
            out[method] = math.nan
            continue
        w = mvdr_weights(m, sc.geometry, sc.look_direction_deg)
        out[method] = normalized_si_linear(w, m_true, sc.geometry, sc.look_direction_deg)
    return out


def beamform_sweep(sc: ScenarioConfig, k_grid=None, trials: int | None = None, threads: int = 1) -> Table:
    """Normalized average S/I per method and K, averaged linearly then in dB."""
    k_grid = tuple(k_grid or sc.beamform.k_grid)
    trials = trials or sc.trials
    tasks = [(sc, k, t) for k in k_grid for t in range(trials)]
    results = run_trials(_si_trial, tasks, threads)
    rows = []
    for i, k in enumerate(k_grid):
        chunk = results[i * trials:(i + 1) * trials]
        for method in sc.beamform.methods:
            vals = np.array([r[method] for r in chunk])
            avg = math.nan if np.isnan(vals).any() else float(10 * np.log10(vals.mean()))
            rows.append(dict(K=k, p_m=float(sc.p_m), scenario=sc.name, method=method,
                             avg_si_db=avg, trials=trials))
    return Table(BEAMFORM_COLUMNS, rows)


def _pattern_trial(task):
    sc, k, t, thetas = task
    m_true = _true_covariance(sc)
    draw = sample_snapshots(m_true, k, sc.missingness, [sc.seed, k, t])
    out = {}
    for method, m in _beamform_estimates(sc, m_true, draw).items():
        if m is None:
            continue
        w = mvdr_weights(m, sc.geometry, sc.look_direction_deg)
        out[method] = beampattern_power(w, sc.geometry, thetas)
    return out


def beampattern_average(
    sc: ScenarioConfig, k: int | None = None, trials: int | None = None, thetas=None, threads: int = 1
) -> Table:
    """Beampattern per method, averaged over trials in linear power."""
    k = k or sc.beamform.beampattern_k
    trials = trials or sc.beamform.beampattern_trials
    thetas = default_theta_grid() if thetas is None else np.asarray(thetas, dtype=float)
    results = run_trials(_pattern_trial, [(sc, k, t, thetas) for t in range(trials)], threads)
    rows = []
    for method in sc.beamform.methods:
        powers = [r[method] for r in results if method in r]
        if not powers:
            continue
        with np.errstate(divide="ignore"):
            gain = 10 * np.log10(np.mean(powers, axis=0))
        rows.extend(
            dict(method=method, theta_deg=float(th), gain_db=float(g)) for th, g in zip(thetas, gain)
        )
    return Table(BEAMPATTERN_COLUMNS, rows)


def null_depths(thetas, gain_db, doas, window_deg: float = 2.0) -> list[tuple[float, float, bool]]:
    """For each DOA: (depth in dB, angle of the minimum, whether it is a local minimum).

    The minimum is searched within ``window_deg`` of the DOA; it counts as a
    local minimum when it is not on the window edge.
    """
    thetas = np.asarray(thetas, dtype=float)
    gain_db = np.asarray(gain_db, dtype=float)
    out = []
    for doa in doas:
        idx = np.flatnonzero(np.abs(thetas - doa) <= window_deg)
        j = idx[np.argmin(gain_db[idx])]
        interior = idx[0] < j < idx[-1]
        out.append((float(gain_db[j]), float(thetas[j]), bool(interior)))
    return out


# ------------------------------------------------------------------ detection


def _rank_deficient(m) -> bool:
    lam = hermitian_evd(m).eigenvalues
    return lam[-1] <= RANK_TOL * max(lam[0], 1e-300)


def _detect_trial(task):
    """All ASNR points of one trial on common random numbers.

    Returns ``(attempts_excluded, {(asnr, method, rule): d_hat})``.
    """
    sc, asnr_grid, methods, rules, k1, t = task
    geom = sc.geometry
    excluded = 0
    attempt = 0
    out = {}
    for asnr in asnr_grid:
        power = source_power_for_asnr(asnr, sc.n, sc.noise_power)
        m_true = source_covariance(geom, sc.sources(power), sc.noise_power)
        while True:
            draw = sample_snapshots(m_true, sc.k, sc.missingness, [sc.seed, t, attempt])
            if not _rank_deficient(zero_filled_sample_covariance(draw.data)):
                break
            # the mask does not depend on the source power, so a redraw here
            # happens at the first ASNR point and holds for the rest
            excluded += 1
            attempt += 1
            if excluded > MAX_EXCLUDED:
                raise RuntimeError(f"trial {t}: more than {MAX_EXCLUDED} rank-deficient draws")
        data = draw.data
        stats = {}
        if "em" in methods:
            stats["em"] = em_fit_statistics(data, k1, sc.em, fb=False)[0]
        if "em_fb" in methods:
            stats["em_fb"] = em_fit_statistics(data, k1, sc.em, fb=True)[0]
        for rule in rules:
            for method in methods:
                if method == "complete":
                    res = classical_detect(sample_covariance(draw.complete), rule, k1, sc.k, method)
                elif method == "zero_fill":
                    res = classical_detect(zero_filled_sample_covariance(data), rule, k1, sc.k, method)
                else:
                    res = detect_from_statistics(stats[method], rule, sc.n, sc.k,
                                                 method == "em_fb", method)
                out[(asnr, method, rule)] = res.d_hat
    return excluded, out


def detection_sweep(
    sc: ScenarioConfig,
    rules=None,
    asnr_grid_db=None,
    trials: int | None = None,
    methods=None,
    threads: int = 1,
) -> Table:
    """Probability of correct source-number detection per rule, ASNR and method."""
    d_true = len(sc.source_cosines)
    if d_true == 0:
        raise ValueError("sources: detection needs at least one source")
    rules = tuple(rules or sc.detect.rules)
    asnr_grid = tuple(float(a) for a in (asnr_grid_db or sc.detect.asnr_db))
    methods = tuple(methods or sc.detect.methods)
    trials = trials or sc.trials
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if sc.k < sc.n:
        raise ValueError(f"snapshots: detection needs K >= N = {sc.n}, got {sc.k}")
    k1 = sc.detect.resolved_k1(sc.n)
    tasks = [(sc, asnr_grid, methods, rules, k1, t) for t in range(trials)]
    results = run_trials(_detect_trial, tasks, threads)
    excluded = sum(r[0] for r in results)
    rows = []
    for rule in rules:
        for asnr in asnr_grid:
            for method in methods:
                hits = sum(r[1][(asnr, method, rule)] == d_true for r in results)
                rows.append(dict(rule=rule, asnr_db=asnr, method=method, p_m=float(sc.p_m),
                                 K=sc.k, pd=hits / trials, trials=trials,
                                 excluded_trials=excluded))
    return Table(DETECT_COLUMNS, rows)


def pd_crossing(asnr, pd, level: float = 0.9) -> float:
    """Smallest ASNR where the piecewise-linear PD curve reaches ``level`` (nan if never)."""
    asnr = np.asarray(asnr, dtype=float)
    pd = np.asarray(pd, dtype=float)
    for i in range(len(pd)):
        if pd[i] >= level:
            if i == 0:
                return float(asnr[0])
            a0, a1, p0, p1 = asnr[i - 1], asnr[i], pd[i - 1], pd[i]
            return float(a0 + (level - p0) * (a1 - a0) / (p1 - p0))
    return math.nan


# ---------------------------------------------------------------- convergence


def _convergence_task(task):
    k, trials, seed = task
    return remark1_case_study(k, trials, seed=seed)


def convergence_sweep(k_grid=(40, 60, 80, 100), trials: int = 100, seed: int = 0, threads: int = 1) -> Table:
    results = run_trials(_convergence_task, [(k, trials, seed) for k in k_grid], threads)
    rows = [
        dict(K=s.k, avg_rho=s.avg_rho, avg_iterations=s.avg_iterations,
             avg_final_distance=s.avg_final_distance, trials=s.trials)
        for s in results
    ]
    return Table(CONVERGENCE_COLUMNS, rows)


def with_missingness(sc: ScenarioConfig, p_m: float) -> ScenarioConfig:
    """Copy of ``sc`` with Bernoulli missingness at rate ``p_m``."""
    return replace(sc, missingness=MissingnessModel.bernoulli(p_m))
