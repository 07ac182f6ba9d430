"""Scenario files: YAML documents describing an experiment.

Example::

    name: scenario1
    n_elements: 20
    spacing: 0.5
    noise_power_db: 0
    look_direction_deg: 0
    jammers: scenario1            # or a list of {doa_deg, jnr_db, fractional_bandwidth}
    sources: {clustered: 3}          # or a list of {directional_cosine, power}
    missingness: {kind: bernoulli, p_m: 0.1}
    snapshots: 60                 # K
    trials: 100
    seed: 1
    constraint: {kind: noise_floor, sigma2: 1.0}
    em: {eps_likelihood: 1.0e-7, eps_param: 1.0e-7, max_iters: 10000}
    beamform: {k_grid: [20, 40, 60], methods: [...], beampattern_k: 60, beampattern_trials: 100}
    detect: {asnr_db: [10, 12, 14], rules: [aic, mdl, hqc], k1: 10, methods: [...]}

Unknown keys are rejected so typos do not pass silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from . import presets
from .detection import DETECTION_METHODS, PENALTY_RULES
from .em import EmConfig
from .mstep import CONSTRAINT_KINDS, ConstraintSet
from .scene import ArrayGeometry, JammerSpec, MissingnessModel, SelectionPattern, SourceSpec

__all__ = (
    "ConfigError",
    "BEAMFORM_METHODS",
    "BeamformSettings",
    "DetectSettings",
    "ScenarioConfig",
    "load_scenario",
    "parse_scenario",
)

BEAMFORM_METHODS = (
    "clairvoyant",
    "complete_S",
    "complete_FML",
    "FML_of_Sy",
    "EM_FML",
    "EM_FML_FB",
)


class ConfigError(ValueError):
    """Invalid scenario; the message starts with the offending field."""


@dataclass(frozen=True)
class BeamformSettings:
    k_grid: tuple[int, ...] = (20, 40, 60, 80, 100)
    methods: tuple[str, ...] = BEAMFORM_METHODS
    beampattern_k: int = 60
    beampattern_trials: int = 100


@dataclass(frozen=True)
class DetectSettings:
    asnr_db: tuple[float, ...] = tuple(float(a) for a in range(0, 31, 3))
    rules: tuple[str, ...] = PENALTY_RULES
    methods: tuple[str, ...] = DETECTION_METHODS
    k1: int | None = None
    n_sources: int | None = None

    def resolved_k1(self, n: int) -> int:
        return self.k1 if self.k1 is not None else n // 2


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: ArrayGeometry
    jammers: tuple[JammerSpec, ...] = ()
    source_cosines: tuple[float, ...] = ()
    source_powers: tuple[float, ...] = ()
    noise_power_db: float = 0.0
    look_direction_deg: float = 0.0
    missingness: MissingnessModel = field(default_factory=MissingnessModel)
    k: int = 60
    trials: int = 100
    seed: int = 0
    constraint: ConstraintSet | None = None
    em: EmConfig = field(default_factory=EmConfig)
    beamform: BeamformSettings = field(default_factory=BeamformSettings)
    detect: DetectSettings = field(default_factory=DetectSettings)
    name: str = "scenario"

    @property
    def noise_power(self) -> float:
        return 10.0 ** (self.noise_power_db / 10.0)

    @property
    def n(self) -> int:
        return self.geometry.n_elements

    @property
    def p_m(self) -> float:
        return self.missingness.p_m if self.missingness.kind == "bernoulli" else 0.0

    def sources(self, power: float | None = None) -> list[SourceSpec]:
        powers = self.source_powers or (1.0,) * len(self.source_cosines)
        if power is not None:
            powers = (power,) * len(self.source_cosines)
        return [SourceSpec(u, p) for u, p in zip(self.source_cosines, powers)]

    def effective_constraint(self) -> ConstraintSet:
        return self.constraint or ConstraintSet.noise_floor(self.noise_power)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def _check_keys(section: str, doc: dict, allowed) -> None:
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ConfigError(f"{section}: unknown key(s) {extra}; allowed {sorted(allowed)}")


def _num(section, value, kind=float, positive=False, nonneg=False):
    try:
        if kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise ValueError
            out = int(value)
        else:
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
    except (TypeError, ValueError):
        raise ConfigError(f"{section}: expected {kind.__name__}, got {value!r}") from None
    if positive and not out > 0:
        raise ConfigError(f"{section}: must be > 0, got {out}")
    if nonneg and out < 0:
        raise ConfigError(f"{section}: must be >= 0, got {out}")
    return out


def _wrap(section, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _jammers(doc) -> tuple[JammerSpec, ...]:
    if doc is None:
        return ()
    if isinstance(doc, (str, int)):
        return tuple(_wrap("jammers", presets.scenario_jammers, doc))
    if not isinstance(doc, list):
        raise ConfigError("jammers: expected a preset name or a list")
    out = []
    for i, item in enumerate(doc):
        sec = f"jammers[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(f"{sec}: expected a mapping")
        _check_keys(sec, item, ("doa_deg", "jnr_db", "fractional_bandwidth"))
        out.append(
            _wrap(
                sec,
                JammerSpec,
                _num(f"{sec}.doa_deg", item.get("doa_deg")),
                _num(f"{sec}.jnr_db", item.get("jnr_db")),
                _num(f"{sec}.fractional_bandwidth", item.get("fractional_bandwidth", 0.0), nonneg=True),
            )
        )
    return tuple(out)


def _sources(doc, geom) -> tuple[tuple[float, ...], tuple[float, ...]]:
    if doc is None:
        return (), ()
    if isinstance(doc, dict):
        _check_keys("sources", doc, ("clustered",))
        d = _num("sources.clustered", doc.get("clustered"), int)
        return tuple(_wrap("sources.clustered", presets.clustered_cosines, d, geom)), ()
    if not isinstance(doc, list):
        raise ConfigError("sources: expected {clustered: d} or a list")
    cos, pw = [], []
    for i, item in enumerate(doc):
        sec = f"sources[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(f"{sec}: expected a mapping")
        _check_keys(sec, item, ("directional_cosine", "power"))
        entry = _wrap(
            sec,
            SourceSpec,
            _num(f"{sec}.directional_cosine", item.get("directional_cosine")),
            _num(f"{sec}.power", item.get("power", 1.0), positive=True),
        )
        cos.append(entry.directional_cosine)
        pw.append(entry.power)
    return tuple(cos), tuple(pw)


def _missingness(doc, n) -> MissingnessModel:
    if doc is None:
        return MissingnessModel()
    if not isinstance(doc, dict):
        raise ConfigError("missingness: expected a mapping")
    _check_keys("missingness", doc, ("kind", "p_m", "seed", "patterns"))
    kind = doc.get("kind", "none")
    if kind == "cyclic":
        pats = doc.get("patterns")
        if not isinstance(pats, list) or not pats:
            raise ConfigError("missingness.patterns: cyclic kind needs a list of index lists")
        patterns = tuple(
            _wrap(f"missingness.patterns[{i}]", SelectionPattern, tuple(p), n)
            for i, p in enumerate(pats)
        )
        return MissingnessModel.cyclic(patterns)
    p_m = _num("missingness.p_m", doc.get("p_m", 0.0), nonneg=True)
    seed = doc.get("seed")
    if seed is not None:
        seed = _num("missingness.seed", seed, int)
    return _wrap("missingness", MissingnessModel, kind, p_m=p_m, seed=seed)


def _constraint(doc, n) -> ConstraintSet | None:
    if doc is None:
        return None
    if isinstance(doc, str):
        doc = {"kind": doc}
    _check_keys("constraint", doc, ("kind", "sigma2", "rank"))
    kind = doc.get("kind")
    if kind not in CONSTRAINT_KINDS:
        raise ConfigError(f"constraint.kind: must be one of {CONSTRAINT_KINDS}, got {kind!r}")
    sigma2 = doc.get("sigma2")
    rank = doc.get("rank")
    c = _wrap(
        "constraint",
        ConstraintSet,
        kind,
        None if sigma2 is None else _num("constraint.sigma2", sigma2, positive=True),
        None if rank is None else _num("constraint.rank", rank, int, nonneg=True),
    )
    _wrap("constraint.rank", c.validate_for, n)
    return c


def _em(doc) -> EmConfig:
    if doc is None:
        return EmConfig()
    _check_keys("em", doc, ("eps_likelihood", "eps_param", "max_iters", "init_floor"))
    kw = {}
    for key in ("eps_likelihood", "eps_param", "init_floor"):
        if key in doc:
            kw[key] = _num(f"em.{key}", doc[key], positive=True)
    if "max_iters" in doc:
        kw["max_iters"] = _num("em.max_iters", doc["max_iters"], int, positive=True)
    return _wrap("em", EmConfig, **kw)


def _choices(section, values, allowed) -> tuple[str, ...]:
    if isinstance(values, str):
        values = [values]
    bad = [v for v in values if v not in allowed]
    if bad:
        raise ConfigError(f"{section}: unknown value(s) {bad}; allowed {list(allowed)}")
    if not values:
        raise ConfigError(f"{section}: must not be empty")
    return tuple(values)


def _int_list(section, values, positive=True) -> tuple[int, ...]:
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{section}: expected a non-empty list")
    return tuple(_num(f"{section}[{i}]", v, int, positive=positive) for i, v in enumerate(values))


def _beamform(doc) -> BeamformSettings:
    if doc is None:
        return BeamformSettings()
    _check_keys("beamform", doc, ("k_grid", "methods", "beampattern_k", "beampattern_trials"))
    kw = {}
    if "k_grid" in doc:
        kw["k_grid"] = _int_list("beamform.k_grid", doc["k_grid"])
    if "methods" in doc:
        kw["methods"] = _choices("beamform.methods", doc["methods"], BEAMFORM_METHODS)
    for key in ("beampattern_k", "beampattern_trials"):
        if key in doc:
            kw[key] = _num(f"beamform.{key}", doc[key], int, positive=True)
    return BeamformSettings(**kw)


def _detect(doc, n) -> DetectSettings:
    if doc is None:
        return DetectSettings()
    _check_keys("detect", doc, ("asnr_db", "rules", "methods", "k1"))
    kw = {}
    if "asnr_db" in doc:
        vals = doc["asnr_db"]
        if not isinstance(vals, list) or not vals:
            raise ConfigError("detect.asnr_db: expected a non-empty list")
        kw["asnr_db"] = tuple(_num(f"detect.asnr_db[{i}]", v) for i, v in enumerate(vals))
    if "rules" in doc:
        kw["rules"] = _choices("detect.rules", doc["rules"], PENALTY_RULES)
    if "methods" in doc:
        kw["methods"] = _choices("detect.methods", doc["methods"], DETECTION_METHODS)
    if "k1" in doc:
        k1 = _num("detect.k1", doc["k1"], int, nonneg=True)
        if k1 > n - 1:
            raise ConfigError(f"detect.k1: must be <= N-1 = {n - 1}, got {k1}")
        kw["k1"] = k1
    return DetectSettings(**kw)


TOP_KEYS = (
    "name", "n_elements", "spacing", "noise_power_db", "look_direction_deg", "jammers",
    "sources", "missingness", "snapshots", "trials", "seed", "constraint", "em",
    "beamform", "detect",
)


def parse_scenario(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("scenario: top level must be a mapping")
    _check_keys("scenario", doc, TOP_KEYS)
    geom = _wrap(
        "n_elements",
        ArrayGeometry,
        _num("n_elements", doc.get("n_elements", 20), int),
        _num("spacing", doc.get("spacing", 0.5), positive=True),
    )
    n = geom.n_elements
    cos, pw = _sources(doc.get("sources"), geom)
    trials = _num("trials", doc.get("trials", 100), int)
    if trials < 1:
        raise ConfigError(f"trials: must be >= 1, got {trials}")
    look = _num("look_direction_deg", doc.get("look_direction_deg", 0.0))
    if not abs(look) < 90:
        raise ConfigError(f"look_direction_deg: must satisfy |theta| < 90, got {look}")
    detect = _detect(doc.get("detect"), n)
    detect = replace(detect, n_sources=len(cos))
    return ScenarioConfig(
        name=str(doc.get("name", "scenario")),
        geometry=geom,
        jammers=_jammers(doc.get("jammers")),
        source_cosines=cos,
        source_powers=pw,
        noise_power_db=_num("noise_power_db", doc.get("noise_power_db", 0.0)),
        look_direction_deg=look,
        missingness=_missingness(doc.get("missingness"), n),
        k=_num("snapshots", doc.get("snapshots", 60), int, positive=True),
        trials=trials,
        seed=_num("seed", doc.get("seed", 0), int, nonneg=True),
        constraint=_constraint(doc.get("constraint"), n),
        em=_em(doc.get("em")),
        beamform=_beamform(doc.get("beamform")),
        detect=detect,
    )


def load_scenario(path) -> ScenarioConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"scenario: cannot parse {path}: {exc}") from None
    return parse_scenario(doc or {})
