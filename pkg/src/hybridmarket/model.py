"""Market entities, scenario configuration, random generation and EUA ingestion."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


class ConfigError(ValueError):
    """Raised for invalid scenario configuration."""


class IngestionError(ValueError):
    """Raised when a coordinate table cannot be parsed."""


@dataclass(frozen=True)
class MobileUser:
    id: int
    f_u: float
    e_t: float
    e_u: float
    d_u: float
    r_u: float
    candidates: frozenset[int]
    a: float
    gamma_low: float
    gamma_high: float

    @property
    def local_only(self) -> bool:
        return not self.candidates

    @property
    def gamma_mid(self) -> float:
        return 0.5 * (self.gamma_low + self.gamma_high)


@dataclass(frozen=True)
class EdgeServer:
    id: int
    f_e: float
    e_e: float
    g_e: int
    k_e: int
    c_hw: float


@dataclass(frozen=True)
class CloudServer:
    id: int
    f_c: float
    e_c: float
    g_c: int
    sigma: float
    p_inherent: float = 2.0
    q_inherent: float = 1.5
    c_hw: float = 0.05


@dataclass(frozen=True)
class MarketParams:
    bandwidth_w: float = 6e6
    v1: float = 1.0
    v2: float = 1.0
    v3: float = 1.0
    q_ue: float = 3.0
    q_eu: float = 3.0
    q_ec: float = 2.0
    tau: float = 0.1
    rho: tuple[float, float, float, float, float] = (0.3, 0.3, 0.3, 0.3, 0.3)
    p_min_ue: float = 1.5
    p_min_ec: float = 1.5
    dp_mu: float = 0.1
    dp_es: float = 0.1
    u_min: float = 0.01
    exact_enum_limit: int = 16
    mc_expectation_samples: int = 100_000

    def __post_init__(self):
        rho = tuple(float(r) for r in self.rho)
        object.__setattr__(self, "rho", rho)
        if len(rho) != 5:
            raise ConfigError("rho needs exactly five thresholds")
        if self.tau < 0:
            raise ConfigError("tau must be non-negative")
        if any(not 0 < r <= 1 for r in rho):
            raise ConfigError("every rho must lie in (0, 1]")
        if self.u_min <= 0:
            raise ConfigError("u_min must be positive")
        if self.dp_mu <= 0 or self.dp_es <= 0:
            raise ConfigError("price steps must be positive")
        if self.bandwidth_w <= 0:
            raise ConfigError("bandwidth must be positive")


@dataclass(frozen=True)
class Scenario:
    mus: tuple[MobileUser, ...]
    ess: tuple[EdgeServer, ...]
    css: tuple[CloudServer, ...]
    params: MarketParams = field(default_factory=MarketParams)

    def __post_init__(self):
        object.__setattr__(self, "mus", tuple(self.mus))
        object.__setattr__(self, "ess", tuple(self.ess))
        object.__setattr__(self, "css", tuple(self.css))
        for name, seq in (("mus", self.mus), ("ess", self.ess), ("css", self.css)):
            if [x.id for x in seq] != list(range(len(seq))):
                raise ConfigError(f"{name} ids must be dense 0..n-1")
        es_ids = set(range(len(self.ess)))
        for mu in self.mus:
            if not mu.candidates <= es_ids:
                raise ConfigError(f"MU {mu.id} references unknown ESs")
        for es in self.ess:
            if es.g_e > es.k_e:
                raise ConfigError(f"ES {es.id} has more VMs than subcarriers")


DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "f_u": (1e9, 1.5e9),
    "f_e": (1e12, 3e12),
    "f_c": (1e12, 3e12),
    "d_u": (1e6, 1.5e6),
    "e_t": (0.5, 0.55),
    "e_u": (0.45, 0.5),
    "e_e": (0.45, 0.5),
    "e_c": (0.45, 0.5),
    "gamma_low": (100.0, 100.0),
    "gamma_high": (400.0, 400.0),
    "a": (0.64, 0.96),
    "g_e": (4, 5),
    "k_e": (6, 8),
    "g_c": (8, 12),
    "sigma": (2.0, 4.0),
    "c_hw_e": (0.05, 0.05),
    "c_hw_c": (0.05, 0.05),
    "p_inherent": (2.0, 2.0),
    "q_inherent": (1.5, 1.5),
}

INTEGER_FIELDS = frozenset({"g_e", "k_e", "g_c"})


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to build a scenario: counts, sampling ranges, market parameters."""

    n_mus: int = 40
    n_ess: int = 8
    n_css: int = 3
    ranges: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_RANGES))
    params: MarketParams = field(default_factory=MarketParams)
    cycles_per_bit: float = 600.0
    candidate_mean: float = 3.0
    delay_ms: tuple[float, float] = (1.0, 15.0)
    eua: Mapping[str, object] | None = None

    def validate(self) -> None:
        if min(self.n_mus, self.n_ess, self.n_css) < 1:
            raise ConfigError("every party needs at least one member")
        if self.cycles_per_bit <= 0:
            raise ConfigError("cycles_per_bit must be positive")
        unknown = set(self.ranges) - set(DEFAULT_RANGES)
        if unknown:
            raise ConfigError(f"unknown range keys: {sorted(unknown)}")
        for key, (lo, hi) in self.ranges.items():
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ConfigError(f"range {key} is empty or malformed: [{lo}, {hi}]")
        if self.delay_ms[0] < 0 or self.delay_ms[0] > self.delay_ms[1]:
            raise ConfigError("delay range is malformed")
        if not 1 <= self.candidate_mean:
            raise ConfigError("candidate_mean must be at least 1")

    def range(self, key: str) -> tuple[float, float]:
        return tuple(self.ranges.get(key, DEFAULT_RANGES[key]))


def _draw(rng: np.random.Generator, cfg: ScenarioConfig, key: str) -> float:
    lo, hi = cfg.range(key)
    if key in INTEGER_FIELDS:
        return int(rng.integers(int(lo), int(hi) + 1))
    return float(rng.uniform(lo, hi))


def _draw_candidates(rng: np.random.Generator, n_ess: int, mean: float) -> frozenset[int]:
    if n_ess == 1:
        return frozenset({0})
    p = min(1.0, (mean - 1.0) / (n_ess - 1))
    size = 1 + int(rng.binomial(n_ess - 1, p))
    return frozenset(int(j) for j in rng.choice(n_ess, size=size, replace=False))


def _sample_mu(rng, cfg: ScenarioConfig, i: int, candidates: frozenset[int]) -> MobileUser:
    f_u = _draw(rng, cfg, "f_u")
    e_t = _draw(rng, cfg, "e_t")
    e_u = _draw(rng, cfg, "e_u")
    d_u = _draw(rng, cfg, "d_u")
    a = _draw(rng, cfg, "a")
    g_lo = _draw(rng, cfg, "gamma_low")
    g_hi = _draw(rng, cfg, "gamma_high")
    if not 0 < a <= 1:
        raise ConfigError("participation probability must lie in (0, 1]")
    if not 0 < g_lo < g_hi:
        raise ConfigError("channel gain bounds must satisfy 0 < low < high")
    return MobileUser(i, f_u, e_t, e_u, d_u, cfg.cycles_per_bit * d_u, candidates, a, g_lo, g_hi)


def _sample_es(rng, cfg: ScenarioConfig, j: int) -> EdgeServer:
    f_e = _draw(rng, cfg, "f_e")
    e_e = _draw(rng, cfg, "e_e")
    k_e = _draw(rng, cfg, "k_e")
    g_e = min(_draw(rng, cfg, "g_e"), k_e)
    return EdgeServer(j, f_e, e_e, g_e, k_e, _draw(rng, cfg, "c_hw_e"))


def _sample_cs(rng, cfg: ScenarioConfig, k: int) -> CloudServer:
    f_c = _draw(rng, cfg, "f_c")
    e_c = _draw(rng, cfg, "e_c")
    g_c = _draw(rng, cfg, "g_c")
    sigma = _draw(rng, cfg, "sigma")
    if g_c < 1 or sigma < 0:
        raise ConfigError("cloud servers need g_c >= 1 and sigma >= 0")
    return CloudServer(k, f_c, e_c, g_c, sigma, _draw(rng, cfg, "p_inherent"),
                       _draw(rng, cfg, "q_inherent"), _draw(rng, cfg, "c_hw_c"))


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Sample a scenario; a pure function of ``(config, seed)``."""
    config.validate()
    rng = np.random.default_rng(seed)
    ess = [_sample_es(rng, config, j) for j in range(config.n_ess)]
    css = [_sample_cs(rng, config, k) for k in range(config.n_css)]
    mus = []
    for i in range(config.n_mus):
        cands = _draw_candidates(rng, config.n_ess, config.candidate_mean)
        mus.append(_sample_mu(rng, config, i, cands))
    return Scenario(tuple(mus), tuple(ess), tuple(css), config.params)


def candidate_servers(mu_id: int, scenario: Scenario) -> frozenset[int]:
    if not 0 <= mu_id < len(scenario.mus):
        raise KeyError(f"unknown MU id {mu_id}")
    return scenario.mus[mu_id].candidates


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dphi = p2 - p1
    dlmb = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def read_coordinates(path: str | Path) -> list[tuple[float, float]]:
    """Read (lat, lon) rows from a delimiter-separated table with a header row."""
    path = Path(path)
    text = path.read_text()
    try:
        dialect = csv.Sniffer().sniff(text.splitlines()[0], delimiters=",;\t|")
    except (csv.Error, IndexError):
        dialect = csv.excel
    reader = csv.reader(text.splitlines(), dialect)
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise IngestionError(f"{path}: empty file") from None

    def column(*names):
        for n in names:
            if n in header:
                return header.index(n)
        raise IngestionError(f"{path}: missing column, expected one of {names}")

    lat_col = column("latitude", "lat")
    lon_col = column("longitude", "lon", "lng", "long")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            lat, lon = float(row[lat_col]), float(row[lon_col])
        except (ValueError, IndexError):
            raise IngestionError(f"{path}: unparsable row {lineno}: {row!r}") from None
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            raise IngestionError(f"{path}: coordinates out of range on row {lineno}")
        rows.append((lat, lon))
    return rows


def load_eua_scenario(stations_file, users_file, coverage_radius: float,
                      config: ScenarioConfig, seed: int = 0) -> Scenario:
    """Stations become ESs, users become MUs whose candidates lie within the radius."""
    stations = read_coordinates(stations_file)
    users = read_coordinates(users_file)
    if not stations:
        raise IngestionError(f"{stations_file}: no stations")
    cfg = replace(config, n_ess=len(stations), n_mus=max(1, len(users)))
    cfg.validate()
    rng = np.random.default_rng(seed)
    ess = [_sample_es(rng, cfg, j) for j in range(len(stations))]
    css = [_sample_cs(rng, cfg, k) for k in range(cfg.n_css)]
    mus = []
    for i, (lat, lon) in enumerate(users):
        cands = frozenset(j for j, (slat, slon) in enumerate(stations)
                          if haversine_m(lat, lon, slat, slon) <= coverage_radius)
        mus.append(_sample_mu(rng, cfg, i, cands))
    return Scenario(tuple(mus), tuple(ess), tuple(css), cfg.params)


_PARAM_FIELDS = {f.name for f in fields(MarketParams)}


def config_from_dict(raw: Mapping) -> ScenarioConfig:
    """Build a config from the documented key-value schema (see README)."""
    allowed = {"counts", "ranges", "params", "cycles_per_bit", "candidate_mean", "delay_ms", "eua"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    counts = raw.get("counts", {})
    params_raw = dict(raw.get("params", {}))
    bad = set(params_raw) - _PARAM_FIELDS
    if bad:
        raise ConfigError(f"unknown market parameters: {sorted(bad)}")
    if "rho" in params_raw:
        rho = params_raw["rho"]
        params_raw["rho"] = tuple([rho] * 5 if isinstance(rho, (int, float)) else rho)
    ranges = dict(DEFAULT_RANGES)
    for key, value in raw.get("ranges", {}).items():
        if isinstance(value, (int, float)):
            value = (value, value)
        if len(value) != 2:
            raise ConfigError(f"range {key} must have two bounds")
        ranges[key] = (float(value[0]), float(value[1]))
    try:
        cfg = ScenarioConfig(
            n_mus=int(counts.get("mus", 40)),
            n_ess=int(counts.get("ess", 8)),
            n_css=int(counts.get("css", 3)),
            ranges=ranges,
            params=MarketParams(**params_raw),
            cycles_per_bit=float(raw.get("cycles_per_bit", 600.0)),
            candidate_mean=float(raw.get("candidate_mean", 3.0)),
            delay_ms=tuple(raw.get("delay_ms", (1.0, 15.0))),
            eua=raw.get("eua"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    cfg = config_from_dict(raw)
    if cfg.eua:
        base = path.parent
        eua = dict(cfg.eua)
        for key in ("stations", "users"):
            if key not in eua:
                raise ConfigError(f"eua section needs '{key}'")
            eua[key] = str((base / eua[key]).resolve())
        cfg = replace(cfg, eua=eua)
    return cfg


def build_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Generated or EUA-backed scenario depending on the config."""
    if config.eua:
        return load_eua_scenario(config.eua["stations"], config.eua["users"],
                                 float(config.eua.get("radius_m", 150.0)), config, seed)
    return generate_scenario(config, seed)


def scenario_counts(scenario: Scenario) -> tuple[int, int, int]:
    return len(scenario.mus), len(scenario.ess), len(scenario.css)


def with_params(scenario: Scenario, **changes) -> Scenario:
    return replace(scenario, params=replace(scenario.params, **changes))


def mu_ids_with_candidates(scenario: Scenario) -> Sequence[int]:
    return [mu.id for mu in scenario.mus if not mu.local_only]
