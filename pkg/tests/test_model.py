import math
from dataclasses import fields, replace
from pathlib import Path

import pytest

from hybridmarket.model import (
    DEFAULT_RANGES,
    ConfigError,
    IngestionError,
    MarketParams,
    ScenarioConfig,
    candidate_servers,
    config_from_dict,
    generate_scenario,
    load_config,
    load_eua_scenario,
    read_coordinates,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def chord_distance_m(lat1, lon1, lat2, lon2, radius=6_371_000.0):
    """Great-circle distance from the 3-D chord between two unit vectors."""
    def unit(lat, lon):
        la, lo = math.radians(lat), math.radians(lon)
        return (math.cos(la) * math.cos(lo), math.cos(la) * math.sin(lo), math.sin(la))
    a, b = unit(lat1, lon1), unit(lat2, lon2)
    chord = math.dist(a, b)
    return 2 * radius * math.asin(chord / 2)


def test_desk_scale_scenario_is_valid():
    cfg = ScenarioConfig(n_mus=800, n_ess=125, n_css=12)
    sc = generate_scenario(cfg, 0)
    assert (len(sc.mus), len(sc.ess), len(sc.css)) == (800, 125, 12)
    assert sc.params.tau == 0.1 and sc.params.rho == (0.3,) * 5


def test_generated_fields_stay_in_range():
    cfg = ScenarioConfig(n_mus=200, n_ess=20, n_css=5)
    sc = generate_scenario(cfg, 4)
    r = DEFAULT_RANGES
    for mu in sc.mus:
        assert r["f_u"][0] <= mu.f_u <= r["f_u"][1]
        assert r["a"][0] <= mu.a <= r["a"][1]
        assert r["d_u"][0] <= mu.d_u <= r["d_u"][1]
        assert mu.r_u == pytest.approx(600 * mu.d_u)
        assert 1 <= len(mu.candidates) <= len(sc.ess)
    for es in sc.ess:
        assert es.g_e <= es.k_e
        assert r["g_e"][0] <= es.g_e <= r["g_e"][1] and r["k_e"][0] <= es.k_e <= r["k_e"][1]
    for cs in sc.css:
        assert r["g_c"][0] <= cs.g_c <= r["g_c"][1]
        assert r["sigma"][0] <= cs.sigma <= r["sigma"][1]


def test_point_ranges_give_constants():
    ranges = {k: (lo, lo) for k, (lo, _) in DEFAULT_RANGES.items() if k not in ("gamma_low", "gamma_high")}
    sc = generate_scenario(ScenarioConfig(1, 1, 1, ranges=ranges), 123)
    mu, es, cs = sc.mus[0], sc.ess[0], sc.css[0]
    assert (mu.f_u, mu.a, mu.d_u) == (1e9, 0.64, 1e6)
    assert (es.g_e, es.k_e, es.f_e) == (4, 6, 1e12)
    assert (cs.g_c, cs.sigma) == (8, 2.0)
    assert mu.candidates == {0}


def test_generation_is_deterministic():
    cfg = ScenarioConfig(n_mus=30, n_ess=6, n_css=2)
    assert generate_scenario(cfg, 9) == generate_scenario(cfg, 9)
    assert generate_scenario(cfg, 9) != generate_scenario(cfg, 10)


@pytest.mark.parametrize("bad", [
    {"counts": {"mus": 0}},
    {"ranges": {"a": [0.9, 0.1]}},
    {"ranges": {"nonsense": [1, 2]}},
    {"params": {"tau": -0.1}},
    {"params": {"rho": [0.3, 0.3]}},
    {"params": {"u_min": 0}},
    {"params": {"bogus": 1}},
    {"extra": 1},
])
def test_bad_configs_rejected(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad)


def test_config_file_round_trip():
    cfg = load_config(CONFIGS / "small.json")
    assert (cfg.n_mus, cfg.n_ess, cfg.n_css) == (40, 8, 3)
    assert cfg.params.v1 == 4.0 and cfg.params.rho == (0.3,) * 5


def test_missing_config_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")
    (tmp_path / "broken.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "broken.json")


def test_params_defaults():
    p = MarketParams()
    assert {f.name for f in fields(p)} >= {"tau", "rho", "u_min", "exact_enum_limit"}
    assert (p.v1, p.v2, p.v3, p.u_min, p.exact_enum_limit) == (1.0, 1.0, 1.0, 0.01, 16)


def test_candidate_lookup():
    sc = generate_scenario(ScenarioConfig(5, 6, 1), 2)
    mu = replace(sc.mus[0], candidates=frozenset({2, 5}))
    sc = replace(sc, mus=(mu,) + sc.mus[1:])
    assert candidate_servers(0, sc) == {2, 5}
    with pytest.raises(KeyError):
        candidate_servers(99, sc)


def test_candidate_union_within_es_ids():
    sc = generate_scenario(ScenarioConfig(100, 9, 2), 1)
    union = set().union(*(candidate_servers(m.id, sc) for m in sc.mus))
    assert union <= set(range(9))


def _write(path, header, rows):
    path.write_text("\n".join([header] + [",".join(map(str, r)) for r in rows]) + "\n")
    return path


def test_colocated_user(tmp_path):
    s = _write(tmp_path / "s.csv", "lat,lon", [(0, 0)])
    u = _write(tmp_path / "u.csv", "latitude,longitude", [(0, 0)])
    sc = load_eua_scenario(s, u, 150.0, ScenarioConfig(), 0)
    assert sc.mus[0].candidates == {0}


def test_far_user_is_local_only(tmp_path):
    s = _write(tmp_path / "s.csv", "lat,lon", [(0, 0)])
    # 1 km north
    u = _write(tmp_path / "u.csv", "lat,lon", [(1000 / 6_371_000 * 180 / math.pi, 0)])
    sc = load_eua_scenario(s, u, 150.0, ScenarioConfig(), 0)
    assert sc.mus[0].candidates == frozenset()
    assert sc.mus[0].local_only


def test_eua_fixture_candidates_within_radius():
    cfg = load_config(CONFIGS / "eua.json")
    sc = load_eua_scenario(cfg.eua["stations"], cfg.eua["users"], 250.0, cfg, 0)
    stations = read_coordinates(cfg.eua["stations"])
    users = read_coordinates(cfg.eua["users"])
    assert len(sc.ess) == len(stations) and len(sc.mus) == len(users)
    for mu, (lat, lon) in zip(sc.mus, users):
        for j, (slat, slon) in enumerate(stations):
            inside = chord_distance_m(lat, lon, slat, slon) <= 250.0
            assert (j in mu.candidates) == inside


def test_missing_column_names_file(tmp_path):
    bad = _write(tmp_path / "bad.csv", "x,y", [(0, 0)])
    with pytest.raises(IngestionError, match="missing column"):
        read_coordinates(bad)


def test_unparsable_row_is_named(tmp_path):
    bad = _write(tmp_path / "bad.csv", "lat,lon", [(0, 0), ("abc", 1)])
    with pytest.raises(IngestionError, match="row 3"):
        read_coordinates(bad)


def test_semicolon_tables_are_read(tmp_path):
    p = tmp_path / "semi.csv"
    p.write_text("ID;Latitude;Longitude\n1;-37.81;144.96\n")
    assert read_coordinates(p) == [(-37.81, 144.96)]
