import math
from dataclasses import replace

import numpy as np
import pytest

from hybridmarket.cli import apply_overrides
from hybridmarket.futures import empty_outcome, run_oa_clm
from hybridmarket.transaction import execute_transaction, sample_transaction
from hybridmarket.verification import (
    AuditReport,
    audit,
    check_competitive_equilibrium,
    check_individual_rationality,
    check_pareto_improvement,
    contract_risks,
    find_blocking_coalitions,
    find_blocking_pairs,
)

from .helpers import DESK, cs, es, mu, scenario, small_random


def _shared_es(g_e=2, k_e=2, **params):
    params = {"v1": 4.0, "v2": 4.0, **params}
    return scenario([mu(0, {0}), mu(1, {0})], [es(0, g_e, k_e)], [cs(0)], **params)


# blocking pairs

def test_spare_capacity_left_unused_is_a_blocking_pair():
    sc = _shared_es()
    out = apply_overrides(run_oa_clm(sc), sc, {"omega": {"0": [0]}})
    assert find_blocking_pairs(out, sc) == [(1, 0, 2)]


def test_better_paying_outsider_blocks_full_es():
    sc = _shared_es(1, 1, tau=0.0)
    raw = {"omega": {"0": [0]}, "mu_prices": [[0, 0, 1.5], [1, 0, 2.5]]}
    out = apply_overrides(run_oa_clm(sc), sc, raw)
    assert find_blocking_pairs(out, sc) == [(1, 0, 1)]


def test_empty_matching_of_infeasible_pairs_is_stable():
    # default valuations sit below the price floor, so nobody can trade
    sc = scenario([mu(0, {0}), mu(1, {0})], [es(0)], [cs(0)])
    out = run_oa_clm(sc)
    assert out.omega == {}
    assert find_blocking_pairs(out, sc) == []
    assert audit(out, sc).passed


# blocking coalitions

def _with_slot():
    sc = _shared_es(1, 2, tau=0.0)
    out = run_oa_clm(sc, enforce_risk=False)
    assert len(out.slots) == 1
    return sc, out


def test_booked_slot_has_no_coalition():
    sc, out = _with_slot()
    assert find_blocking_coalitions(out, sc) == []


def test_unbooked_profitable_slot_forms_coalition():
    sc, out = _with_slot()
    dropped = replace(out, slots=(), ec_contracts=())
    assert find_blocking_coalitions(dropped, sc) == [(0, (0,), 2)]
    assert ("unbooked_slot_below_cap", (0, 0), 0, 1.5) in check_competitive_equilibrium(dropped, sc)


# individual rationality

def test_price_above_expected_valuation_flagged():
    sc = _shared_es()
    out = apply_overrides(run_oa_clm(sc), sc, {"mu_prices": [[0, 0, 40.0]]})
    bad = check_individual_rationality(out, sc)
    assert ("price_ue", 0, 0, 40.0) in bad
    assert any(v[:4] == ("risk", "mu", 0, "r1") for v in bad)


def test_es_overload_risk_just_above_limit():
    a = math.sqrt(0.31)
    sc = scenario([mu(0, {0}, a=a), mu(1, {0}, a=a)], [es(0, 1, 2)], [], v1=4.0, v2=4.0, tau=1.0)
    out = replace(run_oa_clm(sc, enforce_risk=False), enforce_risk=True)
    assert out.omega == {0: (0, 1)}
    risks = {(p, i, r): v for p, i, r, v in contract_risks(out, sc)}
    assert risks[("es", 0, "r2")] == pytest.approx(0.31)
    bad = check_individual_rationality(out, sc)
    assert any(v[:4] == ("risk", "es", 0, "r2") for v in bad)


def test_risk_ignored_without_enforcement():
    a = math.sqrt(0.31)
    sc = scenario([mu(0, {0}, a=a), mu(1, {0}, a=a)], [es(0, 1, 2)], [], v1=4.0, v2=4.0, tau=1.0)
    assert check_individual_rationality(run_oa_clm(sc, enforce_risk=False), sc) == []


# competitive equilibrium

def test_unmatched_mu_below_cap_breaks_equilibrium():
    sc = _shared_es()
    out = apply_overrides(run_oa_clm(sc), sc, {"omega": {"0": [0]}})
    assert check_competitive_equilibrium(out, sc) == [("unmatched_mu_below_cap", 1, 0, 1.5)]


@pytest.mark.parametrize("seed", range(4))
def test_spot_outcomes_pass(seed):
    sc = small_random(seed)
    rng = np.random.default_rng(seed)
    spot = execute_transaction(run_oa_clm(sc), sample_transaction(sc, rng), sc, rng).spot
    assert audit(spot, sc).passed


def test_spot_price_above_valuation_flagged():
    for seed in range(30):
        sc = small_random(seed)
        rng = np.random.default_rng(seed)
        spot = execute_transaction(run_oa_clm(sc), sample_transaction(sc, rng), sc, rng).spot
        if spot.mu_match:
            break
    else:
        pytest.skip("no spot trade in the seed range")
    i, j = next(iter(sorted(spot.mu_match.items())))
    prices = dict(spot.spot_ue_prices)
    prices[(i, j)] = spot.valuations[(i, j)] + 1.0
    bad = check_individual_rationality(replace(spot, spot_ue_prices=prices), sc)
    assert ("price_ue", i, j, prices[(i, j)]) in bad


# Pareto search

@pytest.mark.parametrize("seed", range(5))
def test_mechanism_output_has_no_pareto_improvement(seed):
    sc = scenario([mu(i, {0, 1}, a=0.8 + 0.05 * (i % 3)) for i in range(5)],
                  [es(0, 1, 2), es(1, 2, 2)], [cs(0)], v1=4.0, v2=4.0)
    sc = replace(sc, params=replace(DESK, tau=0.1 * seed))
    found, witness = check_pareto_improvement(run_oa_clm(sc), sc)
    assert not found, witness


def test_dropping_a_profitable_match_is_pareto_dominated():
    sc = _shared_es()
    out = apply_overrides(run_oa_clm(sc), sc, {"omega": {"0": [0]}})
    found, witness = check_pareto_improvement(out, sc)
    assert found
    assert witness == {0: (0, 1)}


def test_empty_market_has_no_improvement():
    sc = scenario([], [es(0)], [cs(0)], v1=4.0, v2=4.0)
    assert check_pareto_improvement(empty_outcome(), sc) == (False, None)


def test_pareto_search_size_limit():
    sc = scenario([mu(i, {0}) for i in range(9)], [es(0)], [cs(0)])
    with pytest.raises(ValueError):
        check_pareto_improvement(empty_outcome(), sc)


# report

def test_report_render():
    report = AuditReport(ir_violations=[("price_ue", 0, 0, 40.0)])
    text = report.render()
    assert not report.passed
    assert text.startswith("audit: FAIL\n")
    assert "ir_violations: 1" in text and "('price_ue', 0, 0, 40.0)" in text
    assert AuditReport().render().startswith("audit: PASS")


def test_pareto_flag_fails_audit():
    sc = _shared_es()
    out = apply_overrides(run_oa_clm(sc), sc, {"omega": {"0": [0]}})
    assert audit(out, sc, pareto=True).pareto_improvement_found
    assert not audit(out, sc).pareto_improvement_found
