"""Acceptance suite. Each test prints one PASS/FAIL line per criterion, repeated in the
terminal summary, and asserts on the pinned tolerance."""

import math
import random
import subprocess
import sys
from pathlib import Path

import numpy as np

from hybridmarket.baselines import GREEDY, MECHANISMS, run_mechanism
from hybridmarket.expectation import (
    convolve,
    cs_overflow,
    fulfillment_probability,
    participation_tail_prob,
    slot_load_pmf,
    volunteer_probability,
)
from hybridmarket.futures import overbooking_cap, run_oa_clm
from hybridmarket.model import CloudServer, build_scenario, load_config, with_params
from hybridmarket.transaction import execute_transaction, run_monte_carlo, sample_transaction
from hybridmarket.verification import audit, contract_risks

from . import oracles
from .conftest import VERDICTS
from .helpers import small_random

ROOT = Path(__file__).resolve().parents[1]
SMALL = ROOT / "configs" / "small.json"
DESK = ROOT / "configs" / "desk.json"

SCENARIOS = 100
SEEDS = 20
SMALL_RUNS = 1000
DESK_RUNS = 100  # subsample of a SMALL_RUNS-transaction horizon; 1 CPU


def verdict(label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}"
    print(line)
    VERDICTS.append(line)
    return ok


# 1. expectation engine against brute force

def _random_book(r):
    n_es = r.randint(1, 3)
    total = r.randint(1, 12)
    cuts = sorted(r.sample(range(1, total), min(n_es - 1, total - 1))) if total > 1 else []
    sizes = [b - a for a, b in zip([0] + cuts, cuts + [total])]
    book = []
    for n in sizes:
        probs = [r.random() for _ in range(n)]
        g_e = r.randint(0, 4)
        ranked = [r.randint(0, 2) for _ in range(r.randint(0, 3))]
        book.append((probs, g_e, ranked))
    return book


def test_criterion_1_expectation_oracle():
    worst = 0.0
    for seed in range(200):
        r = random.Random(seed)
        book = _random_book(r)
        for probs, g_e, ranked in book:
            threshold = r.randint(0, len(probs))
            worst = max(worst, abs(participation_tail_prob(probs, threshold) - oracles.tail(probs, threshold)))
            entries = [(i, a, r.uniform(-1.0, 3.0)) for i, a in enumerate(probs)]
            got = volunteer_probability(entries, g_e)
            want = oracles.volunteers(entries, g_e)
            worst = max([worst] + [abs(got[i] - want[i]) for i in want])
            if ranked:
                got = fulfillment_probability(probs, g_e, ranked)
                want = oracles.slot_use(probs, g_e, ranked)
                worst = max([worst] + [abs(x - y) for x, y in zip(got, want)])
        for k in range(3):
            g_c, sigma = r.randint(1, 4), r.uniform(0.0, 2.0)
            load = [1.0]
            for probs, g_e, ranked in book:
                load = convolve(load, slot_load_pmf(probs, g_e, ranked, k))
            got = cs_overflow(load, CloudServer(k, 2e12, 0.5, g_c, sigma)).risk
            worst = max(worst, abs(got - oracles.cs_risk(book, k, g_c, sigma)))
    assert verdict(1, worst <= 1e-12, f"max abs error {worst:.3e} over 200 configurations (tol 1e-12)")


# 2. stability audits

def test_criterion_2_stability():
    failures = []
    for seed in range(SCENARIOS):
        sc = small_random(seed)
        for enforce in (True, False):
            fut = run_oa_clm(sc, enforce)
            report = audit(fut, sc)
            if not report.passed:
                failures.append((seed, "futures", enforce, report.render()))
            rng = np.random.default_rng(seed)
            spot = execute_transaction(fut, sample_transaction(sc, rng), sc, rng).spot
            report = audit(spot, sc)
            if not report.passed:
                failures.append((seed, "spot", enforce, report.render()))
    ok = verdict(2, not failures, f"{len(failures)} failing audits over {SCENARIOS} scenarios x 2 risk modes")
    assert ok, failures[:3]


# 3. risk audit

def test_criterion_3_risks():
    worst, exceptions = 0.0, []
    for seed in range(SCENARIOS):
        sc = small_random(seed)
        for party, pid, name, value in contract_risks(run_oa_clm(sc), sc):
            worst = max(worst, value)
            if value > 0.3:
                exceptions.append((seed, party, pid, name, value))
    ok = verdict(3, not exceptions, f"{len(exceptions)} exceptions, max risk {worst:.4f} (limit 0.3)")
    assert ok, exceptions[:5]


# 4. overbooking cap and physical capacity

def _capacity_breaches(sc, out):
    bad = []
    local, through, cloud = {}, {}, {}
    for svc in out.served.values():
        through[svc.es] = through.get(svc.es, 0) + 1
        if svc.cs is None:
            local[svc.es] = local.get(svc.es, 0) + 1
        else:
            cloud[svc.cs] = cloud.get(svc.cs, 0) + 1
    for e in sc.ess:
        if local.get(e.id, 0) > e.g_e or through.get(e.id, 0) > e.k_e:
            bad.append(("es", e.id))
    for c in sc.css:
        if cloud.get(c.id, 0) > c.g_c:
            bad.append(("cs", c.id))
    return bad


def test_criterion_4_overbooking_cap():
    breaches, transactions = [], 0
    for seed in range(SCENARIOS):
        sc = small_random(seed)
        tau = sc.params.tau
        for enforce in (True, False):
            fut = run_oa_clm(sc, enforce)
            for j, members in fut.omega.items():
                e = sc.ess[j]
                if len(members) > (1 + tau) * (e.g_e + fut.booked(j)):
                    breaches.append((seed, "contracts", j, len(members)))
                assert overbooking_cap(e.g_e, e.k_e, fut.booked(j), tau) <= (1 + tau) * (e.g_e + fut.booked(j))
        rng = np.random.default_rng(seed)
        for tag in MECHANISMS:
            for _ in range(5):
                out = run_mechanism(tag, sc, sample_transaction(sc, rng), rng)
                transactions += 1
                breaches.extend((seed, tag) + b for b in _capacity_breaches(sc, out))
    ok = verdict(4, not breaches, f"{len(breaches)} breaches over {transactions} transactions (exact)")
    assert ok, breaches[:5]


# 5. transfer cancellation

def test_criterion_5_welfare_identity():
    worst, count = 0.0, 0
    for seed in range(50):
        sc = small_random(seed)
        fut = run_oa_clm(sc)
        rng = np.random.default_rng(seed)
        for _ in range(20):
            out = execute_transaction(fut, sample_transaction(sc, rng), sc, rng)
            a, b = out.social_welfare, out.social_welfare_direct
            scale = max(abs(a), abs(b))
            worst = max(worst, abs(a - b) / scale if scale else 0.0)
            count += 1
    assert verdict(5, worst <= 1e-9, f"max relative gap {worst:.3e} over {count} transactions (tol 1e-9)")


# 6. orderings against the baselines

def _orderings(config, runs):
    # futures messages are always spread over the full horizon, also when subsampling
    cfg = load_config(config)
    counts = {"a": 0, "b": 0, "c": 0, "d": 0}
    rows = []
    for seed in range(SEEDS):
        sc = build_scenario(cfg, seed)
        tags = ("hybrid", "conventional_spot") + GREEDY
        rep = {tag: run_monte_carlo(sc, tag, runs, seed, horizon=SMALL_RUNS) for tag in tags}
        hyb, conv = rep["hybrid"], rep["conventional_spot"]
        counts["a"] += conv.sw_mean >= hyb.sw_mean >= 0.8 * conv.sw_mean
        counts["b"] += all(hyb.sw_mean > rep[g].sw_mean for g in GREEDY)
        counts["c"] += hyb.ni_mean <= conv.ni_mean / 5
        counts["d"] += hyb.ptct_mean_ms < conv.ptct_mean_ms
        rows.append((seed, hyb.sw_mean, conv.sw_mean, max(rep[g].sw_mean for g in GREEDY),
                     hyb.ni_mean, conv.ni_mean, hyb.ptct_mean_ms, conv.ptct_mean_ms))
    return counts, rows


def _report_orderings(setting, counts, rows):
    need = math.ceil(0.9 * SEEDS)
    names = {"a": "SW(conv) >= SW(hybrid) >= 0.8 SW(conv)", "b": "SW(hybrid) > every greedy baseline",
             "c": "NI(hybrid) <= NI(conv)/5", "d": "PTCT(hybrid) < PTCT(conv)"}
    ok = True
    for key, name in names.items():
        ok &= verdict(f"6{key} [{setting}]", counts[key] >= need,
                      f"{name} on {counts[key]}/{SEEDS} seeds (need {need})")
    sw_h = sum(r[1] for r in rows) / len(rows)
    sw_c = sum(r[2] for r in rows) / len(rows)
    ni_h = sum(r[4] for r in rows) / len(rows)
    ni_c = sum(r[5] for r in rows) / len(rows)
    print(f"  {setting}: mean SW hybrid {sw_h:.3f} conv {sw_c:.3f}; mean NI hybrid {ni_h:.2f} conv {ni_c:.2f}")
    return ok


def test_criterion_6_orderings_small():
    counts, rows = _orderings(SMALL, SMALL_RUNS)
    assert _report_orderings(f"40/8/3, {SMALL_RUNS} transactions", counts, rows), rows


def test_criterion_6_orderings_desk():
    counts, rows = _orderings(DESK, DESK_RUNS)
    assert _report_orderings(f"800/125/12, {DESK_RUNS} of {SMALL_RUNS} transactions", counts, rows), rows


# 7. round bounds

def test_criterion_7_round_bounds():
    over = []
    for seed in range(SCENARIOS):
        sc = small_random(seed)
        for enforce in (True, False):
            fut = run_oa_clm(sc, enforce)
            if fut.rounds_phase1 > fut.bound_phase1:
                over.append((seed, enforce, "futures phase 1", fut.rounds_phase1, fut.bound_phase1))
            over.extend((seed, enforce, "futures phase 2", r, b) for r, b in fut.phase2_runs if r > b)
            rng = np.random.default_rng(seed)
            spot = execute_transaction(fut, sample_transaction(sc, rng), sc, rng).spot
            if spot.rounds > spot.bound:
                over.append((seed, enforce, "spot phase 1", spot.rounds, spot.bound))
            over.extend((seed, enforce, "spot phase 2", r, b) for r, b in spot.phase2_runs if r > b)
    scenarios = len({(s, e) for s, e, *_ in over})
    ok = verdict(7, not over, f"{len(over)} phases above the bound in {scenarios}/{2 * SCENARIOS} "
                              f"scenario runs (exact)")
    assert ok, over[:5]


# 8. overbooking sweep

def test_criterion_8_tau_sweep():
    cfg = load_config(SMALL)
    taus = (0.0, 0.1, 0.3, 0.5)
    dips, means = 0, {t: 0.0 for t in taus}
    for seed in range(SEEDS):
        base = build_scenario(cfg, seed)
        ni = {}
        for tau in taus:
            ni[tau] = run_monte_carlo(with_params(base, tau=tau), "hybrid", SMALL_RUNS, seed).ni_mean
            means[tau] += ni[tau] / SEEDS
        dips += ni[0.1] <= ni[0.0]
    need = math.ceil(0.7 * SEEDS)
    sweep = ", ".join(f"tau={t:g}: {means[t]:.2f}" for t in taus)
    assert verdict(8, dips >= need, f"NI(0.1) <= NI(0) on {dips}/{SEEDS} seeds (need {need}); mean NI {sweep}")


# 9. determinism

def _cli(*args):
    cmd = [sys.executable, "-m", "hybridmarket", *args]
    return subprocess.run(cmd, check=True, capture_output=True).stdout


def test_criterion_9_determinism(tmp_path):
    outputs = {}
    for workers in (1, 1, 2, 3):
        key = len(outputs)
        path = tmp_path / f"r{key}.csv"
        _cli("compare", "--scenario", str(SMALL), "--runs", "30", "--seed", "5",
             "--workers", str(workers), "--out", str(path))
        outputs[key] = path.read_bytes()
    same = len(set(outputs.values())) == 1
    assert verdict(9, same, "compare reports byte-identical across reruns and 1/2/3 workers")
