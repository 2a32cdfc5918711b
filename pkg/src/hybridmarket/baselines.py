"""Comparison mechanisms behind one interface."""

from __future__ import annotations

import math
import time

import numpy as np

from .expectation import cs_cost, es_cost, valuation
from .futures import FuturesOutcome, empty_outcome, run_oa_clm
from .model import ConfigError, Scenario
from .spot import empty_spot
from .transaction import (
    Ledger,
    Service,
    TransactionOutcome,
    TransactionSample,
    execute_transaction,
    execution_ms,
    transmission_ms,
)

MECHANISMS = ("hybrid", "conventional_spot", "hybrid_no_risk", "mu_prioritized", "es_prioritized", "random_m")
GREEDY = ("mu_prioritized", "es_prioritized", "random_m")


def check_tag(tag: str) -> str:
    if tag not in MECHANISMS:
        raise ConfigError(f"unknown mechanism {tag!r}; choose from {', '.join(MECHANISMS)}")
    return tag


def prepare_futures(tag: str, scenario: Scenario) -> FuturesOutcome:
    """Contracts signed ahead of the transactions (empty for pure spot or greedy mechanisms)."""
    check_tag(tag)
    if tag == "hybrid":
        return run_oa_clm(scenario, enforce_risk=True)
    if tag == "hybrid_no_risk":
        return run_oa_clm(scenario, enforce_risk=False)
    return empty_outcome()


class _Capacity:
    def __init__(self, scenario: Scenario, sample: TransactionSample):
        self.local = {e.id: e.g_e for e in scenario.ess}
        self.extra = {e.id: e.k_e - e.g_e for e in scenario.ess}
        self.cloud = {c.id: max(0, c.g_c - sample.epsilon[c.id]) for c in scenario.css}

    def open(self, j: int) -> bool:
        return self.local[j] > 0 or (self.extra[j] > 0 and any(self.cloud.values()))

    def take(self, j: int, rng: np.random.Generator | None = None) -> int | None:
        """Claim a unit at ``j``; returns the CS used, or None for a local VM."""
        if self.local[j] > 0:
            self.local[j] -= 1
            return None
        ready = [k for k in sorted(self.cloud) if self.cloud[k] > 0]
        k = ready[int(rng.integers(len(ready)))] if rng is not None else ready[0]
        self.cloud[k] -= 1
        self.extra[j] -= 1
        return k


def _greedy(tag: str, scenario: Scenario, sample: TransactionSample, rng: np.random.Generator):
    """Assignments ``[(mu, es, price)]`` plus the CS each uses (None for local)."""
    prm = scenario.params
    cap = _Capacity(scenario, sample)
    attending = [m for m in scenario.mus if sample.alpha[m.id] and not m.local_only]
    value = {}
    cost = {}
    for m in attending:
        for j in m.candidates:
            value[(m.id, j)] = valuation(m, scenario.ess[j], sample.gamma[(m.id, j)], prm).v
            cost[(m.id, j)] = es_cost(m.r_u, scenario.ess[j], prm)
    deals = []
    if tag == "mu_prioritized":
        for m in attending:
            options = [j for j in sorted(m.candidates) if cap.open(j) and value[(m.id, j)] > cost[(m.id, j)]]
            if options:
                j = max(options, key=lambda j: (value[(m.id, j)] - cost[(m.id, j)], -j))
                deals.append((m.id, j, cost[(m.id, j)], cap.take(j)))
    elif tag == "es_prioritized":
        taken = set()
        for es in scenario.ess:
            pool = [m.id for m in attending if es.id in m.candidates]
            pool.sort(key=lambda i: (-(value[(i, es.id)] - cost[(i, es.id)]), i))
            for i in pool:
                if i in taken or value[(i, es.id)] <= cost[(i, es.id)] or not cap.open(es.id):
                    continue
                taken.add(i)
                deals.append((i, es.id, value[(i, es.id)], cap.take(es.id)))
    else:
        taken = set()
        for j in rng.permutation(len(scenario.ess)):
            j = int(j)
            pool = [m.id for m in attending if j in m.candidates]
            for idx in rng.permutation(len(pool)):
                i = pool[int(idx)]
                if i in taken or value[(i, j)] <= cost[(i, j)] or not cap.open(j):
                    continue
                taken.add(i)
                deals.append((i, j, (cost[(i, j)] + value[(i, j)]) / 2, cap.take(j, rng)))
    return deals, value


def run_mechanism(tag: str, scenario: Scenario, sample: TransactionSample, rng: np.random.Generator,
                  futures: FuturesOutcome | None = None, runs: int = 1,
                  timing: bool = False) -> TransactionOutcome:
    """One transaction under ``tag``; futures are signed here when not supplied."""
    check_tag(tag)
    if tag not in GREEDY:
        if futures is None:
            futures = prepare_futures(tag, scenario)
        return execute_transaction(futures, sample, scenario, rng, runs, timing)
    prm = scenario.params
    started = time.perf_counter() if timing else 0.0
    deals, value = _greedy(tag, scenario, sample, rng)
    rt = (time.perf_counter() - started) * 1000.0 if timing else math.nan
    book = Ledger(scenario)
    for i, j, price, k in deals:
        if k is None:
            book.serve(i, Service(j, None, price, "spot"), value[(i, j)])
        else:
            floor = max(prm.p_min_ec, cs_cost(scenario.mus[i].r_u, scenario.css[k], prm))
            book.serve(i, Service(j, k, price, "spot"), value[(i, j)], floor)
    spot_cloud = {}
    for _, j, _, k in deals:
        if k is not None:
            spot_cloud[j] = spot_cloud.get(j, 0) + 1
    book.check_capacity({}, spot_cloud)
    shortfall, inherent_total = book.inherent(sample.epsilon)
    direct = math.fsum(book.mu.values()) + math.fsum(book.es.values()) + math.fsum(book.cs.values())
    identity = math.fsum(book.value_terms) - math.fsum(book.cost_terms) + inherent_total
    ptct = {}
    for i, svc in book.served.items():
        ptct[i] = (2 * sample.e2e_delay[i] + transmission_ms(scenario, i, svc.es, sample.gamma[(i, svc.es)])
                   + execution_ms(scenario, i, svc))
    return TransactionOutcome(book.mu, book.es, book.cs, identity, direct, 2.0 * len(deals), ptct,
                              frozenset(), {}, book.served, empty_spot(), shortfall, rt)


def execute_mechanism(tag, scenario, sample, rng, futures=None, runs=1, timing=False):
    return run_mechanism(tag, scenario, sample, rng, futures, runs, timing)
