"""Spot market: volunteer selection, cloud-contract settlement, and realized-value matching."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from .expectation import cs_cost, es_cost, valuation
from .futures import EPS, phase_round_bound
from .matching import AscendingMatcher
from .model import Scenario


def select_volunteers(attending: Sequence[tuple[int, float]], realized_supply: int) -> set[int]:
    """The ``len(attending) - supply`` attendees with the lowest utility, ties to the lower id."""
    if realized_supply < 0:
        raise ValueError("realized supply must be non-negative")
    excess = len(attending) - realized_supply
    if excess <= 0:
        return set()
    ordered = sorted(attending, key=lambda e: (e[1], e[0]))
    return {mu for mu, _ in ordered[:excess]}


def settle_cloud_contracts(attendance: int, g_e: int, ranked_slots: Sequence[tuple[Hashable, int]],
                           rng: np.random.Generator | None = None) -> dict[Hashable, bool]:
    """Decide which booked slots are used.

    ``ranked_slots`` lists ``(slot_key, cs_id)`` best first. The top ``clamp(attendance - g_e)``
    ranks fix how many slots each CS loses; which of that CS's slots are used is drawn at random.
    """
    n = len(ranked_slots)
    used = min(max(attendance - g_e, 0), n)
    per_cs = Counter(cs for _, cs in ranked_slots[:used])
    beta = {key: False for key, _ in ranked_slots}
    for cs in sorted(per_cs):
        mine = [key for key, c in ranked_slots if c == cs]
        if rng is None or per_cs[cs] == len(mine):
            chosen = [key for key, c in ranked_slots[:used] if c == cs]
        else:
            picks = rng.choice(len(mine), size=per_cs[cs], replace=False)
            chosen = [mine[p] for p in sorted(picks)]
        for key in chosen:
            beta[key] = True
    return beta


@dataclass(frozen=True)
class EsSupply:
    """Residual ES capacity at spot time: free local VMs and the ceiling on spot contracts."""
    local_free: int
    spot_cap: int


@dataclass
class SpotOutcome:
    omega_spot: dict[int, tuple[int, ...]]
    cloud_served: dict[int, int]
    phi_spot: dict[int, dict[int, int]]
    spot_ue_prices: dict[tuple[int, int], float]
    spot_ec_prices: dict[tuple, float]
    valuations: dict[tuple[int, int], float]
    dead_pairs: frozenset
    slot_dead: frozenset
    requested_slots: dict[int, tuple[int, ...]]
    rounds: int = 0
    rounds_phase2: int = 0
    phase2_runs: tuple = ()
    interactions: int = 0
    bound: int = 1
    mu_active_rounds: dict[int, int] = field(default_factory=dict)
    excluded: dict[int, int] = field(default_factory=dict)
    candidates: dict[int, tuple[int, ...]] = field(default_factory=dict)
    es_supply: dict[int, EsSupply] = field(default_factory=dict)
    cs_residual: dict[int, int] = field(default_factory=dict)
    slot_caps: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def mu_match(self) -> dict[int, int]:
        return {i: j for j, m in self.omega_spot.items() for i in m}

    def price(self, mu: int) -> float:
        return self.spot_ue_prices[(mu, self.mu_match[mu])]

    def cloud_price(self, mu: int) -> float:
        j = self.mu_match[mu]
        return self.spot_ec_prices[((j, mu), self.cloud_served[mu])]


def empty_spot() -> SpotOutcome:
    return SpotOutcome({}, {}, {}, {}, {}, {}, frozenset(), frozenset(), {})


class SpotMarket:
    def __init__(self, scenario: Scenario, residual: Sequence[int], es_supply: Mapping[int, EsSupply],
                 cs_residual: Mapping[int, int], gammas: Mapping[tuple[int, int], float],
                 exclude: Mapping[int, int] | None = None):
        self.scenario = scenario
        self.params = scenario.params
        self.es_supply = dict(es_supply)
        self.cs_residual = dict(cs_residual)
        self.exclude = dict(exclude or {})
        # an ES can only take on spot work it can place: free VMs plus cloud room that exists
        cloud_room = sum(max(0, c) for c in self.cs_residual.values())
        self.es_supply = {j: EsSupply(s.local_free, min(s.spot_cap, s.local_free + cloud_room))
                          for j, s in self.es_supply.items()}
        self.v: dict[tuple[int, int], float] = {}
        self._cloud_cost: dict[tuple[int, int], float] = {}
        self.cost: dict[tuple[int, int], float] = {}
        self.options: dict[int, tuple[int, ...]] = {}
        for i in sorted(residual):
            mu = scenario.mus[i]
            opts = []
            for j in sorted(mu.candidates):
                if self.exclude.get(i) == j or self.es_supply.get(j, EsSupply(0, 0)).spot_cap <= 0:
                    continue
                es = scenario.ess[j]
                self.v[(i, j)] = valuation(mu, es, gammas[(i, j)], self.params).v
                self.cost[(i, j)] = es_cost(mu.r_u, es, self.params)
                opts.append(j)
            self.options[i] = tuple(opts)
        self.residual = [i for i in sorted(residual) if self.options[i]]

    def mu_ok(self, i, j, price) -> bool:
        return self.cost[(i, j)] - EPS <= price <= self.v[(i, j)] + EPS

    def margin(self, i, j, price) -> float:
        return price - self.cost[(i, j)]

    def cloud_cost(self, i, k) -> float:
        key = (i, k)
        if key not in self._cloud_cost:
            self._cloud_cost[key] = cs_cost(self.scenario.mus[i].r_u, self.scenario.css[k], self.params)
        return self._cloud_cost[key]


def _spot_phase1(m: SpotMarket) -> AscendingMatcher:
    prm = m.params
    floor = {(i, j): prm.p_min_ue for i in m.residual for j in m.options[i]}
    cap = {(i, j): max(prm.p_min_ue, m.v[(i, j)]) for i in m.residual for j in m.options[i]}

    def preference(i, j, price):
        if not m.mu_ok(i, j, price):
            return None
        return m.v[(i, j)] - price

    def select(j, pool):
        limit = m.es_supply.get(j, EsSupply(0, 0)).spot_cap
        ranked = sorted(pool, key=lambda ip: (-m.margin(ip[0], j, ip[1]), ip[0]))
        return [i for i, price in ranked if m.margin(i, j, price) > 0][:max(limit, 0)]

    return AscendingMatcher(m.residual, {i: m.options[i] for i in m.residual}, floor, cap,
                            prm.dp_mu, preference, select)


class SpotPhase2:
    """Task-specific slot booking for MUs beyond an ES's free local capacity."""

    def __init__(self, m: SpotMarket, p1: AscendingMatcher):
        prm = m.params
        self.m = m
        self.requested: dict[int, tuple[int, ...]] = {}
        self.cap: dict[tuple, float] = {}
        for j, members in sorted(p1.held.items()):
            if not members:
                continue
            free = m.es_supply.get(j, EsSupply(0, 0)).local_free
            excess = len(members) - free
            if excess <= 0:
                continue
            lowest = sorted(members, key=lambda i: (m.margin(i, j, p1.price[(i, j)]), -i))[:excess]
            self.requested[j] = tuple(sorted(lowest))
            for i in lowest:
                self.cap[(j, i)] = p1.price[(i, j)]
        proposers = [(j, i) for j, ms in self.requested.items() for i in ms]
        cs_ids = [cs.id for cs in m.scenario.css]
        floor = {(s, k): prm.p_min_ec for s in proposers for k in cs_ids}
        cap = {(s, k): max(prm.p_min_ec, self.cap[s]) for s in proposers for k in cs_ids}
        self.matcher = AscendingMatcher(proposers, {s: cs_ids for s in proposers}, floor, cap,
                                        prm.dp_es, self.preference, self.select)
        self.bound = phase_round_bound(max(self.cap.values(), default=prm.p_min_ec),
                                       prm.p_min_ec, prm.dp_es)

    def preference(self, s, k, price):
        j, i = s
        if price > self.cap[s] + EPS or price < self.m.cloud_cost(i, k) - EPS:
            return None
        return -price

    def select(self, k, pool):
        limit = max(self.m.cs_residual.get(k, 0), 0)
        ranked = sorted(pool, key=lambda sp: (-(sp[1] - self.m.cloud_cost(sp[0][1], k)), sp[0]))
        return [s for s, price in ranked if price - self.m.cloud_cost(s[1], k) > 0][:limit]


def run_os_clm(scenario: Scenario, residual: Sequence[int], es_supply: Mapping[int, EsSupply],
               cs_residual: Mapping[int, int], gammas: Mapping[tuple[int, int], float],
               exclude: Mapping[int, int] | None = None, max_iterations: int = 500) -> SpotOutcome:
    """Match residual MUs on realized valuations, booking cloud slots for overflow, then trim."""
    m = SpotMarket(scenario, residual, es_supply, cs_residual, gammas, exclude)
    if not m.residual:
        out = empty_spot()
        out.valuations = dict(m.v)
        out.es_supply, out.cs_residual = dict(m.es_supply), dict(m.cs_residual)
        return out
    p1 = _spot_phase1(m)
    runs = []
    p2 = None
    for _ in range(max_iterations):
        p1.run()
        p2 = SpotPhase2(m, p1)
        p2.matcher.run()
        runs.append((p2.matcher.rounds, p2.bound))
        trims = [(i, j) for j, ms in p2.requested.items() for i in ms
                 if (j, i) not in p2.matcher.match]
        for i, j in trims:
            p1.release(i, j)
        if not trims and not p1.pending():
            break
    else:
        raise RuntimeError("spot matching did not settle")
    omega = {j: tuple(sorted(ms)) for j, ms in sorted(p1.held.items()) if ms}
    cloud = {s[1]: k for s, k in p2.matcher.match.items()}
    phi: dict[int, dict[int, int]] = {}
    for (j, i), k in sorted(p2.matcher.match.items()):
        phi.setdefault(j, {}).setdefault(k, 0)
        phi[j][k] += 1
    max_v = max(m.v.values(), default=scenario.params.p_min_ue)
    return SpotOutcome(
        omega_spot=omega,
        cloud_served=cloud,
        phi_spot=phi,
        spot_ue_prices=dict(p1.price),
        spot_ec_prices=dict(p2.matcher.price),
        valuations=dict(m.v),
        dead_pairs=frozenset(p1.dead),
        slot_dead=frozenset(p2.matcher.dead),
        requested_slots=dict(p2.requested),
        rounds=p1.rounds,
        rounds_phase2=max(r for r, _ in runs),
        phase2_runs=tuple(runs),
        interactions=p1.messages,
        bound=phase_round_bound(max_v, scenario.params.p_min_ue, scenario.params.dp_mu),
        mu_active_rounds=dict(p1.active_rounds),
        excluded=dict(m.exclude),
        candidates=dict(m.options),
        es_supply=dict(m.es_supply),
        cs_residual=dict(m.cs_residual),
        slot_caps=dict(p2.cap),
    )
