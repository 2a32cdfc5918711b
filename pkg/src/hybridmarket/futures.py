"""Futures market: MU-ES price-ascending matching, ES-CS slot booking, trimming and withdrawal."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .expectation import (
    ContractTermsEC,
    ContractTermsUE,
    SlotView,
    convolve,
    cs_cost,
    cs_overflow,
    es_cost,
    es_margin,
    expected_valuation,
    fulfillment_probability,
    mu_expected_utility,
    mu_price_cap,
    participation_tail_prob,
    r1_passes,
    rank_use_probabilities,
    slot_load_pmf,
    volunteer_probability,
    volunteer_rank_utility,
)
from .matching import AscendingMatcher
from .model import MarketParams, Scenario

EPS = 1e-9


def overbooking_cap(g_e: int, k_e: int, booked: int, tau: float) -> int:
    """Largest contract count allowed by (1+tau)(G + booked) <= (1+tau)K."""
    return min(math.floor((1 + tau) * (g_e + booked) + EPS), math.floor((1 + tau) * k_e + EPS))


def phase_round_bound(max_price: float, floor: float, step: float) -> int:
    return max(0, math.ceil((max_price - floor) / step - EPS)) + 1


@dataclass(frozen=True)
class Proposal:
    mu: int
    price: float
    a: float
    cost: float
    e_v: float
    r: float = 0.0


@dataclass(frozen=True)
class CloudSlot:
    es: int
    index: int
    cs: int
    price: float
    r: float

    def view(self) -> SlotView:
        return SlotView(self.cs, self.index, self.price, self.r)


@dataclass
class FuturesOutcome:
    omega: dict[int, tuple[int, ...]]
    mu_match: dict[int, int]
    ue_contracts: tuple[ContractTermsUE, ...]
    slots: tuple[CloudSlot, ...]
    ec_contracts: tuple[ContractTermsEC, ...]
    phi: dict[int, tuple[int, ...]]
    offload_sets: dict[tuple[int, int], int]
    e_lambda: dict[tuple[int, int], float]
    e_beta: dict[tuple[int, int, int], float]
    mu_prices: dict[tuple[int, int], float]
    el_estimates: dict[tuple[int, int], float]
    dead_pairs: frozenset
    requested: dict[int, tuple[int, ...]]
    slot_prices: dict[tuple, float]
    slot_dead: frozenset
    p_max: dict[int, float]
    r_max: dict[int, float]
    rounds_phase1: int
    rounds_phase2: int
    phase2_runs: tuple[tuple[int, int], ...]
    interactions: int
    bound_phase1: int
    bound_phase2: int
    enforce_risk: bool = True
    outer_iterations: int = 1
    mu_active_rounds: dict[int, int] = field(default_factory=dict)

    def booked(self, es: int) -> int:
        return sum(1 for s in self.slots if s.es == es)

    def ranked_slots(self, es: int) -> list[CloudSlot]:
        mine = [s for s in self.slots if s.es == es]
        return sorted(mine, key=lambda s: (s.price, s.cs, s.index))

    def contract_price(self, mu: int) -> float:
        return self.mu_prices[(mu, self.mu_match[mu])]


def empty_outcome(enforce_risk: bool = True) -> FuturesOutcome:
    return FuturesOutcome({}, {}, (), (), (), {}, {}, {}, {}, {}, {}, frozenset(), {}, {},
                          frozenset(), {}, {}, 0, 0, (), 0, 1, 1, enforce_risk, 0, {})


class FuturesMarket:
    """Expected quantities for one scenario, shared by the phases and the auditors."""

    def __init__(self, scenario: Scenario, enforce_risk: bool = True):
        self.scenario = scenario
        self.params: MarketParams = scenario.params
        self.enforce = enforce_risk
        self.ev: dict[tuple[int, int], float] = {}
        self.cost: dict[tuple[int, int], float] = {}
        for mu in scenario.mus:
            for j in mu.candidates:
                es = scenario.ess[j]
                self.ev[(mu.id, j)] = expected_valuation(mu, es, self.params)
                self.cost[(mu.id, j)] = es_cost(mu.r_u, es, self.params)

    def a(self, i: int) -> float:
        return self.scenario.mus[i].a

    def mu_cap(self, i: int, j: int, e_lambda: float) -> float:
        return mu_price_cap(self.a(i), self.ev[(i, j)], e_lambda, self.params, self.enforce)

    def mu_utility(self, i: int, j: int, price: float, e_lambda: float) -> float:
        return mu_expected_utility(self.a(i), self.ev[(i, j)], price, e_lambda, self.params)

    def mu_feasible(self, i: int, j: int, price: float, e_lambda: float) -> bool:
        if price > self.ev[(i, j)] + EPS or price < self.cost[(i, j)] - EPS:
            return False
        if not self.enforce:
            return True
        u = self.mu_utility(i, j, price, e_lambda)
        return r1_passes(u, self.params) and e_lambda <= self.params.rho[1] + EPS

    def proposal(self, i: int, j: int, price: float) -> Proposal:
        mu = self.scenario.mus[i]
        return Proposal(i, price, mu.a, self.cost[(i, j)], self.ev[(i, j)], mu.r_u)

    def margin(self, i: int, j: int, price: float) -> float:
        return es_margin(self.a(i), price, self.cost[(i, j)], self.params)

    def volunteer_entries(self, j: int, members: Iterable[int], prices: Mapping) -> list:
        return [(i, self.a(i), volunteer_rank_utility(self.a(i), self.ev[(i, j)],
                                                      prices[(i, j)], self.params.q_ue))
                for i in members]

    def e_lambda(self, j: int, members: Iterable[int], prices: Mapping, booked: int) -> dict[int, float]:
        members = list(members)
        if not members:
            return {}
        cap = self.scenario.ess[j].g_e + booked
        return volunteer_probability(self.volunteer_entries(j, members, prices), cap, self.params)


def mu_preference_list(market: FuturesMarket, i: int, prices: Mapping,
                       el: Mapping, dead: Iterable = ()) -> list[int]:
    """Feasible candidate ESs by expected utility, best first, ties to the lower id."""
    dead = set(dead)
    scored = []
    for j in sorted(market.scenario.mus[i].candidates):
        e = el.get((i, j), 0.0)
        if (i, j) in dead or not market.mu_feasible(i, j, prices[(i, j)], e):
            continue
        scored.append((-market.mu_utility(i, j, prices[(i, j)], e), j))
    return [j for _, j in sorted(scored)]


def es_accept_set(es, proposals: Sequence[Proposal], capacity_cap: float, params: MarketParams,
                  booked: int = 0, enforce_risk: bool = True):
    """Greedy admission by per-MU margin under the contract cap and the overbooking risk.

    Returns the accepted MU ids and their volunteer probabilities.
    """
    cap = math.floor(capacity_cap + EPS)
    ranked = sorted(proposals, key=lambda p: (-es_margin(p.a, p.price, p.cost, params), p.mu))
    accepted: list[Proposal] = []
    supply = es.g_e + booked
    for p in ranked:
        if len(accepted) + 1 > cap:
            break
        if es_margin(p.a, p.price, p.cost, params) <= 0:
            break
        if enforce_risk:
            tail = participation_tail_prob([q.a for q in accepted] + [p.a], supply)
            if tail > params.rho[3] + EPS:
                continue
        accepted.append(p)
    entries = [(p.mu, p.a, volunteer_rank_utility(p.a, p.e_v, p.price, params.q_ue)) for p in accepted]
    e_lambda = volunteer_probability(entries, supply, params) if entries else {}
    return sorted(p.mu for p in accepted), e_lambda


def run_phase1(market: FuturesMarket, booked: Mapping[int, int] | None = None,
               matcher: AscendingMatcher | None = None, el: dict | None = None):
    """Run (or continue) the MU-ES matching. Returns the matcher and the MU beliefs about E[lambda]."""
    sc, prm = market.scenario, market.params
    booked = booked if booked is not None else defaultdict(int)
    el = el if el is not None else {}
    if matcher is None:
        proposers = [mu.id for mu in sc.mus if not mu.local_only]
        options = {mu.id: mu.candidates for mu in sc.mus}
        floor = {(i, j): prm.p_min_ue for i in proposers for j in options[i]}

        class CapView(dict):
            def __missing__(self, key):
                i, j = key
                return max(prm.p_min_ue, market.mu_cap(i, j, el.get(key, 0.0)))

        def preference(i, j, price):
            e = el.get((i, j), 0.0)
            if not market.mu_feasible(i, j, price, e):
                return None
            return market.mu_utility(i, j, price, e)

        def select(j, pool):
            es = sc.ess[j]
            props = [market.proposal(i, j, price) for i, price in pool]
            accepted, _ = es_accept_set(es, props, (1 + prm.tau) * es.k_e, prm,
                                        booked.get(j, 0), market.enforce)
            return accepted

        def notify(j, accepted):
            lam = market.e_lambda(j, accepted, matcher_ref[0].price, booked.get(j, 0))
            for i, value in lam.items():
                el[(i, j)] = value

        matcher = AscendingMatcher(proposers, options, floor, CapView(), prm.dp_mu,
                                   preference, select, notify)
        matcher_ref = [matcher]
    matcher.run()
    return matcher, el


def _slot_estimate(a_list: Sequence[float], g_e: int, index: int) -> float:
    return rank_use_probabilities(a_list, g_e, index + 1)[index]


class Phase2:
    """ES-CS slot booking for a fixed MU-ES matching."""

    def __init__(self, market: FuturesMarket, omega: Mapping[int, Iterable[int]], prices: Mapping):
        sc, prm = market.scenario, market.params
        self.market = market
        self.members = {j: sorted(m) for j, m in omega.items() if m}
        self.a_lists = {j: [market.a(i) for i in m] for j, m in self.members.items()}
        self.p_max: dict[int, float] = {}
        self.r_max: dict[int, float] = {}
        self.requested: dict[int, list[int]] = {}
        self.estimate: dict[tuple[int, int], float] = {}
        for j, m in self.members.items():
            es = sc.ess[j]
            self.p_max[j] = min(prices[(i, j)] for i in m)
            self.r_max[j] = max(sc.mus[i].r_u for i in m)
            shortfall = len(m) - (1 + prm.tau) * es.g_e
            n = math.ceil(shortfall / (1 + prm.tau) - EPS) if shortfall > EPS else 0
            n = max(0, min(n, es.k_e - es.g_e))
            for t in range(n):
                self.estimate[(j, t)] = _slot_estimate(self.a_lists[j], es.g_e, t)
            if market.enforce:
                n = sum(1 for t in range(n) if self.estimate[(j, t)] >= 1 - prm.rho[2] - EPS)
            if n:
                self.requested[j] = list(range(n))
        self.withdrawn: set[tuple[int, int]] = set()
        proposers = [(j, t) for j, ts in self.requested.items() for t in ts]
        cs_ids = [cs.id for cs in sc.css]
        options = {s: cs_ids for s in proposers}
        floor = {(s, k): prm.p_min_ec for s in proposers for k in cs_ids}
        cap = {(s, k): max(prm.p_min_ec, self.p_max[s[0]]) for s in proposers for k in cs_ids}
        self.cost_e = {j: es_cost(self.r_max[j], sc.ess[j], prm) for j in self.members}
        self.matcher = AscendingMatcher(proposers, options, floor, cap, prm.dp_es,
                                        self.preference, self.select)
        self.bound = phase_round_bound(max(self.p_max.values(), default=prm.p_min_ec),
                                       prm.p_min_ec, prm.dp_es)

    def slot_utility(self, s, price: float) -> float:
        eb = self.estimate[s]
        return eb * (self.cost_e[s[0]] - price) - (1 - eb) * self.market.params.q_ec

    def cs_margin(self, s, k: int, price: float) -> float:
        eb = self.estimate[s]
        cost = cs_cost(self.r_max[s[0]], self.market.scenario.css[k], self.market.params)
        return eb * (price - cost) + (1 - eb) * self.market.params.q_ec

    def preference(self, s, k, price):
        if s in self.withdrawn or price > self.p_max[s[0]] + EPS:
            return None
        if price < cs_cost(self.r_max[s[0]], self.market.scenario.css[k], self.market.params) - EPS:
            return None
        return self.slot_utility(s, price)

    def assignment(self) -> dict:
        return dict(self.matcher.match)

    def slot_price(self, s, k) -> float:
        return self.matcher.price[(s, k)]

    def ranked_cs(self, j: int, assignment: Mapping) -> list[int]:
        mine = [(self.slot_price(s, k), k, s[1]) for s, k in assignment.items() if s[0] == j]
        return [k for _, k, _ in sorted(mine)]

    def cs_risk(self, k: int, assignment: Mapping) -> float:
        cs = self.market.scenario.css[k]
        pmf = [1.0]
        for j in sorted({s[0] for s, kk in assignment.items() if kk == k}):
            ranked = self.ranked_cs(j, assignment)
            pmf = convolve(pmf, slot_load_pmf(self.a_lists[j], self.market.scenario.ess[j].g_e, ranked, k))
        return cs_overflow(pmf, cs).risk

    def select(self, k, pool):
        cs = self.market.scenario.css[k]
        prm = self.market.params
        others = {s: kk for s, kk in self.matcher.match.items() if kk != k}
        ranked = sorted(pool, key=lambda sp: (-self.cs_margin(sp[0], k, sp[1]), sp[0]))
        admitted = []
        for s, price in ranked:
            if len(admitted) + 1 > cs.g_c:
                break
            if self.cs_margin(s, k, price) <= 0:
                continue
            if self.market.enforce:
                trial = dict(others)
                trial.update({x: k for x in admitted + [s]})
                # prices of slots not yet held here are read from the matcher as usual
                if self.cs_risk(k, trial) > prm.rho[4] + EPS:
                    continue
            admitted.append(s)
        return admitted

    def withdraw(self, s) -> None:
        self.withdrawn.add(s)
        k = self.matcher.match.get(s)
        if k is not None:
            self.matcher.held[k].discard(s)
            del self.matcher.match[s]

    def run(self) -> None:
        self.matcher.run()


def _finalize(market: FuturesMarket, omega: dict[int, set], p1: AscendingMatcher, p2: Phase2,
              el: dict):
    """Trim to the overbooked supply, drop risky slots and contracts. Mutates nothing but returns
    the removals so the caller can feed them back into the matchings."""
    sc, prm = market.scenario, market.params
    omega = {j: set(m) for j, m in omega.items()}
    assign = p2.assignment()
    mu_trims: list[tuple[int, int]] = []
    cs_drops: list[tuple] = []
    es_drops: list[tuple] = []
    prices = p1.price

    def es_slots(j):
        return [s for s in assign if s[0] == j]

    changed = True
    while changed:
        changed = False
        if market.enforce:
            for cs in sc.css:
                while True:
                    mine = [s for s, k in assign.items() if k == cs.id]
                    if not mine or p2.cs_risk(cs.id, assign) <= prm.rho[4] + EPS:
                        break
                    worst = min(mine, key=lambda s: (p2.cs_margin(s, cs.id, p2.slot_price(s, cs.id)), [-x for x in s]))
                    del assign[worst]
                    cs_drops.append((worst, cs.id))
                    changed = True
        for j in sorted(omega):
            es = sc.ess[j]
            a_list = [market.a(i) for i in sorted(omega[j])]
            if market.enforce:
                while es_slots(j):
                    ranked = sorted(es_slots(j), key=lambda s: (p2.slot_price(s, assign[s]), assign[s], s[1]))
                    ebs = fulfillment_probability(a_list, es.g_e, [assign[s] for s in ranked])
                    if all(1 - b <= prm.rho[2] + EPS for b in ebs):
                        break
                    del assign[ranked[-1]]
                    es_drops.append(ranked[-1])
                    changed = True
            booked = len(es_slots(j))
            limit = overbooking_cap(es.g_e, es.k_e, booked, prm.tau)

            def worst_member():
                return min(omega[j], key=lambda i: (market.margin(i, j, prices[(i, j)]), -i))

            while len(omega[j]) > limit:
                i = worst_member()
                omega[j].discard(i)
                mu_trims.append((i, j))
                changed = True
            if market.enforce:
                while omega[j] and participation_tail_prob(
                        [market.a(i) for i in omega[j]], es.g_e + booked) > prm.rho[3] + EPS:
                    i = worst_member()
                    omega[j].discard(i)
                    mu_trims.append((i, j))
                    changed = True
            lam = market.e_lambda(j, omega[j], prices, booked)
            for i in sorted(omega[j]):
                el[(i, j)] = lam[i]
                if market.enforce and not market.mu_feasible(i, j, prices[(i, j)], lam[i]):
                    omega[j].discard(i)
                    mu_trims.append((i, j))
                    changed = True
    return omega, assign, mu_trims, cs_drops, es_drops


def run_phase2(market: FuturesMarket, omega: Mapping[int, Iterable[int]], prices: Mapping) -> Phase2:
    p2 = Phase2(market, omega, prices)
    p2.run()
    return p2


def run_oa_clm(scenario: Scenario, enforce_risk: bool = True, max_iterations: int = 200) -> FuturesOutcome:
    """Futures matching end to end: Phase 1, Phase 2, Phase 3 with re-entry until nothing moves."""
    market = FuturesMarket(scenario, enforce_risk)
    if not scenario.mus:
        return empty_outcome(enforce_risk)
    booked: dict[int, int] = defaultdict(int)
    el: dict = {}
    p1, el = run_phase1(market, booked, None, el)
    p2 = None
    p2_key = None
    phase2_runs: list[tuple[int, int]] = []
    iterations = 0
    while True:
        iterations += 1
        omega = {j: set(m) for j, m in p1.held.items() if m}
        key = tuple(sorted((j, tuple(sorted(m))) for j, m in omega.items()))
        if key != p2_key:
            if p2 is not None:
                phase2_runs.append((p2.matcher.rounds, p2.bound))
            p2 = Phase2(market, omega, p1.price)
            p2_key = key
        p2.run()
        final_omega, assign, mu_trims, cs_drops, es_drops = _finalize(market, omega, p1, p2, el)
        for s, k in cs_drops:
            p2.matcher.release(s, k)
        for s in es_drops:
            p2.withdraw(s)
        for i, j in mu_trims:
            p1.reject(i, j)
        for j in list(booked):
            booked[j] = 0
        for s in assign:
            booked[s[0]] += 1
        moved = bool(mu_trims or cs_drops or es_drops)
        if not moved and not p1.pending() and not p2.matcher.pending():
            break
        if iterations >= max_iterations:
            raise RuntimeError("futures matching did not settle")
        p1.run()
    phase2_runs.append((p2.matcher.rounds, p2.bound))
    return _assemble(market, p1, p2, final_omega, assign, el, phase2_runs, iterations)


def _assemble(market, p1, p2, omega, assign, el, phase2_runs, iterations) -> FuturesOutcome:
    sc, prm = market.scenario, market.params
    slots = []
    for s, k in sorted(assign.items()):
        slots.append(CloudSlot(s[0], s[1], k, p2.slot_price(s, k), p2.r_max[s[0]]))
    e_beta = {}
    e_lambda = {}
    for j, members in omega.items():
        es = sc.ess[j]
        mine = sorted([x for x in slots if x.es == j], key=lambda x: (x.price, x.cs, x.index))
        a_list = [market.a(i) for i in sorted(members)]
        for slot, b in zip(mine, fulfillment_probability(a_list, es.g_e, [x.cs for x in mine])):
            e_beta[(slot.es, slot.cs, slot.index)] = b
        lam = market.e_lambda(j, members, p1.price, len(mine))
        for i in members:
            e_lambda[(i, j)] = lam[i]
    omega_out = {j: tuple(sorted(m)) for j, m in sorted(omega.items()) if m}
    mu_match = {i: j for j, m in omega_out.items() for i in m}
    ue = tuple(ContractTermsUE(i, j, p1.price[(i, j)], prm.q_ue, prm.q_eu)
               for i, j in sorted(mu_match.items()))
    ec = tuple(ContractTermsEC(s.index, s.es, s.cs, s.price, prm.q_ec) for s in slots)
    phi = defaultdict(set)
    offload = defaultdict(int)
    for s in slots:
        phi[s.es].add(s.cs)
        offload[(s.es, s.cs)] += 1
    requested = {j: tuple(t for t in ts if (j, t) not in p2.withdrawn)
                 for j, ts in p2.requested.items()}
    max_ev = max(market.ev.values(), default=prm.p_min_ue)
    return FuturesOutcome(
        omega=omega_out,
        mu_match=mu_match,
        ue_contracts=ue,
        slots=tuple(slots),
        ec_contracts=ec,
        phi={j: tuple(sorted(ks)) for j, ks in sorted(phi.items())},
        offload_sets=dict(sorted(offload.items())),
        e_lambda=e_lambda,
        e_beta=e_beta,
        mu_prices=dict(p1.price),
        el_estimates=dict(el),
        dead_pairs=frozenset(p1.dead),
        requested={j: ts for j, ts in requested.items() if ts},
        slot_prices=dict(p2.matcher.price),
        slot_dead=frozenset(p2.matcher.dead | {(s, k) for s in p2.withdrawn for k in range(len(sc.css))}),
        p_max=dict(p2.p_max),
        r_max=dict(p2.r_max),
        rounds_phase1=max(1, p1.rounds),
        rounds_phase2=max((r for r, _ in phase2_runs), default=0),
        phase2_runs=tuple(phase2_runs),
        interactions=p1.messages,
        bound_phase1=phase_round_bound(max_ev, prm.p_min_ue, prm.dp_mu),
        bound_phase2=max((b for _, b in phase2_runs), default=1),
        enforce_risk=market.enforce,
        outer_iterations=iterations,
        mu_active_rounds=dict(p1.active_rounds),
    )


def es_task_preference_list(p2: Phase2, slot, dead: Iterable = ()) -> list[int]:
    """CSs acceptable to a slot, by the ES's expected utility of booking there, ties to lower id."""
    dead = set(dead) | p2.matcher.dead
    scored = []
    for k in range(len(p2.market.scenario.css)):
        if (slot, k) in dead:
            continue
        score = p2.preference(slot, k, p2.slot_price(slot, k))
        if score is not None:
            scored.append((-score, k))
    return [k for _, k in sorted(scored)]
