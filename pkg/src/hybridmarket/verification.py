"""Post-hoc auditors: blocking pairs and coalitions, individual rationality, competitive
equilibrium, and Pareto improvement search."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .expectation import (
    ContractView,
    SlotView,
    convolve,
    cs_cost,
    cs_overflow,
    es_cost,
    es_expected_utility_and_risks,
    fulfillment_probability,
    mu_expected_utility,
    participation_tail_prob,
    r1_passes,
    slot_load_pmf,
    volunteer_probability,
    volunteer_rank_utility,
)
from .futures import EPS, FuturesMarket, FuturesOutcome, overbooking_cap
from .model import Scenario
from .spot import EsSupply, SpotOutcome

SUBSET_CAP = 12
COALITION_SIZE = 3


@dataclass
class AuditReport:
    blocking_pairs: list = field(default_factory=list)
    blocking_coalitions: list = field(default_factory=list)
    ir_violations: list = field(default_factory=list)
    ce_violations: list = field(default_factory=list)
    pareto_improvement_found: bool = False
    pareto_witness: object = None
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not (self.blocking_pairs or self.blocking_coalitions or self.ir_violations
                    or self.ce_violations or self.pareto_improvement_found)

    def render(self) -> str:
        lines = [f"audit: {'PASS' if self.passed else 'FAIL'}"]
        for name in ("blocking_pairs", "blocking_coalitions", "ir_violations", "ce_violations"):
            items = getattr(self, name)
            lines.append(f"{name}: {len(items)}")
            lines.extend(f"  - {item}" for item in items)
        lines.append(f"pareto_improvement_found: {self.pareto_improvement_found}")
        if self.pareto_witness is not None:
            lines.append(f"  witness: {self.pareto_witness}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def _removal_sets(members: Sequence, cap: int = SUBSET_CAP) -> Iterable[tuple]:
    if len(members) <= cap:
        for size in range(1, len(members) + 1):
            yield from itertools.combinations(members, size)
    else:
        for m in members:
            yield (m,)


# ---------------------------------------------------------------- futures context

class FuturesContext:
    """Read-only view of a futures outcome with the expected quantities the auditors need."""

    def __init__(self, outcome: FuturesOutcome, scenario: Scenario):
        self.out = outcome
        self.sc = scenario
        self.prm = scenario.params
        self.market = FuturesMarket(scenario, outcome.enforce_risk)
        self.enforce = outcome.enforce_risk
        self.omega = {j: tuple(m) for j, m in outcome.omega.items()}
        self.assignment = {(s.es, s.index): (s.cs, s.price) for s in outcome.slots}

    # MU-ES side
    def price(self, i, j) -> float:
        return self.out.mu_prices.get((i, j), self.prm.p_min_ue)

    def belief(self, i, j) -> float:
        return self.out.el_estimates.get((i, j), 0.0)

    def mu_value(self, i, j) -> float:
        return self.market.mu_utility(i, j, self.price(i, j), self.belief(i, j))

    def current_value(self, i) -> float:
        j = self.out.mu_match.get(i)
        return 0.0 if j is None else self.mu_value(i, j)

    def mu_wants(self, i, j) -> bool:
        if not self.market.mu_feasible(i, j, self.price(i, j), self.belief(i, j)):
            return False
        return self.mu_value(i, j) > self.current_value(i) + EPS

    def booked(self, j) -> int:
        return sum(1 for s in self.assignment if s[0] == j)

    def es_feasible(self, j, members) -> bool:
        es = self.sc.ess[j]
        booked = self.booked(j)
        if len(members) > overbooking_cap(es.g_e, es.k_e, booked, self.prm.tau):
            return False
        if self.enforce:
            tail = participation_tail_prob([self.market.a(i) for i in members], es.g_e + booked)
            if tail > self.prm.rho[3] + EPS:
                return False
        return True

    def margin(self, i, j) -> float:
        return self.market.margin(i, j, self.price(i, j))

    # ES-CS side
    def a_list(self, j, omega=None) -> list[float]:
        members = (omega or self.omega).get(j, ())
        return [self.market.a(i) for i in members]

    def ranked(self, j, assignment) -> list[tuple]:
        mine = [(p, k, s[1], s) for s, (k, p) in assignment.items() if s[0] == j]
        return [(s, k, p) for p, k, _, s in sorted(mine)]

    def e_betas(self, assignment, omega=None) -> dict:
        out = {}
        for j in {s[0] for s in assignment}:
            ranked = self.ranked(j, assignment)
            betas = fulfillment_probability(self.a_list(j, omega), self.sc.ess[j].g_e, [k for _, k, _ in ranked])
            for (s, _, _), b in zip(ranked, betas):
                out[s] = b
        return out

    def load_pmf(self, k, assignment, omega=None) -> list[float]:
        pmf = [1.0]
        for j in sorted({s[0] for s, (kk, _) in assignment.items() if kk == k}):
            ranked = [kk for _, kk, _ in self.ranked(j, assignment)]
            pmf = convolve(pmf, slot_load_pmf(self.a_list(j, omega), self.sc.ess[j].g_e, ranked, k))
        return pmf

    def cs_risk(self, k, assignment, omega=None) -> float:
        return cs_overflow(self.load_pmf(k, assignment, omega), self.sc.css[k]).risk

    def cs_utility(self, k, assignment, omega=None) -> float:
        cs = self.sc.css[k]
        betas = self.e_betas(assignment, omega)
        u = 0.0
        for s, (kk, price) in assignment.items():
            if kk != k:
                continue
            cost = cs_cost(self.out.r_max[s[0]], cs, self.prm)
            u += betas[s] * (price - cost) + (1 - betas[s]) * self.prm.q_ec
        stats = cs_overflow(self.load_pmf(k, assignment, omega), cs)
        served = stats.expected_inherent - stats.expected_shortfall
        return u + cs.p_inherent * served - cs.q_inherent * stats.expected_shortfall

    def slot_price(self, s, k) -> float:
        return self.out.slot_prices.get((s, k), self.prm.p_min_ec)

    def slot_cost(self, s, k) -> float:
        return cs_cost(self.out.r_max[s[0]], self.sc.css[k], self.prm)

    def es_wants_slot(self, s, k) -> bool:
        """The ES would move (or place) slot ``s`` at ``k`` for that CS's final price."""
        price = self.slot_price(s, k)
        if price > self.out.p_max[s[0]] + EPS or price < self.slot_cost(s, k) - EPS:
            return False
        current = self.assignment.get(s)
        if current is None:
            return True
        return current[0] != k and price < current[1] - EPS

    def requested_slots(self) -> list[tuple]:
        return [(j, t) for j, ts in sorted(self.out.requested.items()) for t in ts]


# ---------------------------------------------------------------- spot context

class SpotContext:
    def __init__(self, outcome: SpotOutcome, scenario: Scenario):
        self.out = outcome
        self.sc = scenario
        self.prm = scenario.params
        self.match = outcome.mu_match

    def v(self, i, j) -> float:
        return self.out.valuations[(i, j)]

    def price(self, i, j) -> float:
        return self.out.spot_ue_prices.get((i, j), self.prm.p_min_ue)

    def cost(self, i, j) -> float:
        return es_cost(self.sc.mus[i].r_u, self.sc.ess[j], self.prm)

    def current_value(self, i) -> float:
        j = self.match.get(i)
        return 0.0 if j is None else self.v(i, j) - self.price(i, j)

    def mu_wants(self, i, j) -> bool:
        p = self.price(i, j)
        if p > self.v(i, j) + EPS or p < self.cost(i, j) - EPS:
            return False
        return self.v(i, j) - p > self.current_value(i) + EPS

    def margin(self, i, j) -> float:
        return self.price(i, j) - self.cost(i, j)

    def supply(self, j) -> EsSupply:
        return self.out.es_supply.get(j, EsSupply(0, 0))

    def cloud_room(self) -> dict[int, int]:
        used = {}
        for k in self.out.cloud_served.values():
            used[k] = used.get(k, 0) + 1
        return {k: r - used.get(k, 0) for k, r in self.out.cs_residual.items()}

    def can_place(self, j, count: int, extra_mu: int | None = None) -> bool:
        """Could ES ``j`` serve ``count`` spot MUs, buying cloud room beyond its free VMs?"""
        sup = self.supply(j)
        if count > sup.spot_cap:
            return False
        if count <= sup.local_free:
            return True
        mine = sum(1 for i, k in self.out.cloud_served.items() if self.match.get(i) == j)
        need = count - sup.local_free - mine
        if need <= 0:
            return True
        if extra_mu is None:
            return False
        room = self.cloud_room()
        p = self.price(extra_mu, j)
        ok = [k for k, r in room.items()
              if r > 0 and p - cs_cost(self.sc.mus[extra_mu].r_u, self.sc.css[k], self.prm) > EPS]
        return need <= sum(room[k] for k in ok)


# ---------------------------------------------------------------- blocking pairs

def find_blocking_pairs(outcome, scenario: Scenario, subset_cap: int = SUBSET_CAP) -> list:
    if isinstance(outcome, SpotOutcome):
        return _spot_blocking_pairs(SpotContext(outcome, scenario), subset_cap)
    return _futures_blocking_pairs(FuturesContext(outcome, scenario), subset_cap)


def _futures_blocking_pairs(ctx: FuturesContext, subset_cap: int) -> list:
    found = []
    for mu in ctx.sc.mus:
        i = mu.id
        for j in sorted(mu.candidates):
            members = ctx.omega.get(j, ())
            if i in members or not ctx.mu_wants(i, j):
                continue
            gain = ctx.margin(i, j)
            if gain > EPS and ctx.es_feasible(j, members + (i,)):
                found.append((i, j, 2))
                continue
            for drop in _removal_sets(members, subset_cap):
                rest = tuple(x for x in members if x not in drop) + (i,)
                if gain - math.fsum(ctx.margin(x, j) for x in drop) > EPS and ctx.es_feasible(j, rest):
                    found.append((i, j, 1))
                    break
    return found


def _spot_blocking_pairs(ctx: SpotContext, subset_cap: int) -> list:
    found = []
    omega = ctx.out.omega_spot
    for i, options in sorted(ctx.out.candidates.items()):
        for j in options:
            members = omega.get(j, ())
            if i in members or not ctx.mu_wants(i, j):
                continue
            gain = ctx.margin(i, j)
            if gain > EPS and ctx.can_place(j, len(members) + 1, i):
                found.append((i, j, 2))
                continue
            for drop in _removal_sets(members, subset_cap):
                if gain - math.fsum(ctx.margin(x, j) for x in drop) > EPS and \
                        ctx.can_place(j, len(members) - len(drop) + 1, i):
                    found.append((i, j, 1))
                    break
    return found


# ---------------------------------------------------------------- blocking coalitions

def find_blocking_coalitions(outcome, scenario: Scenario, max_size: int = COALITION_SIZE,
                             subset_cap: int = SUBSET_CAP) -> list:
    if isinstance(outcome, SpotOutcome):
        return _spot_coalitions(SpotContext(outcome, scenario), max_size, subset_cap)
    return _futures_coalitions(FuturesContext(outcome, scenario), max_size, subset_cap)


def _futures_coalitions(ctx: FuturesContext, max_size: int, subset_cap: int) -> list:
    found = []
    prm = ctx.prm
    for cs in ctx.sc.css:
        k = cs.id
        incoming: dict[int, tuple] = {}
        for s in ctx.requested_slots():
            if not ctx.es_wants_slot(s, k):
                continue
            price = ctx.slot_price(s, k)
            best = incoming.get(s[0])
            if best is None or price - ctx.slot_cost(s, k) > ctx.slot_price(best, k) - ctx.slot_cost(best, k):
                incoming[s[0]] = s
        if not incoming:
            continue
        mine = sorted(s for s, (kk, _) in ctx.assignment.items() if kk == k)
        base = ctx.cs_utility(k, ctx.assignment)
        removals = [()] + list(_removal_sets(mine, subset_cap))
        hit = False
        for size in range(1, max_size + 1):
            for group in itertools.combinations(sorted(incoming), size):
                new = [incoming[j] for j in group]
                for drop in removals:
                    trial = {s: v for s, v in ctx.assignment.items() if s not in drop}
                    for s in new:
                        trial[s] = (k, ctx.slot_price(s, k))
                    if sum(1 for v in trial.values() if v[0] == k) > cs.g_c:
                        continue
                    if any(ctx.slot_price(s, k) - ctx.slot_cost(s, k) <= EPS for s in new):
                        continue
                    if ctx.enforce and ctx.cs_risk(k, trial) > prm.rho[4] + EPS:
                        continue
                    if ctx.cs_utility(k, trial) > base + EPS:
                        found.append((k, tuple(group), 1 if drop else 2))
                        hit = True
                        break
                if hit:
                    break
            if hit:
                break
    return found


def _spot_coalitions(ctx: SpotContext, max_size: int, subset_cap: int) -> list:
    found = []
    out = ctx.out
    current = {(ctx.match.get(i), i): k for i, k in out.cloud_served.items()}
    for cs in ctx.sc.css:
        k = cs.id
        cap = out.cs_residual.get(k, 0)
        mine = sorted(s for s, kk in current.items() if kk == k)

        def margin(s):
            return out.spot_ec_prices.get((s, k), ctx.prm.p_min_ec) - cs_cost(ctx.sc.mus[s[1]].r_u, cs, ctx.prm)

        incoming = {}
        for s, slot_cap in sorted(out.slot_caps.items()):
            price = out.spot_ec_prices.get((s, k), ctx.prm.p_min_ec)
            if price > slot_cap + EPS or margin(s) <= EPS or current.get(s) == k:
                continue
            held = current.get(s)
            if held is not None and price >= out.spot_ec_prices[(s, held)] - EPS:
                continue
            if s[0] not in ctx.match.values() and s[1] not in ctx.match:
                continue
            best = incoming.get(s[0])
            if best is None or margin(s) > margin(best):
                incoming[s[0]] = s
        hit = False
        for size in range(1, max_size + 1):
            for group in itertools.combinations(sorted(incoming), size):
                new = [incoming[j] for j in group]
                gain = math.fsum(margin(s) for s in new)
                for drop in [()] + list(_removal_sets(mine, subset_cap)):
                    if len(mine) - len(drop) + len(new) > cap:
                        continue
                    if gain - math.fsum(margin(s) for s in drop) > EPS:
                        found.append((k, tuple(group), 1 if drop else 2))
                        hit = True
                        break
                if hit:
                    break
            if hit:
                break
    return found


# ---------------------------------------------------------------- individual rationality

def contract_risks(outcome: FuturesOutcome, scenario: Scenario) -> list[tuple[str, int, str, float]]:
    """Every contractual participant's computed risks as ``(party, id, risk, value)`` rows."""
    ctx = FuturesContext(outcome, scenario)
    prm = ctx.prm
    rows = []
    for i, j in sorted(outcome.mu_match.items()):
        el = outcome.e_lambda[(i, j)]
        u = ctx.market.mu_utility(i, j, ctx.price(i, j), el)
        rows.append(("mu", i, "r1", max(0.0, 1.0 - u / prm.u_min)))
        rows.append(("mu", i, "r2", el))
    betas = ctx.e_betas(ctx.assignment)
    for j, members in sorted(ctx.omega.items()):
        es = scenario.ess[j]
        mine = [s for s in ctx.assignment if s[0] == j]
        rows.append(("es", j, "r1", max((1 - betas[s] for s in mine), default=0.0)))
        rows.append(("es", j, "r2", participation_tail_prob(ctx.a_list(j), es.g_e + len(mine))))
    for k in sorted({k for k, _ in ctx.assignment.values()}):
        rows.append(("cs", k, "r", ctx.cs_risk(k, ctx.assignment)))
    return rows


def check_individual_rationality(outcome, scenario: Scenario) -> list:
    if isinstance(outcome, SpotOutcome):
        return _spot_ir(SpotContext(outcome, scenario))
    ctx = FuturesContext(outcome, scenario)
    prm = ctx.prm
    bad = []
    for i, j in sorted(outcome.mu_match.items()):
        p = ctx.price(i, j)
        if p < ctx.market.cost[(i, j)] - EPS or p > ctx.market.ev[(i, j)] + EPS:
            bad.append(("price_ue", i, j, p))
    for s in outcome.slots:
        if s.price < ctx.slot_cost((s.es, s.index), s.cs) - EPS or s.price > outcome.p_max[s.es] + EPS:
            bad.append(("price_ec", s.es, s.cs, s.price))
    for j, members in ctx.omega.items():
        es = scenario.ess[j]
        if len(members) > overbooking_cap(es.g_e, es.k_e, ctx.booked(j), prm.tau):
            bad.append(("overbooking", j, len(members)))
    if outcome.enforce_risk:
        limits = {("mu", "r2"): prm.rho[1], ("es", "r1"): prm.rho[2], ("es", "r2"): prm.rho[3],
                  ("cs", "r"): prm.rho[4]}
        for party, pid, name, value in contract_risks(outcome, scenario):
            if party == "mu" and name == "r1":
                j = outcome.mu_match[pid]
                u = ctx.market.mu_utility(pid, j, ctx.price(pid, j), outcome.e_lambda[(pid, j)])
                if not r1_passes(u, prm):
                    bad.append(("risk", party, pid, name, value))
            elif value > limits[(party, name)] + EPS:
                bad.append(("risk", party, pid, name, value))
    return bad


def _spot_ir(ctx: SpotContext) -> list:
    bad = []
    out = ctx.out
    for i, j in sorted(ctx.match.items()):
        p = ctx.price(i, j)
        if p < ctx.cost(i, j) - EPS or p > ctx.v(i, j) + EPS:
            bad.append(("price_ue", i, j, p))
        k = out.cloud_served.get(i)
        if k is not None:
            pc = out.cloud_price(i)
            if pc < cs_cost(ctx.sc.mus[i].r_u, ctx.sc.css[k], ctx.prm) - EPS or pc > p + EPS:
                bad.append(("price_ec", i, k, pc))
    for j, members in out.omega_spot.items():
        sup = ctx.supply(j)
        cloud = sum(1 for i in members if i in out.cloud_served)
        if len(members) > sup.spot_cap or len(members) - cloud > sup.local_free:
            bad.append(("capacity", j, len(members)))
    for k, room in ctx.cloud_room().items():
        if room < 0:
            bad.append(("cs_capacity", k, room))
    return bad


# ---------------------------------------------------------------- competitive equilibrium

def check_competitive_equilibrium(outcome, scenario: Scenario) -> list:
    if isinstance(outcome, SpotOutcome):
        return _spot_ce(SpotContext(outcome, scenario))
    ctx = FuturesContext(outcome, scenario)
    bad = []
    for mu in scenario.mus:
        i = mu.id
        current = outcome.mu_match.get(i)
        for j in sorted(mu.candidates):
            if j == current or (i, j) in outcome.dead_pairs:
                continue
            if not ctx.market.mu_feasible(i, j, ctx.price(i, j), ctx.belief(i, j)):
                continue
            if current is None:
                bad.append(("unmatched_mu_below_cap", i, j, ctx.price(i, j)))
            elif ctx.mu_value(i, j) > ctx.mu_value(i, current) + EPS:
                bad.append(("mu_not_at_top", i, current, j))
    for s in ctx.requested_slots():
        held = ctx.assignment.get(s)
        for cs in scenario.css:
            k = cs.id
            if held is not None and held[0] == k:
                continue
            if (s, k) in outcome.slot_dead:
                continue
            price = ctx.slot_price(s, k)
            if price > outcome.p_max[s[0]] + EPS or price < ctx.slot_cost(s, k) - EPS:
                continue
            if held is None:
                bad.append(("unbooked_slot_below_cap", s, k, price))
            elif price < held[1] - EPS:
                bad.append(("slot_not_at_top", s, held[0], k))
    return bad


def _spot_ce(ctx: SpotContext) -> list:
    bad = []
    out = ctx.out
    for i, options in sorted(out.candidates.items()):
        current = ctx.match.get(i)
        for j in options:
            if j == current or (i, j) in out.dead_pairs:
                continue
            p = ctx.price(i, j)
            if p > ctx.v(i, j) + EPS or p < ctx.cost(i, j) - EPS:
                continue
            if current is None:
                bad.append(("unmatched_mu_below_valuation", i, j, p))
            elif ctx.v(i, j) - p > ctx.current_value(i) + EPS:
                bad.append(("mu_not_at_top", i, current, j))
    for s, cap in sorted(out.slot_caps.items()):
        held = out.cloud_served.get(s[1]) if ctx.match.get(s[1]) == s[0] else None
        for cs in ctx.sc.css:
            k = cs.id
            if k == held or (s, k) in out.slot_dead:
                continue
            price = out.spot_ec_prices.get((s, k), ctx.prm.p_min_ec)
            if price > cap + EPS or price < cs_cost(ctx.sc.mus[s[1]].r_u, cs, ctx.prm) - EPS:
                continue
            if held is None:
                bad.append(("unbooked_slot_below_price", s, k, price))
            elif price < out.spot_ec_prices[(s, held)] - EPS:
                bad.append(("slot_not_at_top", s, held, k))
    return bad


# ---------------------------------------------------------------- Pareto search

def _party_utilities(ctx: FuturesContext, omega: dict[int, tuple]):
    """Expected utility of every MU, ES and CS under ``omega`` with the booked slots held fixed,
    or None when the alternative breaks a constraint."""
    prm = ctx.prm
    mu_u = {m.id: 0.0 for m in ctx.sc.mus}
    es_u = {}
    for es in ctx.sc.ess:
        j = es.id
        members = omega.get(j, ())
        if members and not ctx.es_feasible(j, members):
            return None
        booked = ctx.booked(j)
        entries = [(i, ctx.market.a(i), volunteer_rank_utility(ctx.market.a(i), ctx.market.ev[(i, j)],
                                                               ctx.price(i, j), prm.q_ue)) for i in members]
        lam = volunteer_probability(entries, es.g_e + booked, prm) if entries else {}
        views = []
        for i in members:
            p = ctx.price(i, j)
            if ctx.enforce and not ctx.market.mu_feasible(i, j, p, lam[i]):
                return None
            if p > ctx.market.ev[(i, j)] + EPS:
                return None
            mu_u[i] = mu_expected_utility(ctx.market.a(i), ctx.market.ev[(i, j)], p, lam[i], prm)
            views.append(ContractView(i, ctx.market.a(i), p, ctx.market.cost[(i, j)], lam[i]))
        ranked = ctx.ranked(j, ctx.assignment)
        betas = fulfillment_probability([ctx.market.a(i) for i in members], es.g_e, [k for _, k, _ in ranked])
        slots = [(SlotView(k, s[1], p, ctx.out.r_max[j]), b,
                  _edge_cost(ctx, j)) for (s, k, p), b in zip(ranked, betas)]
        u, _, ok = es_expected_utility_and_risks(es, views, slots, prm)
        if ctx.enforce and members and not ok:
            return None
        es_u[j] = u
    cs_u = {}
    for cs in ctx.sc.css:
        k = cs.id
        if ctx.enforce and ctx.cs_risk(k, ctx.assignment, omega) > prm.rho[4] + EPS:
            return None
        cs_u[k] = ctx.cs_utility(k, ctx.assignment, omega)
    return mu_u, es_u, cs_u


def _edge_cost(ctx: FuturesContext, j: int) -> float:
    return es_cost(ctx.out.r_max[j], ctx.sc.ess[j], ctx.prm)


def check_pareto_improvement(outcome: FuturesOutcome, scenario: Scenario, max_mus: int = 8):
    """Search alternative MU-ES matchings at the final prices for one that leaves nobody worse off
    and raises expected social welfare. Returns ``(found, witness)``."""
    movable = [m for m in scenario.mus if not m.local_only]
    if len(movable) > max_mus:
        raise ValueError(f"exhaustive search is limited to {max_mus} MUs")
    ctx = FuturesContext(outcome, scenario)
    base = _party_utilities(ctx, ctx.omega)
    if base is None:
        return False, None
    base_sw = sum(math.fsum(d.values()) for d in base)
    choices = [[None] + sorted(m.candidates) for m in movable]
    for combo in itertools.product(*choices):
        omega: dict[int, list] = {}
        for m, j in zip(movable, combo):
            if j is not None:
                omega.setdefault(j, []).append(m.id)
        omega_t = {j: tuple(sorted(v)) for j, v in omega.items()}
        if omega_t == {j: tuple(sorted(v)) for j, v in ctx.omega.items() if v}:
            continue
        alt = _party_utilities(ctx, omega_t)
        if alt is None:
            continue
        if any(alt[n][x] < base[n][x] - EPS for n in range(3) for x in base[n]):
            continue
        sw = sum(math.fsum(d.values()) for d in alt)
        if sw > base_sw + 1e-7:
            return True, omega_t
    return False, None


# ---------------------------------------------------------------- full audit

def audit(outcome, scenario: Scenario, pareto: bool = False, subset_cap: int = SUBSET_CAP) -> AuditReport:
    report = AuditReport(
        blocking_pairs=find_blocking_pairs(outcome, scenario, subset_cap),
        blocking_coalitions=find_blocking_coalitions(outcome, scenario, subset_cap=subset_cap),
        ir_violations=check_individual_rationality(outcome, scenario),
        ce_violations=check_competitive_equilibrium(outcome, scenario),
    )
    report.notes.append(f"removal subsets enumerated exhaustively up to {subset_cap} members, "
                        f"coalitions up to {COALITION_SIZE} ESs")
    if pareto and isinstance(outcome, FuturesOutcome):
        report.pareto_improvement_found, report.pareto_witness = check_pareto_improvement(outcome, scenario)
    return report
