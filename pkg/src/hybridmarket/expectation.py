"""Valuations, expectations under participation/channel/inherent-demand uncertainty, and risks.

All attendance-dependent quantities reduce to the Poisson-binomial distribution of the
number of contractual MUs that show up, which is computed exactly by an O(n^2) recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import CloudServer, ConfigError, EdgeServer, MarketParams, MobileUser


@dataclass(frozen=True)
class ValuationBreakdown:
    t_save: float
    c_save: float
    v: float


@dataclass(frozen=True)
class ContractTermsUE:
    mu: int
    es: int
    price: float
    q_ue: float
    q_eu: float

    def __post_init__(self):
        if self.price < 0:
            raise ValueError("contract price must be non-negative")


@dataclass(frozen=True)
class ContractTermsEC:
    task: int
    es: int
    cs: int
    price: float
    q_ec: float

    def __post_init__(self):
        if self.price < 0:
            raise ValueError("contract price must be non-negative")


@dataclass(frozen=True)
class RiskReport:
    r1_u: float | None = None
    r2_u: float | None = None
    r1_e: float | None = None
    r2_e: float | None = None
    r_c: float | None = None

    def __post_init__(self):
        for name in ("r1_u", "r2_u", "r1_e", "r2_e", "r_c"):
            value = getattr(self, name)
            if value is not None and not -1e-12 <= value <= 1 + 1e-12:
                raise ValueError(f"{name}={value} is not a probability")


def valuation(mu: MobileUser, es: EdgeServer, gamma: float, params: MarketParams) -> ValuationBreakdown:
    """Time and energy saved by offloading to ``es`` at channel gain ``gamma``."""
    if gamma <= 0 or mu.e_t * gamma <= 0:
        raise ValueError("channel gain and transmit power must be positive")
    rate = params.bandwidth_w * math.log2(1.0 + mu.e_t * gamma)
    upload = mu.d_u / rate
    t_save = mu.r_u / mu.f_u - (mu.r_u / es.f_e + upload)
    c_save = mu.r_u * mu.e_u / mu.f_u - mu.e_t * upload
    return ValuationBreakdown(t_save, c_save, params.v1 * t_save + params.v2 * c_save)


def expected_valuation(mu: MobileUser, es: EdgeServer, params: MarketParams) -> float:
    """Valuation at the mean channel gain (the plug-in expectation)."""
    return valuation(mu, es, mu.gamma_mid, params).v


def true_expected_valuation(mu: MobileUser, es: EdgeServer, params: MarketParams,
                            nodes: int = 64) -> float:
    """E[v] integrated over the uniform channel gain; diagnostic only."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    gam = 0.5 * (mu.gamma_high - mu.gamma_low) * x + mu.gamma_mid
    return float(0.5 * sum(wi * valuation(mu, es, g, params).v for wi, g in zip(w, gam)))


def es_cost(r_u: float, es: EdgeServer, params: MarketParams) -> float:
    return params.v3 * r_u * es.e_e / es.f_e + es.c_hw


def cs_cost(r_u: float, cs: CloudServer, params: MarketParams) -> float:
    return params.v3 * r_u * cs.e_c / cs.f_c + cs.c_hw


# --- Poisson-binomial kernel -------------------------------------------------

def attendance_pmf(probs: Iterable[float]) -> list[float]:
    """pmf[n] = Pr(sum of independent Bernoulli(probs) == n)."""
    pmf = [1.0]
    for p in probs:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")
        q = 1.0 - p
        nxt = [0.0] * (len(pmf) + 1)
        for n, mass in enumerate(pmf):
            nxt[n] += mass * q
            nxt[n + 1] += mass * p
        pmf = nxt
    return pmf


def participation_tail_prob(probs: Sequence[float], threshold: int) -> float:
    """Pr(sum alpha_i > threshold)."""
    pmf = attendance_pmf(probs)
    start = max(0, int(math.floor(threshold)) + 1)
    return math.fsum(pmf[start:])


# --- volunteers --------------------------------------------------------------

def volunteer_rank_utility(a: float, e_v: float, price: float, q_ue: float) -> float:
    """Expected utility a contractual MU brings its ES, used to pick volunteers."""
    return a * (e_v - price) + (1.0 - a) * q_ue


def volunteer_order(entries: Sequence[tuple[int, float, float]]) -> list[int]:
    """MU ids in the order they would be volunteered: lowest utility first, then lowest id."""
    return [mu for mu, _, _ in sorted(entries, key=lambda e: (e[2], e[0]))]


def volunteer_probability(contract_mus: Sequence[tuple[int, float, float]], capacity: int,
                          params: MarketParams | None = None, method: str = "exact",
                          seed: int = 0) -> dict[int, float]:
    """Pr(MU attends and is volunteered) for entries ``(mu_id, a, utility)``.

    A MU at position t of the volunteer order is bumped exactly when it attends and at
    least ``capacity`` of the MUs after it (the ones the ES would rather keep) attend too,
    so each probability is a suffix Poisson-binomial tail. ``method="mc"`` estimates the
    same quantity from seeded draws.
    """
    if capacity < 0:
        raise ValueError("capacity must be non-negative")
    by_id = {mu: a for mu, a, _ in contract_mus}
    order = volunteer_order(contract_mus)
    if capacity >= len(order):
        return {mu: 0.0 for mu in by_id}
    if method == "mc":
        samples = (params or MarketParams()).mc_expectation_samples
        return _volunteer_probability_mc(order, by_id, capacity, samples, seed)
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    out = {}
    # suffix pmfs built right-to-left
    suffix = [1.0]
    tails = [0.0] * len(order)
    for t in range(len(order) - 1, -1, -1):
        tails[t] = math.fsum(suffix[capacity:]) if capacity < len(suffix) else 0.0
        p = by_id[order[t]]
        nxt = [0.0] * (len(suffix) + 1)
        for n, mass in enumerate(suffix):
            nxt[n] += mass * (1.0 - p)
            nxt[n + 1] += mass * p
        suffix = nxt
    for t, mu in enumerate(order):
        out[mu] = by_id[mu] * tails[t]
    return out


def _volunteer_probability_mc(order, by_id, capacity, samples, seed):
    rng = np.random.default_rng(seed)
    a = np.array([by_id[mu] for mu in order])
    attend = rng.random((samples, len(order))) < a
    # attendees after position t, per sample
    after = np.cumsum(attend[:, ::-1], axis=1)[:, ::-1] - attend
    bumped = attend & (after >= capacity)
    freq = bumped.mean(axis=0)
    return {mu: float(freq[t]) for t, mu in enumerate(order)}


# --- MU side ----------------------------------------------------------------

def mu_expected_utility(a: float, e_v: float, price: float, e_lambda: float,
                        params: MarketParams) -> float:
    return ((1.0 - e_lambda) * a * (e_v - price) - (1.0 - a) * params.q_ue
            + a * e_lambda * params.q_eu)


def r1_passes(utility: float, params: MarketParams) -> bool:
    """Markov-bound form of the unsatisfying-utility risk check."""
    if params.u_min <= 0:
        raise ConfigError("u_min must be positive")
    # strict, with a little slack so prices that land on the bound by rounding still fail
    return utility / params.u_min > 1.0 - params.rho[0] + 1e-9


def r1_price_bound(a: float, e_v: float, e_lambda: float, params: MarketParams) -> float:
    """Supremum of prices at which the R1 check still passes (it fails at the bound itself)."""
    slope = (1.0 - e_lambda) * a
    rhs = ((1.0 - params.rho[0]) * params.u_min + (1.0 - a) * params.q_ue
           - a * e_lambda * params.q_eu)
    if slope <= 0:
        return math.inf if rhs < 0 else -math.inf
    return e_v - rhs / slope


def mu_price_cap(a: float, e_v: float, e_lambda: float, params: MarketParams,
                 enforce_risk: bool = True) -> float:
    if not enforce_risk:
        return e_v
    return min(e_v, r1_price_bound(a, e_v, e_lambda, params))


def mu_expected_utility_and_risks(mu: MobileUser, es: EdgeServer, terms: ContractTermsUE,
                                  e_v: float, e_lambda: float, params: MarketParams):
    """(expected utility, risk slice, feasible) for one MU-ES contract."""
    if not 0.0 <= e_lambda <= 1.0:
        raise ValueError("e_lambda must lie in [0, 1]")
    if params.u_min <= 0:
        raise ConfigError("u_min must be positive")
    u = mu_expected_utility(mu.a, e_v, terms.price, e_lambda, params)
    ok1 = r1_passes(u, params)
    ok2 = e_lambda <= params.rho[1]
    # the Markov transform bounds Pr(u >= u_min) by E[u]/u_min; report the implied risk floor
    r1 = min(1.0, max(0.0, 1.0 - u / params.u_min))
    return u, RiskReport(r1_u=r1, r2_u=e_lambda), ok1 and ok2


# --- ES side ----------------------------------------------------------------

@dataclass(frozen=True)
class SlotView:
    """A booked cloud slot as seen by its ES: where it goes and what it costs."""
    cs: int
    index: int
    price: float
    r: float


def rank_slots(slots: Sequence[SlotView]) -> list[SlotView]:
    """Fulfilment order: cheapest first (highest value of keeping it), then CS id, slot index."""
    return sorted(slots, key=lambda s: (s.price, s.cs, s.index))


def rank_use_probabilities(a_list: Sequence[float], g_e: int, n_slots: int) -> list[float]:
    """Pr(the slot at rank t is used) = Pr(attendance >= g_e + t + 1)."""
    pmf = attendance_pmf(a_list)
    tails = [0.0] * (len(pmf) + 1)
    for n in range(len(pmf) - 1, -1, -1):
        tails[n] = tails[n + 1] + pmf[n]
    return [tails[g_e + t + 1] if g_e + t + 1 < len(tails) else 0.0 for t in range(n_slots)]


def fulfillment_probability(a_list: Sequence[float], g_e: int,
                            ranked_cs: Sequence[int]) -> list[float]:
    """E[beta] for each ranked slot; slots bound for the same CS share their mean."""
    per_rank = rank_use_probabilities(a_list, g_e, len(ranked_cs))
    groups: dict[int, list[int]] = {}
    for t, k in enumerate(ranked_cs):
        groups.setdefault(k, []).append(t)
    out = [0.0] * len(ranked_cs)
    for ranks in groups.values():
        mean = math.fsum(per_rank[t] for t in ranks) / len(ranks)
        for t in ranks:
            out[t] = mean
    return out


def es_margin(a: float, price: float, cost: float, params: MarketParams) -> float:
    """Per-MU expected ES utility with no volunteering: the ES's selection score."""
    return a * (price - cost) + (1.0 - a) * params.q_ue


@dataclass(frozen=True)
class ContractView:
    mu: int
    a: float
    price: float
    cost: float
    e_lambda: float


def es_expected_utility_and_risks(es: EdgeServer, contracts: Sequence[ContractView],
                                  slots: Sequence[tuple[SlotView, float, float]],
                                  params: MarketParams):
    """Expected ES utility and its two risks.

    ``slots`` holds ``(slot, e_beta, cost_e)`` per booked cloud slot, where ``cost_e`` is the
    edge cost the ES avoids when the slot is used.
    """
    q = params
    u = 0.0
    for c in contracts:
        u += c.a * (1.0 - c.e_lambda) * (c.price - c.cost)
        u += (1.0 - c.a) * q.q_ue - c.a * c.e_lambda * q.q_eu
    r1 = 0.0
    for slot, e_beta, cost_e in slots:
        u -= e_beta * (slot.price - cost_e) + (1.0 - e_beta) * q.q_ec
        r1 = max(r1, 1.0 - e_beta)
    supply = es.g_e + len(slots)
    r2 = participation_tail_prob([c.a for c in contracts], supply)
    feasible = r1 <= q.rho[2] + 1e-12 and r2 <= q.rho[3] + 1e-12
    return u, RiskReport(r1_e=r1, r2_e=r2), feasible


# --- CS side ----------------------------------------------------------------

def capped_poisson_pmf(sigma: float, cap: int) -> list[float]:
    """Law of min(Poisson(sigma), cap): overflow mass collects on ``cap``."""
    if sigma < 0 or cap < 0:
        raise ValueError("sigma and cap must be non-negative")
    pmf = []
    term = math.exp(-sigma)
    for h in range(cap):
        pmf.append(term)
        term *= sigma / (h + 1)
    pmf.append(max(0.0, 1.0 - math.fsum(pmf)))
    return pmf


def slot_load_pmf(a_list: Sequence[float], g_e: int, ranked_cs: Sequence[int], cs: int) -> list[float]:
    """pmf of how many of one ES's slots bound for ``cs`` are used in a transaction."""
    pmf = attendance_pmf(a_list)
    mine = [1 if k == cs else 0 for k in ranked_cs]
    prefix = [0]
    for m in mine:
        prefix.append(prefix[-1] + m)
    out = [0.0] * (prefix[-1] + 1)
    for n, mass in enumerate(pmf):
        used = min(max(n - g_e, 0), len(ranked_cs))
        out[prefix[used]] += mass
    return out


def convolve(p: Sequence[float], q: Sequence[float]) -> list[float]:
    out = [0.0] * (len(p) + len(q) - 1)
    for i, x in enumerate(p):
        if x == 0.0:
            continue
        for j, y in enumerate(q):
            out[i + j] += x * y
    return out


def bernoulli_load_pmf(e_betas: Sequence[float]) -> list[float]:
    """Load pmf when slots are treated as independent (used when no attendance data exists)."""
    return attendance_pmf(e_betas)


@dataclass(frozen=True)
class OverflowStats:
    risk: float
    expected_shortfall: float
    expected_inherent: float


def cs_overflow(load_pmf: Sequence[float], cs: CloudServer) -> OverflowStats:
    """Pr(load + inherent > G_c), E[max(0, load + inherent - G_c)] and E[inherent]."""
    eps = capped_poisson_pmf(cs.sigma, cs.g_c)
    risk = []
    short = []
    for s, ps in enumerate(load_pmf):
        if ps == 0.0:
            continue
        for h, ph in enumerate(eps):
            over = s + h - cs.g_c
            if over > 0:
                risk.append(ps * ph)
                short.append(ps * ph * over)
    e_eps = math.fsum(h * ph for h, ph in enumerate(eps))
    return OverflowStats(min(1.0, math.fsum(risk)), math.fsum(short), e_eps)


def cs_expected_utility_and_risk(cs: CloudServer, slots: Sequence[tuple[float, float, float]],
                                 params: MarketParams, load_pmf: Sequence[float] | None = None):
    """Expected CS utility, overflow risk and feasibility.

    ``slots`` holds ``(price, e_beta, cost_c)`` per booked slot. ``load_pmf`` is the exact
    distribution of used slots; without it slots are treated as independent.
    """
    if load_pmf is None:
        load_pmf = bernoulli_load_pmf([b for _, b, _ in slots])
    stats = cs_overflow(load_pmf, cs)
    u = 0.0
    for price, e_beta, cost in slots:
        u += e_beta * (price - cost) + (1.0 - e_beta) * params.q_ec
    served = stats.expected_inherent - stats.expected_shortfall
    u += cs.p_inherent * served - cs.q_inherent * stats.expected_shortfall
    return u, stats.risk, stats.risk <= params.rho[4] + 1e-12
