"""One practical transaction end to end, and the Monte-Carlo driver around it."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expectation import cs_cost, es_cost, expected_valuation, valuation, volunteer_rank_utility
from .futures import FuturesOutcome, empty_outcome
from .metrics import MetricsReport, mean_and_stderr
from .model import Scenario
from .spot import EsSupply, SpotOutcome, empty_spot, run_os_clm, select_volunteers, settle_cloud_contracts


class CapacityViolation(RuntimeError):
    """Execution-time service exceeded a physical capacity."""


@dataclass(frozen=True)
class TransactionSample:
    alpha: dict[int, int]
    gamma: dict[tuple[int, int], float]
    epsilon: dict[int, int]
    e2e_delay: dict[int, float]


def sample_transaction(scenario: Scenario, rng: np.random.Generator,
                       delay_ms: tuple[float, float] = (1.0, 15.0)) -> TransactionSample:
    alpha, gamma, delay = {}, {}, {}
    for mu in scenario.mus:
        alpha[mu.id] = int(rng.random() < mu.a)
        for j in sorted(mu.candidates):
            gamma[(mu.id, j)] = float(rng.uniform(mu.gamma_low, mu.gamma_high))
    epsilon = {cs.id: int(min(rng.poisson(cs.sigma), cs.g_c)) for cs in scenario.css}
    for mu in scenario.mus:
        delay[mu.id] = float(rng.uniform(*delay_ms))
    return TransactionSample(alpha, gamma, epsilon, delay)


@dataclass
class Service:
    """How one MU was served: by ``es`` locally or forwarded to ``cs``."""
    es: int
    cs: int | None
    price: float
    market: str


@dataclass
class TransactionOutcome:
    mu_utility: dict[int, float]
    es_utility: dict[int, float]
    cs_utility: dict[int, float]
    social_welfare: float
    social_welfare_direct: float
    ni: float
    ptct: dict[int, float]
    volunteers: frozenset
    beta: dict[tuple[int, int, int], bool]
    served: dict[int, Service]
    spot: SpotOutcome
    shortfall: dict[int, int] = field(default_factory=dict)
    rt_ms: float = math.nan

    @property
    def ptct_mean(self) -> float:
        return math.fsum(self.ptct.values()) / len(self.ptct) if self.ptct else math.nan

    def party_totals(self) -> tuple[float, float, float]:
        return (math.fsum(self.mu_utility.values()), math.fsum(self.es_utility.values()),
                math.fsum(self.cs_utility.values()))


def transmission_ms(scenario: Scenario, mu: int, es: int, gamma: float) -> float:
    m = scenario.mus[mu]
    rate = scenario.params.bandwidth_w * math.log2(1 + m.e_t * gamma)
    return 1000.0 * m.d_u / rate


def execution_ms(scenario: Scenario, mu: int, service: Service) -> float:
    f = scenario.css[service.cs].f_c if service.cs is not None else scenario.ess[service.es].f_e
    return 1000.0 * scenario.mus[mu].r_u / f


class Ledger:
    """Running per-party utilities plus the physical quantities needed for the welfare identity."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.mu = {m.id: 0.0 for m in scenario.mus}
        self.es = {e.id: 0.0 for e in scenario.ess}
        self.cs = {c.id: 0.0 for c in scenario.css}
        self.value_terms: list[float] = []
        self.cost_terms: list[float] = []
        self.served: dict[int, Service] = {}
        self.edge_load = {e.id: 0 for e in scenario.ess}
        self.cloud_load = {c.id: 0 for c in scenario.css}

    def serve(self, mu: int, service: Service, value: float, cloud_price: float = 0.0) -> None:
        prm = self.sc.params
        r = self.sc.mus[mu].r_u
        self.served[mu] = service
        self.mu[mu] += value - service.price
        self.value_terms.append(value)
        if service.cs is None:
            cost = es_cost(r, self.sc.ess[service.es], prm)
            self.es[service.es] += service.price - cost
            self.edge_load[service.es] += 1
        else:
            cost = cs_cost(r, self.sc.css[service.cs], prm)
            self.es[service.es] += service.price - cloud_price
            self.cs[service.cs] += cloud_price - cost
            self.cloud_load[service.cs] += 1
        self.cost_terms.append(cost)

    def transfer(self, payer: tuple[str, int], payee: tuple[str, int], amount: float) -> None:
        getattr(self, payer[0])[payer[1]] -= amount
        getattr(self, payee[0])[payee[1]] += amount

    def inherent(self, epsilon: dict[int, int]) -> tuple[dict[int, int], float]:
        """Inherent-requestor income and compensation; returns shortfalls and their welfare total."""
        shortfall, total = {}, 0.0
        for cs in self.sc.css:
            eps = epsilon.get(cs.id, 0)
            n = max(0, self.cloud_load[cs.id] + eps - cs.g_c)
            shortfall[cs.id] = n
            term = cs.p_inherent * (eps - n) - cs.q_inherent * n
            self.cs[cs.id] += term
            total += term
        return shortfall, total

    def check_capacity(self, fulfilled: dict[int, int], spot_cloud: dict[int, int]) -> None:
        for es in self.sc.ess:
            local = self.edge_load[es.id]
            if local > es.g_e:
                raise CapacityViolation(f"ES {es.id} serves {local} tasks locally with {es.g_e} VMs")
            total = local + fulfilled.get(es.id, 0) + spot_cloud.get(es.id, 0)
            if total > es.k_e:
                raise CapacityViolation(f"ES {es.id} handles {total} tasks above K={es.k_e}")
        for cs in self.sc.css:
            if self.cloud_load[cs.id] > cs.g_c:
                raise CapacityViolation(f"CS {cs.id} serves {self.cloud_load[cs.id]} tasks above {cs.g_c}")


def execute_transaction(futures: FuturesOutcome, sample: TransactionSample, scenario: Scenario,
                        rng: np.random.Generator | None = None, runs: int = 1,
                        timing: bool = False) -> TransactionOutcome:
    """Fulfil contracts, pick volunteers, settle cloud slots, then clear the residual spot market."""
    prm = scenario.params
    book = Ledger(scenario)
    beta: dict[tuple[int, int, int], bool] = {}
    volunteers: set[tuple[int, int]] = set()
    fulfilled_es: dict[int, int] = {}
    fulfilled_cs = {cs.id: 0 for cs in scenario.css}
    es_supply: dict[int, EsSupply] = {}
    contract_served: dict[int, int] = {}

    for j, members in futures.omega.items():
        es = scenario.ess[j]
        attending = [i for i in members if sample.alpha[i]]
        ranked = futures.ranked_slots(j)
        settled = settle_cloud_contracts(len(attending), es.g_e,
                                         [((s.es, s.cs, s.index), s.cs) for s in ranked], rng)
        beta.update(settled)
        used = [s for s in ranked if settled[(s.es, s.cs, s.index)]]
        f = len(used)
        fulfilled_es[j] = f
        supply = es.g_e + f
        entries = []
        for i in attending:
            mu = scenario.mus[i]
            u = volunteer_rank_utility(mu.a, expected_valuation(mu, es, prm),
                                       futures.mu_prices[(i, j)], prm.q_ue)
            entries.append((i, u))
        vols = select_volunteers(entries, supply)
        volunteers |= {(i, j) for i in vols}
        served = [i for i in attending if i not in vols]
        contract_served[j] = len(served)
        for i in members:
            if not sample.alpha[i]:
                book.transfer(("mu", i), ("es", j), prm.q_ue)
            elif i in vols:
                book.transfer(("es", j), ("mu", i), prm.q_eu)
        by_size = sorted(served, key=lambda i: (-scenario.mus[i].r_u, i))
        to_cloud = dict(zip(by_size[:f], used))
        for i in served:
            v = valuation(scenario.mus[i], es, sample.gamma[(i, j)], prm).v
            slot = to_cloud.get(i)
            price = futures.mu_prices[(i, j)]
            if slot is None:
                book.serve(i, Service(j, None, price, "futures"), v)
            else:
                book.serve(i, Service(j, slot.cs, price, "futures"), v, slot.price)
                fulfilled_cs[slot.cs] += 1
        for s in ranked:
            if not settled[(s.es, s.cs, s.index)]:
                book.transfer(("es", j), ("cs", s.cs), prm.q_ec)
        es_supply[j] = EsSupply(es.g_e + f - len(served), es.k_e - len(served))

    for es in scenario.ess:
        es_supply.setdefault(es.id, EsSupply(es.g_e, es.k_e))
    contract = futures.mu_match
    vol_ids = {i for i, _ in volunteers}
    residual = [m.id for m in scenario.mus
                if not m.local_only and sample.alpha[m.id] and (m.id not in contract or m.id in vol_ids)]
    cs_residual = {cs.id: max(0, cs.g_c - fulfilled_cs[cs.id] - sample.epsilon[cs.id])
                   for cs in scenario.css}
    started = time.perf_counter() if timing else 0.0
    spot = run_os_clm(scenario, residual, es_supply, cs_residual, sample.gamma,
                      exclude={i: j for i, j in volunteers})
    rt_ms = (time.perf_counter() - started) * 1000.0 if timing else math.nan

    spot_cloud: dict[int, int] = {}
    for j, members in spot.omega_spot.items():
        for i in members:
            v = spot.valuations[(i, j)]
            price = spot.spot_ue_prices[(i, j)]
            k = spot.cloud_served.get(i)
            if k is None:
                book.serve(i, Service(j, None, price, "spot"), v)
            else:
                book.serve(i, Service(j, k, price, "spot"), v, spot.cloud_price(i))
                spot_cloud[j] = spot_cloud.get(j, 0) + 1
    book.check_capacity(fulfilled_es, spot_cloud)
    shortfall, inherent_total = book.inherent(sample.epsilon)

    direct = math.fsum(book.mu.values()) + math.fsum(book.es.values()) + math.fsum(book.cs.values())
    identity = math.fsum(book.value_terms) - math.fsum(book.cost_terms) + inherent_total

    ptct = {}
    for i, svc in book.served.items():
        rounds = spot.mu_active_rounds.get(i, 0) if svc.market == "spot" else 0
        gamma = sample.gamma[(i, svc.es)]
        ptct[i] = (rounds * 2 * sample.e2e_delay[i] + transmission_ms(scenario, i, svc.es, gamma)
                   + execution_ms(scenario, i, svc))
    ni = spot.interactions + futures.interactions / max(runs, 1)
    return TransactionOutcome(book.mu, book.es, book.cs, identity, direct, ni, ptct,
                              frozenset(volunteers), beta, book.served, spot, shortfall, rt_ms)


# ---------------------------------------------------------------- Monte Carlo

@dataclass(frozen=True)
class RunSummary:
    sw: float
    sw_direct: float
    ni: float
    ptct: float
    mu: float
    es: float
    cs: float
    rt_ms: float


def summarize(out: TransactionOutcome) -> RunSummary:
    mu, es, cs = out.party_totals()
    return RunSummary(out.social_welfare, out.social_welfare_direct, out.ni, out.ptct_mean,
                      mu, es, cs, out.rt_ms)


def _run_chunk(args) -> list[RunSummary]:
    from .baselines import execute_mechanism
    scenario, mechanism, futures, seeds, horizon, delay_ms, timing = args
    results = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        sample = sample_transaction(scenario, rng, delay_ms)
        out = execute_mechanism(mechanism, scenario, sample, rng, futures, horizon, timing)
        results.append(summarize(out))
    return results


def default_workers() -> int:
    raw = os.environ.get("HYBRIDMARKET_WORKERS")
    return max(1, int(raw)) if raw else 1


def run_monte_carlo(scenario: Scenario, mechanism: str = "hybrid", runs: int = 100, seed: int = 0,
                    workers: int | None = None, delay_ms: tuple[float, float] = (1.0, 15.0),
                    timing: bool = False, futures: FuturesOutcome | None = None,
                    return_runs: bool = False, horizon: int | None = None):
    """Sign futures once, then average ``runs`` independently seeded transactions.

    Futures messages are spread over ``horizon`` transactions (default ``runs``); a larger
    horizon lets a subsample of runs stand in for a longer contract period.
    """
    from .baselines import prepare_futures
    if runs < 1:
        raise ValueError("runs must be at least 1")
    horizon = runs if horizon is None else horizon
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    started = time.perf_counter()
    if futures is None:
        futures = prepare_futures(mechanism, scenario)
    futures_rt = (time.perf_counter() - started) * 1000.0 / horizon if timing else math.nan
    seeds = np.random.SeedSequence(seed).spawn(runs)
    workers = workers or default_workers()
    chunks = [seeds[i::workers] for i in range(workers)] if workers > 1 else [seeds]
    payload = [(scenario, mechanism, futures, c, horizon, delay_ms, timing) for c in chunks if c]
    if len(payload) > 1:
        with ProcessPoolExecutor(max_workers=len(payload)) as pool:
            parts = list(pool.map(_run_chunk, payload))
        summaries: list[RunSummary] = [None] * runs  # type: ignore[list-item]
        for w, part in enumerate(parts):
            for n, s in enumerate(part):
                summaries[w + n * len(payload)] = s
    else:
        summaries = _run_chunk(payload[0])
    report = aggregate(summaries, mechanism, seed, futures_rt)
    return (report, summaries) if return_runs else report


def aggregate(summaries: Sequence[RunSummary], mechanism: str, seed: int,
              futures_rt: float = math.nan) -> MetricsReport:
    sw_mean, sw_err = mean_and_stderr([s.sw for s in summaries])
    ptcts = [s.ptct for s in summaries if not math.isnan(s.ptct)]
    rts = [s.rt_ms for s in summaries if not math.isnan(s.rt_ms)]
    rt = math.fsum(rts) / len(rts) + (0.0 if math.isnan(futures_rt) else futures_rt) if rts else math.nan
    return MetricsReport(
        mechanism=mechanism,
        runs=len(summaries),
        seed=seed,
        sw_mean=sw_mean,
        sw_stderr=sw_err,
        ni_mean=mean_and_stderr([s.ni for s in summaries])[0],
        rt_ms=rt,
        ptct_mean_ms=math.fsum(ptcts) / len(ptcts) if ptcts else math.nan,
        mu_util=mean_and_stderr([s.mu for s in summaries])[0],
        es_util=mean_and_stderr([s.es for s in summaries])[0],
        cs_util=mean_and_stderr([s.cs for s in summaries])[0],
    )


__all__ = ["TransactionSample", "TransactionOutcome", "Service", "CapacityViolation", "sample_transaction",
           "execute_transaction", "run_monte_carlo", "aggregate", "RunSummary", "empty_outcome", "empty_spot"]
