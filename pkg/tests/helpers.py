"""Scenario builders shared by the test modules."""

from __future__ import annotations

import random

from hybridmarket.model import (
    CloudServer,
    EdgeServer,
    MarketParams,
    MobileUser,
    Scenario,
    ScenarioConfig,
    generate_scenario,
)

DESK = MarketParams(v1=4.0, v2=4.0)


def mu(i, candidates, a=1.0, d_u=1.5e6):
    return MobileUser(i, f_u=1e9, e_t=0.5, e_u=0.5, d_u=d_u, r_u=600 * d_u,
                      candidates=frozenset(candidates), a=a, gamma_low=100.0, gamma_high=400.0)


def es(j, g_e=1, k_e=1):
    return EdgeServer(j, f_e=1e12, e_e=0.5, g_e=g_e, k_e=k_e, c_hw=0.05)


def cs(k, g_c=4, sigma=0.0):
    return CloudServer(k, f_c=2e12, e_c=0.5, g_c=g_c, sigma=sigma)


def scenario(mus, ess, css=(), **params):
    return Scenario(tuple(mus), tuple(ess), tuple(css), MarketParams(**params))


def small_random(seed: int, params: MarketParams = DESK) -> Scenario:
    """Up to 20 MUs, 5 ESs and 3 CSs drawn from the default ranges."""
    r = random.Random(seed)
    cfg = ScenarioConfig(n_mus=r.randint(2, 20), n_ess=r.randint(1, 5), n_css=r.randint(1, 3), params=params)
    return generate_scenario(cfg, seed)
