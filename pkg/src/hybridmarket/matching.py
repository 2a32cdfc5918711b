"""Ascending-price deferred acceptance shared by the futures and spot markets.

Proposers carry one price per target. Every round each proposer re-ranks its targets at
current prices and moves to its best one if it is not already held there; each target
re-selects from its held set plus new proposals; rejected proposers raise their price at
that target by one step, capped. A rejection at the cap kills the pair.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Callable, Hashable, Iterable, Mapping

Proposer = Hashable
Target = Hashable

# preference(proposer, target, price) -> score, or None when the pair is unacceptable
Preference = Callable[[Proposer, Target, float], "float | None"]
# select(target, [(proposer, price), ...]) -> accepted proposers
Select = Callable[[Target, list], Iterable[Proposer]]


class MatchingDiverged(RuntimeError):
    """Raised when a run exceeds its hard round limit."""


class AscendingMatcher:
    def __init__(self, proposers: Iterable[Proposer], options: Mapping[Proposer, Iterable[Target]],
                 floor: Mapping[tuple, float], cap: Mapping[tuple, float], step: float,
                 preference: Preference, select: Select,
                 notify: Callable[[Target, set], None] | None = None,
                 hard_limit: int = 100_000):
        self.proposers = sorted(proposers)
        self.options = {p: sorted(options.get(p, ())) for p in self.proposers}
        self.price = {(p, t): float(floor[(p, t)]) for p in self.proposers for t in self.options[p]}
        self.cap = cap
        self.step = step
        self.preference = preference
        self.select = select
        self.notify = notify
        self.hard_limit = hard_limit
        self.held: dict[Target, set] = defaultdict(set)
        self.match: dict[Proposer, Target] = {}
        self.dead: set[tuple] = set()
        # pairs killed by a rejection at the cap; they may try again once the target has a vacancy
        self.waitlist: dict[Target, set] = defaultdict(set)
        self.rounds = 0
        self.messages = 0
        self.active_rounds: dict[Proposer, int] = defaultdict(int)
        self.history: list[dict] = []
        self.events: list[str] = []
        self._top: dict = {}

    def _log(self, event: str) -> None:
        self.events.append(event)
        self.messages += 1

    def score(self, p: Proposer, t: Target) -> float | None:
        if (p, t) in self.dead:
            return None
        return self.preference(p, t, self.price[(p, t)])

    def invalidate(self, proposers: Iterable[Proposer] | None = None) -> None:
        """Forget cached choices after preferences changed outside a price move."""
        if proposers is None:
            self._top.clear()
        else:
            for p in proposers:
                self._top.pop(p, None)

    def top(self, p: Proposer) -> Target | None:
        if p in self._top:
            return self._top[p]
        best, best_key = None, None
        for t in self.options[p]:
            s = self.score(p, t)
            if s is None:
                continue
            key = (-s, t)
            if best_key is None or key < best_key:
                best, best_key = t, key
        self._top[p] = best
        return best

    def pending(self) -> bool:
        self._top.clear()
        return any(self.top(p) != self.match.get(p) for p in self.proposers)

    def release(self, p: Proposer, t: Target) -> None:
        """Drop ``p`` from ``t`` for good; its price there jumps to the cap."""
        self.held[t].discard(p)
        if self.match.get(p) == t:
            del self.match[p]
        self.price[(p, t)] = max(self.price[(p, t)], float(self.cap[(p, t)]))
        self.dead.add((p, t))
        self._top.pop(p, None)
        self._log("notify")

    def reject(self, p: Proposer, t: Target) -> None:
        """Turn ``p`` away from ``t`` outside a round, exactly as a rejection inside one."""
        self.held[t].discard(p)
        if self.match.get(p) == t:
            del self.match[p]
        self._reject(p, t)
        self._log("notify")

    def _reject(self, p: Proposer, t: Target) -> None:
        self._top.pop(p, None)
        old = self.price[(p, t)]
        new = min(old + self.step, float(self.cap[(p, t)]))
        if new > old + 1e-12:
            self.price[(p, t)] = new
        else:
            self.dead.add((p, t))
            self.waitlist[t].add(p)

    def _revive(self, t: Target) -> None:
        for p in self.waitlist.pop(t, ()):
            self.dead.discard((p, t))
            self._top.pop(p, None)

    def run(self) -> int:
        """Run rounds until no proposer moves; returns the number of rounds executed."""
        executed = 0
        self._top.clear()
        while True:
            proposals: dict[Target, list] = defaultdict(list)
            for p in self.proposers:
                best = self.top(p)
                current = self.match.get(p)
                if best == current:
                    continue
                if current is not None:
                    self.held[current].discard(p)
                    del self.match[p]
                    self._log("withdraw")
                    self._revive(current)
                if best is None:
                    continue
                proposals[best].append(p)
                self._log("propose")
                self.active_rounds[p] += 1
            if not proposals:
                return executed
            executed += 1
            self.rounds += 1
            if self.rounds > self.hard_limit:
                raise MatchingDiverged(f"no convergence after {self.rounds} rounds")
            trace = {}
            for t in sorted(proposals):
                new = set(proposals[t])
                pool = sorted(self.held[t] | new)
                accepted = set(self.select(t, [(p, self.price[(p, t)]) for p in pool]))
                for p in pool:
                    if p in new:
                        self._log("respond")
                    if p in accepted:
                        self.match[p] = t
                    else:
                        if p not in new:
                            self._log("displace")
                        self.match.pop(p, None)
                        self._reject(p, t)
                self.held[t] = accepted
                trace[t] = (sorted(new), sorted(accepted))
                if self.notify is not None:
                    self.notify(t, accepted)
                    self.invalidate(accepted)
            self.history.append(trace)
