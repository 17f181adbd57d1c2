"""Exact minimum-weight hitting sets by branch-and-bound."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Optional, Sequence


class UnhittableError(ValueError):
    """Some set to hit is empty."""


@dataclass
class HitInstance:
    universe: Sequence[Hashable]
    sets: list = field(default_factory=list)
    weights: Optional[dict] = None

    def __post_init__(self):
        self.universe = list(self.universe)
        pos = {e: i for i, e in enumerate(self.universe)}
        if len(pos) != len(self.universe):
            raise ValueError("universe has repeated literals")
        self.sets = [frozenset(s) for s in self.sets]
        for s in self.sets:
            if not s:
                raise UnhittableError("cannot hit an empty set")
            extra = s - pos.keys()
            if extra:
                raise ValueError(f"set mentions literals outside the universe: {sorted(map(str, extra))}")
        w = self.weights or {}
        for e, c in w.items():
            if c <= 0:
                raise ValueError(f"weight of {e!r} must be positive")
        self.weights = {e: w.get(e, 1) for e in self.universe}
        self._pos = pos

    def cost(self, h) -> int:
        return sum(self.weights[e] for e in h)

    def hits(self, h) -> bool:
        h = set(h)
        return all(s & h for s in self.sets)


def minimum_hitting_set(inst: HitInstance) -> list:
    """Minimum-weight hitting set; ties go to the lexicographically smallest
    sorted index tuple under universe order. Returned in universe order."""
    n = len(inst.universe)
    pos = inst._pos
    w = [inst.weights[e] for e in inst.universe]
    sets = sorted({tuple(sorted(pos[e] for e in s)) for s in inst.sets})
    # drop supersets of other sets: hitting the subset hits them too
    sets.sort(key=len)
    kept = []
    for s in sets:
        ss = set(s)
        if not any(set(k) <= ss for k in kept):
            kept.append(s)
    sets = kept
    if not sets:
        return []

    best_cost, best_key = _greedy(sets, w, n)

    def lower_bound(open_sets, excluded):
        # disjoint packing: each chosen set costs at least its cheapest allowed element
        used = set()
        lb = 0
        for s in sorted(open_sets, key=len):
            elems = [e for e in s if e not in excluded]
            if used.isdisjoint(elems):
                used.update(elems)
                lb += min(w[e] for e in elems)
        return lb

    def search(chosen, cost, open_sets, excluded):
        nonlocal best_cost, best_key
        if not open_sets:
            key = tuple(sorted(chosen))
            if cost < best_cost or (cost == best_cost and key < best_key):
                best_cost, best_key = cost, key
            return
        if cost + lower_bound(open_sets, excluded) > best_cost:
            return
        degree = [0] * n
        for s in open_sets:
            for e in s:
                degree[e] += 1
        target = min(open_sets, key=lambda s: (sum(1 for e in s if e not in excluded), s))
        cand = [e for e in target if e not in excluded]
        cand.sort(key=lambda e: (-degree[e], e))
        newly = []
        for e in cand:
            rest = [s for s in open_sets if e not in s]
            ex = excluded | set(newly)
            if all(any(x not in ex for x in s) for s in rest):
                search(chosen + [e], cost + w[e], rest, ex)
            newly.append(e)

    search([], 0, sets, frozenset())
    return [inst.universe[i] for i in best_key]


def _greedy(sets, w, n):
    chosen = []
    open_sets = list(sets)
    while open_sets:
        score = {}
        for s in open_sets:
            for e in s:
                score[e] = score.get(e, 0) + 1
        e = min(score, key=lambda e: (w[e] / score[e], e))
        chosen.append(e)
        open_sets = [s for s in open_sets if e not in s]
    # prune redundant picks
    for e in sorted(chosen, key=lambda e: -w[e]):
        rest = [x for x in chosen if x != e]
        if all(any(x in s for x in rest) for s in sets):
            chosen = rest
    return sum(w[e] for e in chosen), tuple(sorted(chosen))
