"""Filtered link-prediction metrics (object side)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .complex_model import ModelParams, raw_score_1N
from .kgraph import Triplet, TripletStore

HITS_AT = (1, 3, 10)


class FilterSet:
    """Known-true triplets (train and dev) queryable by (s, r)."""

    def __init__(self, triplets: Iterable[Triplet] = ()):
        self._objects = {}
        for s, r, o in triplets:
            self._objects.setdefault((int(s), int(r)), set()).add(int(o))

    @classmethod
    def from_stores(cls, *stores: TripletStore) -> "FilterSet":
        return cls(t for st in stores for t in st.triplets)

    def objects(self, s: int, r: int):
        return self._objects.get((s, r), ())

    def __contains__(self, t) -> bool:
        s, r, o = t
        return o in self._objects.get((s, r), ())


@dataclass
class RankingMetrics:
    mrr: float
    hits: dict = field(default_factory=dict)
    evaluated_count: int = 0

    def to_dict(self) -> dict:
        d = {"mrr": self.mrr}
        d.update({f"hits{n}": self.hits[n] for n in HITS_AT})
        d["count"] = self.evaluated_count
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def filtered_rank(params: ModelParams, gold: Triplet, filter: FilterSet | None,
                  filtered: bool = True) -> int:
    """Rank of gold's object among all entities, 1 = best.

    Other known objects for (s, r) are removed from the candidate list when
    ``filtered``.  Ties with the gold score do not worsen the rank.
    Comparison is done on the pre-sigmoid score, which orders identically to
    the probability but does not saturate.
    """
    s, r, o = (int(x) for x in gold)
    if not (0 <= s < params.n_entities and 0 <= o < params.n_entities
            and 0 <= r < params.n_relations):
        raise IndexError(f"gold triplet {gold} out of range")
    scores = raw_score_1N(params, s, r)
    better = scores > scores[o]
    if filtered and filter is not None:
        known = [e for e in filter.objects(s, r) if e != o]
        better[known] = False
    return 1 + int(np.count_nonzero(better))


def evaluate(params: ModelParams, dev: Iterable[Triplet], filter: FilterSet | None,
             filtered: bool = True) -> RankingMetrics:
    ranks = [filtered_rank(params, t, filter, filtered) for t in dev]
    if not ranks:
        raise ValueError("dev set is empty")
    n = len(ranks)
    mrr = 100.0 * math.fsum(1.0 / k for k in ranks) / n
    hits = {h: 100.0 * sum(k <= h for k in ranks) / n for h in HITS_AT}
    return RankingMetrics(mrr=mrr, hits=hits, evaluated_count=n)


def random_baseline_mrr(params_or_n_entities, dev: Iterable[Triplet],
                        filter: FilterSet | None) -> float:
    """Expected MRR (x100) of a uniformly random ordering of the candidates.

    With C candidates the expected reciprocal rank is H_C / C.
    """
    n_ent = getattr(params_or_n_entities, "n_entities", params_or_n_entities)
    vals = []
    for s, r, o in dev:
        known = set(filter.objects(s, r)) if filter is not None else set()
        known.discard(o)
        c = n_ent - len(known)
        vals.append(math.fsum(1.0 / k for k in range(1, c + 1)) / c)
    if not vals:
        raise ValueError("dev set is empty")
    return 100.0 * math.fsum(vals) / len(vals)
