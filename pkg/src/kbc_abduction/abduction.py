"""Axiom injection: score predicate pairs and compile the winners to axioms.

Three scorer back ends share one interface:

* :class:`KbcScorer` asks a trained ComplEx model, O(n) per triplet;
* :class:`SearchScorer` looks triplets up in a stored KB whose hypernym and
  hyponym relations were closed transitively in advance;
* :class:`~kbc_abduction.service.RemoteScorer` delegates to a scoring server.

A triplet ``(s, r, o)`` becomes a unary implication::

    synonym, hypernym, derivationally-related   forall x. s(x) -> o(x)
    antonym                                     forall x. s(x) -> ~o(x)
    hyponym                                     forall x. o(x) -> s(x)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from . import complex_model
from .complex_model import ModelParams
from .kgraph import (ANTONYM, DERIVATIONALLY_RELATED, HYPERNYM, HYPONYM, RELATIONS,
                     SYNONYM, NamedTriplet, TripletStore, transitive_closure)

logger = logging.getLogger(__name__)

DEFAULT_THETA = 0.4


class ScorerError(RuntimeError):
    """A scorer back end could not answer (e.g. unreachable server)."""


class CandidatePair(NamedTuple):
    context_pred: str
    goal_pred: str


class ScoredTriplet(NamedTuple):
    s: str
    r: str
    o: str
    score: float
    known: bool = True  # False when a lemma was out of vocabulary

    def to_dict(self) -> dict:
        return {"s": self.s, "r": self.r, "o": self.o, "score": self.score}


@dataclass(frozen=True)
class Axiom:
    """``forall x. antecedent(x) -> [~]consequent(x)``."""

    antecedent: str
    consequent: str
    negated_consequent: bool = False
    provenance: ScoredTriplet | None = None

    @property
    def key(self):
        return (self.antecedent, self.consequent, self.negated_consequent)

    def __str__(self):
        neg = "~" if self.negated_consequent else ""
        return f"forall x. {self.antecedent}(x) -> {neg}{self.consequent}(x)"


class Scorer:
    """Base scorer: subclasses implement :meth:`score_triplet`."""

    relations: Sequence[str] = RELATIONS

    def score_triplet(self, s: str, r: str, o: str) -> ScoredTriplet:
        raise NotImplementedError

    def candidates(self, pairs: Sequence[CandidatePair], theta: float) -> list:
        """Scored triplets at or above ``theta`` for the given pairs."""
        return [t for t in score_pairs(self, pairs) if t.score >= theta]


class KbcScorer(Scorer):
    def __init__(self, params: ModelParams):
        self.params = params
        self._ents = params.vocab.entity_ids
        self._rels = params.vocab.relation_ids

    def score_triplet(self, s, r, o):
        si, oi = self._ents.get(s), self._ents.get(o)
        ri = self._rels[r]
        if si is None or oi is None:
            return ScoredTriplet(s, r, o, 0.0, known=False)
        return ScoredTriplet(s, r, o, complex_model.score(self.params, si, ri, oi))


class SearchScorer(Scorer):
    """Exact lookup: 1.0 if the triplet is (derivably) in the KB, else 0.0."""

    def __init__(self, facts: Iterable[NamedTriplet]):
        self.facts = frozenset(NamedTriplet(*t) for t in facts)
        self.lemmas = frozenset(x for t in self.facts for x in (t.s, t.o))

    def score_triplet(self, s, r, o):
        if s not in self.lemmas or o not in self.lemmas:
            return ScoredTriplet(s, r, o, 0.0, known=False)
        return ScoredTriplet(s, r, o, 1.0 if (s, r, o) in self.facts else 0.0)


def search_closure_prepare(store) -> SearchScorer:
    """Precompute hypernym/hyponym closures and synonym symmetry of a KB.

    ``store`` is a :class:`TripletStore` or an iterable of named triplets.
    """
    named = store.named() if isinstance(store, TripletStore) else list(store)
    facts = set(NamedTriplet(*t) for t in named)
    for rel in (HYPERNYM, HYPONYM):
        edges = [(t.s, t.o) for t in facts if t.r == rel]
        facts.update(NamedTriplet(a, rel, b) for a, b in transitive_closure(edges) if a != b)
    facts.update(NamedTriplet(t.o, SYNONYM, t.s) for t in list(facts) if t.r == SYNONYM)
    return SearchScorer(facts)


def score_pairs(scorer: Scorer, pairs: Sequence[CandidatePair]) -> list:
    """Score both orientations of every pair under every relation.

    Output order: pair index, then relation id, then orientation.
    """
    out = []
    for a, b in pairs:
        for r in scorer.relations:
            for s, o in ((a, b), (b, a)):
                t = scorer.score_triplet(s, r, o)
                if not t.known:
                    logger.debug("out-of-vocabulary lemma in (%s, %s, %s)", s, r, o)
                out.append(t)
    return out


def compile_axiom(t: ScoredTriplet) -> Axiom | None:
    if t.r in (SYNONYM, HYPERNYM, DERIVATIONALLY_RELATED):
        ax = Axiom(t.s, t.o, False, t)
    elif t.r == ANTONYM:
        ax = Axiom(t.s, t.o, True, t)
    elif t.r == HYPONYM:
        ax = Axiom(t.o, t.s, False, t)
    else:
        logger.warning("no axiom rule for relation %r", t.r)
        return None
    if ax.antecedent == ax.consequent:
        return None
    return ax


def generate_axioms(scored: Iterable[ScoredTriplet], theta: float = DEFAULT_THETA) -> list:
    """Compile triplets scoring at least ``theta``; one axiom per implication."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    best = {}
    for t in scored:
        if t.score < theta:
            continue
        ax = compile_axiom(t)
        if ax is None:
            continue
        prev = best.get(ax.key)
        if prev is None or t.score > prev.provenance.score:
            best[ax.key] = ax
    return list(best.values())


def abduce(scorer: Scorer, pairs: Sequence[CandidatePair],
           theta: float = DEFAULT_THETA) -> list:
    return generate_axioms(scorer.candidates(pairs, theta), theta)


def format_scored_tsv(scored: Iterable[ScoredTriplet]) -> str:
    return "".join(f"{t.s}\t{t.r}\t{t.o}\t{t.score:.6f}\n" for t in scored)
