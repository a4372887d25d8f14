"""Lexical knowledge graph construction.

Relations in the source lexicon (WordNet-style) live either between synsets
(also_sees, verb_groups, similar_tos, hypernym, hyponym) or between lemmas
(antonym, derivationally-related).  Everything here flattens them into
lemma-level triplets ``(s, r, o)`` over the five target relations.

Construction functions work on lemma strings (``NamedTriplet``); dense integer
ids are assigned once the final triplet set is known, by
:meth:`TripletStore.from_named`.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SYNONYM = "synonym"
HYPERNYM = "hypernym"
ANTONYM = "antonym"
HYPONYM = "hyponym"
DERIVATIONALLY_RELATED = "derivationally-related"

RELATIONS = (SYNONYM, HYPERNYM, ANTONYM, HYPONYM, DERIVATIONALLY_RELATED)

SYNONYM_SOURCES = frozenset({"also_sees", "verb_groups", "similar_tos"})
HIERARCHY_SOURCES = frozenset({HYPERNYM, HYPONYM})
SYNSET_SOURCES = SYNONYM_SOURCES | HIERARCHY_SOURCES
LEMMA_SOURCES = frozenset({ANTONYM, DERIVATIONALLY_RELATED})

DEFAULT_EXTERNAL_MAPPING = {"similar": SYNONYM}


class InputFormatError(ValueError):
    """Malformed or semantically invalid input file/record."""


class Triplet(NamedTuple):
    s: int
    r: int
    o: int


class NamedTriplet(NamedTuple):
    s: str
    r: str
    o: str


class Vocabulary:
    """Bidirectional name<->id maps for entities and relations.

    With ``strict`` (the default) the relations must include the five lexical
    relations; non-strict vocabularies serve generic link-prediction use.
    """

    def __init__(self, entity_names: Sequence[str],
                 relation_names: Sequence[str] = RELATIONS, strict: bool = True):
        self.entity_names = list(entity_names)
        self.relation_names = list(relation_names)
        self.entity_ids = {name: i for i, name in enumerate(self.entity_names)}
        self.relation_ids = {name: i for i, name in enumerate(self.relation_names)}
        if len(self.entity_ids) != len(self.entity_names):
            raise ValueError("duplicate entity names")
        if len(self.relation_ids) != len(self.relation_names):
            raise ValueError("duplicate relation names")
        missing = set(RELATIONS) - set(self.relation_names)
        if strict and missing:
            raise ValueError(f"vocabulary lacks core relations: {sorted(missing)}")

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    def encode(self, t: NamedTriplet) -> Triplet:
        try:
            return Triplet(self.entity_ids[t.s], self.relation_ids[t.r],
                           self.entity_ids[t.o])
        except KeyError as exc:
            raise KeyError(f"{exc.args[0]!r} not in vocabulary") from None

    def decode(self, t: Triplet) -> NamedTriplet:
        return NamedTriplet(self.entity_names[t.s], self.relation_names[t.r],
                            self.entity_names[t.o])

    def __eq__(self, other):
        return (isinstance(other, Vocabulary)
                and self.entity_names == other.entity_names
                and self.relation_names == other.relation_names)

    def __repr__(self):
        return (f"Vocabulary({self.n_entities} entities, "
                f"{self.n_relations} relations)")


class TripletStore:
    """Immutable, duplicate-free triplet set with (s,r) and (o,r) indexes.

    ``objects(s, r)`` and ``subjects(o, r)`` return sorted id lists.
    """

    def __init__(self, vocab: Vocabulary, triplets: Iterable[Triplet]):
        self.vocab = vocab
        ne, nr = vocab.n_entities, vocab.n_relations
        facts = set()
        for t in triplets:
            t = Triplet(*map(int, t))
            if not (0 <= t.s < ne and 0 <= t.o < ne and 0 <= t.r < nr):
                raise ValueError(f"triplet {t} outside vocabulary bounds")
            facts.add(t)
        self._facts = frozenset(facts)
        sr, orr = defaultdict(list), defaultdict(list)
        for t in sorted(facts):
            sr[t.s, t.r].append(t.o)
            orr[t.o, t.r].append(t.s)
        for lst in orr.values():
            lst.sort()
        self.index_sr = dict(sr)
        self.index_or = dict(orr)

    @classmethod
    def from_named(cls, named: Iterable[NamedTriplet],
                   relation_names: Sequence[str] = RELATIONS,
                   extra_entities: Iterable[str] = (), strict: bool = True) -> "TripletStore":
        """Build a store whose entity ids follow sorted lemma order."""
        named = [NamedTriplet(*t) for t in named]
        lemmas = {t.s for t in named} | {t.o for t in named} | set(extra_entities)
        vocab = Vocabulary(sorted(lemmas), relation_names, strict)
        unknown = {t.r for t in named} - set(vocab.relation_ids)
        if unknown:
            raise InputFormatError(f"unknown relation(s): {sorted(unknown)}")
        return cls(vocab, (vocab.encode(t) for t in named))

    @property
    def triplets(self) -> frozenset:
        return self._facts

    def __len__(self):
        return len(self._facts)

    def __iter__(self):
        return iter(sorted(self._facts))

    def __contains__(self, t) -> bool:
        return Triplet(*t) in self._facts

    def objects(self, s: int, r: int) -> list:
        return self.index_sr.get((s, r), [])

    def subjects(self, o: int, r: int) -> list:
        return self.index_or.get((o, r), [])

    def has(self, s: int, r: int, o: int) -> bool:
        return (s, r, o) in self._facts

    def named(self) -> list:
        return sorted(self.vocab.decode(t) for t in self._facts)

    def sr_pairs(self) -> list:
        return sorted(self.index_sr)


@dataclass
class SynsetGraph:
    """Synsets plus synset-level and lemma-level source edges."""

    synsets: dict = field(default_factory=dict)
    synset_edges: list = field(default_factory=list)
    lemma_edges: list = field(default_factory=list)

    def validate(self):
        for a, rel, b in self.synset_edges:
            if rel not in SYNSET_SOURCES:
                raise InputFormatError(f"unknown synset relation {rel!r}")
            for sid in (a, b):
                if sid not in self.synsets:
                    raise InputFormatError(f"edge references unknown synset {sid!r}")
        for _, rel, _ in self.lemma_edges:
            if rel not in LEMMA_SOURCES:
                raise InputFormatError(f"unknown lemma relation {rel!r}")


def transitive_closure(edges: Iterable[tuple]) -> list:
    """Reachability relation of a directed graph.

    Self-loops appear in the output only if they were in the input, so a
    cycle a->b->a yields (a,b),(b,a) but not (a,a).
    """
    adj = defaultdict(set)
    loops = set()
    for u, v in edges:
        if u == v:
            loops.add((u, v))
        else:
            adj[u].add(v)
    out = set(loops)
    cyclic = False
    for start in list(adj):
        seen = set()
        stack = list(adj[start])
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(adj.get(node, ()))
        if start in seen:
            cyclic = True
            seen.discard(start)
        out.update((start, v) for v in seen)
    if cyclic:
        logger.warning("cycle detected in hierarchy edges; closure computed anyway")
    return sorted(out)


def _lemma_product(s1: Iterable[str], s2: Iterable[str], rel: str):
    return {NamedTriplet(a, rel, b) for a, b in product(s1, s2) if a != b}


def build_synonym_triplets(g: SynsetGraph) -> list:
    """Synonym triplets from linked synsets and synsets sharing a lemma.

    A synset trivially shares lemmas with itself, so members of one synset are
    synonyms of each other.  Output is symmetric and reflexive pairs are dropped.
    """
    g.validate()
    linked = set()
    for a, rel, b in g.synset_edges:
        if rel in SYNONYM_SOURCES:
            linked.add((a, b))
    by_lemma = defaultdict(set)
    for sid, lemmas in g.synsets.items():
        for lemma in lemmas:
            by_lemma[lemma].add(sid)
    for sids in by_lemma.values():
        linked.update(product(sids, repeat=2))
    out = set()
    for a, b in linked:
        out |= _lemma_product(g.synsets[a], g.synsets[b], SYNONYM)
        out |= _lemma_product(g.synsets[b], g.synsets[a], SYNONYM)
    return sorted(out)


def build_hierarchy_triplets(g: SynsetGraph, which: str) -> list:
    if which not in HIERARCHY_SOURCES:
        raise ValueError(f"which must be hypernym or hyponym, got {which!r}")
    g.validate()
    edges = [(a, b) for a, rel, b in g.synset_edges if rel == which]
    out = set()
    for a, b in transitive_closure(edges):
        out |= _lemma_product(g.synsets[a], g.synsets[b], which)
    return sorted(out)


def collect_lemma_relations(g: SynsetGraph) -> list:
    out = set()
    for a, rel, b in g.lemma_edges:
        if rel not in LEMMA_SOURCES:
            raise InputFormatError(f"unknown lemma relation {rel!r}")
        out.add(NamedTriplet(a, rel, b))
    return sorted(out)


def filter_by_lemmas(triplets: Iterable[NamedTriplet], lemma_list) -> list:
    keep = set(lemma_list)
    return [t for t in triplets if t[0] in keep and t[2] in keep]


def split_dev(triplets: Iterable, k: int, seed: int):
    """Hold out ``k`` triplets uniformly at random; returns ``(train, dev)``.

    The input is sorted first, so the split depends only on the set and seed.
    """
    items = sorted(set(triplets))
    if k < 0 or k > len(items):
        raise ValueError(f"cannot hold out {k} of {len(items)} triplets")
    rng = np.random.default_rng(seed)
    picked = set(rng.choice(len(items), size=k, replace=False).tolist()) if k else set()
    train = [t for i, t in enumerate(items) if i not in picked]
    dev = [t for i, t in enumerate(items) if i in picked]
    return train, dev


def merge_external(triplets: Iterable[NamedTriplet], external: Iterable[tuple],
                   mapping: Mapping[str, str] = DEFAULT_EXTERNAL_MAPPING,
                   lemma_list=None) -> list:
    """Map external lemma relations onto the target relations and union them in."""
    mapped = []
    for a, rel, b in external:
        if rel not in mapping:
            raise ValueError(f"no mapping for external relation {rel!r}")
        mapped.append(NamedTriplet(a, mapping[rel], b))
    if lemma_list is not None:
        mapped = filter_by_lemmas(mapped, lemma_list)
    return sorted(set(map(NamedTriplet._make, triplets)) | set(mapped))


def build_kb(g: SynsetGraph, lemma_list=None, external=(),
             mapping: Mapping[str, str] = DEFAULT_EXTERNAL_MAPPING) -> list:
    """Full construction: all five relations, lemma filtering, external merge."""
    out = set(build_synonym_triplets(g))
    out.update(build_hierarchy_triplets(g, HYPERNYM))
    out.update(build_hierarchy_triplets(g, HYPONYM))
    out.update(collect_lemma_relations(g))
    triplets = sorted(out)
    if lemma_list is not None:
        triplets = filter_by_lemmas(triplets, lemma_list)
    if external:
        triplets = merge_external(triplets, external, mapping, lemma_list)
    return triplets


# -- file formats --------------------------------------------------------------

def _records(path, width):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != width:
                raise InputFormatError(
                    f"{path}:{lineno}: expected {width} tab-separated fields, "
                    f"got {len(parts)}")
            yield lineno, parts


def read_synsets(path) -> dict:
    synsets = {}
    for lineno, (sid, lemmas) in _records(path, 2):
        names = [x.strip() for x in lemmas.split(",") if x.strip()]
        if not names:
            raise InputFormatError(f"{path}:{lineno}: synset {sid!r} has no lemmas")
        synsets[sid] = frozenset(names)
    return synsets


def read_edges(path) -> list:
    return [tuple(parts) for _, parts in _records(path, 3)]


def read_lemma_list(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def read_synset_graph(synset_path, synset_edge_path=None,
                      lemma_edge_path=None) -> SynsetGraph:
    g = SynsetGraph(
        synsets=read_synsets(synset_path),
        synset_edges=read_edges(synset_edge_path) if synset_edge_path else [],
        lemma_edges=read_edges(lemma_edge_path) if lemma_edge_path else [],
    )
    g.validate()
    return g


def read_triplets(path, relation_names: Sequence[str] = RELATIONS) -> list:
    allowed = set(relation_names)
    out = []
    for lineno, (s, r, o) in _records(path, 3):
        if r not in allowed:
            raise InputFormatError(f"{path}:{lineno}: unknown relation {r!r}")
        out.append(NamedTriplet(s, r, o))
    return out


def write_triplets(path, triplets: Iterable[NamedTriplet]):
    """Write sorted, deduplicated ``s<TAB>r<TAB>o`` lines."""
    lines = sorted({"\t".join(t) for t in triplets})
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
