"""Lexical axiom injection for logic-based entailment, backed by a ComplEx
knowledge-base-completion model instead of knowledge-base search."""

from .abduction import (Axiom, CandidatePair, KbcScorer, ScoredTriplet, Scorer, SearchScorer,
                        generate_axioms, score_pairs, search_closure_prepare)
from .complex_model import (ModelParams, TrainConfig, init_params, load_checkpoint,
                            planted_params, save_checkpoint, score, score_1N, train)
from .kgraph import RELATIONS, NamedTriplet, Triplet, TripletStore, Vocabulary
from .ranking_eval import FilterSet, RankingMetrics, evaluate, filtered_rank

__version__ = "0.1.0"
