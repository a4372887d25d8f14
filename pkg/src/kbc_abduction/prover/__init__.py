"""Formula parsing and the entailment/contradiction prover."""

from .engine import (CONTRADICTION, ENTAILMENT, LABELS, UNKNOWN, Decision, Literal,
                     ProofState, ProofTimeout, ProveConfig, RteProblem, SkolemNamer,
                     UnsupportedFragmentError, assume, collect_pairs, decide, find_clash,
                     prove_goal, saturate, solve)
from .logic import (And, ArityError, Const, Exists, Forall, FormulaError, Implies, Not,
                    ParseError, Pred, UnboundVariableError, Var, parse_formula)
from .problems import (Report, load_problems, problem_from_record, run_problem_file,
                       run_problems, score_labels)
