"""Step through one abductive proof: "A man hikes" => "A man walks".

Run: python demos/abduction_walkthrough.py
"""

from kbc_abduction.abduction import KbcScorer, generate_axioms, score_pairs
from kbc_abduction.complex_model import planted_params
from kbc_abduction.kgraph import NamedTriplet, Vocabulary
from kbc_abduction.prover import (ProofState, ProveConfig, RteProblem, SkolemNamer, assume,
                                  collect_pairs, parse_formula, prove_goal, solve)

premise = parse_formula("exists e x. man(x) & hike(e) & subj(e,x)")
hypothesis = parse_formula("exists e x. man(x) & walk(e) & subj(e,x)")
print("P:", premise)
print("H:", hypothesis)

# Assuming the premise introduces one skolem constant per bound variable.
context = frozenset(assume(premise, SkolemNamer()))
print("context:", ", ".join(sorted(map(str, context))))

state = ProofState(context, [], hypothesis)
print("provable without knowledge:", prove_goal(state))

# The stalled proof suggests predicate pairs; subj is a role and is skipped.
pairs = collect_pairs(state)
print("pairs:", pairs)

# A model that knows one lexical fact: hike is a kind of walk.
vocab = Vocabulary(["hike", "man", "walk"])
params = planted_params(vocab, [vocab.encode(NamedTriplet("hike", "hypernym", "walk"))])
scorer = KbcScorer(params)

scored = score_pairs(scorer, pairs)
print(f"{len(scored)} scored triplets; above 0.4:")
for t in scored:
    if t.score >= 0.4:
        print(f"   ({t.s}, {t.r}, {t.o})  {t.score:.3f}")

axioms = generate_axioms(scored, 0.4)
print("axioms:", [str(a) for a in axioms])

state.axioms = axioms
print("provable with axioms:", prove_goal(state), state.substitution)

# solve() runs the same loop and also tries the contradiction direction.
problem = RteProblem("hike-walk", [premise], hypothesis)
for theta in (0.4, 1.0):
    d = solve(problem, scorer, ProveConfig(theta=theta))
    print(f"theta={theta}: {d.label}")
