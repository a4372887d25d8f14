"""Time proving with no knowledge, exact KB search, and a KBC model.

Run: python demos/compare_scorers.py
"""

from kbc_abduction.abduction import KbcScorer, search_closure_prepare
from kbc_abduction.cli import bench
from kbc_abduction.complex_model import planted_params
from kbc_abduction.kgraph import NamedTriplet, Vocabulary
from kbc_abduction.prover import ProveConfig, RteProblem, parse_formula

kb = [NamedTriplet("puppy", "hypernym", "dog"), NamedTriplet("dog", "hypernym", "animal"),
      NamedTriplet("hike", "hypernym", "walk"), NamedTriplet("big", "synonym", "large"),
      NamedTriplet("big", "antonym", "small"), NamedTriplet("sleep", "antonym", "wake")]
search = search_closure_prepare(kb)

# Plant the model on the closed KB, so both back ends know the same facts.
vocab = Vocabulary(sorted(search.lemmas))
kbc = KbcScorer(planted_params(vocab, [vocab.encode(t) for t in search.facts]))


def problem(pid, p, h, gold):
    return RteProblem(pid, [parse_formula(p)], parse_formula(h), gold)


problems = [
    problem("1", "exists x. puppy(x) & big(x)", "exists x. animal(x) & large(x)", "entailment"),
    problem("2", "exists e x. dog(x) & hike(e) & subj(e,x)",
            "exists e x. animal(x) & walk(e) & subj(e,x)", "entailment"),
    problem("3", "exists x. dog(x) & big(x)", "exists x. dog(x) & small(x)", "contradiction"),
    problem("4", "exists e x. dog(x) & sleep(e) & subj(e,x)",
            "exists e x. dog(x) & wake(e) & subj(e,x)", "contradiction"),
    problem("5", "exists x. puppy(x)", "exists x. small(x)", "unknown"),
]

rows = bench(problems, {"none": None, "search": search, "kbc": kbc}, runs=5, cfg=ProveConfig())
print(f"{'scorer':8} {'accuracy':>8} {'mean ms':>8}")
for r in rows:
    print(f"{r['scorer']:8} {r['accuracy']:8.1f} {1000 * r['mean_seconds']:8.3f}")
