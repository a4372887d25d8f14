"""From a toy synset graph to a trained ComplEx model and its filtered MRR.

Run: python demos/build_and_train.py
"""

from kbc_abduction import kgraph
from kbc_abduction.complex_model import TrainConfig, score, train
from kbc_abduction.ranking_eval import FilterSet, evaluate, random_baseline_mrr

# A tiny WordNet-like graph. Synsets group lemmas; edges connect synsets.
graph = kgraph.SynsetGraph(
    synsets={
        "dog.n": ["dog", "domestic_dog"], "puppy.n": ["puppy"], "canine.n": ["canine"],
        "cat.n": ["cat", "true_cat"], "kitten.n": ["kitten"], "feline.n": ["feline"],
        "animal.n": ["animal", "beast"], "walk.v": ["walk"], "hike.v": ["hike", "trek"],
        "stroll.v": ["stroll", "saunter"], "move.v": ["move"], "run.v": ["run"],
    },
    synset_edges=[
        ("puppy.n", "hypernym", "dog.n"), ("dog.n", "hypernym", "canine.n"),
        ("canine.n", "hypernym", "animal.n"), ("kitten.n", "hypernym", "cat.n"),
        ("cat.n", "hypernym", "feline.n"), ("feline.n", "hypernym", "animal.n"),
        ("hike.v", "hypernym", "walk.v"), ("stroll.v", "hypernym", "walk.v"),
        ("walk.v", "hypernym", "move.v"), ("run.v", "hypernym", "move.v"),
        ("animal.n", "hyponym", "dog.n"),
    ],
    lemma_edges=[("walk", "antonym", "run"), ("cat", "antonym", "dog")],
)

triplets = kgraph.build_kb(graph)
print(f"{len(triplets)} lemma triplets, e.g.")
for t in triplets[:5]:
    print("  ", *t)

# Hierarchy edges were closed before lemma expansion, so multi-step facts exist.
print("puppy hypernym animal present:",
      kgraph.NamedTriplet("puppy", "hypernym", "animal") in set(triplets))

train_named, dev_named = kgraph.split_dev(triplets, 15, seed=0)
lemmas = {x for t in triplets for x in (t.s, t.o)}
store = kgraph.TripletStore.from_named(train_named, extra_entities=lemmas)
dev = [store.vocab.encode(t) for t in dev_named]

cfg = TrainConfig(dim=32, epochs=200, batch_size=32, learning_rate=0.02, seed=0)
params = train(store, cfg)

fs = FilterSet(list(store.triplets) + dev)
metrics = evaluate(params, dev, fs)
print("dev metrics:", metrics.to_json())
print(f"random ordering would give MRR {random_baseline_mrr(params, dev, fs):.1f}")

seen = train_named[0]
held_out = dev_named[0]
for label, t in (("training", seen), ("held-out", held_out)):
    print(f"{label} fact ({t.s}, {t.r}, {t.o}): score {score(params, *store.vocab.encode(t)):.3f}")
