import numpy as np
import pytest

from kbc_abduction.complex_model import ModelParams
from kbc_abduction.kgraph import RELATIONS, Vocabulary

_ACCEPTANCE = pytest.StashKey[list]()


def make_vocab(n_entities, n_relations=len(RELATIONS)):
    if n_relations == len(RELATIONS):
        return Vocabulary([f"e{i}" for i in range(n_entities)])
    return Vocabulary([f"e{i}" for i in range(n_entities)],
                      [f"rel{i}" for i in range(n_relations)], strict=False)


def random_params(n_entities, dim, seed, n_relations=len(RELATIONS), scale=1.0):
    rng = np.random.default_rng(seed)
    vocab = make_vocab(n_entities, n_relations)
    nr = vocab.n_relations
    return ModelParams(
        rng.normal(0, scale, (n_entities, dim)), rng.normal(0, scale, (n_entities, dim)),
        rng.normal(0, scale, (nr, dim)), rng.normal(0, scale, (nr, dim)), vocab=vocab)


@pytest.fixture
def criterion(request):
    """Record one acceptance line; printed in the terminal summary."""
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash.setdefault(_ACCEPTANCE, []).append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
