import io
import math
import time

import numpy as np
import pytest

from kbc_abduction.complex_model import (MAGIC, NEG_SAMPLING, ONE_TO_N, AdamState,
                                         CheckpointFormatError, Grads, ModelParams, TrainConfig,
                                         TrainingError, adam_step, init_params, load_checkpoint,
                                         loss_and_grads, loss_and_grads_1N, planted_params,
                                         raw_score, save_checkpoint, score, score_1N, train)
from kbc_abduction.kgraph import NamedTriplet, Triplet, TripletStore, Vocabulary

from conftest import make_vocab, random_params
from oracles import (complex_score, expanded_loss, finite_difference_grads,
                     max_relative_error)


def one_dim(es, er, eo):
    v = Vocabulary(["a", "b"], ["r"], strict=False)
    p = ModelParams(np.array([[es.real], [eo.real]]), np.array([[es.imag], [eo.imag]]),
                    np.array([[er.real]]), np.array([[er.imag]]), vocab=v)
    return p


class TestInit:
    def test_deterministic(self):
        v = make_vocab(30)
        assert init_params(v, 8, 3).equal(init_params(v, 8, 3))
        assert not init_params(v, 8, 3).equal(init_params(v, 8, 4))

    def test_full_vocabulary_shapes(self):
        v = Vocabulary([f"w{i}" for i in range(41_577)])
        p = init_params(v, 50, 0)
        assert p.entity_re.shape == p.entity_im.shape == (41_577, 50)
        assert p.relation_re.shape == p.relation_im.shape == (5, 50)

    def test_moments(self):
        p = init_params(make_vocab(2000), 50, 1)
        x = np.concatenate([t.ravel() for t in p.tables()])
        sigma = 1 / math.sqrt(50)
        assert abs(x.mean()) < 3 * sigma / math.sqrt(x.size)
        assert abs(x.std() - sigma) < 0.01 * sigma

    def test_bad_args(self):
        with pytest.raises(ValueError):
            init_params(make_vocab(3), 0, 0)
        with pytest.raises(ValueError):
            init_params(Vocabulary([]), 4, 0)


class TestScore:
    def test_zero_embeddings(self):
        assert score(one_dim(0j, 0j, 0j), 0, 0, 1) == 0.5

    def test_hand_evaluated(self):
        assert score(one_dim(1 + 0j, 1 + 0j, 1 + 0j), 0, 0, 1) == pytest.approx(0.7310586, abs=1e-7)
        assert score(one_dim(1 + 0j, 1 + 0j, 1j), 0, 0, 1) == 0.5

    def test_conjugate_on_object_only(self):
        # Re(i * 1 * conj(1)) = 0 but Re(1 * i * conj(i)) = Re(i * -i) = 1
        assert raw_score(one_dim(1j, 1 + 0j, 1 + 0j), 0, 0, 1) == 0.0
        assert raw_score(one_dim(1 + 0j, 1j, 1j), 0, 0, 1) == pytest.approx(1.0)

    def test_matches_complex_arithmetic(self):
        p = random_params(12, 7, seed=2)
        for s in range(12):
            for o in range(12):
                assert score(p, s, 3, o) == pytest.approx(complex_score(p, s, 3, o), abs=1e-12)

    def test_out_of_range(self):
        p = random_params(3, 2, seed=0)
        with pytest.raises(IndexError):
            score(p, 3, 0, 0)
        with pytest.raises(IndexError):
            score(p, 0, 5, 0)
        with pytest.raises(IndexError):
            score_1N(p, -1, 0)

    def test_extreme_scores_stay_finite(self):
        p = one_dim(1000 + 0j, 1000 + 0j, 1000 + 0j)
        assert score(p, 0, 0, 1) == 1.0
        p = one_dim(-1000 + 0j, 1000 + 0j, 1000 + 0j)
        assert score(p, 0, 0, 1) == 0.0


class TestScore1N:
    def test_consistency(self):
        p = random_params(40, 10, seed=4)
        for s, r in [(0, 0), (5, 2), (39, 4)]:
            vec = score_1N(p, s, r)
            assert np.max(np.abs(vec - [score(p, s, r, o) for o in range(40)])) <= 1e-12

    def test_zero_params(self):
        v = make_vocab(6)
        p = ModelParams(np.zeros((6, 3)), np.zeros((6, 3)), np.zeros((5, 3)), np.zeros((5, 3)), v)
        assert np.all(score_1N(p, 1, 1) == 0.5)

    def test_faster_than_one_by_one(self):
        p = random_params(10_000, 50, seed=0, scale=0.1)
        t0 = time.perf_counter()
        score_1N(p, 3, 1)
        t_vec = time.perf_counter() - t0
        t0 = time.perf_counter()
        for o in range(10_000):
            score(p, 3, 1, o)
        t_loop = time.perf_counter() - t0
        assert t_vec < t_loop


def random_batch(rng, ne, nr, size):
    return [((int(rng.integers(ne)), int(rng.integers(nr)), int(rng.integers(ne))),
             int(rng.integers(2))) for _ in range(size)]


class TestLoss:
    def test_ln2(self):
        p = one_dim(0j, 0j, 0j)
        loss, _ = loss_and_grads(p, [((0, 0, 1), 1)])
        assert loss == pytest.approx(math.log(2), abs=1e-12)

    def test_confident_fact_has_vanishing_loss(self):
        loss, _ = loss_and_grads(one_dim(30 + 0j, 30 + 0j, 30 + 0j), [((0, 0, 1), 1)])
        assert 0 <= loss < 1e-11

    def test_clamped_when_certainly_wrong(self):
        loss, _ = loss_and_grads(one_dim(30 + 0j, 30 + 0j, 30 + 0j), [((0, 0, 1), 0)])
        assert loss == pytest.approx(-math.log(1e-12))

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(0)
        p = random_params(10, 6, seed=9, n_relations=3)
        batch = random_batch(rng, 10, 3, 25)
        for l2 in (0.0, 0.3):
            loss, _ = loss_and_grads(p, batch, l2)
            assert loss == pytest.approx(expanded_loss(p, batch, l2), rel=1e-12)

    @pytest.mark.parametrize("l2", [0.0, 0.05])
    def test_gradients_vs_finite_differences(self, l2):
        rng = np.random.default_rng(1)
        p = random_params(10, 8, seed=3, n_relations=3, scale=0.5)
        batch = random_batch(rng, 10, 3, 30)
        _, g = loss_and_grads(p, batch, l2)
        fd = finite_difference_grads(p, lambda q: loss_and_grads(q, batch, l2)[0])
        assert max_relative_error(g.tables(), fd) < 1e-4

    def test_untouched_rows_have_zero_gradient(self):
        p = random_params(10, 4, seed=3)
        _, g = loss_and_grads(p, [((1, 2, 3), 1)], 0.1)
        mask = np.ones(10, bool)
        mask[[1, 3]] = False
        assert not g.entity_re[mask].any() and not g.entity_im[mask].any()
        assert not np.delete(g.relation_re, 2, axis=0).any()

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            loss_and_grads(random_params(3, 2, 0), [])


class TestLoss1N:
    def test_matches_expanded_three_entities(self):
        p = random_params(3, 4, seed=5)
        loss, g = loss_and_grads_1N(p, [(0, 1)], [[1, 0, 0]])
        expanded = [((0, 1, o), t) for o, t in enumerate([1, 0, 0])]
        loss_ref, g_ref = loss_and_grads(p, expanded)
        assert loss == pytest.approx(loss_ref, abs=1e-9)
        for a, b in zip(g.tables(), g_ref.tables()):
            np.testing.assert_allclose(a, b, atol=1e-9)

    def test_all_negative_zero_params(self):
        v = make_vocab(7)
        p = ModelParams(np.zeros((7, 2)), np.zeros((7, 2)), np.zeros((5, 2)), np.zeros((5, 2)), v)
        loss, _ = loss_and_grads_1N(p, [(0, 0), (3, 2)], np.zeros((2, 7)))
        assert loss == pytest.approx(2 * 7 * math.log(2), abs=1e-12)

    @pytest.mark.parametrize("l2", [0.0, 0.2])
    def test_random_matches_expanded(self, l2):
        rng = np.random.default_rng(7)
        p = random_params(10, 8, seed=11, n_relations=3)
        sr = [(1, 0), (4, 2), (1, 0), (9, 1)]
        labels = (rng.random((4, 10)) < 0.3).astype(float)
        loss, g = loss_and_grads_1N(p, sr, labels, l2)
        expanded = [((s, r, o), labels[k, o]) for k, (s, r) in enumerate(sr) for o in range(10)]
        loss_ref, g_ref = loss_and_grads(p, expanded, l2)
        assert loss == pytest.approx(loss_ref, abs=1e-9)
        for a, b in zip(g.tables(), g_ref.tables()):
            np.testing.assert_allclose(a, b, atol=1e-9)

    def test_gradients_vs_finite_differences(self):
        rng = np.random.default_rng(2)
        p = random_params(10, 8, seed=8, n_relations=3, scale=0.5)
        sr = [(0, 0), (2, 1), (7, 2)]
        labels = (rng.random((3, 10)) < 0.4).astype(float)
        _, g = loss_and_grads_1N(p, sr, labels, 0.01)
        fd = finite_difference_grads(p, lambda q: loss_and_grads_1N(q, sr, labels, 0.01)[0])
        assert max_relative_error(g.tables(), fd) < 1e-4

    def test_label_shape_checked(self):
        with pytest.raises(ValueError):
            loss_and_grads_1N(random_params(4, 2, 0), [(0, 0)], np.zeros((1, 3)))


class TestAdam:
    def test_zero_gradient(self):
        p = random_params(4, 3, seed=0)
        before = p.copy()
        state = AdamState.for_params(p)
        state, p = adam_step(state, p, Grads.zeros_like(p), TrainConfig())
        assert state.step == 1
        assert p.equal(before)

    def test_first_step_is_learning_rate(self):
        p = random_params(4, 3, seed=0)
        before = p.copy()
        g = Grads(*(np.full_like(t, 0.37) for t in p.tables()))
        cfg = TrainConfig(learning_rate=0.01)
        adam_step(AdamState.for_params(p), p, g, cfg)
        delta = before.entity_re - p.entity_re
        # bias-corrected m/sqrt(v) = g/|g| on step one
        np.testing.assert_allclose(delta, 0.01 * 0.37 / (0.37 + 1e-8), rtol=1e-12)

    def test_deterministic(self):
        def run():
            p = random_params(5, 3, seed=1)
            state = AdamState.for_params(p)
            rng = np.random.default_rng(0)
            for _ in range(5):
                g = Grads(*(rng.normal(size=t.shape) for t in p.tables()))
                adam_step(state, p, g, TrainConfig())
            return p
        assert run().equal(run())

    def test_non_finite(self):
        p = random_params(2, 2, seed=0)
        g = Grads.zeros_like(p)
        g.entity_im[0, 0] = np.nan
        with pytest.raises(TrainingError, match="non-finite"):
            adam_step(AdamState.for_params(p), p, g, TrainConfig())

    def test_score_cache_refreshed(self):
        p = random_params(3, 2, seed=0)
        before = score(p, 0, 0, 1)
        g = Grads(*(np.ones_like(t) for t in p.tables()))
        adam_step(AdamState.for_params(p), p, g, TrainConfig(learning_rate=0.5))
        assert score(p, 0, 0, 1) != before
        assert score(p, 0, 0, 1) == pytest.approx(complex_score(p, 0, 0, 1), abs=1e-12)


def block_kb(n_blocks=4, per_block=5):
    """Entities in blocks; relation A links block b to b+1, relation B to b+2."""
    n = n_blocks * per_block
    names = [f"e{i:02d}" for i in range(n)]
    facts = []
    for i in range(n):
        for j in range(n):
            if j // per_block == (i // per_block + 1) % n_blocks:
                facts.append(NamedTriplet(names[i], "next", names[j]))
            if j // per_block == (i // per_block + 2) % n_blocks:
                facts.append(NamedTriplet(names[i], "skip", names[j]))
    return names, facts


class TestTrain:
    def store(self):
        names, facts = block_kb()
        return TripletStore.from_named(facts, ["next", "skip"], strict=False)

    @pytest.mark.parametrize("mode", [ONE_TO_N, NEG_SAMPLING])
    def test_memorizes_block_kb(self, mode):
        st = self.store()
        cfg = TrainConfig(dim=16, epochs=200, learning_rate=0.01, batch_size=32, mode=mode,
                          neg_ratio=4, seed=1)
        p = train(st, cfg)
        assert np.mean([score(p, *t) for t in st]) >= 0.9

    def test_zero_epochs_is_init(self):
        st = self.store()
        p = train(st, TrainConfig(dim=4, epochs=0, seed=9))
        assert p.equal(init_params(st.vocab, 4, 9))

    @pytest.mark.parametrize("mode", [ONE_TO_N, NEG_SAMPLING])
    def test_deterministic(self, mode):
        st = self.store()
        cfg = TrainConfig(dim=4, epochs=3, batch_size=16, mode=mode, seed=2)
        assert train(st, cfg).equal(train(st, cfg))

    def test_logs_epochs(self):
        buf = io.StringIO()
        train(self.store(), TrainConfig(dim=2, epochs=3), log_stream=buf)
        assert len(buf.getvalue().splitlines()) == 3

    def test_empty_store(self):
        with pytest.raises(ValueError):
            train(TripletStore(make_vocab(3), []), TrainConfig())

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence(self):
        with pytest.raises(TrainingError):
            train(self.store(), TrainConfig(dim=4, epochs=50, learning_rate=1e308))

    def test_negative_sampling_avoids_facts(self):
        from kbc_abduction.complex_model import _negative_batch
        st = self.store()
        pos = np.array(sorted(st.triplets))
        batch = _negative_batch(st, pos, 3, np.random.default_rng(0))
        for s, r, o, t in batch:
            assert st.has(s, r, o) == bool(t)


class TestPlanted:
    def test_exact_facts_only(self):
        v = make_vocab(6)
        facts = [Triplet(0, 1, 2), Triplet(3, 2, 4)]
        p = planted_params(v, facts)
        for s in range(6):
            for r in range(5):
                for o in range(6):
                    sc = score(p, s, r, o)
                    if (s, r, o) in facts:
                        assert sc > 0.99
                    else:
                        assert sc < 0.01


    def test_symmetric_pairs(self):
        v = make_vocab(5)
        facts = {Triplet(0, 0, 1), Triplet(1, 0, 0), Triplet(1, 0, 2), Triplet(2, 3, 1),
                 Triplet(1, 3, 2), Triplet(3, 1, 4)}
        p = planted_params(v, facts)
        for s in range(5):
            for r in range(5):
                for o in range(5):
                    want = (s, r, o) in facts
                    assert (score(p, s, r, o) > 0.99) == want, (s, r, o)
                    assert want or score(p, s, r, o) < 0.01

    def test_reflexive_rejected(self):
        with pytest.raises(ValueError):
            planted_params(make_vocab(3), [Triplet(1, 0, 1)])


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        p = random_params(9, 5, seed=4)
        p.entity_re[0, 0] = np.nextafter(1.0, 2.0)
        save_checkpoint(p, tmp_path / "m.ckbc")
        q = load_checkpoint(tmp_path / "m.ckbc")
        assert q.equal(p)
        assert q.vocab.entity_names == p.vocab.entity_names

    def test_layout(self, tmp_path):
        p = random_params(2, 3, seed=0)
        save_checkpoint(p, tmp_path / "m.ckbc")
        data = (tmp_path / "m.ckbc").read_bytes()
        assert data.startswith(MAGIC)
        body = data[data.index(b"\n", len(MAGIC)) + 1:]
        arr = np.frombuffer(body, dtype="<f8")
        np.testing.assert_array_equal(arr[:6], p.entity_re.ravel())
        np.testing.assert_array_equal(arr[-15:], p.relation_im.ravel())

    def test_truncated(self, tmp_path):
        save_checkpoint(random_params(3, 2, 0), tmp_path / "m.ckbc")
        data = (tmp_path / "m.ckbc").read_bytes()
        (tmp_path / "t.ckbc").write_bytes(data[:-8])
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(tmp_path / "t.ckbc")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.ckbc").write_bytes(b"CKBC2\n{}\n")
        with pytest.raises(CheckpointFormatError, match="magic"):
            load_checkpoint(tmp_path / "x.ckbc")

    def test_count_mismatch(self, tmp_path):
        save_checkpoint(random_params(3, 2, 0), tmp_path / "m.ckbc")
        data = (tmp_path / "m.ckbc").read_bytes()
        (tmp_path / "b.ckbc").write_bytes(data.replace(b'"n_entities": 3', b'"n_entities": 4'))
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(tmp_path / "b.ckbc")
