"""ComplEx knowledge-base-completion model.

A triplet (s, r, o) is scored as ``sigmoid(Re(<e_s, e_r, conj(e_o)>))`` with
complex embeddings stored as separate real and imaginary float64 tables.
Writing a = e_s, b = e_r, c = e_o the raw score expands to::

    sum_i (a_re b_re - a_im b_im) c_re + (a_re b_im + a_im b_re) c_im

Training minimises the logistic loss with Adam, either scoring each
(s, r) pair against every entity (1-N) or with sampled negatives.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .kgraph import Triplet, TripletStore, Vocabulary

logger = logging.getLogger(__name__)

LOG_EPS = 1e-12
MAGIC = b"CKBC1\n"

ONE_TO_N = "1-N"
NEG_SAMPLING = "negative-sampling"


class TrainingError(RuntimeError):
    pass


class CheckpointFormatError(ValueError):
    pass


def _sigmoid_scalar(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def sigmoid(x):
    """Overflow-free logistic function for scalars and arrays."""
    if np.isscalar(x):
        return _sigmoid_scalar(x)
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    z = np.exp(x[~pos])
    out[~pos] = z / (1.0 + z)
    return out


@dataclass
class ModelParams:
    """Entity and relation embeddings, real and imaginary parts kept apart."""

    entity_re: np.ndarray
    entity_im: np.ndarray
    relation_re: np.ndarray
    relation_im: np.ndarray
    vocab: Vocabulary
    _rows: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        ne, nr = self.vocab.n_entities, self.vocab.n_relations
        dim = self.entity_re.shape[1] if self.entity_re.ndim == 2 else -1
        for name, arr, rows in (("entity_re", self.entity_re, ne),
                                ("entity_im", self.entity_im, ne),
                                ("relation_re", self.relation_re, nr),
                                ("relation_im", self.relation_im, nr)):
            if arr.shape != (rows, dim):
                raise ValueError(f"{name} has shape {arr.shape}, expected {(rows, dim)}")
            if arr.dtype != np.float64:
                raise ValueError(f"{name} must be float64")

    @property
    def dim(self) -> int:
        return self.entity_re.shape[1]

    @property
    def n_entities(self) -> int:
        return self.entity_re.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation_re.shape[0]

    def tables(self):
        return self.entity_re, self.entity_im, self.relation_re, self.relation_im

    def copy(self) -> "ModelParams":
        return ModelParams(*(t.copy() for t in self.tables()), vocab=self.vocab)

    def invalidate(self):
        """Drop cached row lists; call after mutating the tables in place."""
        self._rows = None

    def row_lists(self):
        # Plain Python rows let score() run as one scalar pass without
        # numpy's per-call overhead dominating the O(n) work.
        if self._rows is None:
            self._rows = tuple(t.tolist() for t in self.tables())
        return self._rows

    def equal(self, other: "ModelParams") -> bool:
        """Bitwise equality of all tables plus identical vocabulary."""
        return (self.vocab == other.vocab and all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.tables(), other.tables())))


@dataclass
class TrainConfig:
    dim: int = 50
    batch_size: int = 128
    learning_rate: float = 1e-3
    epochs: int = 100
    seed: int = 0
    mode: str = ONE_TO_N
    neg_ratio: int = 1
    l2_coefficient: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.mode not in (ONE_TO_N, NEG_SAMPLING):
            raise ValueError(f"unknown training mode {self.mode!r}")
        if self.mode == NEG_SAMPLING and self.neg_ratio < 1:
            raise ValueError("neg_ratio must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_coefficient < 0:
            raise ValueError("l2_coefficient must be non-negative")


def init_params(vocab: Vocabulary, dim: int, seed: int) -> ModelParams:
    """Gaussian init with standard deviation ``1/sqrt(dim)``."""
    if vocab.n_entities < 1 or vocab.n_relations < 1:
        raise ValueError("vocabulary must contain entities and relations")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    std = 1.0 / math.sqrt(dim)
    ne, nr = vocab.n_entities, vocab.n_relations
    return ModelParams(
        rng.normal(0.0, std, (ne, dim)),
        rng.normal(0.0, std, (ne, dim)),
        rng.normal(0.0, std, (nr, dim)),
        rng.normal(0.0, std, (nr, dim)),
        vocab=vocab,
    )


def _check_ids(params: ModelParams, s=None, r=None, o=None):
    for name, idx, bound in (("s", s, params.n_entities), ("r", r, params.n_relations),
                             ("o", o, params.n_entities)):
        if idx is not None and not (0 <= idx < bound):
            raise IndexError(f"{name}={idx} out of range [0, {bound})")


def raw_score(params: ModelParams, s: int, r: int, o: int) -> float:
    """Re(<e_s, e_r, conj(e_o)>), accumulated in a single pass over n."""
    ere, eim, rre, rim = params.row_lists()
    # inline bounds check: list indexing would silently accept negatives
    if not (0 <= s < len(ere) and 0 <= o < len(ere) and 0 <= r < len(rre)):
        _check_ids(params, s, r, o)
    x = 0.0
    for ar, ai, br, bi, cr, ci in zip(ere[s], eim[s], rre[r], rim[r], ere[o], eim[o]):
        x += (ar * br - ai * bi) * cr + (ar * bi + ai * br) * ci
    return x


def score(params: ModelParams, s: int, r: int, o: int) -> float:
    return _sigmoid_scalar(raw_score(params, s, r, o))


def raw_score_1N(params: ModelParams, s: int, r: int) -> np.ndarray:
    _check_ids(params, s, r)
    ere, eim, rre, rim = params.tables()
    ar, ai, br, bi = ere[s], eim[s], rre[r], rim[r]
    return ere @ (ar * br - ai * bi) + eim @ (ar * bi + ai * br)


def score_1N(params: ModelParams, s: int, r: int) -> np.ndarray:
    """Probabilities of (s, r, o) for every entity o at once."""
    return sigmoid(raw_score_1N(params, s, r))


@dataclass
class Grads:
    entity_re: np.ndarray
    entity_im: np.ndarray
    relation_re: np.ndarray
    relation_im: np.ndarray

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "Grads":
        return cls(*(np.zeros_like(t) for t in params.tables()))

    def tables(self):
        return self.entity_re, self.entity_im, self.relation_re, self.relation_im


def _log_likelihood_terms(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    psi = np.clip(sigmoid(x), LOG_EPS, 1.0 - LOG_EPS)
    return t * np.log(psi) + (1.0 - t) * np.log(1.0 - psi)


def _add_l2(params, grads, l2, ent_rows, rel_rows):
    if l2 == 0.0:
        return 0.0
    ere, eim, rre, rim = params.tables()
    penalty = 0.0
    for src, dst, rows in ((ere, grads.entity_re, ent_rows), (eim, grads.entity_im, ent_rows),
                           (rre, grads.relation_re, rel_rows), (rim, grads.relation_im, rel_rows)):
        sub = src[rows]
        penalty += float(np.sum(sub * sub))
        dst[rows] += 2.0 * l2 * sub
    return l2 * penalty


def loss_and_grads(params: ModelParams, batch, l2_coefficient: float = 0.0):
    """Negative log-likelihood of labelled triplets and its gradient.

    ``batch`` is a sequence of ``((s, r, o), t)`` pairs or an int array with
    columns s, r, o, t.  The L2 term counts each touched row once.
    """
    arr = _as_batch_array(batch)
    s, r, o, t = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3].astype(np.float64)
    ere, eim, rre, rim = params.tables()
    if s.min() < 0 or o.min() < 0 or max(s.max(), o.max()) >= params.n_entities \
            or r.min() < 0 or r.max() >= params.n_relations:
        raise IndexError("batch ids out of range")
    ar, ai, br, bi, cr, ci = ere[s], eim[s], rre[r], rim[r], ere[o], eim[o]
    x = np.sum((ar * br - ai * bi) * cr + (ar * bi + ai * br) * ci, axis=1)
    loss = -float(np.sum(_log_likelihood_terms(x, t)))
    d = (sigmoid(x) - t)[:, None]

    g = Grads.zeros_like(params)
    np.add.at(g.entity_re, s, d * (br * cr + bi * ci))
    np.add.at(g.entity_im, s, d * (br * ci - bi * cr))
    np.add.at(g.relation_re, r, d * (ar * cr + ai * ci))
    np.add.at(g.relation_im, r, d * (ar * ci - ai * cr))
    np.add.at(g.entity_re, o, d * (ar * br - ai * bi))
    np.add.at(g.entity_im, o, d * (ar * bi + ai * br))

    ent_rows = np.unique(np.concatenate([s, o]))
    loss += _add_l2(params, g, l2_coefficient, ent_rows, np.unique(r))
    return loss, g


def _as_batch_array(batch) -> np.ndarray:
    if isinstance(batch, np.ndarray):
        arr = batch.astype(np.int64, copy=False)
    else:
        arr = np.array([(*trip, lab) for trip, lab in batch], dtype=np.int64)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] != 4:
        raise ValueError("batch must be a nonempty list of ((s, r, o), t)")
    return arr


def loss_and_grads_1N(params: ModelParams, sr_pairs, label_rows,
                      l2_coefficient: float = 0.0):
    """Loss over every (s, r, o) for the given (s, r) pairs.

    ``label_rows[k, o]`` is 1 when (s_k, r_k, o) is a fact.  Equivalent to
    :func:`loss_and_grads` on the fully expanded example set.
    """
    sr = np.asarray(sr_pairs, dtype=np.int64).reshape(-1, 2)
    labels = np.asarray(label_rows, dtype=np.float64)
    if sr.shape[0] == 0:
        raise ValueError("sr_pairs must be nonempty")
    if labels.shape != (sr.shape[0], params.n_entities):
        raise ValueError(f"label_rows shape {labels.shape} does not match "
                         f"({sr.shape[0]}, {params.n_entities})")
    s, r = sr[:, 0], sr[:, 1]
    if s.min() < 0 or s.max() >= params.n_entities or r.min() < 0 \
            or r.max() >= params.n_relations:
        raise IndexError("sr_pairs ids out of range")
    ere, eim, rre, rim = params.tables()
    ar, ai, br, bi = ere[s], eim[s], rre[r], rim[r]
    wr = ar * br - ai * bi
    wi = ar * bi + ai * br
    x = wr @ ere.T + wi @ eim.T
    loss = -float(np.sum(_log_likelihood_terms(x, labels)))
    d = sigmoid(x) - labels

    g = Grads.zeros_like(params)
    g.entity_re += d.T @ wr
    g.entity_im += d.T @ wi
    dwr = d @ ere
    dwi = d @ eim
    np.add.at(g.entity_re, s, dwr * br + dwi * bi)
    np.add.at(g.entity_im, s, dwi * br - dwr * bi)
    np.add.at(g.relation_re, r, dwr * ar + dwi * ai)
    np.add.at(g.relation_im, r, dwi * ar - dwr * ai)

    # every entity is touched as an object
    ent_rows = np.arange(params.n_entities)
    loss += _add_l2(params, g, l2_coefficient, ent_rows, np.unique(r))
    return loss, g


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls([np.zeros_like(t) for t in params.tables()],
                   [np.zeros_like(t) for t in params.tables()])


def adam_step(state: AdamState, params: ModelParams, grads: Grads, cfg: TrainConfig):
    """One bias-corrected Adam update, applied in place; returns (state, params)."""
    for gt in grads.tables():
        if not np.all(np.isfinite(gt)):
            bad = int(np.sum(~np.isfinite(gt)))
            raise TrainingError(f"non-finite gradient ({bad} entries) at step {state.step + 1}")
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params.tables(), grads.tables(), state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
    params.invalidate()
    return state, params


def _label_rows(store: TripletStore, sr: np.ndarray) -> np.ndarray:
    rows = np.zeros((len(sr), store.vocab.n_entities))
    for k, (s, r) in enumerate(sr):
        rows[k, store.objects(int(s), int(r))] = 1.0
    return rows


def _negative_batch(store: TripletStore, pos: np.ndarray, ratio: int,
                    rng: np.random.Generator, max_tries: int = 100) -> np.ndarray:
    ne = store.vocab.n_entities
    rows = [np.column_stack([pos, np.ones(len(pos), dtype=np.int64)])]
    negs = []
    for s, r, _ in pos:
        for _ in range(ratio):
            for _ in range(max_tries):
                o = int(rng.integers(ne))
                if not store.has(int(s), int(r), o):
                    negs.append((s, r, o, 0))
                    break
    if negs:
        rows.append(np.array(negs, dtype=np.int64))
    return np.concatenate(rows)


def train(store: TripletStore, cfg: TrainConfig, log_stream=None) -> ModelParams:
    """Fit ComplEx embeddings to ``store`` with Adam.

    Per-epoch summed loss goes to the module logger and, when given, one line
    per epoch to ``log_stream``.
    """
    cfg.validate()
    if len(store) == 0:
        raise ValueError("cannot train on an empty triplet store")
    params = init_params(store.vocab, cfg.dim, cfg.seed)
    state = AdamState.for_params(params)
    rng = np.random.default_rng([cfg.seed, 1])

    if cfg.mode == ONE_TO_N:
        units = np.array(store.sr_pairs(), dtype=np.int64)
    else:
        units = np.array(sorted(store.triplets), dtype=np.int64)

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(units))
        total = 0.0
        for start in range(0, len(units), cfg.batch_size):
            chunk = units[order[start:start + cfg.batch_size]]
            if cfg.mode == ONE_TO_N:
                loss, grads = loss_and_grads_1N(params, chunk, _label_rows(store, chunk),
                                                cfg.l2_coefficient)
            else:
                batch = _negative_batch(store, chunk, cfg.neg_ratio, rng)
                loss, grads = loss_and_grads(params, batch, cfg.l2_coefficient)
            if not math.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch + 1}")
            adam_step(state, params, grads, cfg)
            total += loss
        logger.info("epoch %d loss %.6f", epoch + 1, total)
        if log_stream is not None:
            print(f"epoch {epoch + 1}\tloss {total:.6f}", file=log_stream)
    return params


def planted_params(vocab: Vocabulary, facts: Iterable[Triplet],
                   margin: float = 10.0, bias: float = 5.0) -> ModelParams:
    """Hand-built parameters scoring exactly the given facts high.

    A one-way fact gets its own dimension: the subject has real part 1, the
    object imaginary part 1 and the relation imaginary part ``margin``, which
    contributes ``+margin`` to that fact and ``-margin`` to its reverse only.
    A fact whose reverse is also planted would cancel that way, so the pair
    shares two real dimensions instead: relation ``+margin/2`` with both
    entities at 1, and relation ``-margin/2`` with the entities at 1 and -1.
    Both directions then get ``+margin`` and the reflexive triplets 0.
    One extra shared dimension adds ``-bias`` to every triplet, so planted
    facts score ``sigmoid(margin - bias)`` and everything else at most
    ``sigmoid(-bias)``.  Useful for tests and demos.
    """
    facts = set(Triplet(*f) for f in facts)
    if any(s == o for s, _, o in facts):
        raise ValueError("planted facts must not be reflexive")
    one_way = sorted(t for t in facts if (t.o, t.r, t.s) not in facts)
    two_way = sorted(t for t in facts if (t.o, t.r, t.s) in facts and t.s < t.o)
    dim = len(one_way) + 2 * len(two_way) + 1
    ne, nr = vocab.n_entities, vocab.n_relations
    ere, eim = np.zeros((ne, dim)), np.zeros((ne, dim))
    rre, rim = np.zeros((nr, dim)), np.zeros((nr, dim))
    for k, (s, r, o) in enumerate(one_way):
        ere[s, k] = 1.0
        eim[o, k] = 1.0
        rim[r, k] = margin
    base = len(one_way)
    for j, (s, r, o) in enumerate(two_way):
        a, b = base + 2 * j, base + 2 * j + 1
        ere[s, a] = ere[o, a] = 1.0
        rre[r, a] = margin / 2
        ere[s, b], ere[o, b] = 1.0, -1.0
        rre[r, b] = -margin / 2
    ere[:, -1] = 1.0
    rre[:, -1] = -bias
    return ModelParams(ere, eim, rre, rim, vocab=vocab)


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(params: ModelParams, path):
    header = {
        "dim": params.dim,
        "n_entities": params.n_entities,
        "n_relations": params.n_relations,
        "entity_names": params.vocab.entity_names,
        "relation_names": params.vocab.relation_names,
    }
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(json.dumps(header, ensure_ascii=False).encode("utf-8") + b"\n")
    for table in params.tables():
        buf.write(np.ascontiguousarray(table, dtype="<f8").tobytes(order="C"))
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> ModelParams:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointFormatError(f"{path}: bad magic")
    nl = data.find(b"\n", len(MAGIC))
    if nl < 0:
        raise CheckpointFormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[len(MAGIC):nl].decode("utf-8"))
        dim, ne, nr = int(header["dim"]), int(header["n_entities"]), int(header["n_relations"])
        ents, rels = list(header["entity_names"]), list(header["relation_names"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable header ({exc})") from None
    if len(ents) != ne or len(rels) != nr:
        raise CheckpointFormatError(f"{path}: header counts disagree with name lists")
    if dim < 1 or ne < 1 or nr < 1:
        raise CheckpointFormatError(f"{path}: non-positive sizes in header")
    body = data[nl + 1:]
    expected = 8 * dim * (2 * ne + 2 * nr)
    if len(body) != expected:
        raise CheckpointFormatError(
            f"{path}: payload has {len(body)} bytes, expected {expected}")
    try:
        vocab = Vocabulary(ents, rels, strict=False)
    except ValueError as exc:
        raise CheckpointFormatError(f"{path}: {exc}") from None
    arrays, off = [], 0
    for rows in (ne, ne, nr, nr):
        n = rows * dim
        arr = np.frombuffer(body, dtype="<f8", count=n, offset=off).reshape(rows, dim)
        arrays.append(arr.astype(np.float64))
        off += 8 * n
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise CheckpointFormatError(f"{path}: non-finite parameters")
    return ModelParams(*arrays, vocab=vocab)
