"""Command-line entry point: ``kbc-abduction <subcommand> ...``.

Exit status is 0 on success, 1 on a domain error (bad input file, missing
artifact, training failure) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path

from . import abduction, complex_model, kgraph, ranking_eval
from .abduction import DEFAULT_THETA, CandidatePair, ScorerError
from .prover import ProveConfig, load_problems, run_problems
from .prover.logic import FormulaError

logger = logging.getLogger("kbc_abduction")

DEFAULT_DEV_SIZE = 10_000
DEFAULT_TIMEOUT_MS = 100_000.0


class DomainError(Exception):
    pass


def make_scorer(spec: str):
    """``kbc:<checkpoint>``, ``search:<triplets.tsv>``, ``remote:<host:port>`` or ``none``."""
    if spec == "none":
        return None
    kind, sep, arg = spec.partition(":")
    if not sep or not arg:
        raise DomainError(f"bad scorer spec {spec!r}")
    if kind == "kbc":
        return abduction.KbcScorer(complex_model.load_checkpoint(arg))
    if kind == "search":
        return abduction.search_closure_prepare(kgraph.read_triplets(arg))
    if kind == "remote":
        from .service import RemoteScorer
        return RemoteScorer(arg)
    raise DomainError(f"unknown scorer kind {kind!r}")


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _prove_config(args) -> ProveConfig:
    cfg = ProveConfig(timeout_ms=args.timeout_ms, theta=args.theta,
                      max_abduction_rounds=args.rounds)
    cfg.validate()
    return cfg


# -- subcommands ---------------------------------------------------------------

def cmd_build_kb(args):
    g = kgraph.read_synset_graph(args.synsets, args.synset_edges, args.lemma_edges)
    lemmas = kgraph.read_lemma_list(args.lemma_list) if args.lemma_list else None
    external = kgraph.read_edges(args.external) if args.external else ()
    mapping = dict(kgraph.DEFAULT_EXTERNAL_MAPPING)
    for item in args.map or ():
        src, _, dst = item.partition("=")
        if dst not in kgraph.RELATIONS:
            raise DomainError(f"--map target {dst!r} is not a relation")
        mapping[src] = dst
    triplets = kgraph.build_kb(g, lemmas, external, mapping)
    train, dev = kgraph.split_dev(triplets, args.dev_size, args.seed)
    kgraph.write_triplets(args.out_train, train)
    if args.out_dev:
        kgraph.write_triplets(args.out_dev, dev)
    logger.info("%d triplets: %d train, %d dev", len(triplets), len(train), len(dev))


def cmd_train(args):
    named = kgraph.read_triplets(args.triplets)
    extra = ()
    if args.dev:
        extra = {x for t in kgraph.read_triplets(args.dev) for x in (t.s, t.o)}
    store = kgraph.TripletStore.from_named(named, extra_entities=extra)
    cfg = complex_model.TrainConfig(
        dim=args.dim, batch_size=args.batch, learning_rate=args.lr, epochs=args.epochs,
        seed=args.seed, mode=args.mode, neg_ratio=args.neg_ratio,
        l2_coefficient=args.l2)
    params = complex_model.train(store, cfg, log_stream=sys.stderr)
    complex_model.save_checkpoint(params, args.out)
    logger.info("wrote %s", args.out)


def _encode_all(vocab, named, path):
    out = []
    for t in named:
        try:
            out.append(vocab.encode(t))
        except KeyError as exc:
            raise DomainError(f"{path}: {exc.args[0]}") from None
    return out


def cmd_eval(args):
    params = complex_model.load_checkpoint(args.model)
    dev = _encode_all(params.vocab, kgraph.read_triplets(args.dev), args.dev)
    known = list(dev)
    for path in args.train or ():
        known += _encode_all(params.vocab, kgraph.read_triplets(path), path)
    metrics = ranking_eval.evaluate(params, dev, ranking_eval.FilterSet(known),
                                    filtered=not args.raw)
    with _output(args.out) as fh:
        print(metrics.to_json(), file=fh)


def _read_pairs(args):
    pairs = [CandidatePair(a, b) for a, b in args.pair or ()]
    if args.pairs:
        for lineno, line in enumerate(Path(args.pairs).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DomainError(f"{args.pairs}:{lineno}: expected two tab-separated lemmas")
            pairs.append(CandidatePair(*parts))
    return pairs


def cmd_score(args):
    scorer = make_scorer(args.scorer)
    if scorer is None:
        raise DomainError("score needs a scorer")
    pairs = _read_pairs(args)
    if isinstance(scorer, (abduction.KbcScorer, abduction.SearchScorer)):
        scored = abduction.score_pairs(scorer, pairs)
        if args.theta is not None:
            scored = [t for t in scored if t.score >= args.theta]
    else:
        scored = scorer.candidates(pairs, DEFAULT_THETA if args.theta is None else args.theta)
    with _output(args.out) as fh:
        fh.write(abduction.format_scored_tsv(scored))


def cmd_prove(args):
    scorer = make_scorer(args.scorer)
    problems, errors = load_problems(args.problems)
    report = run_problems(problems, scorer, _prove_config(args), args.workers, errors)
    with _output(args.out) as fh:
        fh.write(report.to_jsonl())


def bench(problems, scorers: dict, runs: int, cfg: ProveConfig, workers: int = 1) -> list:
    """Macro-average proving time per scorer variant over ``runs`` repetitions."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    rows = []
    for name, scorer in scorers.items():
        per_run, report = [], None
        for _ in range(runs):
            report = run_problems(problems, scorer, cfg, workers)
            per_run.append(report.summary["mean_seconds"] or 0.0)
        row = {"scorer": name, "runs": runs, "run_seconds": per_run,
               "mean_seconds": sum(per_run) / runs, "count": len(problems)}
        for key in ("accuracy", "precision", "recall", "f1"):
            row[key] = report.summary.get(key)
        rows.append(row)
    return rows


def cmd_bench(args):
    scorers = {}
    for spec in args.scorer or ["none"]:
        scorers[spec] = make_scorer(spec)
    problems, _ = load_problems(args.problems)
    rows = bench(problems, scorers, args.runs, _prove_config(args), args.workers)
    with _output(args.out) as fh:
        for row in rows:
            print(json.dumps(row), file=fh)


def cmd_serve(args):
    from .service import serve
    scorer = make_scorer(args.scorer)
    if not isinstance(scorer, (abduction.KbcScorer, abduction.SearchScorer)):
        raise DomainError("serve needs a kbc: or search: scorer")
    serve(scorer, args.host, args.port, args.theta)


# -- argument parsing ------------------------------------------------------------

def _prove_flags(p):
    p.add_argument("--problems", required=True, help="JSON-lines problem file")
    p.add_argument("--theta", type=float, default=DEFAULT_THETA,
                   help="axiom score threshold (default: %(default)s)")
    p.add_argument("--timeout-ms", type=float, default=DEFAULT_TIMEOUT_MS,
                   help="per-problem proving time limit in ms (default: %(default)s)")
    p.add_argument("--rounds", type=int, default=1,
                   help="abduction rounds per proof direction (default: %(default)s)")
    p.add_argument("--workers", type=int, default=1,
                   help="problems proved concurrently (default: %(default)s)")
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kbc-abduction",
                                 description="KBC-backed lexical axiom injection for RTE.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("build-kb", help="build lemma-level triplets from synset files")
    p.add_argument("--synsets", required=True, help="synset-id<TAB>lemma,lemma,...")
    p.add_argument("--synset-edges", help="synset-id<TAB>relation<TAB>synset-id")
    p.add_argument("--lemma-edges", help="lemma<TAB>relation<TAB>lemma")
    p.add_argument("--lemma-list", help="keep only triplets over these lemmas")
    p.add_argument("--external", help="extra lemma<TAB>relation<TAB>lemma triplets")
    p.add_argument("--map", action="append", metavar="SRC=REL",
                   help="map an external relation onto a target relation "
                        "(default: similar=synonym)")
    p.add_argument("--dev-size", type=int, default=DEFAULT_DEV_SIZE,
                   help="triplets held out for development (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="split seed (default: %(default)s)")
    p.add_argument("--out-train", required=True, help="training triplet file")
    p.add_argument("--out-dev", help="development triplet file")
    p.set_defaults(func=cmd_build_kb)

    p = sub.add_parser("train", help="train a ComplEx model")
    p.add_argument("--triplets", required=True, help="training triplet file")
    p.add_argument("--dev", help="dev triplet file; only its entities are used, for the vocabulary")
    p.add_argument("--dim", type=int, default=50, help="embedding dimension (default: %(default)s)")
    p.add_argument("--batch", type=int, default=128, help="batch size (default: %(default)s)")
    p.add_argument("--epochs", type=int, default=100, help="epochs (default: %(default)s)")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate (default: %(default)s)")
    p.add_argument("--l2", type=float, default=0.0, help="L2 coefficient (default: %(default)s)")
    p.add_argument("--mode", choices=[complex_model.ONE_TO_N, complex_model.NEG_SAMPLING],
                   default=complex_model.ONE_TO_N, help="training regime (default: %(default)s)")
    p.add_argument("--neg-ratio", type=int, default=1,
                   help="negatives per positive in negative-sampling mode (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="filtered MRR / Hits@N on a dev set")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--dev", required=True, help="dev triplet file")
    p.add_argument("--train", action="append", help="known triplets to filter (repeatable)")
    p.add_argument("--raw", action="store_true", help="unfiltered ranking (debugging only)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="score predicate pairs under every relation")
    p.add_argument("--scorer", required=True, help="kbc:<ckpt> | search:<tsv> | remote:<host:port>")
    p.add_argument("--pairs", help="file of lemma<TAB>lemma lines")
    p.add_argument("--pair", nargs=2, action="append", metavar=("A", "B"), help="one pair (repeatable)")
    p.add_argument("--theta", type=float, help="only print triplets scoring at least this")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("prove", help="label RTE problems")
    p.add_argument("--scorer", default="none",
                   help="kbc:<ckpt> | search:<tsv> | remote:<host:port> | none (default: %(default)s)")
    _prove_flags(p)
    p.set_defaults(func=cmd_prove)

    p = sub.add_parser("serve", help="run the scoring server")
    p.add_argument("--scorer", required=True, help="kbc:<ckpt> | search:<tsv>")
    p.add_argument("--host", default="127.0.0.1", help="bind address (default: %(default)s)")
    p.add_argument("--port", type=int, default=7711, help="bind port (default: %(default)s)")
    p.add_argument("--theta", type=float, default=DEFAULT_THETA,
                   help="default threshold (default: %(default)s)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="time proving across scorer variants")
    p.add_argument("--scorer", action="append",
                   help="scorer variant (repeatable; default: none)")
    p.add_argument("--runs", type=int, default=5, help="repetitions (default: %(default)s)")
    _prove_flags(p)
    p.set_defaults(func=cmd_bench)
    return ap


def _validate(ap, args):
    if args.command == "score" and not (args.pair or args.pairs):
        ap.error("score needs --pair or --pairs")
    if args.command in ("prove", "bench"):
        if args.workers < 1:
            ap.error("--workers must be >= 1")
        if not 0.0 <= args.theta <= 1.0:
            ap.error("--theta must lie in [0, 1]")
        if args.timeout_ms <= 0:
            ap.error("--timeout-ms must be positive")
        if args.rounds < 0:
            ap.error("--rounds must be >= 0")
    if args.command == "bench" and args.runs < 1:
        ap.error("--runs must be >= 1")
    if args.command == "train":
        if args.dim < 1 or args.batch < 1 or args.epochs < 0 or args.neg_ratio < 1:
            ap.error("--dim, --batch and --neg-ratio must be >= 1, --epochs >= 0")
    if args.command == "build-kb" and args.dev_size < 0:
        ap.error("--dev-size must be >= 0")


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        _validate(ap, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    t0 = time.perf_counter()
    try:
        args.func(args)
    except (DomainError, ValueError, OSError, KeyError, FormulaError, ScorerError,
            complex_model.TrainingError) as exc:
        logger.error("%s", exc)
        return 1
    logger.debug("%s finished in %.3f s", args.command, time.perf_counter() - t0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
