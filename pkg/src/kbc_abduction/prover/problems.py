"""JSON-lines RTE problem files and batch reports."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .engine import (CONTRADICTION, ENTAILMENT, UNKNOWN, ProveConfig, RteProblem,
                     UnsupportedFragmentError, solve)
from .logic import FormulaError, arities, parse_formula

logger = logging.getLogger(__name__)


def problem_from_record(rec: dict) -> RteProblem:
    """Build a problem from one decoded JSON object.

    Besides ``id``, ``premises``, ``hypothesis`` and optional ``gold``, a
    record may list ``constants``: identifiers allowed to occur free.
    """
    if not isinstance(rec, dict):
        raise ValueError("record is not a JSON object")
    pid = rec.get("id")
    if not isinstance(pid, str):
        raise ValueError("missing or non-string 'id'")
    premises = rec.get("premises")
    if not isinstance(premises, list) or not premises \
            or not all(isinstance(p, str) for p in premises):
        raise ValueError("'premises' must be a nonempty list of strings")
    hyp = rec.get("hypothesis")
    if not isinstance(hyp, str):
        raise ValueError("missing or non-string 'hypothesis'")
    consts = rec.get("constants", [])
    ps = [parse_formula(p, consts) for p in premises]
    h = parse_formula(hyp, consts)
    arities(ps + [h])
    return RteProblem(pid, ps, h, rec.get("gold"))


def load_problems(path):
    """Parse a problem file; returns ``(problems, errors)``.

    Malformed lines are skipped and reported as ``{"id", "line", "error"}``.
    """
    problems, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            pid = None
            try:
                rec = json.loads(line)
                if isinstance(rec, dict):
                    pid = rec.get("id")
                problems.append(problem_from_record(rec))
            except (ValueError, FormulaError) as exc:
                logger.warning("%s:%d (id=%s): %s", path, lineno, pid, exc)
                errors.append({"id": pid, "line": lineno, "error": str(exc)})
    return problems, errors


@dataclass
class Report:
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def labels(self) -> dict:
        return {r["id"]: r["label"] for r in self.records}

    def to_jsonl(self) -> str:
        lines = [json.dumps(r) for r in self.records]
        lines.append(json.dumps({"summary": self.summary}))
        return "\n".join(lines) + "\n"


def _run_one(problem, scorer, cfg):
    t0 = time.perf_counter()
    try:
        dec = solve(problem, scorer, cfg)
        err = None
    except UnsupportedFragmentError as exc:
        dec, err = None, str(exc)
    elapsed = time.perf_counter() - t0
    rec = {
        "id": problem.id,
        "label": dec.label if dec else UNKNOWN,
        "axioms_used": [ax.provenance.to_dict() for ax in (dec.axioms if dec else [])
                        if ax.provenance is not None],
        "millis": round(elapsed * 1000.0, 3),
    }
    if err:
        rec["error"] = err
    elif dec.timed_out:
        rec["timeout"] = True
    return rec, elapsed


def score_labels(pred: list, gold: list) -> dict:
    """Accuracy, precision, recall and F1 (x100) over proved labels.

    Precision counts correct entailment/contradiction predictions among all
    such predictions; recall among gold entailment/contradiction problems.
    """
    n = len(gold)
    if n == 0:
        return {"accuracy": None, "precision": None, "recall": None, "f1": None}
    correct = sum(p == g for p, g in zip(pred, gold))
    proved = [(p, g) for p, g in zip(pred, gold) if p in (ENTAILMENT, CONTRADICTION)]
    gold_pos = sum(g in (ENTAILMENT, CONTRADICTION) for g in gold)
    tp = sum(p == g for p, g in proved)
    precision = tp / len(proved) if proved else 0.0
    recall = tp / gold_pos if gold_pos else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": 100.0 * correct / n, "precision": 100.0 * precision,
            "recall": 100.0 * recall, "f1": 100.0 * f1}


def run_problems(problems, scorer=None, cfg: ProveConfig | None = None,
                 workers: int = 1, errors=()) -> Report:
    cfg = cfg or ProveConfig()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda p: _run_one(p, scorer, cfg), problems))
    else:
        results = [_run_one(p, scorer, cfg) for p in problems]
    records = [r for r, _ in results]
    times = [t for _, t in results]
    graded = [(r["label"], p.gold) for r, p in zip(records, problems) if p.gold is not None]
    summary = {"count": len(records)}
    summary.update(score_labels([a for a, _ in graded], [b for _, b in graded]))
    summary["graded"] = len(graded)
    summary["mean_seconds"] = sum(times) / len(times) if times else None
    summary["errors"] = list(errors)
    return Report(records, summary)


def run_problem_file(path, scorer=None, cfg: ProveConfig | None = None,
                     workers: int = 1) -> Report:
    """Label every problem in ``path``.

    Timing covers proving only; parsing happens before the clock starts.
    """
    problems, errors = load_problems(Path(path))
    return run_problems(problems, scorer, cfg, workers, errors)
