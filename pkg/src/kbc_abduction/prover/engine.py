"""Goal-directed prover for existential conjunctions of literals.

Premises are skolemized into ground literals.  Unary axioms
``forall x. a(x) -> [~]b(x)`` are applied forward until a fixed point
(the *saturated* context).  A hypothesis is entailed when some substitution
of its existential variables by context constants lands every hypothesis
literal in the saturated context.  It is contradicted when, identifying its
variables with context constants where possible (premise and hypothesis
are taken to describe the same situation) or with fresh witnesses otherwise,
assuming it yields a clash ``p(t)`` / ``~p(t)``.

The search is sound for this fragment and deliberately incomplete: no
contrapositive reasoning, no case splits, no equality.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from ..abduction import DEFAULT_THETA, Axiom, CandidatePair, Scorer, ScorerError, abduce
from .logic import And, Const, Exists, Forall, Formula, Implies, Not, Pred, Var, constants

logger = logging.getLogger(__name__)

ENTAILMENT = "entailment"
CONTRADICTION = "contradiction"
UNKNOWN = "unknown"
LABELS = (ENTAILMENT, CONTRADICTION, UNKNOWN)

DEFAULT_ROLE_PREDICATES = frozenset(
    {"subj", "obj", "dat", "acc", "in", "on", "at", "with", "by", "of", "to", "from"})


class UnsupportedFragmentError(ValueError):
    pass


class ProofTimeout(Exception):
    pass


class Literal(NamedTuple):
    pred: str
    args: tuple
    positive: bool = True

    def negate(self) -> "Literal":
        return Literal(self.pred, self.args, not self.positive)

    def __str__(self):
        return f"{'' if self.positive else '~'}{self.pred}({','.join(map(str, self.args))})"


@dataclass
class ProveConfig:
    timeout_ms: float = 100_000.0
    theta: float = DEFAULT_THETA
    max_abduction_rounds: int = 1
    role_predicates: frozenset = DEFAULT_ROLE_PREDICATES

    def validate(self):
        if not self.timeout_ms > 0:
            raise ValueError("timeout_ms must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.max_abduction_rounds < 0:
            raise ValueError("max_abduction_rounds must be >= 0")


@dataclass
class ProofState:
    context: frozenset
    axioms: list
    goal: Formula
    substitution: dict = field(default_factory=dict)


class SkolemNamer:
    """Hands out ``_sk0, _sk1, ...`` skipping names reserved by the problem."""

    def __init__(self, reserved: Iterable[str] = ()):
        self.reserved = set(reserved)
        self.n = 0

    def __call__(self) -> str:
        while True:
            name = f"_sk{self.n}"
            self.n += 1
            if name not in self.reserved:
                return name


class _Deadline:
    def __init__(self, deadline: float | None):
        self.deadline = deadline
        self.ticks = 0

    def check(self):
        self.ticks += 1
        if self.deadline is not None and time.monotonic() >= self.deadline:
            raise ProofTimeout()


def _as_deadline(deadline) -> _Deadline:
    return deadline if isinstance(deadline, _Deadline) else _Deadline(deadline)


# -- fragment handling ---------------------------------------------------------

def _literal_patterns(f: Formula, where: str) -> tuple:
    """Flatten an existentially closed conjunction; returns (vars, literals).

    Literals carry Var/Const terms.  Bound names are distinct after parsing,
    so nested existentials in positive positions are hoisted.
    """
    variables, lits = [], []

    def walk(g):
        if isinstance(g, Exists):
            variables.extend(g.vars)
            walk(g.body)
        elif isinstance(g, And):
            walk(g.left)
            walk(g.right)
        elif isinstance(g, Pred):
            lits.append(Literal(g.name, g.args, True))
        elif isinstance(g, Not) and isinstance(g.body, Pred):
            lits.append(Literal(g.body.name, g.body.args, False))
        elif isinstance(g, Not) and isinstance(g.body, Not):
            walk(g.body.body)
        else:
            kind = type(g).__name__
            if isinstance(g, Not):
                kind = f"negated {type(g.body).__name__}"
            raise UnsupportedFragmentError(f"{where}: {kind} is outside the supported fragment")

    walk(f)
    return variables, lits


def assume(premise: Formula, namer: SkolemNamer | None = None) -> list:
    """Skolemize a premise into ground literals.

    Skolem constants are numbered in order of first occurrence in the body.
    """
    if namer is None:
        namer = SkolemNamer(constants(premise))
    _, pats = _literal_patterns(premise, "premise")
    binding, out = {}, []
    for lit in pats:
        args = []
        for a in lit.args:
            if isinstance(a, Var):
                if a not in binding:
                    binding[a] = namer()
                args.append(binding[a])
            else:
                args.append(a.name)
        out.append(Literal(lit.pred, tuple(args), lit.positive))
    return out


# -- saturation ----------------------------------------------------------------

def _axiom_index(axioms: Iterable[Axiom]) -> dict:
    idx = {}
    for ax in axioms:
        idx.setdefault(ax.antecedent, []).append(ax)
    return idx


def _close_literal(lit: Literal, idx: dict) -> set:
    """All literals derivable from one ground literal by forward chaining."""
    out = {lit}
    stack = [lit]
    while stack:
        cur = stack.pop()
        if not cur.positive or len(cur.args) != 1:
            continue
        for ax in idx.get(cur.pred, ()):
            new = Literal(ax.consequent, cur.args, not ax.negated_consequent)
            if new not in out:
                out.add(new)
                stack.append(new)
    return out


def saturate(literals: Iterable[Literal], axioms: Iterable[Axiom]) -> frozenset:
    idx = _axiom_index(axioms)
    out = set()
    for lit in literals:
        if lit not in out:
            out |= _close_literal(lit, idx)
    return frozenset(out)


def _index(lits: Iterable[Literal]) -> dict:
    idx = {}
    for lit in lits:
        idx.setdefault((lit.pred, lit.positive), []).append(lit.args)
    for lst in idx.values():
        lst.sort()
    return idx


# -- entailment ----------------------------------------------------------------

def _match(pattern: Literal, args: tuple, subst: dict):
    new = dict(subst)
    for p, a in zip(pattern.args, args):
        if isinstance(p, Var):
            bound = new.get(p)
            if bound is None:
                new[p] = a
            elif bound != a:
                return None
        elif p.name != a:
            return None
    return new


def _search(pats: list, idx: dict, subst: dict, dl: _Deadline):
    dl.check()
    if not pats:
        return subst

    def cost(lit):
        cands = idx.get((lit.pred, lit.positive), ())
        free = sum(1 for a in lit.args if isinstance(a, Var) and a not in subst)
        return (len(cands) if free else 0, free)

    best = min(range(len(pats)), key=lambda k: cost(pats[k]))
    lit, rest = pats[best], pats[:best] + pats[best + 1:]
    for args in idx.get((lit.pred, lit.positive), ()):
        if len(args) != len(lit.args):
            continue
        new = _match(lit, args, subst)
        if new is not None:
            found = _search(rest, idx, new, dl)
            if found is not None:
                return found
    return None


def prove_goal(state: ProofState, deadline=None) -> bool:
    """Whether the goal follows from the saturated context.

    On success the witnessing substitution is stored in ``state.substitution``.
    ``deadline`` is a ``time.monotonic()`` value; exceeding it raises
    :class:`ProofTimeout`.
    """
    dl = _as_deadline(deadline)
    dl.check()
    _, pats = _literal_patterns(state.goal, "goal")
    idx = _index(saturate(state.context, state.axioms))
    found = _search(pats, idx, {}, dl)
    if found is None:
        return False
    state.substitution = found
    return True


# -- contradiction -------------------------------------------------------------

def find_clash(context: Iterable[Literal], axioms: Sequence[Axiom], hypothesis: Formula,
               namer: SkolemNamer, deadline=None):
    """Substitution for the hypothesis' variables producing a literal clash.

    Each variable ranges over the context constants (sorted) and finally a
    fresh witness of its own.  Returns the substitution or None.
    """
    dl = _as_deadline(deadline)
    dl.check()
    idx = _axiom_index(axioms)
    base = saturate(context, axioms)
    if any(lit.negate() in base for lit in base):
        return {}
    variables, pats = _literal_patterns(hypothesis, "hypothesis")
    order = []
    for lit in pats:
        for a in lit.args:
            if isinstance(a, Var) and a not in order:
                order.append(a)
    order += [v for v in variables if v not in order]
    consts = sorted({a for lit in base for a in lit.args})
    fresh = {v: namer() for v in order}

    def ground(lit, subst):
        return Literal(lit.pred, tuple(subst[a] if isinstance(a, Var) else a.name
                                       for a in lit.args), lit.positive)

    # literal k becomes ground once variable ready_at[k] is assigned
    ready_at = []
    for lit in pats:
        pos = [order.index(a) for a in lit.args if isinstance(a, Var)]
        ready_at.append(max(pos) if pos else -1)

    def clashes(new_lits, known):
        for lit in new_lits:
            if lit.negate() in known or lit.negate() in new_lits:
                return True
        return False

    known0 = set(base)
    init = set()
    for k, lit in enumerate(pats):
        if ready_at[k] == -1:
            init |= _close_literal(ground(lit, {}), idx)
    if clashes(init, known0):
        return {}
    known0 |= init

    def rec(i, subst, known):
        dl.check()
        if i == len(order):
            return None
        v = order[i]
        for c in consts + [fresh[v]]:
            sub = dict(subst)
            sub[v] = c
            new = set()
            for k, lit in enumerate(pats):
                if ready_at[k] == i:
                    new |= _close_literal(ground(lit, sub), idx)
            if clashes(new, known):
                return sub
            found = rec(i + 1, sub, known | new)
            if found is not None:
                return found
        return None

    return rec(0, {}, frozenset(known0))


# -- abduction support ---------------------------------------------------------

def _unary_names(lits: Iterable[Literal], roles) -> set:
    return {l.pred for l in lits if len(l.args) == 1 and l.pred not in roles}


def collect_pairs(state: ProofState, cfg: ProveConfig | None = None, deadline=None) -> list:
    """Candidate (context predicate, goal predicate) pairs for abduction.

    Empty when the goal is already provable.  Pairs linked by an active axiom
    in either direction, identical names and role predicates are skipped.
    """
    cfg = cfg or ProveConfig()
    probe = ProofState(state.context, state.axioms, state.goal)
    if prove_goal(probe, deadline):
        return []
    ctx_names = _unary_names(saturate(state.context, state.axioms), cfg.role_predicates)
    _, pats = _literal_patterns(state.goal, "goal")
    goal_names = _unary_names(pats, cfg.role_predicates)
    linked = {frozenset((ax.antecedent, ax.consequent)) for ax in state.axioms}
    out, seen = [], set()
    for a in sorted(ctx_names):
        for b in sorted(goal_names):
            key = frozenset((a, b))
            if a == b or key in linked or key in seen:
                continue
            seen.add(key)
            out.append(CandidatePair(a, b))
    return out


# -- decision ------------------------------------------------------------------

@dataclass
class RteProblem:
    id: str
    premises: list
    hypothesis: Formula
    gold: str | None = None

    def __post_init__(self):
        if not self.premises:
            raise ValueError(f"problem {self.id!r} has no premises")
        if self.gold is not None and self.gold not in LABELS:
            raise ValueError(f"problem {self.id!r}: bad gold label {self.gold!r}")


@dataclass
class Decision:
    label: str
    axioms: list = field(default_factory=list)
    timed_out: bool = False
    error: str | None = None


def _inject(scorer, pairs, cfg, axioms) -> list:
    if scorer is None or not pairs:
        return []
    try:
        found = abduce(scorer, pairs, cfg.theta)
    except ScorerError as exc:
        logger.warning("scorer failed, continuing without axioms: %s", exc)
        return []
    have = {ax.key for ax in axioms}
    return [ax for ax in found if ax.key not in have]


def solve(problem: RteProblem, scorer: Scorer | None = None, cfg: ProveConfig | None = None,
          axioms: Sequence[Axiom] = ()) -> Decision:
    """Label a problem, recording the axioms injected along the way.

    ``axioms`` are given up front (no scoring needed); abduction adds more.
    """
    cfg = cfg or ProveConfig()
    cfg.validate()
    dl = _Deadline(time.monotonic() + cfg.timeout_ms / 1000.0)
    reserved = set().union(*(constants(p) for p in problem.premises),
                           constants(problem.hypothesis))
    namer = SkolemNamer(reserved)
    active = list(axioms)
    injected = []
    try:
        context = []
        for p in problem.premises:
            context.extend(assume(p, namer))
        context = frozenset(context)

        state = ProofState(context, active, problem.hypothesis)
        for rnd in range(cfg.max_abduction_rounds + 1):
            if prove_goal(state, dl):
                return Decision(ENTAILMENT, injected)
            if rnd == cfg.max_abduction_rounds:
                break
            new = _inject(scorer, collect_pairs(state, cfg, dl), cfg, active)
            if not new:
                break
            active.extend(new)
            injected.extend(new)

        for rnd in range(cfg.max_abduction_rounds + 1):
            if find_clash(context, active, problem.hypothesis, namer, dl) is not None:
                return Decision(CONTRADICTION, injected)
            if rnd == cfg.max_abduction_rounds:
                break
            new = _inject(scorer, collect_pairs(state, cfg, dl), cfg, active)
            if not new:
                break
            active.extend(new)
            injected.extend(new)
    except ProofTimeout:
        return Decision(UNKNOWN, injected, timed_out=True)
    return Decision(UNKNOWN, injected)


def decide(problem: RteProblem, scorer: Scorer | None = None,
           cfg: ProveConfig | None = None, axioms: Sequence[Axiom] = ()) -> str:
    return solve(problem, scorer, cfg, axioms).label
