"""Exact minimal-score rule learning over comparator-threshold tasks.

A hypothesis is a set of AD-headed rules; its score is its atom count (1 per
head, 2 per body edge: a connection atom plus a comparator literal) plus the
penalties of uncovered examples. An AD example is covered when some rule
fires on its context, a CN example when none does.

The solver enumerates candidate rules whose coverage signatures exhaust the
space, then runs a branch-and-bound search over rule subsets:

1. Per edge and comparator, the satisfied example set only changes at
   observed strengths, so thresholds outside the observed values are
   redundant. Of those, a threshold is kept only when widening the literal
   by one step would admit a CN example (widening over an all-AD step can
   never hurt a hypothesis), which is the class-boundary reduction.
2. Rules with identical coverage keep one representative with the fewest
   atoms and smallest canonical form; rules firing on no AD example are
   dropped (they can only add atoms and CN penalties).
3. The search branches on the first uncovered AD example: either some
   specific candidate covers it, or none does (its penalty is committed).
   Node bound = atoms so far + committed AD penalties + penalties of AD
   examples no candidate can cover + CN penalties already incurred. A
   greedy weighted-cover pass seeds the incumbent.

Ties between optimal hypotheses break toward fewer atoms, then the
lexicographically smallest rule list under the canonical (edge, comparator,
threshold) order.
"""

from __future__ import annotations

import json
import re
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from itertools import combinations, product
from typing import Iterable, Mapping, Sequence

from .cohort import EdgeId, RegionAtlas, edge
from .taskgen import COMPARATORS, Example, LearningTask

_COMP_INDEX = {c: k for k, c in enumerate(COMPARATORS)}

DEFAULT_NODE_BUDGET = 500_000


@dataclass(frozen=True)
class BodyLiteral:
    edge: EdgeId
    comparator: str
    threshold: int

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")

    def holds(self, strength: int) -> bool:
        if self.comparator == ">=":
            return strength >= self.threshold
        if self.comparator == ">":
            return strength > self.threshold
        if self.comparator == "<":
            return strength < self.threshold
        return strength <= self.threshold

    @property
    def sort_key(self) -> tuple:
        return (self.edge.i, self.edge.j, _COMP_INDEX[self.comparator], self.threshold)


@dataclass(frozen=True)
class Rule:
    """AD-headed rule; body literals cover distinct edges, stored in
    canonical edge order."""

    body: tuple[BodyLiteral, ...]

    def __post_init__(self):
        if not self.body:
            raise ValueError("rule body must be nonempty")
        ordered = tuple(sorted(self.body, key=lambda l: l.sort_key))
        if len({l.edge for l in ordered}) != len(ordered):
            raise ValueError("rule body edges must be distinct")
        object.__setattr__(self, "body", ordered)

    @property
    def atom_count(self) -> int:
        return 1 + 2 * len(self.body)

    @property
    def sort_key(self) -> tuple:
        return tuple(l.sort_key for l in self.body)

    def to_text(self, atlas: RegionAtlas | None = None) -> str:
        parts = []
        for k, lit in enumerate(self.body):
            parts.append(f"connection(region({lit.edge.i}), region({lit.edge.j}), V{k})")
            parts.append(f"V{k} {lit.comparator} {lit.threshold}")
        line = "ad :- " + ", ".join(parts) + "."
        if atlas is not None:
            names = ", ".join(
                f"{atlas.names[l.edge.i]}--{atlas.names[l.edge.j]}" for l in self.body)
            line += f"  % {names}"
        return line


@dataclass(frozen=True)
class Hypothesis:
    rules: tuple[Rule, ...]

    def __post_init__(self):
        ordered = tuple(sorted(set(self.rules), key=lambda r: r.sort_key))
        object.__setattr__(self, "rules", ordered)

    @property
    def atom_count(self) -> int:
        return sum(r.atom_count for r in self.rules)

    @property
    def sort_key(self) -> tuple:
        return tuple(r.sort_key for r in self.rules)

    def __len__(self) -> int:
        return len(self.rules)


EMPTY_HYPOTHESIS = Hypothesis(())


@dataclass(frozen=True)
class Score:
    length: int
    penalty_sum: int

    @property
    def total(self) -> int:
        return self.length + self.penalty_sum


@dataclass(frozen=True)
class LearnResult:
    hypothesis: Hypothesis
    score: Score
    optimal: bool
    nodes_expanded: int = 0


# ---------------------------------------------------------------------------
# Coverage semantics
# ---------------------------------------------------------------------------

def rule_fires(rule: Rule, context: Mapping[EdgeId, int]) -> bool:
    """True iff every body literal's edge is present and its comparison
    holds; a missing edge leaves the body unsatisfied."""
    for lit in rule.body:
        strength = context.get(lit.edge)
        if strength is None or not lit.holds(strength):
            return False
    return True


def covers(hypothesis: Hypothesis, example: Example) -> bool:
    """AD examples are covered when some rule fires; CN examples when none
    does (the background is empty, so AD is derivable only via rules)."""
    fired = any(rule_fires(r, example.context) for r in hypothesis.rules)
    return fired if example.is_ad else not fired


def score(hypothesis: Hypothesis, task: LearningTask) -> Score:
    """Atom count plus penalties of uncovered examples; rejects rules that
    fall outside the task's hypothesis space."""
    space = task.space
    known = set(space.edges.edges)
    for rule in hypothesis.rules:
        if len(rule.body) > space.max_body_edges:
            raise ValueError(f"rule outside the space: body too long in {rule.to_text()}")
        for lit in rule.body:
            if lit.edge not in known:
                raise ValueError(
                    f"rule outside the space: edge ({lit.edge.i}, {lit.edge.j}) not selected")
            if lit.threshold not in space.threshold_domain.get(lit.edge, ()):
                raise ValueError(
                    f"rule outside the space: threshold {lit.threshold} not in the "
                    f"domain of ({lit.edge.i}, {lit.edge.j})")
    penalty = sum(ex.penalty for ex in task.examples if not covers(hypothesis, ex))
    return Score(hypothesis.atom_count, penalty)


# ---------------------------------------------------------------------------
# Candidate enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Candidate:
    rule: Rule
    fires: int  # bitmask over task.examples


def _edge_literals(
    e: EdgeId,
    examples: Sequence[Example],
    domain: Sequence[int],
    cn_mask: int,
    ad_mask: int,
) -> list[tuple[BodyLiteral, int]]:
    """Distinct useful satisfied-sets for one edge with a representative
    literal each, after the class-boundary reduction."""
    pairs = sorted(
        (ex.context[e], k) for k, ex in enumerate(examples) if e in ex.context)
    if not pairs:
        return []
    values: list[int] = []
    groups: list[int] = []
    for v, k in pairs:
        if not values or v != values[-1]:
            values.append(v)
            groups.append(0)
        groups[-1] |= 1 << k
    d = len(values)
    suffix = [0] * (d + 1)
    for k in range(d - 1, -1, -1):
        suffix[k] = suffix[k + 1] | groups[k]
    prefix = [0] * d
    run = 0
    for k in range(d):
        run |= groups[k]
        prefix[k] = run

    def suffix_keep(k: int) -> bool:
        return k == 0 or (groups[k - 1] & cn_mask) != 0

    def prefix_keep(k: int) -> bool:
        return k == d - 1 or (groups[k + 1] & cn_mask) != 0

    out: list[tuple[BodyLiteral, int]] = []
    seen: set[int] = set()
    observed = set(values)
    for comp in COMPARATORS:
        for t in domain:
            if t not in observed:  # sentinel sets duplicate observed-threshold sets
                continue
            if comp == ">=":
                k = bisect_left(values, t)
                mask, keep = (suffix[k], suffix_keep(k)) if k < d else (0, False)
            elif comp == ">":
                k = bisect_right(values, t)
                mask, keep = (suffix[k], suffix_keep(k)) if k < d else (0, False)
            elif comp == "<":
                k = bisect_left(values, t) - 1
                mask, keep = (prefix[k], prefix_keep(k)) if k >= 0 else (0, False)
            else:
                k = bisect_right(values, t) - 1
                mask, keep = (prefix[k], prefix_keep(k)) if k >= 0 else (0, False)
            if not keep or mask == 0 or (mask & ad_mask) == 0 or mask in seen:
                continue
            seen.add(mask)
            out.append((BodyLiteral(e, comp, t), mask))
    return out


MAX_ENUMERATION = 2_000_000


def enumerate_candidates(task: LearningTask) -> list[Candidate]:
    """Coverage-distinct candidate rules in canonical order. Every rule in
    the space whose fire-set contains at least one AD example is represented
    by exactly one candidate with identical coverage and minimal atoms."""
    examples = task.examples
    ad_mask = 0
    for k, ex in enumerate(examples):
        if ex.is_ad:
            ad_mask |= 1 << k
    cn_mask = ((1 << len(examples)) - 1) ^ ad_mask
    space = task.space
    sorted_edges = sorted(space.edges.edges)
    lits = {
        e: _edge_literals(e, examples, space.threshold_domain.get(e, ()), cn_mask, ad_mask)
        for e in sorted_edges
    }
    usable = [e for e in sorted_edges if lits[e]]

    projected = 0
    for m in range(1, min(space.max_body_edges, len(usable)) + 1):
        for combo in combinations(usable, m):
            size = 1
            for e in combo:
                size *= len(lits[e])
            projected += size
    if projected > MAX_ENUMERATION:
        raise ValueError(
            f"candidate enumeration would generate {projected} rule bodies "
            f"(limit {MAX_ENUMERATION}); reduce selected edges or max_body_edges")

    best: dict[int, Rule] = {}
    for m in range(1, min(space.max_body_edges, len(usable)) + 1):
        for combo in combinations(usable, m):
            for choice in product(*(lits[e] for e in combo)):
                fires = choice[0][1]
                for _, mask in choice[1:]:
                    fires &= mask
                    if fires == 0:
                        break
                if fires == 0 or (fires & ad_mask) == 0:
                    continue
                rule = Rule(tuple(lit for lit, _ in choice))
                held = best.get(fires)
                if held is None or (rule.atom_count, rule.sort_key) < (
                        held.atom_count, held.sort_key):
                    best[fires] = rule
    cands = [Candidate(rule, fires) for fires, rule in best.items()]
    cands.sort(key=lambda c: c.rule.sort_key)
    return cands


def snap_rule_to_domain(rule: Rule, task: LearningTask) -> Rule:
    """Equivalent rule with all thresholds drawn from the space's threshold
    domain: each literal's satisfied set is unchanged."""
    space = task.space
    new_body = []
    for lit in rule.body:
        domain = space.threshold_domain.get(lit.edge, ())
        if not domain:
            raise ValueError(f"edge ({lit.edge.i}, {lit.edge.j}) has an empty domain")
        observed = [v for ex in task.examples
                    if (v := ex.context.get(lit.edge)) is not None]
        lo, hi = domain[0], domain[-1]
        t = lit.threshold
        if lit.comparator in (">=", ">"):
            sat = sorted(v for v in observed if lit.holds(v))
            t = min(sat) if sat else hi  # >= hi and > hi are both empty
            comp = ">=" if sat else lit.comparator
        else:
            sat = sorted(v for v in observed if lit.holds(v))
            t = max(sat) if sat else lo  # < lo and <= lo are both empty
            comp = "<=" if sat else lit.comparator
        new_body.append(BodyLiteral(lit.edge, comp, t))
    return Rule(tuple(new_body))


# ---------------------------------------------------------------------------
# Scoring machinery over bitmasks
# ---------------------------------------------------------------------------

class _PenaltyTable:
    """Groups examples by (class, penalty) so penalty sums are popcounts."""

    def __init__(self, examples: Sequence[Example]):
        ad_groups: dict[int, int] = {}
        cn_groups: dict[int, int] = {}
        self.ad_mask = 0
        self.ad_total = 0
        for k, ex in enumerate(examples):
            bucket = ad_groups if ex.is_ad else cn_groups
            bucket[ex.penalty] = bucket.get(ex.penalty, 0) | (1 << k)
            if ex.is_ad:
                self.ad_mask |= 1 << k
                self.ad_total += ex.penalty
        self.ad_groups = sorted(ad_groups.items())
        self.cn_groups = sorted(cn_groups.items())

    def ad_over(self, mask: int) -> int:
        return sum(p * (mask & m).bit_count() for p, m in self.ad_groups)

    def cn_over(self, mask: int) -> int:
        return sum(p * (mask & m).bit_count() for p, m in self.cn_groups)

    def min_ad_over(self, mask: int) -> int:
        pens = [p for p, m in self.ad_groups if mask & m]
        return min(pens) if pens else 0

    def total(self, atoms: int, union: int) -> int:
        return atoms + self.ad_total - self.ad_over(union) + self.cn_over(union)


def _hyp_key(atoms: int, rules: Iterable[Rule]) -> tuple:
    return (atoms, tuple(sorted(r.sort_key for r in rules)))


def _greedy(cands: Sequence[Candidate], table: _PenaltyTable) -> tuple[list[int], int, int]:
    """Weighted-cover greedy: repeatedly add the rule with the best score
    delta until none improves. Returns (indices, union, atoms)."""
    chosen: list[int] = []
    union = 0
    atoms = 0
    remaining = list(range(len(cands)))
    while True:
        best_delta = 0
        best_ci = None
        for ci in remaining:
            c = cands[ci]
            new = c.fires & ~union
            delta = c.rule.atom_count - table.ad_over(new) + table.cn_over(new)
            if delta < best_delta:
                best_delta = delta
                best_ci = ci
        if best_ci is None:
            return chosen, union, atoms
        chosen.append(best_ci)
        union |= cands[best_ci].fires
        atoms += cands[best_ci].rule.atom_count
        remaining.remove(best_ci)


class _BudgetExceeded(Exception):
    pass


def learn(task: LearningTask, budget: int = DEFAULT_NODE_BUDGET) -> LearnResult:
    """Minimal-score hypothesis via branch and bound.

    Cover lists are kept sorted by each candidate's static cost floor
    (atoms + CN penalty it would incur on its own), so a node's branch loop
    stops as soon as no remaining candidate can undercut the incumbent.
    When the node budget runs out, the best incumbent found so far is
    returned with optimal=False instead of raising.
    """
    cands = enumerate_candidates(task)
    examples = task.examples
    table = _PenaltyTable(examples)
    n_cands = len(cands)
    atoms_of = [c.rule.atom_count for c in cands]
    cn_solo = [table.cn_over(c.fires) for c in cands]
    floor_of = [atoms_of[ci] + cn_solo[ci] for ci in range(n_cands)]

    ad_positions = [k for k, ex in enumerate(examples) if ex.is_ad]
    cover_list: dict[int, list[int]] = {k: [] for k in ad_positions}
    coverable = 0
    for ci in sorted(range(n_cands), key=lambda ci: (floor_of[ci], ci)):
        hits = cands[ci].fires & table.ad_mask
        coverable |= hits
        while hits:
            low = hits & -hits
            cover_list[low.bit_length() - 1].append(ci)
            hits ^= low
    uncoverable = table.ad_mask & ~coverable

    # incumbents: empty hypothesis, then greedy
    best_rules: list[int] = []
    best_total = table.total(0, 0)
    best_key = _hyp_key(0, ())
    g_rules, g_union, g_atoms = _greedy(cands, table)
    g_total = table.total(g_atoms, g_union)
    g_key = _hyp_key(g_atoms, (cands[ci].rule for ci in g_rules))
    if (g_total, g_key) < (best_total, best_key):
        best_rules, best_total, best_key = g_rules, g_total, g_key

    nodes = 0

    def search(pos: int, chosen: tuple[int, ...], union: int, atoms: int,
               committed_pen: int, committed: int):
        # committed examples are permanently uncovered: any candidate whose
        # fire-set touches one is banned, which keeps committed_pen a true
        # lower bound for the whole subtree
        nonlocal nodes, best_rules, best_total, best_key
        nodes += 1
        if nodes > budget:
            raise _BudgetExceeded
        k = pos
        while k < len(ad_positions):
            bit = 1 << ad_positions[k]
            if not (union & bit) and not (committed & bit):
                break
            k += 1
        if k == len(ad_positions):
            total = table.total(atoms, union)
            key = _hyp_key(atoms, (cands[ci].rule for ci in chosen))
            if (total, key) < (best_total, best_key):
                best_rules, best_total, best_key = list(chosen), total, key
            return
        e = ad_positions[k]
        uncov_pen = table.ad_over(uncoverable & ~committed)
        cn_union = table.cn_over(union)
        base = atoms + committed_pen + uncov_pen

        for ci in cover_list[e]:
            if base + floor_of[ci] > best_total:
                break  # sorted by floor: nothing later can fit either
            if base + atoms_of[ci] + max(cn_union, cn_solo[ci]) > best_total:
                continue
            fires = cands[ci].fires
            if fires & committed:
                continue
            atoms2 = atoms + atoms_of[ci]
            union2 = union | fires
            b = atoms2 + committed_pen + uncov_pen + table.cn_over(union2)
            remaining = table.ad_mask & ~union2 & ~uncoverable & ~committed
            if remaining:
                b += min(3, table.min_ad_over(remaining))
            if b <= best_total:
                search(k, chosen + (ci,), union2, atoms2, committed_pen, committed)
        # no chosen rule covers this example: commit its penalty
        committed2 = committed | (1 << e)
        committed_pen2 = committed_pen + examples[e].penalty
        b = (atoms + committed_pen2 + table.ad_over(uncoverable & ~committed2)
             + cn_union)
        remaining = table.ad_mask & ~union & ~uncoverable & ~committed2
        if remaining:
            b += min(3, table.min_ad_over(remaining))
        if b <= best_total:
            search(k + 1, chosen, union, atoms, committed_pen2, committed2)

    optimal = True
    try:
        search(0, (), 0, 0, 0, 0)
    except _BudgetExceeded:
        optimal = False

    hypothesis = Hypothesis(tuple(cands[ci].rule for ci in best_rules))
    return LearnResult(hypothesis, score(hypothesis, task), optimal, nodes)


def brute_force_learn(
    task: LearningTask, max_rules: int = 3, max_candidates: int = 300
) -> LearnResult:
    """Exhaustive oracle: every rule subset up to max_rules, same candidate
    set and tie-break as learn. Errors out on oversized instances."""
    cands = enumerate_candidates(task)
    if len(cands) > max_candidates:
        raise ValueError(
            f"instance too large: {len(cands)} candidates exceeds {max_candidates}")
    table = _PenaltyTable(task.examples)
    best_key = (table.total(0, 0), _hyp_key(0, ()))
    best: tuple[Candidate, ...] = ()
    for m in range(1, max_rules + 1):
        for combo in combinations(cands, m):
            union = 0
            atoms = 0
            for c in combo:
                union |= c.fires
                atoms += c.rule.atom_count
            total = table.total(atoms, union)
            if total > best_key[0]:
                continue
            key = (total, _hyp_key(atoms, (c.rule for c in combo)))
            if key < best_key:
                best_key = key
                best = combo
    hypothesis = Hypothesis(tuple(c.rule for c in best))
    return LearnResult(hypothesis, score(hypothesis, task), True)


def union_hypotheses(per_task: Sequence[Hypothesis]) -> Hypothesis:
    """Set union of rules across tasks, canonically ordered."""
    if not per_task:
        raise ValueError("no hypotheses to union")
    rules: set[Rule] = set()
    for h in per_task:
        rules.update(h.rules)
    return Hypothesis(tuple(rules))


# ---------------------------------------------------------------------------
# Hypothesis I/O
# ---------------------------------------------------------------------------

def hypothesis_to_text(hyp: Hypothesis, atlas: RegionAtlas | None = None) -> str:
    if not hyp.rules:
        return "% empty hypothesis: no rule fires, every subject is predicted cn\n"
    return "\n".join(r.to_text(atlas) for r in hyp.rules) + "\n"


_RULE_LINE = re.compile(r"ad :- (.*)\.(?:\s*%.*)?")
_CONN = re.compile(r"connection\(region\((\d+)\), region\((\d+)\), V(\d+)\)")
_CMP = re.compile(r"V(\d+) (>=|>|<=|<) (-?\d+)")


def parse_rule_text(line: str) -> Rule:
    m = _RULE_LINE.fullmatch(line.strip())
    if not m:
        raise ValueError(f"unparseable rule: {line!r}")
    body = m.group(1)
    edges = {cm.group(3): edge(int(cm.group(1)), int(cm.group(2)))
             for cm in _CONN.finditer(body)}
    comps = {cm.group(1): (cm.group(2), int(cm.group(3)))
             for cm in _CMP.finditer(body)}
    if not edges or set(edges) != set(comps):
        raise ValueError(f"mismatched connection and comparison literals: {line!r}")
    return Rule(tuple(
        BodyLiteral(edges[v], comps[v][0], comps[v][1]) for v in sorted(edges)))


def parse_hypothesis_text(text: str) -> Hypothesis:
    rules = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("%"):
            continue
        rules.append(parse_rule_text(line))
    return Hypothesis(tuple(rules))


def hypothesis_to_obj(hyp: Hypothesis) -> dict:
    return {
        "rules": [
            {"body": [{"edge": [l.edge.i, l.edge.j],
                       "comparator": l.comparator,
                       "threshold": l.threshold} for l in r.body]}
            for r in hyp.rules
        ],
        "atom_count": hyp.atom_count,
    }


def hypothesis_from_obj(obj: dict) -> Hypothesis:
    rules = tuple(
        Rule(tuple(
            BodyLiteral(edge(*l["edge"]), l["comparator"], l["threshold"])
            for l in r["body"]))
        for r in obj["rules"]
    )
    return Hypothesis(rules)


def hypothesis_to_json(hyp: Hypothesis) -> str:
    return json.dumps(hypothesis_to_obj(hyp), indent=1)


def hypothesis_from_json(text: str) -> Hypothesis:
    return hypothesis_from_obj(json.loads(text))
