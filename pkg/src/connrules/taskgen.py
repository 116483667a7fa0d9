"""Network-to-Knowledge Generator: compile selected edges plus labelled
feature vectors into a symbolic learning task.

A task bundles weighted examples (one per subject, with edge-strength context
facts), a comparator-threshold hypothesis space over the selected edges, and
an empty background program. Tasks serialize to a solver-ready text format::

    % connectome rule-learning task
    % provenance: dt
    #modeh(ad).
    #modeb(1, connection(region(2), region(5), var(strength))).
    #modeb(1, var(strength) >= const(threshold)).
    ...
    #maxv(2).
    % thresholds(2,5): 399 400 2200
    #constant(threshold, 399).
    ...
    #pos(ad_000@1, {ad}, {cn}, { connection(region(2), region(5), 2200). }).

The per-edge threshold comment lines let the parser restore the exact
hypothesis space; a solver treats them as comments.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Sequence

import numpy as np

from .cohort import AD, CN, EdgeId, FeatureVector, edge
from .selection import SelectedEdges

COMPARATORS = (">=", ">", "<", "<=")


def scale_strength(raw: float) -> int:
    """Integerize a raw strength: round half-even to 4 decimals, multiply by
    1000, then round half-even to an integer. Monotone non-decreasing."""
    raw = float(raw)
    if not math.isfinite(raw) or raw < 0:
        raise ValueError(f"strength must be finite and >= 0, got {raw}")
    q = Decimal(repr(raw)).quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN)
    return int((q * 1000).to_integral_value(rounding=ROUND_HALF_EVEN))


def context_from_weights(weights: np.ndarray, edges: Sequence[EdgeId]) -> dict[EdgeId, int]:
    """Scaled strengths of the given edges from a full connectome."""
    return {e: scale_strength(weights[e.i, e.j]) for e in edges}


@dataclass(frozen=True)
class Example:
    """Weighted context-dependent example for one subject.

    subject_id is bookkeeping for reports and stays outside the example
    identity (the solver-facing tuple is id, penalty, labels, context).
    """

    id: str
    penalty: int
    inclusions: frozenset[str]
    exclusions: frozenset[str]
    context: dict[EdgeId, int]
    subject_id: str = field(default="", compare=False)

    def __post_init__(self):
        if self.penalty < 1:
            raise ValueError("penalty must be >= 1")
        pair = (frozenset(self.inclusions), frozenset(self.exclusions))
        if pair not in ((frozenset({AD}), frozenset({CN})), (frozenset({CN}), frozenset({AD}))):
            raise ValueError("example must include one label and exclude the other")
        object.__setattr__(self, "inclusions", pair[0])
        object.__setattr__(self, "exclusions", pair[1])

    @property
    def is_ad(self) -> bool:
        return AD in self.inclusions

    @property
    def label(self) -> str:
        return AD if self.is_ad else CN


@dataclass(frozen=True)
class HypothesisSpace:
    """AD-headed rules over the selected edges with comparator literals.

    Per-edge threshold candidates are the distinct observed scaled strengths
    plus one sentinel on each side; any comparator threshold can be moved to
    one of these without changing which examples it satisfies.
    """

    edges: SelectedEdges
    max_body_edges: int
    threshold_domain: dict[EdgeId, tuple[int, ...]]
    comparators: tuple[str, ...] = COMPARATORS

    def __post_init__(self):
        if self.max_body_edges < 1:
            raise ValueError("max_body_edges must be >= 1")
        if self.comparators != COMPARATORS:
            raise ValueError("comparators are fixed to >=, >, <, <=")

    def count_rule_templates(self) -> int:
        """Number of rule shapes: choose 1..max_body_edges distinct edges,
        one comparator per edge (thresholds not counted)."""
        n = len(self.edges.edges)
        total = 0
        for m in range(1, min(self.max_body_edges, n) + 1):
            total += math.comb(n, m) * 4**m
        return total


@dataclass(frozen=True)
class LearningTask:
    space: HypothesisSpace
    examples: tuple[Example, ...]
    background: tuple[str, ...] = ()  # empty program: all signal is in contexts

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        known = set(self.space.edges.edges)
        for ex in self.examples:
            stray = set(ex.context) - known
            if stray:
                raise ValueError(
                    f"example {ex.id!r} has context edges outside the space: {sorted(stray)}")


@dataclass(frozen=True)
class TaskPartition:
    tasks: tuple[LearningTask, ...]
    n_ad_subsets: int


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def build_examples(
    vectors: Sequence[FeatureVector],
    selected: SelectedEdges,
    base_pen: int = 1,
) -> list[Example]:
    """One example per subject: AD subjects include {ad} and exclude {cn},
    CN subjects the reverse; the context holds one scaled-strength fact per
    selected edge."""
    if len(selected) == 0:
        raise ValueError("no selected edges")
    if base_pen < 1:
        raise ValueError("base_pen must be >= 1")
    out = []
    counters = {AD: 0, CN: 0}
    for vec in vectors:
        if vec.edges is None:
            raise ValueError("feature vectors must carry their edge labels")
        pos = {e: k for k, e in enumerate(vec.edges)}
        context = {}
        for e in selected.edges:
            if e not in pos:
                raise ValueError(
                    f"subject {vec.subject_id!r} missing selected edge ({e.i}, {e.j})")
            context[e] = scale_strength(vec.values[pos[e]])
        k = counters[vec.label]
        counters[vec.label] += 1
        eid = f"{vec.label.lower()}_{k:03d}"
        inc, exc = ({AD}, {CN}) if vec.label == AD else ({CN}, {AD})
        out.append(Example(eid, base_pen, frozenset(inc), frozenset(exc),
                           context, vec.subject_id))
    return out


def build_space(
    selected: SelectedEdges,
    examples: Sequence[Example],
    max_body_edges: int = 2,
) -> HypothesisSpace:
    """Threshold domain per edge = sorted distinct observed scaled strengths
    across all example contexts, plus -1/+1 sentinels."""
    domain: dict[EdgeId, tuple[int, ...]] = {}
    for e in selected.edges:
        observed = sorted({ex.context[e] for ex in examples if e in ex.context})
        if observed:
            observed = [observed[0] - 1] + observed + [observed[-1] + 1]
        domain[e] = tuple(observed)
    return HypothesisSpace(selected, max_body_edges, domain)


def partition_tasks(
    examples: Sequence[Example],
    space: HypothesisSpace,
    n_ad_subsets: int,
    base_pen: int = 1,
    seed: int = 0,
) -> TaskPartition:
    """Split AD examples into near-even disjoint subsets; pair each with the
    full CN set. AD penalties are rescaled to round(base_pen * |CN| / |AD_task|)
    (minimum 1) so the class penalty sums roughly balance; CN penalties stay
    at base_pen."""
    ad = [ex for ex in examples if ex.is_ad]
    cn = [ex for ex in examples if not ex.is_ad]
    if n_ad_subsets < 1:
        raise ValueError("n_ad_subsets must be >= 1")
    if n_ad_subsets > len(ad):
        raise ValueError(
            f"n_ad_subsets {n_ad_subsets} exceeds AD example count {len(ad)}")
    rng = np.random.default_rng(seed % 2**32)
    perm = rng.permutation(len(ad))
    sizes = [len(ad) // n_ad_subsets] * n_ad_subsets
    for k in range(len(ad) % n_ad_subsets):
        sizes[k] += 1
    tasks = []
    start = 0
    for size in sizes:
        members = {int(p) for p in perm[start:start + size]}
        start += size
        pen = max(1, round(base_pen * len(cn) / size))
        chunk = [replace(ad[k], penalty=pen) for k in range(len(ad)) if k in members]
        cns = [replace(ex, penalty=base_pen) for ex in cn]
        tasks.append(LearningTask(space, tuple(chunk + cns)))
    return TaskPartition(tuple(tasks), n_ad_subsets)


# ---------------------------------------------------------------------------
# Text serialization
# ---------------------------------------------------------------------------

def _fact(e: EdgeId, strength: int) -> str:
    return f"connection(region({e.i}), region({e.j}), {strength})."


def task_to_text(task: LearningTask) -> str:
    if not task.examples:
        raise ValueError("task has no examples")
    space = task.space
    lines = ["% connectome rule-learning task",
             f"% provenance: {space.edges.provenance}"]
    lines.append("#modeh(ad).")
    for e in space.edges.edges:
        lines.append(f"#modeb(1, connection(region({e.i}), region({e.j}), var(strength))).")
    for comp in COMPARATORS:
        lines.append(f"#modeb(1, var(strength) {comp} const(threshold)).")
    lines.append(f"#maxv({space.max_body_edges}).")
    pool = set()
    for e in space.edges.edges:
        dom = space.threshold_domain[e]
        lines.append(f"% thresholds({e.i},{e.j}): " + " ".join(str(t) for t in dom))
        pool.update(dom)
    for t in sorted(pool):
        lines.append(f"#constant(threshold, {t}).")
    for ex in task.examples:
        facts = " ".join(_fact(e, ex.context[e])
                         for e in space.edges.edges if e in ex.context)
        inc = ", ".join(sorted(a.lower() for a in ex.inclusions))
        exc = ", ".join(sorted(a.lower() for a in ex.exclusions))
        lines.append(f"#pos({ex.id}@{ex.penalty}, {{{inc}}}, {{{exc}}}, {{ {facts} }}).")
    return "\n".join(lines) + "\n"


def serialize_task(task: LearningTask, path) -> Path:
    path = Path(path)
    path.write_text(task_to_text(task))
    return path


_MODEB_CONN = re.compile(
    r"#modeb\(1, connection\(region\((\d+)\), region\((\d+)\), var\(strength\)\)\)\.")
_MAXV = re.compile(r"#maxv\((\d+)\)\.")
_THRESHOLDS = re.compile(r"% thresholds\((\d+),(\d+)\): (.*)")
_PROVENANCE = re.compile(r"% provenance: (\w+)")
_POS = re.compile(r"#pos\((\w+)@(\d+), \{(\w+)\}, \{(\w+)\}, \{ ?(.*?) ?\}\)\.")
_FACT = re.compile(r"connection\(region\((\d+)\), region\((\d+)\), (\d+)\)\.")


def parse_task_text(text: str) -> LearningTask:
    """Inverse of task_to_text for files this module produced."""
    edges = []
    provenance = "external"
    max_body = 1
    domain: dict[EdgeId, tuple[int, ...]] = {}
    examples = []
    for line in text.splitlines():
        line = line.rstrip()
        if m := _PROVENANCE.fullmatch(line):
            provenance = m.group(1)
        elif m := _MODEB_CONN.fullmatch(line):
            edges.append(edge(int(m.group(1)), int(m.group(2))))
        elif m := _MAXV.fullmatch(line):
            max_body = int(m.group(1))
        elif m := _THRESHOLDS.fullmatch(line):
            e = edge(int(m.group(1)), int(m.group(2)))
            vals = tuple(int(v) for v in m.group(3).split()) if m.group(3).strip() else ()
            domain[e] = vals
        elif m := _POS.fullmatch(line):
            eid, pen, inc, exc = m.group(1), int(m.group(2)), m.group(3), m.group(4)
            context = {edge(int(i), int(j)): int(v)
                       for i, j, v in _FACT.findall(m.group(5))}
            examples.append(Example(eid, pen, frozenset({inc.upper()}),
                                    frozenset({exc.upper()}), context))
    selected = SelectedEdges(tuple(edges), provenance)
    for e in selected.edges:
        domain.setdefault(e, ())
    space = HypothesisSpace(selected, max_body, domain)
    return LearningTask(space, tuple(examples))


def load_task(path) -> LearningTask:
    path = Path(path)
    if not path.exists():
        raise ValueError(f"missing file: {path}")
    if path.suffix == ".json":
        return task_from_json(path.read_text())
    return parse_task_text(path.read_text())


# ---------------------------------------------------------------------------
# JSON mirror
# ---------------------------------------------------------------------------

def task_to_obj(task: LearningTask) -> dict:
    space = task.space
    return {
        "background": list(task.background),
        "space": {
            "edges": [[e.i, e.j] for e in space.edges.edges],
            "provenance": space.edges.provenance,
            "max_body_edges": space.max_body_edges,
            "threshold_domain": {
                f"{e.i}-{e.j}": list(space.threshold_domain[e])
                for e in space.edges.edges
            },
        },
        "examples": [
            {
                "id": ex.id,
                "penalty": ex.penalty,
                "inclusions": sorted(ex.inclusions),
                "exclusions": sorted(ex.exclusions),
                "subject_id": ex.subject_id,
                "context": [[e.i, e.j, ex.context[e]] for e in sorted(ex.context)],
            }
            for ex in task.examples
        ],
    }


def task_from_obj(obj: dict) -> LearningTask:
    sp = obj["space"]
    selected = SelectedEdges(tuple(edge(i, j) for i, j in sp["edges"]), sp["provenance"])
    domain = {}
    for key, vals in sp["threshold_domain"].items():
        i, j = key.split("-")
        domain[edge(int(i), int(j))] = tuple(vals)
    space = HypothesisSpace(selected, sp["max_body_edges"], domain)
    examples = tuple(
        Example(
            rec["id"], rec["penalty"], frozenset(rec["inclusions"]),
            frozenset(rec["exclusions"]),
            {edge(i, j): v for i, j, v in rec["context"]},
            rec.get("subject_id", ""),
        )
        for rec in obj["examples"]
    )
    return LearningTask(space, examples, tuple(obj.get("background", ())))


def task_to_json(task: LearningTask) -> str:
    return json.dumps(task_to_obj(task), indent=1)


def task_from_json(text: str) -> LearningTask:
    return task_from_obj(json.loads(text))
