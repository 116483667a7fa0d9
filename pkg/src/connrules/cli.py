"""Command-line interface tying the pipeline stages together.

Exit codes: 0 success, 2 validation error, 3 learner budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import crossval
from .cohort import (
    PlantedEdge,
    apply_mask,
    compute_mask,
    edge,
    generate_synthetic,
    load_cohort,
    mask_from_json,
    mask_to_json,
    save_cohort,
)
from .forest import (
    ForestParams,
    fit_forest,
    forest_from_json,
    forest_importance,
    forest_to_json,
)
from .inference import evaluate, metrics_to_obj, predict, predictions_to_csv
from .learner import (
    hypothesis_from_json,
    hypothesis_to_json,
    hypothesis_to_text,
    learn,
    parse_hypothesis_text,
    union_hypotheses,
)
from .selection import aggregate_frequency, load_explanations, select_global
from .taskgen import (
    build_examples,
    build_space,
    context_from_weights,
    load_task,
    partition_tasks,
    serialize_task,
    task_to_json,
)
from .tree import TreeParams, fit_tree, tree_from_json, tree_importance, tree_to_json


def _parse_planted(spec: str) -> PlantedEdge:
    parts = spec.split(",")
    if len(parts) != 4:
        raise ValueError(f"planted edge must be i,j,threshold,direction: {spec!r}")
    return PlantedEdge(edge(int(parts[0]), int(parts[1])), float(parts[2]), parts[3])


def _load_model(path: Path):
    obj = json.loads(Path(path).read_text())
    if "trees" in obj:
        return forest_from_json(json.dumps(obj))
    return tree_from_json(json.dumps(obj))


def cmd_synth(args) -> int:
    planted = [_parse_planted(p) for p in args.planted]
    cohort = generate_synthetic(args.seed, args.n_per_class, planted, args.noise)
    manifest = save_cohort(cohort, args.out)
    print(f"wrote {manifest} ({len(cohort)} subjects)")
    return 0


def cmd_mask(args) -> int:
    cohort = load_cohort(args.cohort)
    mask = compute_mask(cohort, args.keep_ratio)
    Path(args.out).write_text(mask_to_json(mask))
    print(f"wrote {args.out} ({len(mask)} edges kept)")
    return 0


def cmd_train(args) -> int:
    cohort = load_cohort(args.cohort)
    mask = mask_from_json(Path(args.mask).read_text())
    vectors = apply_mask(cohort, mask)
    if args.model == "dt":
        model = fit_tree(vectors, TreeParams())
        Path(args.out).write_text(tree_to_json(model))
    else:
        model = fit_forest(vectors, ForestParams(), seed=args.seed)
        Path(args.out).write_text(forest_to_json(model))
    print(f"wrote {args.out}")
    return 0


def cmd_select(args) -> int:
    if args.mode == "global":
        model = _load_model(args.model)
        ranking = (forest_importance(model) if hasattr(model, "trees")
                   else tree_importance(model))
        selected = select_global(ranking, args.k)
    else:
        cohort = load_cohort(args.cohort) if args.cohort else None
        explanations = load_explanations(args.explanations, cohort)
        selected = aggregate_frequency(explanations, args.k)
    Path(args.out).write_text(json.dumps({
        "edges": [[e.i, e.j] for e in selected.edges],
        "provenance": selected.provenance,
    }))
    print(f"wrote {args.out} ({len(selected)} edges)")
    return 0


def _load_selected(path):
    from .selection import SelectedEdges
    obj = json.loads(Path(path).read_text())
    return SelectedEdges(tuple(edge(i, j) for i, j in obj["edges"]), obj["provenance"])


def cmd_build_task(args) -> int:
    cohort = load_cohort(args.cohort)
    mask = mask_from_json(Path(args.mask).read_text())
    selected = _load_selected(args.selected)
    vectors = apply_mask(cohort, mask)
    examples = build_examples(vectors, selected, args.base_pen)
    space = build_space(selected, examples, args.max_body_edges)
    partition = partition_tasks(examples, space, args.ad_subsets,
                                args.base_pen, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k, task in enumerate(partition.tasks):
        serialize_task(task, out_dir / f"task_{k:03d}.las")
        (out_dir / f"task_{k:03d}.json").write_text(task_to_json(task))
    print(f"wrote {len(partition.tasks)} task(s) to {out_dir}")
    return 0


def cmd_learn(args) -> int:
    results = []
    for path in args.task:
        task = load_task(path)
        results.append(learn(task, budget=args.budget))
    hypothesis = union_hypotheses([res.hypothesis for res in results])
    Path(args.out).write_text(hypothesis_to_json(hypothesis))
    Path(args.out).with_suffix(".lp").write_text(hypothesis_to_text(hypothesis))
    nonoptimal = sum(not res.optimal for res in results)
    print(f"wrote {args.out} ({len(hypothesis)} rules, {hypothesis.atom_count} atoms)")
    if nonoptimal:
        print(f"budget exceeded on {nonoptimal} task(s); hypothesis may be suboptimal",
              file=sys.stderr)
        return 3
    return 0


def _load_hypothesis(path):
    text = Path(path).read_text()
    if Path(path).suffix == ".json":
        return hypothesis_from_json(text)
    return parse_hypothesis_text(text)


def cmd_infer(args) -> int:
    cohort = load_cohort(args.cohort)
    hypothesis = _load_hypothesis(args.hypothesis)
    edges = sorted({l.edge for r in hypothesis.rules for l in r.body})
    predictions = []
    labels = []
    for s in cohort.subjects:
        ctx = context_from_weights(s.weights, edges)
        predictions.append(predict(hypothesis, ctx, s.id))
        labels.append(s.diagnosis)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    predictions_to_csv(predictions, labels, out_dir / "predictions.csv")
    metrics = evaluate(hypothesis, [
        (s.diagnosis, context_from_weights(s.weights, edges)) for s in cohort.subjects])
    (out_dir / "metrics.json").write_text(json.dumps(metrics_to_obj(metrics), indent=1))
    print(f"accuracy {metrics.accuracy:.4f} over {len(cohort)} subjects")
    return 0


def cmd_cv(args) -> int:
    config = crossval.config_from_obj(json.loads(Path(args.config).read_text()))
    cohort = load_cohort(args.cohort)
    report = crossval.run_pipeline(config, cohort)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(crossval.report_to_json(report))
    summary = report.summary()
    acc = summary["val_accuracy"]
    print(f"validation accuracy {acc['mean']:.4f} +/- {acc['std']:.4f} "
          f"over {len(report.folds)} folds")
    if any(not fr.optimal for fr in report.folds):
        print("budget exceeded on at least one fold", file=sys.stderr)
        return 3
    return 0


def _fmt(cell) -> str:
    if cell is None:
        return "---"
    return f"{cell['mean']:.2f} ± {cell['std']:.2f}"


def cmd_report(args) -> int:
    report_path = Path(args.run_dir) / "report.json"
    if not report_path.exists():
        raise ValueError(f"missing file: {report_path}")
    obj = json.loads(report_path.read_text())
    summary = obj["summary"]

    def pct(cell):
        if cell is None:
            return None
        return {"mean": 100 * cell["mean"], "std": 100 * cell["std"]}

    pipeline = obj["config"]["pipeline"]
    accuracy_rows = [
        ("DT*", pct(summary.get("dt_val_accuracy"))),
        ("RF*", pct(summary.get("rf_val_accuracy"))),
        (f"rules({pipeline})", pct(summary["val_accuracy"])),
    ]
    atom_rows = [
        ("rules", summary["hypothesis_atoms"]),
        ("DT", summary["dt_atoms"]),
        ("RF", summary["rf_atoms"]),
    ]
    lines = ["# Cross-validation report", "",
             f"pipeline: {pipeline}, "
             f"{obj['config']['n_repeats']} repeats x {obj['config']['n_folds']} folds", "",
             "## Validation accuracy (%)", "", "| Model | ACC (%) |", "| --- | --- |"]
    lines += [f"| {name} | {_fmt(cell)} |" for name, cell in accuracy_rows]
    lines += ["", "## Interpretability (atom count)", "",
              "| Model | Atoms |", "| --- | --- |"]
    lines += [f"| {name} | {_fmt(cell)} |" for name, cell in atom_rows]
    lines += ["", "## Selected edges (repeats containing each)", ""]
    lines += [f"- ({i}, {j}): {c}" for (i, j), c in obj["edge_frequency"]]
    out_md = Path(args.run_dir) / "report.md"
    out_md.write_text("\n".join(lines) + "\n")
    tables = {
        "accuracy": {name: cell for name, cell in accuracy_rows},
        "atoms": {name: cell for name, cell in atom_rows},
    }
    (Path(args.run_dir) / "tables.json").write_text(json.dumps(tables, indent=1))
    print(f"wrote {out_md}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="connrules",
        description="Threshold-rule learning over brain-connectome edge strengths")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n-per-class", type=int, default=50)
    p.add_argument("--planted", action="append", default=[],
                   metavar="I,J,THR,DIR", help="planted edge, e.g. 2,5,2.0,low")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mask", help="compute a proportional-threshold edge mask")
    p.add_argument("--cohort", required=True)
    p.add_argument("--keep-ratio", type=float, default=0.30)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("train", help="fit a tree or forest on masked features")
    p.add_argument("--cohort", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--model", choices=("dt", "rf"), default="dt")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select", help="pick the most discriminative edges")
    p.add_argument("--mode", choices=("global", "frequency"), default="global")
    p.add_argument("--model", help="model JSON (global mode)")
    p.add_argument("--explanations", help="explanations JSON (frequency mode)")
    p.add_argument("--cohort", help="optional cohort for id validation")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("build-task", help="compile symbolic learning tasks")
    p.add_argument("--cohort", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--selected", required=True)
    p.add_argument("--ad-subsets", type=int, default=3)
    p.add_argument("--base-pen", type=int, default=1)
    p.add_argument("--max-body-edges", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_build_task)

    p = sub.add_parser("learn", help="solve task(s) and union the hypotheses")
    p.add_argument("--task", action="append", required=True,
                   help="task file (.las or .json); repeatable")
    p.add_argument("--budget", type=int, default=500_000)
    p.add_argument("--out", required=True, help="hypothesis JSON path")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("infer", help="apply a hypothesis to a cohort")
    p.add_argument("--hypothesis", required=True,
                   help="hypothesis file (.json or ASP-style .lp text)")
    p.add_argument("--cohort", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("cv", help="run repeated stratified cross-validation")
    p.add_argument("--config", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("report", help="render tables from a cv run")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
