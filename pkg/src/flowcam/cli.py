"""``flowcam`` command line.

Exit codes: 0 ok, 1 invalid arguments or config, 2 unreadable or unsuitable data, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from .extract import DEFAULT_LABEL, extract_pcap
from .faithfulness import FaithfulnessError, faithfulness_report
from .features import FeatureMatrix, prune_static, read_csv, write_csv
from .flows import DEFAULT_ACTIVITY_TIMEOUT, DEFAULT_FLOW_TIMEOUT, OutOfOrderError
from .metrics import confusion, evaluation_report
from .models import KINDS, ModelError, ModelFileError, ModelSpec, load, save, train
from .pcap import PcapError
from .pipeline import (
    ConfigError, LabelSchema, SchemaError, SplitError, SynthError, default_seed, default_spec,
    evaluate_pipeline, load_config, run_report, split, synth_generate, train_pipeline,
)
from .pipeline.report import canonical_json
from .stats import correlated_pairs, mutual_information, pca_fit, pearson_matrix
from .xai import (
    TREE_EXPLAINABLE, ExplainerError, QuartileDiscretizer, ScoreFunction, attribution_explainer, class_importance,
    exact_shapley, kernel_shap, lime_explain, sample_background, tree_shap,
)

OK, INVALID, DATA, INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _seed_arg(p):
    p.add_argument("--seed", type=int, default=None, help="random seed (default: $FLOWCAM_SEED or 0)")


def _split_arg(p):
    p.add_argument("--split", type=float, default=0.8, help="training fraction of the stratified split")


def _param(text: str):
    key, sep, raw = text.partition("=")
    if not sep:
        raise UsageError(f"--param expects key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def build_parser() -> argparse.ArgumentParser:
    ap = Parser(prog="flowcam", description="Flow features, classifiers and their explanations.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("extract", help="pcap files -> feature CSV")
    p.add_argument("pcaps", nargs="+")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--label", default=DEFAULT_LABEL)
    p.add_argument("--flow-timeout", type=float, default=DEFAULT_FLOW_TIMEOUT)
    p.add_argument("--activity-timeout", type=float, default=DEFAULT_ACTIVITY_TIMEOUT)

    p = sub.add_parser("analyze", help="correlation, mutual information and PCA of a feature CSV")
    p.add_argument("csv")
    p.add_argument("-o", "--output")
    p.add_argument("--threshold", type=float, default=0.9)
    p.add_argument("--variance", type=float, default=0.95)

    p = sub.add_parser("train", help="fit one model on the training split")
    p.add_argument("csv")
    p.add_argument("--model", required=True, choices=KINDS)
    p.add_argument("--param", action="append", default=[], type=str, help="hyperparameter override key=value")
    p.add_argument("-o", "--output", required=True)
    _seed_arg(p)
    _split_arg(p)

    p = sub.add_parser("eval", help="metrics of a saved model on the test split")
    p.add_argument("csv")
    p.add_argument("--model", required=True, help="saved model file")
    p.add_argument("-o", "--output")
    _seed_arg(p)
    _split_arg(p)

    p = sub.add_parser("explain", help="attributions for test-split rows")
    p.add_argument("csv")
    p.add_argument("--model", required=True, help="saved model file")
    p.add_argument("--method", default="tree", choices=("exact", "tree", "kernel", "lime"))
    p.add_argument("--class", dest="target", help="class to explain (default: each row's prediction)")
    p.add_argument("--background", type=int, default=100)
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--rows", type=int, default=20)
    p.add_argument("--samples", type=int, default=2048, help="kernel coalitions / LIME perturbations")
    p.add_argument("-o", "--output", required=True)
    _seed_arg(p)
    _split_arg(p)

    p = sub.add_parser("faithful", help="consistency and sufficiency of tree attributions")
    p.add_argument("csv")
    p.add_argument("--model", required=True, help="saved model file")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--background", type=int, default=100)
    p.add_argument("--rows", type=int, default=200)
    p.add_argument("-o", "--output")
    _seed_arg(p)
    _split_arg(p)

    p = sub.add_parser("synth", help="write a synthetic labelled feature CSV")
    p.add_argument("--name", default="synth4", choices=("synth4", "synth6"))
    p.add_argument("--n", type=int, default=500, help="rows per class")
    p.add_argument("--separation", type=float, default=1.5)
    p.add_argument("--label-by", default="class", choices=("class", "component"))
    p.add_argument("-o", "--output", required=True)
    _seed_arg(p)

    p = sub.add_parser("pipeline", help="train and evaluate the two-stage classifier")
    p.add_argument("csv", help="CSV whose labels are stage-1 or camera names")
    p.add_argument("--model", default="XGB", choices=KINDS)
    p.add_argument("--stage2-model", choices=KINDS)
    p.add_argument("--schema", help="JSON label schema")
    p.add_argument("-o", "--output", required=True, help="directory for pipeline.json and metrics.json")
    _seed_arg(p)
    _split_arg(p)

    p = sub.add_parser("report", help="run a config file (or a previous manifest)")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True)
    return ap


def _spec(kind: str, params: dict, seed: int) -> ModelSpec:
    try:
        return ModelSpec(kind, params, seed)
    except ModelError as exc:
        raise UsageError(str(exc)) from None


def _seed(args) -> int:
    return default_seed() if args.seed is None else args.seed


def _emit(doc, dest: str | None) -> None:
    text = canonical_json(doc)
    if dest:
        Path(dest).write_text(text)
    else:
        sys.stdout.write(text)


def _prepared(csv_path: str, args) -> tuple[FeatureMatrix, FeatureMatrix]:
    m = read_csv(csv_path)
    if m.labels is None:
        raise SplitError("feature CSV has no Label column")
    return split(prune_static(m), args.split, _seed(args))


def _restrict(m: FeatureMatrix, names) -> np.ndarray:
    missing = [n for n in names if n not in m.names]
    if missing:
        raise ModelError(f"data lacks model features {missing[:3]}")
    return m.values[:, [m.names.index(n) for n in names]]


def cmd_extract(args) -> int:
    parts, stats = [], []
    for path in args.pcaps:
        m, st = extract_pcap(path, args.label, args.flow_timeout, args.activity_timeout)
        parts.append(m)
        stats.append(st)
    values = np.vstack([m.values for m in parts])
    write_csv(FeatureMatrix(values, labels=[lab for m in parts for lab in m.labels]), args.output)
    for path, st in zip(args.pcaps, stats):
        note = " (truncated)" if st.truncated else ""
        print(f"{path}: {st.packets} packets, {st.skipped} skipped, {st.flows} flows{note}", file=sys.stderr)
    return OK


def cmd_analyze(args) -> int:
    m = prune_static(read_csv(args.csv))
    corr = pearson_matrix(m)
    mi = mutual_information(m)
    pairs, drop = correlated_pairs(corr, args.threshold, mi.scores)
    pca = pca_fit(m, args.variance)
    _emit({
        "active_features": m.active_names,
        "mutual_information": mi.as_dict(),
        "correlated_pairs": [[a, b, r] for a, b, r in pairs],
        "drop": sorted(drop),
        "pca": {"components": pca.n_components, "explained_ratio": pca.explained_ratio.tolist()},
    }, args.output)
    return OK


def cmd_train(args) -> int:
    tr, _ = _prepared(args.csv, args)
    params = dict(_param(t) for t in args.param)
    model = train(_spec(args.model, params, _seed(args)), tr)
    save(model, args.output)
    print(f"trained {args.model} on {len(tr)} rows x {tr.X.shape[1]} features", file=sys.stderr)
    return OK


def cmd_eval(args) -> int:
    model = load(args.model)
    _, te = _prepared(args.csv, args)
    pred = model.predict(_restrict(te, model.feature_names))
    _emit(evaluation_report(confusion(te.labels, pred, model.classes)), args.output)
    return OK


def cmd_explain(args) -> int:
    model = load(args.model)
    if args.method == "tree" and model.kind not in TREE_EXPLAINABLE:
        raise UsageError(f"--method tree needs a tree model, not {model.kind}; use kernel, exact or lime")
    tr, te = _prepared(args.csv, args)
    seed = _seed(args)
    Xtr = _restrict(tr, model.feature_names)
    Xte = _restrict(te, model.feature_names)[: args.rows]
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    B = sample_background(Xtr, args.background, seed)
    pred = model.predict(Xte)
    targets = [args.target] * len(Xte) if args.target else pred
    docs = []
    for i, (row, target) in enumerate(zip(Xte, targets)):
        f = ScoreFunction.for_class(model, target)
        if args.method == "lime":
            e = lime_explain(f, row, QuartileDiscretizer.fit(Xtr), args.topk, args.samples, seed + i)
            doc = e.to_dict()
        elif args.method == "tree":
            doc = tree_shap(model, row, target, B, f.mode)[0].to_dict(args.topk)
        elif args.method == "kernel":
            doc = kernel_shap(f, row, B, args.samples, seed + i).to_dict(args.topk)
        else:
            doc = exact_shapley(f, row, B).to_dict(args.topk)
        doc["row"] = i
        doc["predicted"] = pred[i]
        docs.append(doc)
    (out / "instances.json").write_text(canonical_json(docs))
    if args.method != "lime":
        rows = FeatureMatrix(Xte, labels=te.labels[: len(Xte)], names=tuple(model.feature_names))
        imp = class_importance(model, rows, B, args.method, n_samples=args.samples, seed=seed)
        lines = ["class,rank,feature,mean_abs_phi"]
        for cls, rep in imp.items():
            lines += [f"{cls},{r},{rep.names[j]},{float(rep.scores[j])!r}"
                      for r, j in enumerate(rep.ranking[: args.topk], start=1)]
        (out / "mean_abs.csv").write_text("\n".join(lines) + "\n")
    return OK


def cmd_faithful(args) -> int:
    model = load(args.model)
    if model.kind not in TREE_EXPLAINABLE:
        raise UsageError(f"faithfulness uses tree attributions; {model.kind} is not a tree model")
    tr, te = _prepared(args.csv, args)
    seed = _seed(args)
    Xtr = _restrict(tr, model.feature_names)
    rows = sample_background(_restrict(te, model.feature_names), args.rows, seed)
    explainer = attribution_explainer(model, sample_background(Xtr, args.background, seed))
    rep = faithfulness_report(model, rows, explainer, args.topk, args.noise, args.runs, seed, fill=Xtr.mean(axis=0))
    _emit(rep.to_dict(), args.output)
    return OK


def cmd_synth(args) -> int:
    m = synth_generate(default_spec(args.name, args.n, _seed(args), args.separation), args.label_by)
    write_csv(m, args.output)
    return OK


def cmd_pipeline(args) -> int:
    schema = LabelSchema.load(args.schema) if args.schema else LabelSchema()
    tr, te = _prepared(args.csv, args)
    seed = _seed(args)
    s2 = _spec(args.stage2_model, {}, seed) if args.stage2_model else None
    p = train_pipeline(tr, _spec(args.model, {}, seed), s2, schema)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    p.save(out / "pipeline.json")
    (out / "metrics.json").write_text(canonical_json(evaluate_pipeline(p, te)))
    return OK


def cmd_report(args) -> int:
    run_report(load_config(args.config), args.output)
    return OK


COMMANDS = {
    "extract": cmd_extract, "analyze": cmd_analyze, "train": cmd_train, "eval": cmd_eval,
    "explain": cmd_explain, "faithful": cmd_faithful, "synth": cmd_synth, "pipeline": cmd_pipeline,
    "report": cmd_report,
}

INVALID_ERRORS = (UsageError, ConfigError, SchemaError)
DATA_ERRORS = (PcapError, OutOfOrderError, ModelFileError, ModelError, SplitError, SynthError, ExplainerError,
               FaithfulnessError, OSError, ValueError)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except INVALID_ERRORS as exc:
        print(f"flowcam: error: {exc}", file=sys.stderr)
        return INVALID
    except DATA_ERRORS as exc:
        print(f"flowcam: data error: {exc}", file=sys.stderr)
        return DATA
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return INTERNAL


if __name__ == "__main__":
    sys.exit(main())
