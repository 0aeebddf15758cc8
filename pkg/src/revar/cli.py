"""Command-line entry point: ``revar <command> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import errors
from .config import RunConfig, flatten
from .evalstats import VarianceStudyConfig, exact_variance_score_fn, gaussian_score_fn, metrics, variance_study
from .graph import (
    ClassCounts,
    SplitMasks,
    SplitSpec,
    imbalance_ratio,
    load_dataset,
    load_split,
    make_split,
    save_split,
)
from .nn import load_checkpoint, save_checkpoint
from .trainer import EPOCH_FIELDS, grid_search, predict, run_config

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
DATA_ENV = "REVAR_DATA_DIR"
SPLIT_MODE_ALIASES = {"step": "step_imbalance", "natural": "natural_stratified", "explicit": "explicit_counts"}
MANIFEST_FILES = ("config.json", "result.json", "metrics.csv", "epochs.csv", "checkpoint.bin")


class UsageError(errors.RevarError):
    pass


# helpers --------------------------------------------------------------------------------------


def resolve_dataset(name_or_path: str | None) -> Path:
    if not name_or_path:
        raise UsageError("no dataset given")
    p = Path(name_or_path)
    if p.is_dir():
        return p
    root = os.environ.get(DATA_ENV)
    if root and (Path(root) / name_or_path).is_dir():
        return Path(root) / name_or_path
    raise errors.IngestError(f"dataset {name_or_path!r} not found (checked the path and ${DATA_ENV})")


def resolve_split(graph, dataset_dir: Path, split: str | None) -> SplitMasks:
    if not split:
        raise UsageError("no split given")
    if split in graph.public_splits:
        return graph.public_splits[split]
    p = Path(split)
    if not p.is_file():
        p = dataset_dir / "splits" / f"{split}.json"
    if not p.is_file():
        raise errors.IngestError(f"split {split!r} not found")
    try:
        return load_split(p, graph.num_nodes)
    except (KeyError, ValueError) as exc:
        raise errors.FormatError(f"bad split file {p}: {exc}") from exc


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return path


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def parse_sets(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _rho(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad ratio {text!r}") from exc


def _fmt_ratio(r: Fraction) -> str:
    return f"{r} ({float(r):.2f})" if r.denominator != 1 else f"{r}"


# run configuration ----------------------------------------------------------------------------

FLAG_KEYS = {
    "arch": "encoder.arch", "layers": "encoder.layers", "hidden": "encoder.hidden", "heads": "encoder.heads",
    "lambda1": "loss.lambda1", "lambda2": "loss.lambda2", "tau": "loss.tau", "threshold": "loss.conf_threshold",
    "baseline": "loss.baseline", "epochs": "train.epochs", "lr": "train.lr", "weight_decay": "train.weight_decay",
    "ir_normalizer": "ir.normalizer", "val_loss": "sched.val_loss", "eval_graph": "train.eval_graph",
}


def add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file of dotted config keys (a run's config.json works)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any dotted config key")
    p.add_argument("--arch", choices=["gcn", "gat", "sage"])
    p.add_argument("--layers", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--baseline", choices=["reweight", "balanced_softmax", "pc_softmax"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--ir-normalizer", dest="ir_normalizer", choices=["distinct_pairs", "pair_count"])
    p.add_argument("--val-loss", dest="val_loss", choices=["composite", "supervised"])
    p.add_argument("--eval-graph", dest="eval_graph", choices=["original", "view"])
    p.add_argument("--aug", choices=["on", "off"], help="'off' zeroes all four mask rates")
    p.add_argument("--seed", type=int, help="seed for initialization and augmentation")


def build_config(args) -> tuple[RunConfig, dict]:
    """Resolve (file, then flags, then --set) into a RunConfig and the data keys."""
    values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                values = flatten(json.load(fh))
        except OSError as exc:
            raise errors.IngestError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise errors.ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
    data = {k: values.pop(k) for k in list(values) if k.startswith("data.")}
    for flag, key in FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    if getattr(args, "seed", None) is not None:
        values["train.seed"] = args.seed
        values["aug.seed"] = args.seed
    if getattr(args, "aug", None) == "off":
        for key in ("aug.v1.feature_rate", "aug.v1.edge_rate", "aug.v2.feature_rate", "aug.v2.edge_rate"):
            values[key] = 0.0
    sets = parse_sets(getattr(args, "set", None))
    for key in [k for k in sets if k.startswith("data.")]:
        data[key] = sets.pop(key)
    values.update(sets)
    return RunConfig().override(values), data


# commands --------------------------------------------------------------------------------------


def cmd_ingest_check(args) -> int:
    root = resolve_dataset(args.dataset)
    g = load_dataset(root)
    summary = {
        "name": g.name, "num_nodes": g.num_nodes, "num_features": g.num_features, "num_classes": g.num_classes,
        "num_edges": g.num_edges, "label_counts": g.label_counts().tolist(),
        "isolated_nodes": int(np.sum(g.degrees() == 0)),
        "splits": {name: {"train": int(m.train.sum()), "val": int(m.val.sum()), "test": int(m.test.sum())}
                   for name, m in sorted(g.public_splits.items())},
    }
    sys.stdout.write(dump_json(summary))
    return EXIT_OK


def cmd_split(args) -> int:
    root = resolve_dataset(args.dataset)
    g = load_dataset(root)
    mode = SPLIT_MODE_ALIASES.get(args.mode, args.mode)
    counts = tuple(int(c) for c in args.counts.split(",")) if args.counts else None
    spec = SplitSpec(mode=mode, base_per_class=args.base, rho=args.rho, total_budget=args.budget,
                     val_per_class=args.val_per_class, seed=args.seed, counts=counts)
    public = None
    if args.public:
        public = resolve_split(g, root, args.public)
    masks = make_split(g, spec, public)
    name = args.name or _default_split_name(spec)
    out = Path(args.out) if args.out else root / "splits" / f"{name}.json"
    save_split(masks, out)
    train_counts = ClassCounts.from_mask(g.labels, masks.train, g.num_classes)
    rho = imbalance_ratio(train_counts)
    print(f"split: {out}")
    print(f"counts: {list(train_counts.counts)}")
    print(f"imbalance_ratio: {_fmt_ratio(rho)}")
    print(f"train: {int(masks.train.sum())} val: {int(masks.val.sum())} test: {int(masks.test.sum())}")
    return EXIT_OK


def _default_split_name(spec: SplitSpec) -> str:
    if spec.mode == "step_imbalance":
        return f"step_rho{str(Fraction(spec.rho)).replace('/', '_')}_seed{spec.seed}"
    if spec.mode == "natural_stratified":
        return f"natural_b{spec.total_budget}_seed{spec.seed}"
    return f"explicit_seed{spec.seed}"


def _load_run_inputs(args):
    cfg, data = build_config(args)
    dataset = args.dataset or data.get("data.dir")
    split = args.split or data.get("data.split")
    root = resolve_dataset(dataset)
    g = load_dataset(root)
    masks = resolve_split(g, root, split)
    return cfg, g, masks, str(dataset), str(split)


def cmd_train(args) -> int:
    cfg, g, masks, dataset, split = _load_run_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    config_doc = dict(cfg.to_flat())
    config_doc.update({"data.dir": dataset, "data.split": split})
    write_text(out / "config.json", dump_json(config_doc))
    try:
        result = run_config(g, masks, cfg)
    except errors.NumericError as err:
        state = getattr(err, "last_good_state", None)
        if state is not None:
            from .nn import init_params

            params = init_params(cfg.encoder, g.num_features, g.num_classes, seed=cfg.train.seed)
            params.load_state(state)
            save_checkpoint(out / "last_good.bin", params, cfg.encoder,
                            {"epoch": getattr(err, "last_good_epoch", 0)})
        write_text(out / "error.json", dump_json({
            "error": str(err), "layer": err.layer, "parameter": err.parameter,
            "last_good_epoch": getattr(err, "last_good_epoch", None),
            "last_good_checkpoint": "last_good.bin" if state is not None else None,
        }))
        raise
    write_manifest(out, cfg, result, plot=args.plot)
    write_text(out / "run.log", f"started {time.strftime('%Y-%m-%dT%H:%M:%S', time.localtime(started))}\n"
                                f"seconds {time.time() - started:.3f}\n")
    tm = result.test_metrics
    print(f"best_epoch: {result.best_epoch} val_acc: {result.best_val_acc:.4f}")
    print(f"test balanced_accuracy: {tm.balanced_accuracy:.4f} macro_f1: {tm.macro_f1:.4f}")
    print(f"manifest: {out}")
    return EXIT_OK


def write_manifest(out: Path, cfg: RunConfig, result, plot: bool = False) -> None:
    save_checkpoint(out / "checkpoint.bin", result.params, cfg.encoder,
                    {"best_epoch": result.best_epoch, "config_hash": cfg.config_hash()})
    tm, vm = result.test_metrics, result.val_metrics
    write_csv(out / "metrics.csv", ["split", "balanced_accuracy", "macro_f1", "accuracy"],
              [["val", vm.balanced_accuracy, vm.macro_f1, vm.accuracy],
               ["test", tm.balanced_accuracy, tm.macro_f1, tm.accuracy]])
    write_csv(out / "epochs.csv", EPOCH_FIELDS, result.epochs)
    files = list(MANIFEST_FILES)
    if plot:
        from .plots import line_chart

        cols = {f: [r[i] for r in result.epochs] for i, f in enumerate(EPOCH_FIELDS)}
        (out / "plots").mkdir(exist_ok=True)
        line_chart(out / "plots" / "loss.svg", {k: cols[k] for k in ("loss", "vr", "ir", "sup", "val_loss")},
                   ylabel="loss", title="training losses")
        line_chart(out / "plots" / "val.svg", {"val_acc": cols["val_acc"], "val_f1": cols["val_f1"]},
                   ylabel="score", title="validation")
        files += ["plots/loss.svg", "plots/val.svg"]
    doc = result.to_dict()
    doc["files"] = files
    write_text(out / "result.json", dump_json(doc))


def cmd_evaluate(args) -> int:
    run = Path(args.run)
    cfg_path = run / "config.json"
    if not cfg_path.is_file():
        raise errors.IngestError(f"{cfg_path} is missing")
    doc = json.loads(cfg_path.read_text(encoding="utf-8"))
    data = {k: doc.pop(k) for k in list(doc) if k.startswith("data.")}
    cfg = RunConfig.from_flat(doc)
    dataset = args.dataset or data.get("data.dir")
    split = args.split or data.get("data.split")
    root = resolve_dataset(dataset)
    g = load_dataset(root)
    masks = resolve_split(g, root, split)
    params, enc, _ = load_checkpoint(run / "checkpoint.bin")
    counts = ClassCounts.from_mask(g.labels, masks.train, g.num_classes)
    from .augment import GraphView

    pred = predict(params, enc, GraphView.from_graph(g), counts, cfg.train.baseline)
    test_mask = masks.test if masks.test.any() else ~masks.train
    report = metrics(pred, g.labels, test_mask, g.num_classes)
    sys.stdout.write(dump_json(report.to_dict()))
    return EXIT_OK


def cmd_grid_search(args) -> int:
    cfg, g, masks, dataset, split = _load_run_inputs(args)
    space = None
    if args.space:
        with open(args.space, encoding="utf-8") as fh:
            space = json.load(fh)
    res = grid_search(g, masks, cfg, space, budget=args.budget, seed=args.search_seed, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    best = dict(res.best)
    best.update({"data.dir": dataset, "data.split": split})
    write_text(out / "best_config.json", dump_json(best))
    write_text(out / "leaderboard.json", res.to_json())
    keys = sorted(space or {}) or sorted({k for r in res.leaderboard for k in r["config"]})
    write_csv(out / "leaderboard.csv", ["rank", "hash", "val_acc", "best_epoch", "test_bacc", "test_f1"] + keys,
              [[i + 1, r["hash"], r["val_acc"], r["best_epoch"], r["test_bacc"], r["test_f1"]]
               + [r["config"][k] for k in keys] for i, r in enumerate(res.leaderboard)])
    print(f"trials: {len(res.leaderboard)} best val_acc: {res.leaderboard[0]['val_acc']:.4f}")
    print(f"leaderboard: {out / 'leaderboard.csv'}")
    return EXIT_OK


def cmd_variance_study(args) -> int:
    overrides = {k: v for k, v in {
        "arch": args.arch, "repeats_per_ratio": args.repeats, "num_ratios": args.ratios, "epochs": args.epochs,
        "shift_step": args.shift, "start_per_class": args.start, "tau": args.tau, "seed": args.seed,
        "var_on": args.var_on, "hidden": args.hidden,
    }.items() if v is not None}
    make = VarianceStudyConfig.reduced if args.profile == "reduced" else VarianceStudyConfig
    if args.synthetic:
        cfg = make(dataset="synthetic", **overrides)
        fn = (exact_variance_score_fn(200, 2, cfg.repeats_per_ratio, cfg.seed) if args.synthetic == "exact"
              else gaussian_score_fn(200, 2, 8, cfg.seed))
        res = variance_study(cfg, score_fn=fn, jobs=1 if args.synthetic == "exact" else args.jobs)
    else:
        root = resolve_dataset(args.dataset)
        cfg = make(dataset=str(args.dataset), **overrides)
        res = variance_study(cfg, load_dataset(root), jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.write_csv(out / "variance.csv")
    res.write_json(out / "summary.json")
    write_text(out / "config.json", dump_json(cfg.__dict__))
    if args.plot:
        (out / "plots").mkdir(exist_ok=True)
        res.write_svg(out / "plots" / "variance.svg")
    print(f"pearson_r: {res.pearson_r:.4f} p_value: {res.p_value:.3e} slope: {res.slope:.4g}")
    return EXIT_OK


def cmd_verify_theory(args) -> int:
    from .theory import run_all

    reports = run_all(seed=args.seed, num_samples=args.samples, num_specs=args.specs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, r in enumerate(reports):
        write_text(out / "reports" / f"{i:03d}_{r.name}.json", dump_json(r.to_dict()))
        rows.append([i, r.name, r.analytic, r.monte_carlo, r.num_samples, r.relative_error, r.tolerance,
                     int(r.passed)])
    write_csv(out / "summary.csv", ["index", "name", "analytic", "monte_carlo", "num_samples",
                                    "relative_error", "tolerance", "passed"], rows)
    failed = [r for r in reports if not r.passed]
    print(f"checks: {len(reports)} passed: {len(reports) - len(failed)} failed: {len(failed)}")
    for r in failed:
        print(f"FAIL {r.name}: relative_error={r.relative_error:.3g} tolerance={r.tolerance:.3g}")
    return EXIT_OK if not failed else EXIT_NUMERIC


def _stderr(values) -> float | None:
    if len(values) < 2:
        return None
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def aggregate_manifests(docs) -> list[dict]:
    """Group runs that differ only in seed; mean and standard error of test bAcc and macro-F1."""
    identities = {(d["config"].get("data.dir"), d["config"].get("data.split")) for d in docs}
    if len(identities) > 1:
        raise UsageError(f"manifests mix datasets/splits: {sorted(map(str, identities))}")
    groups = {}
    for d in docs:
        key_cfg = {k: v for k, v in d["config"].items() if k not in ("train.seed", "aug.seed")
                   and not k.startswith("data.")}
        key = json.dumps(key_cfg, sort_keys=True)
        groups.setdefault(key, []).append(d)
    rows = []
    for key, members in sorted(groups.items()):
        cfg = json.loads(key)
        bacc = [m["result"]["test_metrics"]["balanced_accuracy"] for m in members]
        f1 = [m["result"]["test_metrics"]["macro_f1"] for m in members]
        rows.append({
            "config_hash": RunConfig.from_flat(cfg).config_hash(),
            "arch": cfg.get("encoder.arch"), "baseline": cfg.get("loss.baseline"),
            "lambda1": cfg.get("loss.lambda1"), "lambda2": cfg.get("loss.lambda2"),
            "runs": len(members),
            "bacc_mean": float(np.mean(bacc)), "bacc_stderr": _stderr(bacc),
            "f1_mean": float(np.mean(f1)), "f1_stderr": _stderr(f1),
        })
    return rows


REPORT_COLUMNS = ("config_hash", "arch", "baseline", "lambda1", "lambda2", "runs",
                  "bacc_mean", "bacc_stderr", "f1_mean", "f1_stderr")


def cmd_report(args) -> int:
    docs = []
    for m in args.manifests:
        m = Path(m)
        try:
            config = json.loads((m / "config.json").read_text(encoding="utf-8"))
            result = json.loads((m / "result.json").read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise errors.IngestError(f"{m} is not a run manifest: {exc}") from exc
        docs.append({"config": config, "result": result, "path": str(m)})
    rows = aggregate_manifests(docs)
    table = [[r[c] for c in REPORT_COLUMNS] for r in rows]
    if args.out:
        write_csv(Path(args.out), REPORT_COLUMNS, table)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in table:
            w.writerow(["" if v is None else v for v in row])
    if args.plot:
        from .plots import line_chart

        series = {}
        for d in docs:
            label = f"{d['config'].get('encoder.arch')} l1={d['config'].get('loss.lambda1')} " \
                    f"l2={d['config'].get('loss.lambda2')} seed={d['config'].get('train.seed')}"
            series[label] = [e["loss"] for e in d["result"]["epochs"]]
        line_chart(Path(args.plot), series, ylabel="training loss", title="loss curves")
    return EXIT_OK


# parser -------------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="revar", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest-check", help="load a dataset directory and print a summary")
    s.add_argument("dataset")
    s.set_defaults(func=cmd_ingest_check)

    s = sub.add_parser("split", help="build and persist an imbalanced split")
    s.add_argument("dataset")
    s.add_argument("--mode", default="step", choices=sorted(SPLIT_MODE_ALIASES) + sorted(SPLIT_MODE_ALIASES.values()))
    s.add_argument("--rho", type=_rho, default=Fraction(10))
    s.add_argument("--base", type=int, default=20, help="labeled nodes per majority class")
    s.add_argument("--budget", type=int, help="total training nodes (natural mode)")
    s.add_argument("--counts", help="comma-separated per-class counts (explicit mode)")
    s.add_argument("--val-per-class", type=int, default=30)
    s.add_argument("--public", help="split whose train set is undersampled and whose val/test are kept")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--name", help="file stem under <dataset>/splits/")
    s.add_argument("--out", help="explicit output path")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="train one model and write a run manifest")
    s.add_argument("dataset", nargs="?")
    s.add_argument("--split")
    s.add_argument("--out", required=True)
    s.add_argument("--plot", action="store_true")
    add_run_flags(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="recompute test metrics from a run manifest's checkpoint")
    s.add_argument("run")
    s.add_argument("--dataset")
    s.add_argument("--split")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("grid-search", help="random search over the hyperparameter grid")
    s.add_argument("dataset", nargs="?")
    s.add_argument("--split")
    s.add_argument("--out", required=True)
    s.add_argument("--budget", type=int, default=1)
    s.add_argument("--search-seed", type=int, default=0)
    s.add_argument("--space", help="JSON file mapping dotted keys to value lists")
    s.add_argument("--jobs", type=int, default=1)
    add_run_flags(s)
    s.set_defaults(func=cmd_grid_search)

    s = sub.add_parser("variance-study", help="prediction variance vs imbalance ratio")
    s.add_argument("dataset", nargs="?")
    s.add_argument("--synthetic", choices=["exact", "gaussian"], help="use synthetic scores instead of training")
    s.add_argument("--profile", choices=["reduced", "full"], default="reduced")
    s.add_argument("--arch", choices=["gcn", "gat", "sage"])
    s.add_argument("--repeats", type=int)
    s.add_argument("--ratios", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--shift", type=int)
    s.add_argument("--start", type=int)
    s.add_argument("--tau", type=float)
    s.add_argument("--hidden", type=int)
    s.add_argument("--var-on", dest="var_on", choices=["scores", "probs"])
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("--plot", action="store_true")
    s.set_defaults(func=cmd_variance_study)

    s = sub.add_parser("verify-theory", help="run the Gaussian-model oracles")
    s.add_argument("--out", required=True)
    s.add_argument("--samples", type=int, default=1_000_000)
    s.add_argument("--specs", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify_theory)

    s = sub.add_parser("report", help="aggregate run manifests into a comparison table")
    s.add_argument("manifests", nargs="+")
    s.add_argument("--out", help="CSV path (stdout when omitted)")
    s.add_argument("--plot", help="SVG path for training-loss curves")
    s.set_defaults(func=cmd_report)
    return p


USAGE_ERRORS = (UsageError, errors.ConfigError, errors.InvalidSpecError, errors.InsufficientNodesError,
                errors.InsufficientBudgetError, errors.EmptySplitError, errors.EmptyClassError,
                errors.ContractError, errors.ShapeError, errors.DegenerateInput)
IO_ERRORS = (errors.IngestError, errors.FormatError, OSError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except errors.NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IO_ERRORS as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
