"""Command-line front end: prepare, train/tune, evaluate, predict, benchmark.

Every run is driven by a JSON config plus flag overrides; identical config
and seeds reproduce identical artifacts (wall-clock timings aside).

Exit codes: 0 success, 2 config error, 3 data error, 4 training error,
5 evaluation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import cascade as casc
from . import data as ds
from . import hpo
from . import metrics
from .bundle import ModelBundle, dataset_fingerprint
from .errors import ConfigError, FingerprintMismatch, SbcError
from .gbt import GbtParams, train_multiclass

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAIN = 4
EXIT_EVAL = 5

DEFAULT_GRID = {
    "max_depth": {"values": [2, 4, 6], "prune": "upper_bound"},
    "num_rounds": {"values": [20, 50], "prune": "upper_bound"},
    "learning_rate": {"values": [0.1, 0.3], "prune": "unpruned"},
}


def _load_config(path: str, overrides: argparse.Namespace) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if getattr(overrides, "seed", None) is not None:
        cfg["seed"] = overrides.seed
    if getattr(overrides, "out", None):
        cfg["out_dir"] = overrides.out
    if getattr(overrides, "weights", None):
        cfg["weights"] = overrides.weights
    if getattr(overrides, "grid", None):
        cfg["grid_file"] = overrides.grid
    if getattr(overrides, "unknown_action", None):
        cfg["unknown_action"] = overrides.unknown_action
    return cfg


def _validate_config(cfg: dict) -> None:
    method = cfg.get("method", "mcc")
    hpo_mode = cfg.get("hpo", "fixed")
    if method not in ("mcc", "sbc"):
        raise ConfigError(f"method must be mcc or sbc, got {method!r}")
    if hpo_mode not in ("fixed", "gs", "hgs", "phgs"):
        raise ConfigError(f"hpo must be one of fixed/gs/hgs/phgs, got {hpo_mode!r}")
    if hpo_mode == "phgs" and method != "sbc":
        raise ConfigError("hpo=phgs requires method=sbc")
    if hpo_mode == "fixed" and "params" not in cfg:
        raise ConfigError("hpo=fixed requires explicit params")
    if "train_csv" not in cfg:
        raise ConfigError("config needs train_csv")


def _params_from_cfg(cfg: dict) -> GbtParams:
    try:
        return GbtParams(**cfg.get("params", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad params: {exc}") from exc


def _grid_from_cfg(cfg: dict) -> hpo.HpGrid:
    if "grid_file" in cfg:
        return hpo.HpGrid.from_file(cfg["grid_file"])
    return hpo.HpGrid.from_mapping(cfg.get("grid", DEFAULT_GRID))


def _cv_from_cfg(cfg: dict) -> hpo.CvConfig:
    return hpo.CvConfig(**cfg.get("cv", {}))


def _halving_from_cfg(cfg: dict) -> hpo.HalvingConfig:
    return hpo.HalvingConfig(**cfg.get("halving", {}))


def _policy_from_cfg(cfg: dict) -> casc.LastStagePolicy:
    return casc.LastStagePolicy(**cfg.get("last_stage", {}))


def _load_train(cfg: dict) -> ds.Dataset:
    return ds.load_csv(cfg["train_csv"], cfg.get("label_column", "label"))


def _train_one(cfg: dict, train: ds.Dataset):
    """Train per the method/hpo selection; returns (bundle_kind, model,
    hpo_results, timings dict)."""
    method = cfg.get("method", "mcc")
    hpo_mode = cfg.get("hpo", "fixed")
    weights = cfg.get("weights", "none")
    base_params = _params_from_cfg(cfg)
    cv = _cv_from_cfg(cfg)
    threshold = float(cfg.get("threshold", casc.DEFAULT_THRESHOLD))
    timings = {"hpo_s": 0.0, "train_s": 0.0}

    if method == "mcc":
        w = ds.compute_sample_weights(train.labels, weights)
        params = base_params
        results = []
        if hpo_mode in ("gs", "hgs"):
            grid = _grid_from_cfg(cfg)
            if hpo_mode == "gs":
                result = hpo.grid_search(
                    grid, train.features, train.labels, cv, "multiclass", weights, base_params
                )
            else:
                result = hpo.halving_grid_search(
                    grid, train.features, train.labels, cv, _halving_from_cfg(cfg),
                    "multiclass", weights, base_params,
                )
            params = result.best_params
            results = [result]
            timings["hpo_s"] = result.wall_clock
        t0 = time.perf_counter()
        model = train_multiclass(train.features, train.labels, w, params)
        timings["train_s"] = time.perf_counter() - t0
        return "mcc", model, results, timings

    # sbc
    ordering = casc.order_classes(ds.class_frequencies(train))
    policy = _policy_from_cfg(cfg)
    sbc_weights = "none" if weights == "none" else "per_stage_inverse_frequency"
    if hpo_mode == "fixed":
        t0 = time.perf_counter()
        model = casc.train_cascade(train, ordering, base_params, sbc_weights, policy, threshold)
        timings["train_s"] = time.perf_counter() - t0
        return "sbc", model, [], timings

    grid = _grid_from_cfg(cfg)
    t0 = time.perf_counter()
    if hpo_mode == "phgs":
        model, results = hpo.phgs_cascade(
            train, ordering, grid, cv, _halving_from_cfg(cfg),
            weights, policy, base_params, threshold,
        )
    else:
        model, results = hpo.per_stage_search(
            train, ordering, grid, cv, hpo_mode, _halving_from_cfg(cfg),
            weights, policy, base_params, threshold,
        )
    total = time.perf_counter() - t0
    timings["hpo_s"] = sum(r.wall_clock for r in results)
    timings["train_s"] = sum(m.train_seconds for m in model.metadata)
    # search wall-clock includes bookkeeping; never report more than measured
    timings["hpo_s"] = min(timings["hpo_s"], total)
    return "sbc", model, results, timings


def _predict_labels(bundle: ModelBundle, X: np.ndarray, unknown_action: str):
    """Closed-set label vector (UNKNOWN sentinel where applicable)."""
    if bundle.kind == "mcc":
        return bundle.model.predict_class(X), None
    preds = casc.predict_batch(bundle.model, X, unknown_action)
    labels = np.array(
        [metrics.UNKNOWN if p.is_unknown else p.class_id for p in preds], dtype=np.int64
    )
    return labels, preds


def _evaluate_bundle(bundle: ModelBundle, test: ds.Dataset, unknown_action: str, timings: dict, out_dir: str, prefix: str = ""):
    t0 = time.perf_counter()
    y_pred, _ = _predict_labels(bundle, test.features, unknown_action)
    timings = dict(timings, test_s=time.perf_counter() - t0)
    n = len(bundle.class_names)
    has_unknown = bool((np.asarray(y_pred) == metrics.UNKNOWN).any())
    cm = metrics.confusion(test.labels, y_pred, n, has_unknown=has_unknown)
    report = metrics.per_class_report(cm)
    summary = metrics.summarize(cm, report, timings)

    os.makedirs(out_dir, exist_ok=True)
    text = metrics.format_summary(summary, bundle.class_names)
    with open(os.path.join(out_dir, prefix + "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    machine = {
        "accuracy": summary.accuracy,
        "avg_f1": summary.avg_f1,
        "std_f1": summary.std_f1,
        "timings": summary.timings,
        "per_class": [
            {"class": name, "precision": r.precision, "recall": r.recall,
             "f1": r.f1, "support": r.support}
            for name, r in zip(bundle.class_names, report)
        ],
    }
    with open(os.path.join(out_dir, prefix + "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(machine, fh, indent=2)
    metrics.export_matrix(cm.counts, os.path.join(out_dir, prefix + "confusion.csv"))
    metrics.export_matrix(
        np.round(metrics.normalize_percent(cm), 6),
        os.path.join(out_dir, prefix + "confusion_normalized.csv"),
    )
    return summary


# --- subcommands ---

def cmd_prepare(args) -> int:
    policy = ds.CleaningPolicy(
        drop_duplicates=not args.keep_duplicates,
        missing_value_action=args.missing_action,
        infinity_action=args.infinity_action,
        negative_action=args.negative_action,
    )
    raw = ds.load_csv(args.input, args.label_column)
    cleaned, report = ds.clean(raw, policy)
    spec = ds.SplitSpec(args.test_fraction, args.seed, stratified=True)
    train, test = ds.stratified_split(cleaned, spec)
    os.makedirs(args.out, exist_ok=True)
    ds.export_csv(train, os.path.join(args.out, "train.csv"), args.label_column)
    ds.export_csv(test, os.path.join(args.out, "test.csv"), args.label_column)
    with open(os.path.join(args.out, "cleaning_report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.as_text())
    print(report.as_text(), end="")
    print(f"train rows: {train.n_rows}\ntest rows: {test.n_rows}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config, args)
    if getattr(args, "require_hpo", False) and cfg.get("hpo", "fixed") == "fixed":
        raise ConfigError("tune requires hpo of gs, hgs or phgs")
    _validate_config(cfg)
    train = _load_train(cfg)
    kind, model, results, timings = _train_one(cfg, train)

    out_dir = cfg.get("out_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    bundle = ModelBundle(kind, model, cfg, dataset_fingerprint(train))
    bundle_path = os.path.join(out_dir, "bundle.json")
    bundle.save(bundle_path)
    for i, r in enumerate(results):
        r.export_trials(os.path.join(out_dir, f"hpo_trials_stage{i}.jsonl"))

    if cfg.get("test_csv"):
        test = ds.align_to(
            ds.load_csv(cfg["test_csv"], cfg.get("label_column", "label")),
            bundle.class_names,
        )
        summary = _evaluate_bundle(
            bundle, test, cfg.get("unknown_action", "assign_last_class"), timings, out_dir
        )
        timings = summary.timings
        print(f"Accuracy    {summary.accuracy:.4f}")
        print(f"Average F1  {summary.avg_f1:.4f}")
        print(f"Std-dev F1  {summary.std_f1:.4f}")
    print(f"HPO time    {timings.get('hpo_s', 0.0):.3f}")
    print(f"Train time  {timings.get('train_s', 0.0):.3f}")
    print(f"Test time   {timings.get('test_s', 0.0):.3f}")
    print(f"bundle written to {bundle_path}")
    return 0


def cmd_evaluate(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    test = ds.load_csv(args.test, args.label_column)
    bundle.check_schema(test, require_classes=True)
    test = ds.align_to(test, bundle.class_names)
    summary = _evaluate_bundle(bundle, test, args.unknown_action, {}, args.out)
    print(metrics.format_summary(summary, bundle.class_names), end="")
    return 0


def cmd_predict(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    raw = _load_unlabeled(args.input, bundle)
    names = bundle.class_names
    records = []
    if bundle.kind == "mcc":
        pred = bundle.model.predict_class(raw)
        records = [{"row": i, "class": names[c]} for i, c in enumerate(pred)]
    else:
        for i, p in enumerate(casc.predict_batch(bundle.model, raw, "emit_unknown")):
            records.append({
                "row": i,
                "class": "UNKNOWN" if p.is_unknown else names[p.class_id],
                "trace": [[s, round(prob, 6)] for s, prob in p.stage_trace],
            })
    out = "\n".join(json.dumps(r) for r in records) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return 0


def _load_unlabeled(path: str, bundle: ModelBundle) -> np.ndarray:
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in _csv.reader(fh) if r]
    if not rows:
        raise FingerprintMismatch(f"{path} is empty")
    start = 0
    expect = bundle.fingerprint["n_features"]
    # tolerate an optional header row
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        start = 1
    X = np.array([[float(c) for c in r] for r in rows[start:]], dtype=np.float64)
    if X.shape[1] != expect:
        raise FingerprintMismatch(f"bundle expects {expect} features, file has {X.shape[1]}")
    return X


METHOD_COLUMNS = {
    "fixed": ("fixed", "none"),
    "gs": ("gs", "none"),
    "gs+weights": ("gs", "inverse_frequency"),
    "hgs": ("hgs", "none"),
    "hgs+weights": ("hgs", "inverse_frequency"),
    "phgs": ("phgs", "none"),
    "phgs+weights": ("phgs", "inverse_frequency"),
}


def _parse_method(token: str):
    parts = token.strip().lower().split("+", 1)
    method = parts[0]
    rest = parts[1] if len(parts) > 1 else "fixed"
    if method not in ("mcc", "sbc") or rest not in METHOD_COLUMNS:
        raise ConfigError(f"bad method column {token!r}")
    hpo_mode, weights = METHOD_COLUMNS[rest]
    return method, hpo_mode, weights


def cmd_benchmark(args) -> int:
    cfg = _load_config(args.config, args)
    if "train_csv" not in cfg or "test_csv" not in cfg:
        raise ConfigError("benchmark needs prepared train_csv and test_csv")
    methods = [m for m in (args.methods or "").split(",") if m.strip()]
    if not methods:
        raise ConfigError("benchmark needs --methods")

    train = _load_train(cfg)
    test = ds.align_to(
        ds.load_csv(cfg["test_csv"], cfg.get("label_column", "label")), train.class_names
    )
    freqs = ds.class_frequencies(train)
    ordering = casc.order_classes(freqs)
    test_counts = np.bincount(test.labels, minlength=train.n_classes)

    columns = {}
    failures = {}
    for token in methods:
        method, hpo_mode, weights = _parse_method(token)
        run_cfg = dict(cfg, method=method, hpo=hpo_mode, weights=weights)
        if hpo_mode == "fixed":
            run_cfg.setdefault("params", {})
        try:
            _validate_config(run_cfg)
            kind, model, _, timings = _train_one(run_cfg, train)
            bundle = ModelBundle(kind, model, run_cfg, dataset_fingerprint(train))
            t0 = time.perf_counter()
            y_pred, _ = _predict_labels(
                bundle, test.features, run_cfg.get("unknown_action", "assign_last_class")
            )
            timings["test_s"] = time.perf_counter() - t0
            cm = metrics.confusion(test.labels, y_pred, train.n_classes)
            report = metrics.per_class_report(cm)
            columns[token] = metrics.summarize(cm, report, timings)
        except SbcError as exc:
            failures[token] = str(exc)

    # rows: classes in descending train frequency, then summary/timing rows
    row_labels = []
    for rank in range(ordering.n):
        c = ordering.class_at[rank]
        row_labels.append(f"{train.class_names[c]} | {freqs[c]} | {int(test_counts[c])}")
    lines = []
    header = ["class ( name | train | test )"] + methods
    lines.append("\t".join(header))
    for rank in range(ordering.n):
        c = ordering.class_at[rank]
        cells = [row_labels[rank]]
        for token in methods:
            if token in columns:
                cells.append(f"{columns[token].per_class[c].f1:.4f}")
            else:
                cells.append("FAILED")
        lines.append("\t".join(cells))
    summary_rows = [
        ("Accuracy", lambda s: f"{s.accuracy:.4f}"),
        ("Average F1", lambda s: f"{s.avg_f1:.4f}"),
        ("Std-dev F1", lambda s: f"{s.std_f1:.4f}"),
        ("HPO time", lambda s: f"{s.timings.get('hpo_s', 0.0):.3f}"),
        ("Train time", lambda s: f"{s.timings.get('train_s', 0.0):.3f}"),
        ("Test time", lambda s: f"{s.timings.get('test_s', 0.0):.3f}"),
    ]
    for label, fmt in summary_rows:
        cells = [label]
        for token in methods:
            cells.append(fmt(columns[token]) if token in columns else "FAILED")
        lines.append("\t".join(cells))
    table = "\n".join(lines) + "\n"

    out_dir = cfg.get("out_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "benchmark_report.tsv"), "w", encoding="utf-8") as fh:
        fh.write(table)
    print(table, end="")
    for token, msg in failures.items():
        print(f"FAILED {token}: {msg}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbcboost")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="clean a raw CSV and write a stratified split")
    p.add_argument("--input", required=True)
    p.add_argument("--label-column", default="label")
    p.add_argument("--out", required=True)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep-duplicates", action="store_true")
    p.add_argument("--missing-action", default="drop_row",
                   choices=["drop_row", "impute_zero", "impute_median"])
    p.add_argument("--infinity-action", default="drop_row",
                   choices=["drop_row", "clamp_to_finite_max"])
    p.add_argument("--negative-action", default="drop_row",
                   choices=["keep", "drop_row", "clamp_zero"])
    p.set_defaults(func=cmd_prepare, err_code=EXIT_DATA)

    for name, require_hpo in (("train", False), ("tune", True)):
        p = sub.add_parser(name, help="train (and optionally tune) a model from a config")
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--weights", choices=["none", "inverse_frequency"])
        p.add_argument("--grid")
        p.add_argument("--unknown-action", choices=["emit_unknown", "assign_last_class"])
        p.add_argument("--threads", type=int, default=1)  # accepted; training is single-threaded
        p.set_defaults(func=cmd_train, err_code=EXIT_TRAIN, require_hpo=require_hpo)

    p = sub.add_parser("evaluate", help="evaluate a saved bundle on a labeled CSV")
    p.add_argument("--bundle", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--label-column", default="label")
    p.add_argument("--out", required=True)
    p.add_argument("--unknown-action", default="assign_last_class",
                   choices=["emit_unknown", "assign_last_class"])
    p.set_defaults(func=cmd_evaluate, err_code=EXIT_EVAL)

    p = sub.add_parser("predict", help="predict rows of an unlabeled CSV")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict, err_code=EXIT_EVAL)

    p = sub.add_parser("benchmark", help="run several method columns on one shared split")
    p.add_argument("--config", required=True)
    p.add_argument("--methods", required=True,
                   help="comma list, e.g. mcc+gs,sbc+hgs+weights,sbc+phgs")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--weights", choices=["none", "inverse_frequency"])
    p.add_argument("--grid")
    p.add_argument("--unknown-action", choices=["emit_unknown", "assign_last_class"])
    p.set_defaults(func=cmd_benchmark, err_code=EXIT_TRAIN)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FingerprintMismatch,) as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except SbcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return args.err_code
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
