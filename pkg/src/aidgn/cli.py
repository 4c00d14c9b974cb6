"""Command-line entry point: `aidgn verify|gen|train|eval|compare`.

Exit codes: 0 success, 1 check or run failure, 2 usage/config error.
Config validation completes before any output is written.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import AidgnError, ConfigError, NonFiniteGradient
from .synth import (
    TARGET_DOMAIN,
    file_sha256,
    make_task,
    read_dataset,
    sample_domain,
    write_dataset,
)
from .train import (
    TrainConfig,
    child_rng,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    split_train_val,
    train,
)
from .verify import SUITES, run_suites


def _fmt(value: float) -> str:
    return f"{value:.17g}"


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    overrides = {}
    for item in args.tol or []:
        if "=" not in item:
            print(f"bad --tol override (expected NAME=VALUE): {item}", file=sys.stderr)
            return 2
        name, raw = item.split("=", 1)
        try:
            overrides[name] = float(raw)
        except ValueError:
            print(f"bad --tol value for {name}: {raw}", file=sys.stderr)
            return 2
    names = SUITES if args.suite == "all" else (args.suite,)
    results = run_suites(names, overrides)
    width = max(len(r.name) for r in results)
    print(f"{'check':<{width}}  {'measured':>12}  {'tolerance':>12}  status")
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failures += not r.passed
        print(f"{r.name:<{width}}  {r.measured:>12.3e}  {r.tolerance:>12.3e}  {status}")
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def generate_datasets(config: RunConfig, data_dir: Path) -> dict:
    """Write one file per source domain plus the target; returns the manifest."""
    spec = config.task
    task = make_task(spec)
    data_dir.mkdir(parents=True, exist_ok=True)
    count = spec.samples_per_class * spec.n_classes
    files = {}
    for domain in [*range(spec.n_domains), TARGET_DOMAIN]:
        name = "target.csv" if domain == TARGET_DOMAIN else f"source_{domain}.csv"
        path = data_dir / name
        data = sample_domain(task, spec, domain, count)
        write_dataset(path, data)
        files[name] = {"rows": count, "sha256": file_sha256(path)}
    manifest = {
        "seed": spec.seed,
        "samples_per_class": spec.samples_per_class,
        "n_classes": spec.n_classes,
        "n_domains": spec.n_domains,
        "violation": spec.violation,
        "violation_angle": spec.violation_angle,
        "files": files,
    }
    with open(data_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def cmd_gen(args) -> int:
    config = load_config(args.config)
    out = Path(args.out) if args.out else Path(config.io.out_dir) / "data"
    manifest = generate_datasets(config, out)
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_task_data(config: RunConfig, data_dir: Path):
    spec = config.task
    train_sets = {}
    checksums = {}
    for d in range(spec.n_domains):
        path = data_dir / f"source_{d}.csv"
        if not path.exists():
            raise ConfigError("io.out_dir", f"dataset file missing: {path} (run `aidgn gen`)")
        ds = read_dataset(path)
        train_sets[d] = (ds.inputs, ds.labels)
        checksums[path.name] = file_sha256(path)
    target_path = data_dir / "target.csv"
    target_set = None
    if target_path.exists():
        ds = read_dataset(target_path)
        target_set = (ds.inputs, ds.labels)
        checksums[target_path.name] = file_sha256(target_path)
    return train_sets, target_set, checksums


_SPLIT_TAG = 303


def run_training(config: RunConfig, data_dir: Path, run_dir: Path, mode: str | None = None) -> dict:
    """Train one arm from on-disk datasets; writes metrics, checkpoints,
    a summary record and (optionally) the training-curve figure."""
    mode = config.mode if mode is None else mode
    full_sets, target_set, checksums = _load_task_data(config, data_dir)

    split_rng = child_rng(config.train.seed, _SPLIT_TAG)
    train_sets, val_x, val_y = {}, [], []
    for d in sorted(full_sets):
        x, y = full_sets[d]
        tx, ty, vx, vy = split_train_val(x, y, config.train.val_fraction, split_rng)
        train_sets[d] = (tx, ty)
        val_x.append(vx)
        val_y.append(vy)
    val_set = (np.concatenate(val_x), np.concatenate(val_y))

    result = train(
        train_sets,
        config.train,
        config.loss,
        mode=mode,
        hidden_dims=config.model.hidden_dims,
        latent_dim=config.model.latent_dim,
        activation=config.model.activation,
        val_set=val_set,
        target_set=target_set,
    )

    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for record in result.history:
            fh.write(record.to_json() + "\n")
    save_checkpoint(run_dir / "checkpoint.npz", result.state)
    save_checkpoint(run_dir / "checkpoint_selected.npz", result.best_state)
    summary = {
        "mode": mode,
        "selected_step": result.best_step,
        "val_acc": result.best_val_acc,
        "target_acc": result.summary.get("target_acc"),
        "target_entropy": result.summary.get("target_entropy"),
        "iterations": config.train.iterations,
        "train_seed": config.train.seed,
        "data_seed": config.task.seed,
        "data_checksums": checksums,
    }
    with open(run_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if config.io.figures:
        from .figures import render_training_curves

        render_training_curves(run_dir / "metrics.jsonl", run_dir / "curves.png")
    return summary


def cmd_train(args) -> int:
    config = load_config(args.config)
    base = Path(config.io.out_dir)
    data_dir = Path(args.data) if args.data else base / "data"
    run_dir = Path(args.out) if args.out else base / f"run_{config.mode}"
    try:
        summary = run_training(config, data_dir, run_dir)
    except NonFiniteGradient as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    kappa = args.kappa
    if args.config:
        kappa = load_config(args.config).loss.kappa
    state = load_checkpoint(args.checkpoint)
    ds = read_dataset(args.data)
    acc, entropy = evaluate(state, ds.inputs, ds.labels, kappa)
    print(json.dumps({"accuracy": acc, "mean_entropy": entropy, "n": int(ds.labels.size)}))
    return 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

ARMS = (("aidgn", "aidgn"), ("erm", "erm_cosine"))

CSV_FIELDS = ("seed", "arm", "val_acc", "target_acc", "mean_entropy",
              "val_std", "target_std", "entropy_std")


def _write_compare_csv(path: Path, rows: list[dict], n_seeds: int) -> None:
    summary_rows = []
    for arm, _ in ARMS:
        arm_rows = [r for r in rows if r["arm"] == arm]
        vals = {k: np.array([r[k] for r in arm_rows]) for k in
                ("val_acc", "target_acc", "mean_entropy")}
        ddof = 1 if len(arm_rows) > 1 else 0
        summary_rows.append({
            "seed": "mean", "arm": arm,
            "val_acc": vals["val_acc"].mean(),
            "target_acc": vals["target_acc"].mean(),
            "mean_entropy": vals["mean_entropy"].mean(),
            "val_std": vals["val_acc"].std(ddof=ddof),
            "target_std": vals["target_acc"].std(ddof=ddof),
            "entropy_std": vals["mean_entropy"].std(ddof=ddof),
        })
    by_seed = {}
    for r in rows:
        by_seed.setdefault(r["seed"], {})[r["arm"]] = r["target_acc"]
    wins = sum(1 for s, d in by_seed.items() if d["aidgn"] >= d["erm"])

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for r in rows:
            writer.writerow({
                "seed": r["seed"], "arm": r["arm"],
                "val_acc": _fmt(r["val_acc"]),
                "target_acc": _fmt(r["target_acc"]),
                "mean_entropy": _fmt(r["mean_entropy"]),
                "val_std": "", "target_std": "", "entropy_std": "",
            })
        for r in summary_rows:
            writer.writerow({k: (r[k] if isinstance(r[k], str) else _fmt(r[k]))
                             for k in CSV_FIELDS})
        writer.writerow({"seed": "wins", "arm": "aidgn", "val_acc": str(wins),
                         "target_acc": str(n_seeds), "mean_entropy": "",
                         "val_std": "", "target_std": "", "entropy_std": ""})


def run_compare(config: RunConfig, seeds: list[int], out_csv: Path) -> dict:
    """Paired runs of the aidgn and erm_cosine arms on identical per-seed data."""
    base = out_csv.parent
    rows = []
    manifest = {"seeds": {}, "arms": [a for a, _ in ARMS]}
    for seed in seeds:
        cfg = config.with_seed(seed)
        seed_dir = base / "seeds" / str(seed)
        data_manifest = generate_datasets(cfg, seed_dir / "data")
        arm_checksums = {}
        for arm, arm_mode in ARMS:
            summary = run_training(cfg, seed_dir / "data", seed_dir / arm, mode=arm_mode)
            arm_checksums[arm] = summary["data_checksums"]
            rows.append({
                "seed": seed,
                "arm": arm,
                "val_acc": summary["val_acc"],
                "target_acc": summary["target_acc"],
                "mean_entropy": summary["target_entropy"],
            })
        manifest["seeds"][str(seed)] = {
            "data": {k: v["sha256"] for k, v in data_manifest["files"].items()},
            "arm_data_checksums": arm_checksums,
        }
        _write_compare_csv(out_csv, rows, n_seeds=len({r["seed"] for r in rows}))
    with open(base / "compare_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if config.io.figures:
        from .figures import render_compare_chart

        render_compare_chart(rows, base / "compare.png")
    return manifest


def cmd_compare(args) -> int:
    config = load_config(args.config)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s != ""]
    except ValueError:
        print(f"bad --seeds list: {args.seeds}", file=sys.stderr)
        return 2
    if not seeds:
        print("need at least one seed", file=sys.stderr)
        return 2
    out_csv = Path(args.out) if args.out else Path(config.io.out_dir) / "compare.csv"
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    try:
        run_compare(config, seeds, out_csv)
    except NonFiniteGradient as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out_csv}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aidgn",
                                     description="angular-invariance DG benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run numeric verification suites")
    p.add_argument("--suite", choices=("all",) + SUITES, default="all")
    p.add_argument("--tol", action="append", metavar="NAME=VALUE",
                   help="override a check tolerance")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen", help="generate the synthetic multi-domain datasets")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="dataset directory (default <io.out_dir>/data)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one arm on generated datasets")
    p.add_argument("--config", required=True)
    p.add_argument("--data", help="dataset directory (default <io.out_dir>/data)")
    p.add_argument("--out", help="run directory (default <io.out_dir>/run_<mode>)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--kappa", type=float, default=110.0)
    p.add_argument("--config", help="read kappa from a config instead")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="paired aidgn-vs-erm runs across seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", required=True, help="comma-separated seed list")
    p.add_argument("--out", help="summary CSV path (default <io.out_dir>/compare.csv)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2
    except AidgnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
