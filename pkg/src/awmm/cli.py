"""Command line front end: ``awmm generate | search | eval | sweep``.

Options come from built-in defaults, then an optional JSON ``--config`` file,
then explicit flags. The fully resolved options are written to
``config.json`` in every output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, metrics
from .data import (MODALITIES, TASKS, SynthConfig, file_sha256, generate, load_csv,
                   split_by_patient, write_csv, write_manifest)
from .errors import DataError
from .model import SHARED, UNSHARED, MultimodalModel, WeightVector
from .search import AUTO, MANUAL_FIXED, MANUAL_UNIFORM, SearchConfig, run_search

log = logging.getLogger("awmm")

GENERATE_DEFAULTS = {"n": 2000, "dims": 8, "strengths": "swe=1.4,se=1.2,b=0.9,doppler=0.9",
                     "rho": 0.0, "prior": 0.5, "sets_per_patient": 2, "seed": 0}
SEARCH_DEFAULTS = {"seed": 0, "k": 10, "iterations": 50, "beta_init": 1.0, "model_lr": 1e-4,
                   "controller_lr": 1e-3, "baseline": "mean-center", "commit": "best",
                   "weighting": AUTO, "fixed_weights": None, "sharing": SHARED,
                   "freeze_policy": False, "hidden": "64,32", "batch_size": 32,
                   "reward_mode": "mean", "split_seed": None}
EVAL_DEFAULTS = {"split": "test", "mode": None, "only_modality": None, "mask": None,
                 "single_masks": False}
SWEEP_DEFAULTS = {**SEARCH_DEFAULTS, "seeds": "0,1", "jobs": 1,
                  "variants": "single-b,single-doppler,single-swe,single-se,voting,"
                              "mwmm,mwmm-sn,awmm,awmm-sn"}

MULTIMODAL_VARIANTS = {
    "mwmm": (UNSHARED, MANUAL_UNIFORM),
    "mwmm-sn": (SHARED, MANUAL_UNIFORM),
    "awmm": (UNSHARED, AUTO),
    "awmm-sn": (SHARED, AUTO),
}


class CLIError(Exception):
    pass


# ---- helpers ------------------------------------------------------------------

def parse_modality_map(text) -> dict:
    if isinstance(text, dict):
        return {k: float(v) for k, v in text.items()}
    out = {}
    for part in str(text).split(","):
        key, _, val = part.partition("=")
        out[key.strip()] = float(val)
    return out


def parse_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return list(text)
    return [p.strip() for p in str(text).split(",") if p.strip()]


def resolve(args, defaults: dict) -> dict:
    opts = dict(defaults)
    if getattr(args, "config", None):
        with open(args.config) as f:
            loaded = json.load(f)
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise CLIError(f"unknown config keys: {sorted(unknown)}")
        opts.update(loaded)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    return opts


def write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def echo_config(out: Path, command: str, opts: dict) -> None:
    write_json(out / "config.json", {"command": command, "version": __version__, "options": opts})


def load_dataset(path, split_seed=None):
    """Dataset directory (``dataset.csv`` + ``manifest.json``) with patient-level splits."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise CLIError(f"{path} has no manifest.json")
    with open(manifest_path) as f:
        manifest = json.load(f)
    csv_path = path / manifest["csv"]
    if file_sha256(csv_path) != manifest["sha256"]:
        raise CLIError(f"checksum mismatch for {csv_path}")
    ds = load_csv(csv_path, {m: int(d) for m, d in manifest["config"]["dims"].items()})
    seed = manifest["config"].get("seed", 0) if split_seed is None else split_seed
    ds.splits = split_by_patient(ds, seed=seed)
    return ds


def search_config(opts: dict, seed=None) -> SearchConfig:
    fixed = opts.get("fixed_weights")
    if fixed is not None and not isinstance(fixed, WeightVector):
        fixed = WeightVector.from_dict(parse_modality_map(fixed))
    return SearchConfig(
        k=int(opts["k"]), outer_iterations=int(opts["iterations"]),
        beta_init=float(opts["beta_init"]), model_lr=float(opts["model_lr"]),
        controller_lr=float(opts["controller_lr"]), baseline=opts["baseline"],
        commit=opts["commit"], seed=int(opts["seed"] if seed is None else seed),
        sharing=opts["sharing"], weighting=opts["weighting"], fixed_weights=fixed,
        freeze_policy=bool(opts["freeze_policy"]),
        hidden=tuple(int(h) for h in parse_list(opts["hidden"])),
        batch_size=int(opts["batch_size"]), reward_mode=opts["reward_mode"])


def write_search_artifacts(out: Path, result) -> None:
    with open(out / "episodes.jsonl", "w") as f:
        for ep in result.episodes:
            f.write(json.dumps(ep.to_dict(), sort_keys=True) + "\n")
    with open(out / "history.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iteration", "selected", "train_loss", "val_acc", "test_acc",
                    *[f"alpha_{t}" for t in TASKS]])
        for h in result.history:
            w.writerow([h["iteration"], h["selected"], repr(h["train_loss"]), repr(h["val_acc"]),
                        repr(h.get("test_acc", float("nan"))),
                        *[repr(h["alpha"][t]) for t in TASKS]])
    result.model.save(out / "checkpoint.json")
    write_json(out / "model_manifest.json", result.model.manifest())
    write_json(out / "weights.json", {"alpha": result.weights.as_dict(),
                                      "epochs_run": result.epochs_run})


# ---- commands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    opts = resolve(args, GENERATE_DEFAULTS)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dims = opts["dims"]
    dims = {m: int(dims) for m in MODALITIES} if not isinstance(dims, (str, dict)) or \
        (isinstance(dims, str) and "=" not in dims) else \
        {m: int(v) for m, v in parse_modality_map(dims).items()}
    config = SynthConfig(n_samples=int(opts["n"]), dims=dims,
                         strengths=parse_modality_map(opts["strengths"]), prior=float(opts["prior"]),
                         rho=float(opts["rho"]), sets_per_patient=int(opts["sets_per_patient"]),
                         seed=int(opts["seed"]))
    ds = generate(config)
    write_csv(ds, out / "dataset.csv")
    write_manifest(config, out / "dataset.csv", out / "manifest.json")
    echo_config(out, "generate", opts)
    return 0


def cmd_search(args) -> int:
    opts = resolve(args, SEARCH_DEFAULTS)
    if args.data is None:
        raise CLIError("search needs --data")
    ds = load_dataset(args.data, opts["split_seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = search_config(opts)
    result = run_search(config, ds)
    write_search_artifacts(out, result)
    opts["data"] = str(args.data)
    echo_config(out, "search", opts)
    a = result.weights.as_dict()
    print("final weights: " + ", ".join(f"{t}={a[t]:.4f}" for t in TASKS))
    return 0


def eval_requests(opts) -> list:
    """(mode, modality, present-modalities, label) tuples requested by the options."""
    reqs = []
    if opts["only_modality"]:
        m = opts["only_modality"]
        if m not in MODALITIES:
            raise CLIError(f"unknown modality {m!r}")
        reqs.append(("branch", m, (m,), f"only-{m}"))
    for mask in opts["mask"] or []:
        present = tuple(x for x in MODALITIES if x in parse_list(mask))
        if not present or len(present) != len(parse_list(mask)):
            raise CLIError(f"bad --mask {mask!r}")
        reqs.append(("mean", None, present, "mask-" + "+".join(present)))
    if opts["single_masks"]:
        reqs += [("mean", None, (m,), f"mask-{m}") for m in MODALITIES]
    if not reqs or opts["mode"]:
        mode = opts["mode"] or "fusion"
        if mode not in ("fusion", "mean"):
            raise CLIError("--mode must be fusion or mean")
        reqs.insert(0, (mode, None, MODALITIES, mode))
    return reqs


def cmd_eval(args) -> int:
    opts = resolve(args, EVAL_DEFAULTS)
    run = Path(args.run)
    ckpt = run / "checkpoint.json"
    if not ckpt.exists():
        raise CLIError(f"no checkpoint in {run}")
    with open(run / "config.json") as f:
        run_cfg = json.load(f)["options"]
    model = MultimodalModel.load(ckpt)
    ds = load_dataset(run_cfg["data"], run_cfg.get("split_seed"))
    out = Path(args.out or run / "eval")
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for mode, modality, present, label in eval_requests(opts):
        batch = ds.batch(ds.splits[opts["split"]], modalities=present)
        meta = {"variant": label, "split": opts["split"], "mode": mode,
                "seed": run_cfg.get("seed"), "modalities": list(present)}
        reports.append(metrics.evaluate(model, batch, mode, modality, metadata=meta))
    metrics.write_json(out / "report.json", reports)
    metrics.write_csv(out / "report.csv", reports)
    echo_config(out, "eval", {**opts, "run": str(run)})
    for r in reports:
        row = r.percent_row()
        print(r.metadata["variant"], " ".join(f"{k}={row[k]}" for k in metrics.METRIC_NAMES))
    return 0


def _variant_config(opts: dict, variant: str, seed: int) -> tuple[SearchConfig, str, str | None]:
    """Search config plus the prediction route used to score the variant."""
    cfg = search_config(opts, seed=seed)
    if variant.startswith("single-"):
        m = variant.split("-", 1)[1]
        cfg.weighting = MANUAL_FIXED
        cfg.fixed_weights = WeightVector.one_hot(m)
        cfg.sharing = SHARED
        cfg.reward_mode, cfg.reward_modality = "branch", m
        return cfg, "branch", m
    sharing, weighting = MULTIMODAL_VARIANTS[variant]
    cfg.sharing, cfg.weighting = sharing, weighting
    cfg.fixed_weights = None
    return cfg, cfg.reward_mode, None


def _run_cell(job):
    data, split_seed, opts, variant, seed, cell = job
    cell = Path(cell)
    cell.mkdir(parents=True, exist_ok=True)
    try:
        ds = load_dataset(data, split_seed)
        cfg, mode, modality = _variant_config(opts, variant, seed)
        write_json(cell / "search_config.json", cfg.to_dict())
        result = run_search(cfg, ds)
        write_search_artifacts(cell, result)
        meta = {"variant": variant, "split": "test", "mode": mode, "seed": seed}
        report = metrics.evaluate(result.model, ds.split("test"), mode, modality, metadata=meta)
        metrics.write_json(cell / "report.json", [report])
        predicted, _ = result.model.predict(ds.split("test"), mode, modality)
        np.save(cell / "test_predictions.npy", predicted, allow_pickle=False)
        return {**report.as_dict(), "status": "ok"}
    except Exception as exc:  # a failed cell must not stop the sweep
        return {"metadata": {"variant": variant, "seed": seed}, "status": f"failed: {exc}"}


def majority_vote(predictions: list) -> np.ndarray:
    """Hard-vote over single-modality predictions; ties go to malignant."""
    votes = np.sum(predictions, axis=0)
    return (2 * votes >= len(predictions)).astype(np.int64)


def cmd_sweep(args) -> int:
    opts = resolve(args, SWEEP_DEFAULTS)
    if args.data is None:
        raise CLIError("sweep needs --data")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in parse_list(opts["seeds"])]
    variants = parse_list(opts["variants"])
    for v in variants:
        if v != "voting" and not v.startswith("single-") and v not in MULTIMODAL_VARIANTS:
            raise CLIError(f"unknown variant {v!r}")
    trained = [v for v in variants if v != "voting"]
    if "voting" in variants:
        trained += [f"single-{m}" for m in MODALITIES if f"single-{m}" not in trained]
    jobs = [(args.data, opts["split_seed"], opts, v, s, str(out / "cells" / v / f"seed{s}"))
            for v in trained for s in seeds]
    if int(opts["jobs"]) > 1:
        with ProcessPoolExecutor(int(opts["jobs"])) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    records = {(j[3], j[4]): r for j, r in zip(jobs, results)}

    if "voting" in variants:
        ds = load_dataset(args.data, opts["split_seed"])
        test = ds.split("test")
        for s in seeds:
            cell = out / "cells" / "voting" / f"seed{s}"
            cell.mkdir(parents=True, exist_ok=True)
            try:
                preds = [np.load(out / "cells" / f"single-{m}" / f"seed{s}" / "test_predictions.npy")
                         for m in MODALITIES]
                counts = metrics.ConfusionCounts.from_predictions(majority_vote(preds), test.labels)
                report = metrics.compute(counts, metadata={"variant": "voting", "split": "test",
                                                           "mode": "vote", "seed": s})
                metrics.write_json(cell / "report.json", [report])
                records[("voting", s)] = {**report.as_dict(), "status": "ok"}
            except Exception as exc:
                records[("voting", s)] = {"metadata": {"variant": "voting", "seed": s},
                                          "status": f"failed: {exc}"}

    rows = [records[(v, s)] for v in variants for s in seeds]
    with open(out / "records.jsonl", "w") as f:
        for r in rows:
            f.write(json.dumps(r, sort_keys=True) + "\n")
    for name in metrics.METRIC_NAMES:
        with open(out / f"table_{name}.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["variant", *[f"seed{s}" for s in seeds], "median"])
            for v in variants:
                vals = [records[(v, s)].get(name) for s in seeds]
                ok = [x for x in vals if x is not None]
                med = f"{100 * float(np.median(ok)):.2f}" if ok else metrics.UNDEFINED
                w.writerow([v, *[metrics.UNDEFINED if x is None else f"{100 * x:.2f}" for x in vals], med])
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["variant", *metrics.METRIC_NAMES])
        for v in variants:
            row = [v]
            for name in metrics.METRIC_NAMES:
                ok = [records[(v, s)][name] for s in seeds if records[(v, s)].get(name) is not None]
                row.append(f"{100 * float(np.median(ok)):.2f}" if ok else metrics.UNDEFINED)
            w.writerow(row)
    echo_config(out, "sweep", {**opts, "data": str(args.data)})
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        print(f"cell {r['metadata']} {r['status']}", file=sys.stderr)
    return 1 if failed else 0


# ---- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="awmm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of options")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")

    g = sub.add_parser("generate", help="write a synthetic dataset")
    common(g)
    g.add_argument("--n", type=int)
    g.add_argument("--dims", help="features per modality, e.g. 8 or b=8,doppler=4,...")
    g.add_argument("--strengths", help="class separation per modality, e.g. swe=1.4,se=1.2,...")
    g.add_argument("--rho", type=float)
    g.add_argument("--prior", type=float)
    g.add_argument("--sets-per-patient", dest="sets_per_patient", type=int)

    def search_flags(sp):
        sp.add_argument("--data", help="dataset directory written by `generate`")
        sp.add_argument("--k", type=int)
        sp.add_argument("--iterations", type=int)
        sp.add_argument("--weighting", choices=[AUTO, MANUAL_UNIFORM, MANUAL_FIXED])
        sp.add_argument("--fixed-weights", dest="fixed_weights", help="b=..,doppler=..,swe=..,se=..,fusion=..")
        sp.add_argument("--sharing", choices=[SHARED, UNSHARED])
        sp.add_argument("--freeze-policy", dest="freeze_policy", action="store_const", const=True)
        sp.add_argument("--beta-init", dest="beta_init", type=float)
        sp.add_argument("--model-lr", dest="model_lr", type=float)
        sp.add_argument("--controller-lr", dest="controller_lr", type=float)
        sp.add_argument("--baseline", choices=["none", "mean-center"])
        sp.add_argument("--commit", choices=["best", "expected"])
        sp.add_argument("--hidden", help="trunk widths, e.g. 64,32")
        sp.add_argument("--batch-size", dest="batch_size", type=int)
        sp.add_argument("--reward-mode", dest="reward_mode", choices=["fusion", "mean"])
        sp.add_argument("--split-seed", dest="split_seed", type=int)

    s = sub.add_parser("search", help="run the weight search on a dataset")
    common(s)
    search_flags(s)

    e = sub.add_parser("eval", help="evaluate a search checkpoint")
    e.add_argument("--config")
    e.add_argument("--run", required=True, help="directory written by `search`")
    e.add_argument("--out")
    e.add_argument("--split", choices=["train", "validation", "test"])
    e.add_argument("--mode", choices=["fusion", "mean"])
    e.add_argument("--only-modality", dest="only_modality", choices=list(MODALITIES))
    e.add_argument("--mask", action="append", help="comma list of modalities kept; repeatable")
    e.add_argument("--single-masks", dest="single_masks", action="store_const", const=True,
                   help="one report per single available modality")

    w = sub.add_parser("sweep", help="train and compare the baseline grid")
    common(w)
    search_flags(w)
    w.add_argument("--seeds", help="comma list of seeds")
    w.add_argument("--jobs", type=int)
    w.add_argument("--variants", help="comma list of variants")
    return p


COMMANDS = {"generate": cmd_generate, "search": cmd_search, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command != "eval" and args.out is None:
        print(f"error: {args.command} needs --out", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (CLIError, DataError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
