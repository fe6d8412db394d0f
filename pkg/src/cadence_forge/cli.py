"""``cadence-forge`` command-line tool.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
Every command that takes ``--out-dir`` writes only inside it and leaves a
``run_manifest.json`` there.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import augment as A
from .errors import ValidationError
from .nn.checkpoint import config_hash
from .rtm import RangeTimeMap, db_to_linear, linear_to_db, read_rtm, write_rtm
from .spectral import CvdConfig, WindowKind, extract_cvd, harmonic_artifact_ratio, write_cvd

log = logging.getLogger("cadence_forge")

SEED_ENV = "CADENCE_FORGE_SEED"
MANIFEST = "run_manifest.json"
INDEX = "index.csv"
DATASET_META = "dataset.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# helpers

def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 42
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def write_csv(path: Path, header: list, rows: list) -> None:
    import io
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def write_manifest(out_dir: Path, args, argv: list, config: dict, started: str,
                   inputs: list, outputs: list) -> None:
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "config": config,
        "config_hash": config_hash(config),
        "seed": args.seed,
        "version": __version__,
        "started_at": started,
        "finished_at": _now(),
        "inputs": [str(p) for p in inputs],
        "outputs": sorted(str(Path(p).relative_to(out_dir)) for p in outputs),
    }
    write_json(out_dir / MANIFEST, manifest)


def _existing(path: str, kind: str = "file") -> Path:
    p = Path(path)
    ok = p.is_file() if kind == "file" else p.is_dir() if kind == "dir" else p.exists()
    if not ok:
        raise ValidationError(f"{kind} not found: {path}")
    return p


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# dataset directories

def save_dataset(out_dir: Path, dataset, num_classes: int, mode: str) -> list:
    from .synth import spec_to_dict
    sample_dir = out_dir / "samples"
    sample_dir.mkdir(parents=True, exist_ok=True)
    rows, written = [], []
    for i, (s, spec, split) in enumerate(zip(dataset.samples, dataset.specs, dataset.splits)):
        name = f"samples/{i:05d}.rtm"
        write_rtm(out_dir / name, s)
        written.append(out_dir / name)
        d = spec_to_dict(spec)
        rows.append([name, s.label, split, s.frames, _fmt(d["cadence_hz"]), _fmt(d["mod_depth"]),
                     _fmt(d["range_center"]), _fmt(d["range_width"]), _fmt(d["range_drift"])])
    write_csv(out_dir / INDEX, ["file", "label", "split", "frames", "cadence_hz", "mod_depth",
                                "range_center", "range_width", "range_drift"], rows)
    write_json(out_dir / DATASET_META, {"num_classes": num_classes, "mode": mode, "seed": dataset.seed,
                                         "samples": len(dataset.samples)})
    return written + [out_dir / INDEX, out_dir / DATASET_META]


def load_dataset(data_dir) -> tuple[dict, dict]:
    """Return ``({split: [RangeTimeMap, ...]}, meta)`` from a ``synth`` output directory."""
    data_dir = _existing(data_dir, "dir")
    index = _existing(str(data_dir / INDEX))
    meta = json.loads(_existing(str(data_dir / DATASET_META)).read_text()) \
        if (data_dir / DATASET_META).is_file() else {}
    splits: dict = {}
    with open(index, newline="") as fh:
        for row in csv.DictReader(fh):
            if "file" not in row or "split" not in row:
                raise ValidationError(f"{index} needs 'file' and 'split' columns")
            rtm = read_rtm(_existing(str(data_dir / row["file"])))
            splits.setdefault(row["split"], []).append(rtm)
    if not splits:
        raise ValidationError(f"{index} lists no samples")
    if "num_classes" not in meta:
        labels = [s.label for group in splits.values() for s in group if s.label is not None]
        meta["num_classes"] = int(max(labels)) + 1 if labels else 0
    return splits, meta


# ---------------------------------------------------------------------------
# experiment configuration

def _coerce(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def build_experiment(args, num_classes: int):
    """Defaults (desk scale) < ``--config`` JSON < ``--set`` overrides < dedicated flags."""
    from .cast.config import ExperimentConfig, desk_config
    exp = desk_config(num_classes=num_classes, seed=args.seed)
    if getattr(args, "config", None):
        path = _existing(args.config)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: top level must be an object")
        exp = ExperimentConfig.from_dict(data, base=exp)
    overrides: dict = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise ValidationError(f"--set expects section.key=value, got {item!r}")
        overrides.setdefault(section, {})[name] = _coerce(value)
    for flag, section, name in (("epochs", "train", "epochs"), ("batch_size", "train", "batch_size"),
                                ("lr", "train", "lr"), ("spatial_size", "preprocess", "spatial_size")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.setdefault(section, {})[name] = value
    if overrides.get("train", {}).get("epochs") is not None:
        epochs = overrides["train"]["epochs"]
        warm = overrides["train"].get("warmup_epochs", exp.train.warmup_epochs)
        if warm >= epochs:
            overrides["train"]["warmup_epochs"] = max(0, epochs - 1)
    # the seed flag governs every stochastic component
    overrides.setdefault("train", {})["seed"] = args.seed
    overrides.setdefault("model", {})["seed"] = args.seed
    overrides.setdefault("model", {})["num_classes"] = num_classes
    try:
        return ExperimentConfig.from_dict(overrides, base=exp)
    except TypeError as e:
        raise ValidationError(str(e)) from None


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args, out_dir: Path) -> tuple[dict, list, list]:
    from .synth import generate_dataset
    if args.classes < 2 or args.per_class < 1:
        raise ValidationError("--classes must be >= 2 and --per-class >= 1")
    ds = generate_dataset(args.classes, args.per_class, seed=args.seed, mode=args.mode,
                          val_fraction=args.val_fraction)
    outputs = save_dataset(out_dir, ds, args.classes, args.mode)
    cfg = {"classes": args.classes, "per_class": args.per_class, "mode": args.mode,
           "val_fraction": args.val_fraction}
    print(f"wrote {len(ds)} samples to {out_dir}")
    return cfg, [], outputs


def _cvd_config(args) -> CvdConfig:
    return CvdConfig(n_fft=args.n_fft, window=WindowKind.parse(args.window), linearize=not args.no_linearize,
                     zero_pad=not args.no_zero_pad)


def cmd_cvd(args, out_dir: Path):
    src = Path(args.input)
    if src.is_dir():
        files = sorted(src.rglob("*.rtm"))
    else:
        files = [_existing(args.input)]
    if not files:
        raise ValidationError(f"no .rtm files under {src}")
    cfg = _cvd_config(args)
    rows, outputs = [], []
    for f in files:
        cvd = extract_cvd(read_rtm(f), cfg)
        dest = out_dir / (f.stem + ".cvd")
        write_cvd(dest, cvd)
        outputs.append(dest)
        energy = cvd.data.max(axis=(0, 2))
        r = int(np.argmax(energy))
        peak = cvd.first_bin + int(np.argmax(cvd.data[:, r, :].max(axis=0)))
        rows.append([f.name, -1 if cvd.label is None else cvd.label, cvd.range_bins, cvd.freq_bins,
                     _fmt(cvd.bin_hz), r, peak, _fmt(peak * cvd.bin_hz)])
    write_csv(out_dir / "cvd_summary.csv", ["file", "label", "range_bins", "freq_bins", "bin_hz",
                                            "peak_range_bin", "peak_cadence_bin", "peak_cadence_hz"], rows)
    outputs.append(out_dir / "cvd_summary.csv")
    config = {"n_fft": cfg.n_fft, "window": cfg.window.value, "linearize": cfg.linearize, "zero_pad": cfg.zero_pad}
    return config, files, outputs


def cmd_artifact_demo(args, out_dir: Optional[Path]):
    window = WindowKind.parse(args.window)
    header = ["m", "f0_hz", "frames", "ratio_db", "ratio_linear", "m_over_4"]
    rows = []
    for m in args.m:
        r_db = harmonic_artifact_ratio(m, args.f0, T=args.frames, linearize=False, window=window)
        r_lin = harmonic_artifact_ratio(m, args.f0, T=args.frames, linearize=True, window=window)
        rows.append([_fmt(m), _fmt(args.f0), args.frames, _fmt(r_db), _fmt(r_lin), _fmt(m / 4.0)])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    outputs = []
    if out_dir is not None:
        write_csv(out_dir / "artifact.csv", header, rows)
        outputs.append(out_dir / "artifact.csv")
    return {"m": list(args.m), "f0": args.f0, "frames": args.frames, "window": window.value}, [], outputs


AUGMENT_CHAIN = ("temporal_warp", "magnitude_warp", "multipath", "antenna_dropout", "spec_augment",
                 "mixup", "cutmix")


def cmd_augment(args, out_dir: Path):
    src = _existing(args.input)
    rtm = read_rtm(src)
    cfg = A.AugmentConfig()
    if args.config:
        data = json.loads(_existing(args.config).read_text())
        cfg = A.AugmentConfig(**{**cfg.to_dict(), **data})
    chain = [c.strip() for c in args.chain.split(",") if c.strip()]
    bad = [c for c in chain if c not in AUGMENT_CHAIN]
    if bad:
        raise ValidationError(f"unknown augmentations {bad}; choose from {list(AUGMENT_CHAIN)}")
    partner = None
    if any(c in ("mixup", "cutmix") for c in chain):
        if not args.partner:
            raise ValidationError("mixup/cutmix need --partner <rtm>")
        partner = read_rtm(_existing(args.partner))
        if partner.data.shape != rtm.data.shape:
            raise ValidationError("partner sample must have the same shape")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))
    x = rtm.data.astype(float)
    C = max(int(rtm.label or 0), int(partner.label or 0) if partner else 0) + 1
    y = np.zeros(C)
    if rtm.label is not None:
        y[rtm.label] = 1.0
    y2 = np.zeros(C)
    if partner is not None and partner.label is not None:
        y2[partner.label] = 1.0
    # masking and dropout remove echo energy, so they act on linear amplitude like multipath
    for name in chain:
        if name == "temporal_warp":
            x = A.temporal_warp(x, cfg.temporal_warp_sigma, rng, cfg.temporal_warp_knots)
        elif name == "magnitude_warp":
            x = linear_to_db(A.magnitude_warp(db_to_linear(x), cfg.mag_warp_sigma, cfg.mag_warp_knots, rng))
        elif name == "multipath":
            x = linear_to_db(A.random_multipath(db_to_linear(x), min(cfg.multipath_max_delay, x.shape[2] - 1),
                                                cfg.multipath_atten, rng))
        elif name == "antenna_dropout":
            x = linear_to_db(A.antenna_dropout(db_to_linear(x), cfg.antenna_dropout_p, rng))
        elif name == "spec_augment":
            x = linear_to_db(A.spec_augment(db_to_linear(x), cfg.spec_freq_masks, cfg.spec_time_masks,
                                            cfg.spec_max_frac, rng))
        elif name == "mixup":
            x, y = A.mixup(x, partner.data, y, y2, cfg.mixup_alpha, rng)
        elif name == "cutmix":
            x, y = A.cutmix(x, partner.data, y, y2, cfg.cutmix_alpha, rng)
    out = RangeTimeMap(data=x.astype(np.float32), frame_rate_hz=rtm.frame_rate_hz, label=rtm.label)
    dest = out_dir / (src.stem + "_aug.rtm")
    write_rtm(dest, out)
    write_json(out_dir / "labels.json", {"soft_label": [float(v) for v in y], "chain": chain})
    inputs = [src] + ([Path(args.partner)] if partner is not None else [])
    return {"chain": chain, "augment": cfg.to_dict()}, inputs, [dest, out_dir / "labels.json"]


def _train_variant(exp, splits):
    from .cast.train import train
    if not splits.get("train"):
        raise ValidationError("dataset has no 'train' split")
    return train(exp, splits["train"], splits.get("val", []),
                 progress=lambda r: log.info("epoch %d loss %.4f val_acc %.4f", r["epoch"], r["train_loss"],
                                             r["val_acc"]))


def cmd_train(args, out_dir: Path):
    from .cast.inference import save_bundle
    from .cast.variants import apply_variant
    splits, meta = load_dataset(args.data_dir)
    exp = apply_variant(args.variant, build_experiment(args, int(meta["num_classes"])))
    bundle = _train_variant(exp, splits)
    paths = save_bundle(bundle, out_dir / "checkpoints")
    write_json(out_dir / "config.json", exp.to_dict())
    write_json(out_dir / "train_log.json", bundle.log)
    top = [{"rank": i + 1, "val_acc": acc, "epoch": ep} for i, (acc, ep, _) in enumerate(bundle.top_k)]
    write_json(out_dir / "metrics.json", {**bundle.metrics, "variant": args.variant, "top_k": top})
    print(json.dumps(bundle.metrics, sort_keys=True))
    outputs = paths + [out_dir / n for n in ("config.json", "train_log.json", "metrics.json")]
    return {"variant": args.variant, "experiment": exp.to_dict()}, [Path(args.data_dir)], outputs


def cmd_eval(args, out_dir: Path):
    from .cast.inference import TTA_VIEWS, load_ensemble, predict_tta_batch
    from .stats import confusion_and_perclass
    members = [m for m in args.members.split(",") if m] if args.members else None
    models, exp, names = load_ensemble(_existing(args.checkpoints, "dir"), members)
    splits, _ = load_dataset(args.data_dir)
    samples = [s for name, group in sorted(splits.items()) for s in group] if args.split == "all" \
        else splits.get(args.split)
    if not samples:
        raise ValidationError(f"split '{args.split}' is empty or missing")
    views = TTA_VIEWS if args.tta else ("original",)
    probs = predict_tta_batch(models, samples, exp, views, seed=args.seed)
    truths = np.array([s.label for s in samples])
    if np.any(truths == None) or np.any(truths < 0):  # noqa: E711
        raise ValidationError("evaluation samples must be labelled")
    preds = probs.argmax(axis=1)
    C = exp.model.num_classes
    rep = confusion_and_perclass(preds, truths.astype(int), C)
    metrics = {"top1": rep.top1, "macro_acc": rep.macro_acc, "n": len(samples), "members": names,
               "tta_views": list(views), "split": args.split}
    write_json(out_dir / "metrics.json", metrics)
    write_csv(out_dir / "per_class.csv", ["class", "support", "accuracy"],
              [[c, int(rep.matrix[c].sum()), _fmt(rep.per_class_acc[c])] for c in range(C)])
    write_csv(out_dir / "confusion.csv", ["true\\pred"] + list(range(C)),
              [[c] + rep.matrix[c].tolist() for c in range(C)])
    write_csv(out_dir / "predictions.csv", ["index", "truth", "pred"] + [f"p{c}" for c in range(C)],
              [[i, int(t), int(p)] + [_fmt(v) for v in row] for i, (t, p, row) in enumerate(zip(truths, preds, probs))])
    print(json.dumps({k: metrics[k] for k in ("top1", "macro_acc", "n")}, sort_keys=True))
    outputs = [out_dir / n for n in ("metrics.json", "per_class.csv", "confusion.csv", "predictions.csv")]
    return {"members": names, "tta": bool(args.tta), "split": args.split}, [Path(args.checkpoints),
                                                                             Path(args.data_dir)], outputs


def _ablate_job(job):
    """Worker: train one (variant, seed) pair; never raises."""
    from dataclasses import replace
    from .cast.variants import apply_variant
    name, seed, base_dict, data_dir = job
    from .cast.config import ExperimentConfig
    try:
        base = ExperimentConfig.from_dict(base_dict)
        base = replace(base, train=replace(base.train, seed=seed), model=replace(base.model, seed=seed))
        exp = apply_variant(name, base)
        splits, _ = load_dataset(data_dir)
        bundle = _train_variant(exp, splits)
        return name, seed, bundle.metrics.get("val_acc_final", float("nan")), "ok", ""
    except Exception as e:  # recorded, the sweep continues
        return name, seed, float("nan"), "error", f"{type(e).__name__}: {e}"


def cmd_ablate(args, out_dir: Path):
    from .cast.variants import VARIANTS, variant_names
    _, meta = load_dataset(args.data_dir)
    base = build_experiment(args, int(meta["num_classes"]))
    names = variant_names() if not args.variants else [v for v in args.variants.split(",") if v]
    unknown = [n for n in names if n not in VARIANTS]
    if unknown:
        raise ValidationError(f"unknown variants {unknown}; choose from {variant_names()}")
    seeds = [args.seed + i for i in range(args.repeats)] if args.seeds is None else args.seeds
    jobs = [(n, s, base.to_dict(), str(args.data_dir)) for n in names for s in seeds]
    workers = max(1, min(args.threads, len(jobs)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_ablate_job, jobs))
    else:
        results = [_ablate_job(j) for j in jobs]
    run_rows = [[n, s, _fmt(acc), status, err] for n, s, acc, status, err in results]
    write_csv(out_dir / "runs.csv", ["variant", "seed", "val_acc", "status", "error"], run_rows)
    table = []
    for n in names:
        accs = [100.0 * acc for m, _, acc, status, _ in results if m == n and status == "ok"]
        failed = sum(1 for m, *_rest in results if m == n and _rest[2] != "ok")
        mean = float(np.mean(accs)) if accs else float("nan")
        std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0 if accs else float("nan")
        status = "ok" if not failed else ("error" if not accs else "partial")
        table.append([n, VARIANTS[n].label, _fmt(mean), _fmt(std), f"{mean:.1f}±{std:.1f}", len(accs), status])
    write_csv(out_dir / "ablation.csv", ["variant", "label", "mean_acc", "std_acc", "mean_pm_std", "n", "status"],
              table)
    for row in table:
        print(f"{row[1]:<48s} {row[4]}  [{row[6]}]")
    config = {"variants": names, "seeds": seeds, "experiment": base.to_dict()}
    return config, [Path(args.data_dir)], [out_dir / "runs.csv", out_dir / "ablation.csv"]


def _read_scores(path) -> np.ndarray:
    text = _existing(path).read_text()
    values = []
    for line in text.replace(",", "\n").splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            if values:
                raise ValidationError(f"{path}: non-numeric value {line!r}") from None
            # a header line
    return np.array(values)


def cmd_ttest(args, out_dir: Optional[Path]):
    from .stats import FoldScores, cohens_d, corrected_paired_ttest, paired_ttest_from_summary
    if args.a and args.b:
        scores = FoldScores(_read_scores(args.a), _read_scores(args.b), rho=args.rho)
        if args.k is not None and args.k != scores.k:
            raise ValidationError(f"--k {args.k} but the score files hold {scores.k} folds")
        res = corrected_paired_ttest(scores)
        d = cohens_d(scores)
        inputs = [Path(args.a), Path(args.b)]
    elif args.mean_diff is not None and args.se is not None:
        if args.k is None:
            raise ValidationError("--k is required with --mean-diff/--se")
        res = paired_ttest_from_summary(args.mean_diff, args.se, args.k, args.rho)
        d = res.mean_diff / res.sd_diff if res.sd_diff > 0 else math.copysign(math.inf, res.mean_diff)
        inputs = []
    else:
        raise ValidationError("give --a and --b score files, or --mean-diff, --se and --k")
    out = {**res.to_dict(), "cohens_d": d}
    print(json.dumps(out, sort_keys=True))
    outputs = []
    if out_dir is not None:
        write_json(out_dir / "ttest.json", out)
        outputs.append(out_dir / "ttest.json")
    return {"k": res.df + 1, "rho": args.rho}, inputs, outputs


def _read_label_column(path, column: str) -> list:
    with open(_existing(path), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise ValidationError(f"{path}: missing column '{column}'")
        try:
            return [int(row[column]) for row in reader]
        except ValueError as e:
            raise ValidationError(f"{path}: {e}") from None


def cmd_confusion(args, out_dir: Path):
    from .stats import confusion_and_perclass, most_confused_submatrix
    preds = _read_label_column(args.predictions, args.pred_column)
    truths = _read_label_column(args.truths or args.predictions, args.truth_column)
    C = args.classes if args.classes else max(preds + truths) + 1
    rep = confusion_and_perclass(preds, truths, C)
    write_csv(out_dir / "confusion.csv", ["true\\pred"] + list(range(C)),
              [[c] + rep.matrix[c].tolist() for c in range(C)])
    write_csv(out_dir / "per_class.csv", ["class", "support", "accuracy"],
              [[c, int(rep.matrix[c].sum()), _fmt(rep.per_class_acc[c])] for c in range(C)])
    outputs = [out_dir / "confusion.csv", out_dir / "per_class.csv"]
    if args.top_confused:
        idx, sub = most_confused_submatrix(rep.matrix, min(args.top_confused, C))
        write_csv(out_dir / "most_confused.csv", ["true\\pred"] + idx,
                  [[c] + sub[i].tolist() for i, c in enumerate(idx)])
        outputs.append(out_dir / "most_confused.csv")
    summary = {"top1": rep.top1, "macro_acc": rep.macro_acc, "classes": C, "n": len(preds)}
    write_json(out_dir / "summary.json", summary)
    outputs.append(out_dir / "summary.json")
    print(json.dumps(summary, sort_keys=True))
    inputs = [Path(args.predictions)] + ([Path(args.truths)] if args.truths else [])
    return {"classes": C, "top_confused": args.top_confused}, inputs, outputs


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cadence-forge", description="Radar gesture toolkit: data, CVDs, CAST training and statistics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, out_required=True):
        sp.add_argument("--seed", type=int, default=None, help=f"random seed (default 42, or ${SEED_ENV})")
        sp.add_argument("--out-dir", required=out_required, default=None)
        sp.add_argument("-v", "--verbose", action="store_true")

    def exp_flags(sp):
        sp.add_argument("--config", help="JSON file with (partial) experiment configuration")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--batch-size", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--spatial-size", type=int)

    sp = sub.add_parser("synth", help="generate a labelled synthetic dataset")
    common(sp)
    sp.add_argument("--classes", type=int, default=8)
    sp.add_argument("--per-class", type=int, default=50)
    sp.add_argument("--mode", choices=("mixed", "cadence", "range"), default="mixed")
    sp.add_argument("--val-fraction", type=float, default=0.1)

    sp = sub.add_parser("cvd", help="extract cadence velocity diagrams from RTM1 files")
    common(sp)
    sp.add_argument("--input", required=True, help="an .rtm file or a directory searched recursively")
    sp.add_argument("--window", default="bh4", help="bh4, hamming or rect")
    sp.add_argument("--n-fft", type=int, default=128)
    sp.add_argument("--no-linearize", action="store_true")
    sp.add_argument("--no-zero-pad", action="store_true")

    sp = sub.add_parser("artifact-demo", help="second-harmonic ratio of FFT-on-dB vs linearized FFT")
    common(sp, out_required=False)
    sp.add_argument("--m", type=float, nargs="+", default=[0.2, 0.4, 0.8])
    sp.add_argument("--f0", type=float, default=2.0)
    sp.add_argument("--frames", type=int, default=39)
    sp.add_argument("--window", default="bh4")

    sp = sub.add_parser("augment", help="apply an augmentation chain to one RTM1 file")
    common(sp)
    sp.add_argument("--input", required=True)
    sp.add_argument("--chain", required=True, help=f"comma-separated, from {','.join(AUGMENT_CHAIN)}")
    sp.add_argument("--partner", help="second sample for mixup/cutmix")
    sp.add_argument("--config", help="JSON AugmentConfig overrides")

    sp = sub.add_parser("train", help="train a CAST variant")
    common(sp)
    exp_flags(sp)
    sp.add_argument("--data-dir", required=True)
    sp.add_argument("--variant", default="full")

    sp = sub.add_parser("eval", help="evaluate a checkpoint ensemble")
    common(sp)
    sp.add_argument("--checkpoints", required=True)
    sp.add_argument("--data-dir", required=True)
    sp.add_argument("--tta", action="store_true", help="average over the five test-time views")
    sp.add_argument("--split", default="val", help="dataset split, or 'all'")
    sp.add_argument("--members", help="comma-separated checkpoint names (default: all but 'final')")

    sp = sub.add_parser("ablate", help="run ablation variants and tabulate accuracy")
    common(sp)
    exp_flags(sp)
    sp.add_argument("--data-dir", required=True)
    sp.add_argument("--variants", help="comma-separated variant names (default: all)")
    sp.add_argument("--repeats", type=int, default=1)
    sp.add_argument("--seeds", type=int, nargs="+")
    sp.add_argument("--threads", type=int, default=1, help="maximum worker processes")

    sp = sub.add_parser("ttest", help="corrected paired t-test on per-fold scores")
    common(sp, out_required=False)
    sp.add_argument("--a", help="CSV/text file of per-fold scores for method A")
    sp.add_argument("--b", help="per-fold scores for method B")
    sp.add_argument("--k", type=int)
    sp.add_argument("--rho", type=float, default=None, help="n_test/n_train (default 1/(k-1))")
    sp.add_argument("--mean-diff", type=float)
    sp.add_argument("--se", type=float, help="uncorrected standard error sd/sqrt(k)")

    sp = sub.add_parser("confusion", help="confusion matrix and per-class accuracy from prediction CSVs")
    common(sp)
    sp.add_argument("--predictions", required=True)
    sp.add_argument("--truths", help="separate CSV with the true labels (default: same file)")
    sp.add_argument("--pred-column", default="pred")
    sp.add_argument("--truth-column", default="truth")
    sp.add_argument("--classes", type=int)
    sp.add_argument("--top-confused", type=int, default=16)
    return p


COMMANDS = {
    "synth": cmd_synth, "cvd": cmd_cvd, "artifact-demo": cmd_artifact_demo, "augment": cmd_augment,
    "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate, "ttest": cmd_ttest, "confusion": cmd_confusion,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.seed is None:
            args.seed = default_seed()
        if args.seed < 0:
            raise ValidationError("--seed must be non-negative")
        if getattr(args, "threads", 1) < 1:
            raise ValidationError("--threads must be >= 1")
        started = _now()
        out_dir = Path(args.out_dir) if args.out_dir else None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
        config, inputs, outputs = COMMANDS[args.command](args, out_dir)
        if out_dir is not None:
            write_manifest(out_dir, args, argv, config, started, inputs, outputs)
        return 0
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
