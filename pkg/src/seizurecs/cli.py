"""Command-line entry point: ``seizurecs <command> ...``.

Every artifact-producing command writes a ``manifest.json`` next to its
outputs; ``seizurecs rerun manifest.json`` replays it.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .compression import check_ratio, export_matrix, parse_ratio
from .data.edf import write_edf
from .data.recording import load_subject, write_annotations
from .data.synth import desk_subject, synth_eeg
from .data.windows import WindowedDataset, apply_normalization, build_dataset, load_dataset, save_dataset
from .errors import ConfigError, ContractError, SeizureCSError
from .training import TrainConfig, ModelBundle, cross_validate, grid_search, write_log

logger = logging.getLogger("seizurecs")

EDF_EPOCH = dt.datetime(2000, 1, 1)
MANIFEST_NAME = "manifest.json"


# -- manifest -----------------------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def hash_inputs(*paths) -> dict[str, str]:
    out = {}
    for p in paths:
        if p is None:
            continue
        p = Path(p)
        files = sorted(f for f in p.rglob("*") if f.is_file() and f.name != MANIFEST_NAME) if p.is_dir() else [p]
        for f in files:
            out[str(f)] = _sha256(f)
    return out


def write_manifest(out_dir: Path, command: str, argv: list[str], config: dict, inputs: dict, seed, outputs, wall: float) -> Path:
    manifest = {
        "command": command,
        "argv": argv,
        "config": config,
        "input_hashes": inputs,
        "seed": seed,
        "tool_version": __version__,
        "outputs": [str(p) for p in outputs],
        "wall_seconds": wall,
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# -- input helpers ------------------------------------------------------------------


def load_windows(path) -> WindowedDataset:
    """A dataset container file or a subject directory of EDF files."""
    path = Path(path)
    if path.is_dir():
        return build_dataset(load_subject(path))
    if not path.exists():
        raise ConfigError(f"input {path} does not exist")
    return load_dataset(path)


def _parse_seizures(text: str | None) -> list[tuple[float, float]]:
    """``"60:62,90:91.5"`` in minutes -> ``[(3600, 3720), (5400, 5490)]`` seconds."""
    if not text:
        return []
    out = []
    for item in text.split(","):
        start, sep, end = item.partition(":")
        if not sep:
            raise ConfigError(f"seizure {item!r} is not START:END in minutes")
        try:
            out.append((float(start) * 60.0, float(end) * 60.0))
        except ValueError:
            raise ConfigError(f"seizure {item!r} is not numeric") from None
    return out


def _threads(requested: int) -> int:
    cap = os.environ.get("C2SP_THREADS")
    if cap is None:
        return max(1, requested)
    try:
        return max(1, min(requested, int(cap)))
    except ValueError:
        raise ConfigError(f"C2SP_THREADS must be an integer, got {cap!r}") from None


# -- commands -----------------------------------------------------------------------


def cmd_synth(args) -> tuple[dict, list[Path], list]:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.desk:
        recs = desk_subject(args.seed, n_channels=args.channels, n_lead=args.desk)
    else:
        if args.minutes is None:
            raise ConfigError("--minutes is required unless --desk is given")
        if args.minutes <= 0:
            raise ConfigError("--minutes must be positive; an empty recording cannot be written")
        recs = [synth_eeg(args.seed, args.channels, args.minutes, seizures=_parse_seizures(args.seizures))]
    outputs = []
    for rec in recs:
        path = out / f"{rec.id}.edf"
        write_edf(path, rec, start=EDF_EPOCH + dt.timedelta(seconds=rec.start_s))
        outputs.append(path)
    write_annotations(out / "annotations.csv", recs)
    outputs.append(out / "annotations.csv")
    config = {"seed": args.seed, "channels": args.channels, "minutes": args.minutes, "seizures": args.seizures, "desk": args.desk}
    return config, outputs, []


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig.from_text(Path(args.config).read_text()) if args.config else TrainConfig()
    overrides = {
        "ratio": args.ratio,
        "lam": args.lam,
        "mode": args.mode,
        "epochs": args.epochs,
        "seed": args.seed,
        "lr": args.lr,
        "batch_size": args.batch_size,
        "filters_stem": args.filters_stem,
        "size_fc": args.size_fc,
        "filters_recon": args.filters_recon,
        "selection": args.selection,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "ratio" in overrides:
        overrides["ratio"] = parse_ratio(overrides["ratio"])
    return replace(cfg, **overrides)


def cmd_train(args) -> tuple[dict, list[Path], list]:
    cfg = _train_config(args)
    check_ratio(cfg.ratio)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = load_windows(args.data)
    logger.info("dataset: %d windows %s", len(ds), ds.class_counts())
    folds = None if args.folds is None else [int(f) for f in args.folds.split(",")]
    jobs = _threads(args.jobs)
    if args.budget is not None:
        result = grid_search(ds, cfg, budget=args.budget, run_cv=False)
        with open(out / "grid.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lr", "filters_stem", "size_fc", "batch_size", "val_accuracy"])
            for e in result.entries:
                c = e.config
                w.writerow([repr(float(c.lr)), c.filters_stem, c.size_fc, c.batch_size, repr(float(e.val_accuracy))])
        cfg = result.best
    cv = cross_validate(ds, cfg, folds=folds, jobs=jobs, out_dir=out)
    report_path = out / "report.csv"
    cv.report.to_csv(report_path)
    (out / "config.txt").write_text(cfg.to_text())
    outputs = [report_path, out / "config.txt"]
    for r in cv.folds:
        outputs += [out / f"fold{r.bundle.fold}.c2spmodel", out / f"fold{r.bundle.fold}_log.csv"]
    if args.budget is not None:
        outputs.append(out / "grid.csv")
    summary = cv.report.summary()
    for name, (mean, std) in summary.items():
        if mean is not None:
            print(f"{name}: {mean:.4f} +/- {std:.4f}")
    return {k: str(v) for k, v in cfg.to_dict().items()}, outputs, [args.data, args.config]


def _bundle_and_windows(args) -> tuple[ModelBundle, WindowedDataset]:
    bundle = ModelBundle.load(args.model)
    ds = load_windows(args.input)
    if ds.n_samples != bundle.n_samples or ds.n_channels != bundle.channels:
        raise ContractError(
            f"model expects {bundle.n_samples} samples x {bundle.channels} channels per window, "
            f"input has {ds.n_samples} x {ds.n_channels}"
        )
    return bundle, ds


def _normalized_input(bundle: ModelBundle, ds: WindowedDataset) -> np.ndarray:
    if bundle.norm_mean is not None:
        ds = apply_normalization(ds, bundle.norm_mean, bundle.norm_std)
    return ds.channels_first()


def cmd_compress(args) -> tuple[dict, list[Path], list]:
    bundle, ds = _bundle_and_windows(args)
    z = bundle.compress(_normalized_input(bundle, ds))
    save_dataset(replace(ds, windows=z.transpose(0, 2, 1), start_s=None), args.out)
    return {"model": args.model}, [Path(args.out)], [args.model, args.input]


def cmd_reconstruct(args) -> tuple[dict, list[Path], list]:
    bundle = ModelBundle.load(args.model)
    z = load_dataset(args.input)
    if z.n_samples != bundle.n_compressed or z.n_channels != bundle.channels:
        raise ContractError(
            f"model expects compressed windows of {bundle.n_compressed} x {bundle.channels}, "
            f"input has {z.n_samples} x {z.n_channels}"
        )
    x_hat = bundle.reconstruct_compressed(z.channels_first()).transpose(0, 2, 1)
    if bundle.norm_mean is not None:
        x_hat = x_hat * bundle.norm_std + bundle.norm_mean
    save_dataset(replace(z, windows=x_hat), args.out)
    return {"model": args.model}, [Path(args.out)], [args.model, args.input]


def cmd_predict(args) -> tuple[dict, list[Path], list]:
    bundle, ds = _bundle_and_windows(args)
    probs = bundle.predict_proba(_normalized_input(bundle, ds))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "recording_id", "start_sample", "label", "p_interictal", "p_preictal"])
        for i, (p0, p1) in enumerate(probs):
            w.writerow([i, ds.recording_ids[ds.recording_index[i]], int(ds.start_sample[i]), int(ds.labels[i]), repr(float(p0)), repr(float(p1))])
    return {"model": args.model}, [Path(args.out)], [args.model, args.input]


def cmd_export_matrix(args) -> tuple[dict, list[Path], list]:
    bundle = ModelBundle.load(args.model)
    export_matrix(bundle.compression, args.out)
    return {"model": args.model}, [Path(args.out)], [args.model]


def cmd_dataset(args) -> tuple[dict, list[Path], list]:
    ds = build_dataset(load_subject(args.data))
    save_dataset(ds, args.out)
    print(f"{len(ds)} windows: {ds.class_counts()}")
    return {}, [Path(args.out)], [args.data]


COMMANDS = {
    "synth": cmd_synth,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "compress": cmd_compress,
    "reconstruct": cmd_reconstruct,
    "predict": cmd_predict,
    "export-matrix": cmd_export_matrix,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seizurecs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic EEG as EDF plus annotations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--minutes", type=float)
    p.add_argument("--seizures", help="START:END pairs in minutes, comma separated")
    p.add_argument("--desk", type=int, metavar="N_LEAD", help="write a multi-file subject with N_LEAD lead seizures")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("dataset", help="window a subject directory into a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="five-fold joint training")
    p.add_argument("--data", required=True, help="subject directory or dataset file")
    p.add_argument("--ratio", help="compression ratio as a fraction, e.g. 1/8")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mode", choices=("float", "binary"))
    p.add_argument("--config", help="key = value training configuration")
    p.add_argument("--budget", type=int, help="sweep this many grid points before cross-validation")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--filters-stem", type=int)
    p.add_argument("--size-fc", type=int)
    p.add_argument("--filters-recon", type=int)
    p.add_argument("--selection", choices=("best", "final"))
    p.add_argument("--folds", help="comma-separated subset of folds to run")
    p.add_argument("--jobs", type=int, default=1, help="folds trained in parallel (capped by C2SP_THREADS)")
    p.add_argument("--out", required=True)

    for name, help_text in (
        ("compress", "compress windows with a trained matrix"),
        ("predict", "per-window class probabilities as CSV"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", required=True)
        p.add_argument("--in", dest="input", required=True, help="dataset file or subject directory")
        p.add_argument("--out", required=True)
    p = sub.add_parser("reconstruct", help="decode compressed windows")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True, help="compressed dataset file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("export-matrix", help="write the compression matrix file")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("rerun", help="replay the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


def run(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "rerun":
        try:
            manifest = json.loads(Path(args.manifest).read_text())
            replay = manifest["argv"]
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read manifest {args.manifest}: {exc}") from None
        return run(replay)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        config, outputs, inputs = COMMANDS[args.command](args)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out_dir = Path(args.out) if Path(args.out).is_dir() else Path(args.out).parent
    write_manifest(
        out_dir,
        args.command,
        list(argv),
        config,
        hash_inputs(*inputs),
        getattr(args, "seed", None),
        outputs,
        time.perf_counter() - t0,
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except SeizureCSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except MemoryError:
        print("error: out of memory", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
