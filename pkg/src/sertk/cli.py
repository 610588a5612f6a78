"""``sertk`` command line: manifest, extract, train, eval, predict.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from sertk import config as cfgmod
from sertk.audio_io import EMOTIONS, Emotion, build_manifest, load_clip, read_manifest_csv, write_manifest_csv
from sertk.dsp import export_spectrogram_csv, export_waveplot_csv
from sertk.errors import ConfigError, DataError, InsufficientClasses, NumericError
from sertk.features import (
    FeatureMatrix,
    analyze,
    apply_zscore,
    extract_clip,
    extract_manifest,
    fisher_score,
    read_features_csv,
    select_top_k,
    write_features_csv,
    write_selection_csv,
)
from sertk.nn.model import load_checkpoint
from sertk.train_eval import Dataset, evaluate, report, run_training, split

log = logging.getLogger("sertk")

EXPECTED_ENTRIES = 2459


def _add_config_args(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key, e.g. train.epochs=10")


def _config(args) -> dict:
    return cfgmod.load_config(args.config, args.set)


def cmd_manifest(args) -> int:
    manifest = build_manifest(args.roots)
    write_manifest_csv(manifest, args.out)
    counts = ", ".join(f"{e.label}:{n}" for e, n in manifest.class_counts.items())
    print(f"entries: {len(manifest)} (expected {EXPECTED_ENTRIES})")
    print(f"classes: {counts}")
    print(f"skipped: calm={manifest.skipped_calm} song={manifest.skipped_song} "
          f"unrecognized={len(manifest.unrecognized)}")
    return 0


def _selection(fm: FeatureMatrix, k: int, path) -> None:
    try:
        scores = fisher_score(fm)
    except InsufficientClasses as exc:
        log.warning("feature scoring skipped: %s", exc)
        return
    write_selection_csv(select_top_k(scores, min(k, len(fm.column_names))), fm.column_names, path)


def cmd_extract(args) -> int:
    cfg = _config(args)
    params = cfgmod.dsp_params(cfg)
    manifest = read_manifest_csv(args.manifest)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fm = extract_manifest(manifest, params, jobs=args.jobs)
    if args.split:
        genders = manifest.genders if cfg["data"]["per_gender"] else None
        plan = split(manifest, cfg["train"]["split_ratio"], cfg["train"]["seed"], True, genders)
        parts = {"train": fm.subset(plan.train_indices), "test": fm.subset(plan.test_indices)}
    else:
        parts = {"features": fm}
    for tag, part in parts.items():
        write_features_csv(part, out / f"{tag}.csv")
        print(f"{tag}: {len(part)} rows x {len(part.column_names)} columns -> {out / f'{tag}.csv'}")
    _selection(parts.get("train", fm), args.select_k, out / "selection.csv")
    if args.debug_spectrogram:
        dbg = out / "debug"
        dbg.mkdir(exist_ok=True)
        for i, e in enumerate(manifest.entries):
            clip = load_clip(e.path, params.sample_rate)
            stem = f"{i:05d}_{Path(e.path).stem}"
            export_spectrogram_csv(analyze(clip, params).power, dbg / f"{stem}_spectrogram.csv")
            export_waveplot_csv(clip, dbg / f"{stem}_waveplot.csv")
    return 0


def cmd_train(args) -> int:
    sets = list(args.set)
    if args.epochs is not None:
        sets.append(f"train.epochs={args.epochs}")
    cfg = cfgmod.load_config(args.config, sets)
    if args.features:
        fm = read_features_csv(args.features)
        genders = fm.genders if cfg["data"]["per_gender"] else None
        plan = split(fm, cfg["train"]["split_ratio"], cfg["train"]["seed"], True, genders)
        train_fm, test_fm = fm.subset(plan.train_indices), fm.subset(plan.test_indices)
    elif args.train and args.test:
        train_fm, test_fm = read_features_csv(args.train), read_features_csv(args.test)
    else:
        raise ConfigError("train needs --features, or both --train and --test")
    n_channels = (len(train_fm.column_names) - 10) // 70
    model_cfg = cfgmod.model_config(cfg, n_channels)

    def progress(epoch, tr, te):
        if args.verbose:
            print(f"epoch {epoch + 1}: train {tr:.4f} test {te:.4f}", flush=True)

    summary = run_training(args.run_dir, train_fm, test_fm, cfg, model_cfg, progress)
    print(f"overall accuracy {summary['overall_accuracy']:.4f} -> {args.run_dir}")
    return 0


def _load(path):
    ck = load_checkpoint(path)
    if "norm_mean" not in ck.extra:
        raise DataError(f"{path}: checkpoint lacks normalization statistics")
    return ck


def cmd_eval(args) -> int:
    ck = _load(args.checkpoint)
    fm = read_features_csv(args.features)
    group = (ck.run_config or {}).get("group", "pooled")
    if group in ("male", "female") and not args.all_rows:
        fm = fm.subset([i for i, g in enumerate(fm.genders) if g == group])
    norm = FeatureMatrix(apply_zscore(fm.rows, ck.extra["norm_mean"], ck.extra["norm_std"]),
                         fm.labels, fm.column_names, fm.genders)
    ev = evaluate(ck.model, Dataset.from_matrix(norm))
    report(args.out_dir, None, ev.confusion)
    for name, a in zip(EMOTIONS, ev.per_class):
        print(f"{name},{'nan' if np.isnan(a) else f'{a:.6f}'}")
    print(f"overall,{ev.overall:.6f}")
    return 0


def cmd_predict(args) -> int:
    ck = _load(args.checkpoint)
    run_cfg = cfgmod.make_config({k: v for k, v in (ck.run_config or {}).items()
                                  if k in cfgmod.DEFAULTS})
    params = cfgmod.dsp_params(run_cfg)
    print("path,emotion,probability")
    for path in args.wavs:
        feats = extract_clip(load_clip(path, params.sample_rate), params=params)
        x = apply_zscore(feats.flat(), ck.extra["norm_mean"], ck.extra["norm_std"])
        fm = FeatureMatrix(x[None], [0], [f"c{i}" for i in range(x.size)])
        ds = Dataset.from_matrix(fm, params.t_max)
        probs = ck.model.predict_proba(ds.seq, ds.glob)[0]
        k = int(np.argmax(probs))
        print(f"{path},{Emotion(k).label},{probs[k]:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    epilog = cfgmod.describe_defaults()
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="sertk", description=__doc__, formatter_class=fmt,
                                     epilog=epilog)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("manifest", help="scan dataset trees into a manifest CSV",
                       formatter_class=fmt, epilog=epilog)
    p.add_argument("roots", nargs="+")
    p.add_argument("--out", default="manifest.csv")
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("extract", help="compute feature CSVs from a manifest",
                       formatter_class=fmt, epilog=epilog)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", action="store_true",
                   help="write train.csv/test.csv using train.split_ratio and train.seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--select-k", type=int, default=1470,
                   help="columns listed in selection.csv (Fisher-score ranking)")
    p.add_argument("--debug-spectrogram", action="store_true",
                   help="also dump per-clip spectrogram and waveplot CSVs")
    _add_config_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train CNN-LSTM model(s) into a run directory",
                       formatter_class=fmt, epilog=epilog)
    p.add_argument("--features", help="single feature file, split with train.split_ratio")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--epochs", type=int, help="shorthand for --set train.epochs=N")
    _add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a feature file",
                       formatter_class=fmt, epilog=epilog)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--all-rows", action="store_true",
                   help="do not restrict a per-gender checkpoint to its own gender")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="label WAV files with a checkpoint",
                       formatter_class=fmt, epilog=epilog)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("wavs", nargs="+")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
