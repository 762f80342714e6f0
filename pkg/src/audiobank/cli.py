"""``audiobank`` command-line interface.

Exit status: 0 on success, 2 for usage/configuration errors (including bank
fingerprint mismatches), 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import audio_io, evaluation
from .bank import DetectorBank, build_bank, split_bank_size
from .classify import KnnClassifier, LabeledSet, SvmConfig, svm_train
from .config import ConfigError, PipelineConfig
from .featurize import check_fingerprint, feature_matrix, read_feature_csv, write_feature_csv
from .nmf import NmfModel, nmf_encode, nmf_fit
from .pipeline import FingerprintMismatch, signal_field
from .spectrogram import compute_spectrogram, write_binary, write_csv

log = logging.getLogger("audiobank")


class UsageError(Exception):
    pass


def _parse_set(pairs):
    out = {}
    for item in pairs or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _config(args, **overrides) -> PipelineConfig:
    values = _parse_set(getattr(args, "set", None))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.load(getattr(args, "config", None), values)


def _dump_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _fields_for(clips, cfg, jobs):
    return evaluation.FieldCache(clips, cfg.features(), jobs).fields


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    cfg = _config(args)
    specs = audio_io.default_class_specs()
    counts = args.counts or cfg["synth.counts"] or list(audio_io.CLASS_COUNTS)
    if isinstance(counts, int):
        counts = [counts] * len(specs)
    if len(counts) == 1:
        counts = counts * len(specs)
    clips = audio_io.synth_corpus(specs, counts, args.seed)
    out = Path(args.out)
    manifest = audio_io.write_corpus(clips, out)
    _dump_json(out / "classes.json", audio_io.specs_to_json(specs))
    print(f"wrote {len(clips)} clips to {manifest}")


def cmd_spectrogram(args):
    cfg = _config(args)
    fc = cfg.features()
    sig = audio_io.load_wav(args.wav)
    if not args.no_decimate and fc.decimation > 1:
        sig = audio_io.decimate(sig, fc.decimation)
    spec = compute_spectrogram(sig, fc.spectrogram)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        write_csv(args.out, spec.values)
    else:
        write_binary(args.out, spec.values)
    print(f"{spec.values.shape[0]}x{spec.values.shape[1]} spectrogram -> {args.out}")


def cmd_bank_build(args):
    cfg = _config(args, **{"bank.n_per_class": args.nd})
    clips = audio_io.read_manifest(args.manifest)
    fields = _fields_for(clips, cfg, args.jobs)
    n_classes = max(c.class_id for c in clips) + 1
    training = {c: [] for c in range(n_classes)}
    names = [""] * n_classes
    for clip, f in zip(clips, fields):
        training[clip.class_id].append((clip.clip_id, f))
        names[clip.class_id] = clip.class_name
    exp = cfg.experiment(args.seed)
    per_class = exp.n_per_class
    if exp.bank_size is not None:
        per_class = split_bank_size(exp.bank_size, n_classes, args.seed)
    bank = build_bank(training, per_class, exp.features, seed=args.seed, window=exp.window,
                      time_stride=exp.time_stride, class_names=names)
    path = bank.save(args.out)
    print(f"bank of {len(bank)} detectors -> {path}")


def cmd_bank_inspect(args):
    bank = DetectorBank.load(args.bank)
    summary = {
        "N_c": bank.n_classes,
        "N_d": bank.n_per_class,
        "N_D": len(bank),
        "window": list(bank.window),
        "fingerprint": bank.fingerprint,
        "class_names": bank.class_names,
        "per_class": list(bank.per_class),
        "sources": sorted(bank.sources),
    }
    print(json.dumps(summary, indent=1, sort_keys=True))


def cmd_featurize(args):
    cfg = _config(args)
    bank = DetectorBank.load(args.bank)
    check_fingerprint(bank, cfg.features())
    clips = audio_io.read_manifest(args.manifest)
    X = feature_matrix(_fields_for(clips, cfg, args.jobs), bank, jobs=args.jobs)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_feature_csv(args.out, [c.clip_id for c in clips], [c.class_id for c in clips], X)
    print(f"{X.shape[0]} x {X.shape[1]} features -> {args.out}")


def cmd_nmf_fit(args):
    cfg = _config(args, **{"nmf.rank": args.rank})
    ids, labels, X = read_feature_csv(args.features)
    model, H = nmf_fit(X.T, cfg.nmf(args.seed))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    model.save(args.out)
    if args.codes:
        write_feature_csv(args.codes, ids, labels, H.T)
    print(f"rank-{model.rank} basis after {model.n_iter} iterations, objective {model.objective:.6g}")


def cmd_nmf_encode(args):
    cfg = _config(args)
    model = NmfModel.load(args.model)
    ids, labels, X = read_feature_csv(args.features)
    codes = nmf_encode(X.T, model, cfg.nmf(args.seed))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_feature_csv(args.out, ids, labels, np.atleast_2d(codes.T))
    print(f"{len(ids)} encodings -> {args.out}")


def cmd_train(args):
    cfg = _config(args, **{"classifier.name": args.classifier})
    ids, labels, X = read_feature_csv(args.features)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = cfg["classifier.name"]
    if name == "knn":
        # a kNN model is its training set
        KnnClassifier(cfg["knn.k"]).fit(X, labels)
        write_feature_csv(out / "train.csv", ids, labels, X)
        _dump_json(out / "model.json", {"classifier": "knn", "k": cfg["knn.k"], "train": "train.csv"})
    else:
        prefix = "svm_a" if name == "svm-a" else "svm_o"
        svm_cfg = SvmConfig(C=cfg[f"{prefix}.C"], sigma=cfg[f"{prefix}.sigma"],
                            scheme="ova" if name == "svm-a" else "ovo",
                            tol=cfg["svm.tol"], max_passes=cfg["svm.max_passes"])
        svm_train(LabeledSet(X, labels), svm_cfg, args.seed).save(out)
    print(f"trained {name} on {len(ids)} samples -> {out}")


def cmd_evaluate(args):
    cfg = _config(args, **{"classifier.name": args.classifier, "experiment.runs": args.runs,
                           "nmf.enabled": True if args.nmf else None})
    exp = cfg.experiment(args.seed, jobs=args.jobs)
    clips = audio_io.read_manifest(args.manifest)
    report = evaluation.run_experiment(exp, clips)
    report["effective_config"] = cfg.to_dict()
    _dump_json(args.out, report)
    print(f"{exp.classifier}: mean accuracy {report['mean']:.4f} (std {report['std']:.4f}) -> {args.out}")


def cmd_sweep(args):
    cfg = _config(args, **{"classifier.name": args.classifier, "experiment.runs": args.runs})
    values = [json.loads(v) for v in args.values.split(",")]
    exp = cfg.experiment(args.seed, jobs=args.jobs, sweep_axis=args.axis, sweep_values=tuple(values))
    clips = audio_io.read_manifest(args.manifest)
    rows = evaluation.run_sweep(exp, clips)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "sweep.json", {"axis": args.axis, "rows": rows, "config": exp.to_dict(),
                                    "effective_config": cfg.to_dict()})
    evaluation.write_sweep_csv(out / "sweep.csv", args.axis, rows)
    print(f"{len(rows)} sweep rows -> {out / 'sweep.csv'}")


def cmd_report(args):
    report = json.loads(Path(args.report).read_text())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if "rows" in report:
        evaluation.write_sweep_csv(out / "sweep.csv", report["axis"], report["rows"])
    else:
        evaluation.write_runs_csv(out / "runs.csv", report)
        for arm, summary in report["arms"].items():
            evaluation.write_confusion_csv(out / f"confusion_{arm}.csv", summary["confusion"], report["class_names"])
    print(f"tables -> {out}")


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with flat dotted keys")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--jobs", type=int, default=1, help="parallelism cap")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="audiobank", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write the synthetic corpus and manifest")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--counts", type=lambda v: [int(x) for x in v.split(",")], help="per-class counts, or one count for all")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("spectrogram", parents=[common], help="WAV -> spectrogram CSV or binary")
    s.add_argument("wav")
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("csv", "bin"), default="csv")
    s.add_argument("--no-decimate", action="store_true")
    s.set_defaults(func=cmd_spectrogram)

    s = sub.add_parser("bank", help="detector bank operations")
    bsub = s.add_subparsers(dest="bank_command", required=True)
    b = bsub.add_parser("build", parents=[common])
    b.add_argument("--manifest", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--seed", type=int, required=True)
    b.add_argument("--nd", type=int, help="detectors per class")
    b.set_defaults(func=cmd_bank_build)
    b = bsub.add_parser("inspect", parents=[common])
    b.add_argument("bank")
    b.set_defaults(func=cmd_bank_inspect)

    s = sub.add_parser("featurize", parents=[common], help="manifest + bank -> feature CSV")
    s.add_argument("--manifest", required=True)
    s.add_argument("--bank", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_featurize)

    s = sub.add_parser("nmf", help="non-negative factorization of feature CSVs")
    nsub = s.add_subparsers(dest="nmf_command", required=True)
    n = nsub.add_parser("fit", parents=[common])
    n.add_argument("--features", required=True)
    n.add_argument("--out", required=True, help="model prefix (.bin + .json)")
    n.add_argument("--seed", type=int, required=True)
    n.add_argument("--rank", type=int)
    n.add_argument("--codes", help="also write training codes CSV")
    n.set_defaults(func=cmd_nmf_fit)
    n = nsub.add_parser("encode", parents=[common])
    n.add_argument("--features", required=True)
    n.add_argument("--model", required=True)
    n.add_argument("--out", required=True)
    n.add_argument("--seed", type=int, required=True)
    n.set_defaults(func=cmd_nmf_encode)

    s = sub.add_parser("train", parents=[common], help="train a classifier on a feature CSV")
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--classifier", choices=evaluation.CLASSIFIERS)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="repeated train/test experiment")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="report JSON path")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--runs", type=int)
    s.add_argument("--classifier", choices=evaluation.CLASSIFIERS)
    s.add_argument("--nmf", action="store_true", help="also evaluate NMF codes")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", parents=[common], help="experiment over one axis")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--axis", required=True, choices=evaluation.SWEEP_AXES[1:])
    s.add_argument("--values", required=True, help="comma-separated axis values")
    s.add_argument("--runs", type=int)
    s.add_argument("--classifier", choices=evaluation.CLASSIFIERS)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("report", parents=[common], help="report JSON -> CSV tables")
    s.add_argument("report")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, FingerprintMismatch, UsageError) as exc:
        print(f"audiobank: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic contract
        print(f"audiobank: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
