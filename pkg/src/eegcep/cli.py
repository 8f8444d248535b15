"""Command-line entry point: ``eegcep <subcommand> ...``.

Corpus layout shared by every subcommand: a directory of signal files
(``.csv`` or ``.edf``), each with a sibling label file named
``<stem>.labels.csv``.  Feature files are written as
``<stem>.chNN.feat``, so ``train`` and ``classify`` can work from features
alone and find labels by stem.

Every failure exits with status 1 and a one-line ``error: <stage>: ...``
message on stderr.
"""

from __future__ import annotations

import argparse
import csv
import glob
import logging
import os
import sys
from dataclasses import replace
from typing import Dict, List, Sequence, Tuple

from .config import build_config, read_config_file
from .dynamics import SYSTEMS, FeatureSequence, read_features, write_features
from .evaluate import (DETPoint, EventLabel, SystemResult, det_curve, error_rates, format_report,
                       label_to_epochs, read_labels, write_det_csv, write_labels)
from .ingest import read_signal, write_csv_signal
from .labels import CLASSES
from .models import EPOCH_FRAMES, EpochHypothesis, classify, load_models, save_models, train
from .pipeline import collect_epochs, prepare_corpus, record_features, run_system
from .synth import SynthSpec, benchmark_spec, generate_corpus, load_spec

log = logging.getLogger("eegcep")

LABEL_SUFFIX = ".labels.csv"
HYP_HEADER = ["record", "channel", "epoch", "hypothesis", "score"] + [f"ll_{c}" for c in CLASSES]


class StageError(Exception):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


class _Stage:
    """``with _Stage("train"): ...`` tags any exception with the stage name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, typ, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


# --------------------------------------------------------------------------
# File helpers
# --------------------------------------------------------------------------

def _signal_files(directory: str) -> List[str]:
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"corpus directory not found: {directory}")
    out = [p for p in sorted(glob.glob(os.path.join(directory, "*")))
           if p.lower().endswith((".csv", ".edf")) and not p.endswith(LABEL_SUFFIX)]
    return out


def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _label_path(directory: str, stem: str) -> str:
    return os.path.join(directory, stem + LABEL_SUFFIX)


def load_corpus(directory: str):
    """(record, labels) pairs for every signal file in ``directory``; the
    record id is replaced by the file stem."""
    corpus = []
    for path in _signal_files(directory):
        rec = read_signal(path)
        rec = replace(rec, record_id=_stem(path))
        lab_path = _label_path(directory, _stem(path))
        if not os.path.exists(lab_path):
            raise FileNotFoundError(f"no label file for {path}: expected {lab_path}")
        corpus.append((rec, read_labels(lab_path)))
    return corpus


def _feature_files(directory: str) -> List[Tuple[str, str]]:
    """(record stem, path) of every ``<stem>.chNN.feat`` in ``directory``."""
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"feature directory not found: {directory}")
    out = []
    for path in sorted(glob.glob(os.path.join(directory, "*.feat"))):
        name = os.path.basename(path)[:-len(".feat")]
        stem, _, tag = name.rpartition(".")
        if not stem or not tag.startswith("ch"):
            raise ValueError(f"feature file name not of the form <record>.chNN.feat: {path}")
        out.append((stem, path))
    return out


def _load_feature_corpus(feat_dir: str, label_dir: str | None, system_id: int | None):
    """Feature sequences keyed ``record/channel`` plus, if ``label_dir`` is
    given, per-epoch references for them."""
    seqs: List[FeatureSequence] = []
    refs: Dict[Tuple[str, int], str] = {}
    label_cache: Dict[str, List[EventLabel]] = {}
    for stem, path in _feature_files(feat_dir):
        seq = read_features(path)
        if system_id is not None and seq.system_id != system_id:
            raise ValueError(f"{path}: features are system {seq.system_id}, expected {system_id}")
        key = f"{stem}/{seq.channel_name}"
        if label_dir is not None:
            if stem not in label_cache:
                lab_path = _label_path(label_dir, stem)
                if not os.path.exists(lab_path):
                    raise FileNotFoundError(f"no label file for {path}: expected {lab_path}")
                label_cache[stem] = read_labels(lab_path)
            grid = {seq.channel_name: len(seq) // EPOCH_FRAMES}
            for (_ch, e), lab in label_to_epochs(label_cache[stem], grid).items():
                refs[(key, e)] = lab
        seq.channel_name = key
        seqs.append(seq)
    if not seqs:
        raise ValueError(f"no feature files in {feat_dir}")
    return seqs, refs


def write_hypotheses(hyps: Sequence[EpochHypothesis], path) -> None:
    with open(os.fspath(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HYP_HEADER)
        for h in hyps:
            record, _, channel = h.channel_name.partition("/")
            w.writerow([record, channel, h.epoch_index, h.hypothesis, repr(h.score)]
                       + [repr(h.per_class_loglik[c]) for c in CLASSES])


def read_hypotheses(path) -> List[EpochHypothesis]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"hypothesis file not found: {path}")
    out = []
    with open(os.fspath(path), newline="") as fh:
        rows = csv.reader(fh)
        if next(rows, None) != HYP_HEADER:
            raise ValueError(f"{path}: bad hypothesis header")
        for row in rows:
            ll = {c: float(v) for c, v in zip(CLASSES, row[5:])}
            out.append(EpochHypothesis(f"{row[0]}/{row[1]}", int(row[2]), ll, row[3], float(row[4])))
    return out


def _refs_for(hyps: Sequence[EpochHypothesis], label_dir: str) -> Dict[Tuple[str, int], str]:
    """References on the epoch grid implied by the hypotheses."""
    grids: Dict[str, Dict[str, int]] = {}
    for h in hyps:
        record, _, channel = h.channel_name.partition("/")
        g = grids.setdefault(record, {})
        g[channel] = max(g.get(channel, 0), h.epoch_index + 1)
    refs = {}
    for record, grid in grids.items():
        lab_path = _label_path(label_dir, record)
        if not os.path.exists(lab_path):
            raise FileNotFoundError(f"no label file for record {record}: expected {lab_path}")
        for (ch, e), lab in label_to_epochs(read_labels(lab_path), grid).items():
            refs[(f"{record}/{ch}", e)] = lab
    return refs


def _parse_systems(text: str) -> List[int]:
    try:
        ids = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad system list {text!r}") from None
    bad = [s for s in ids if s not in SYSTEMS]
    if not ids or bad:
        raise argparse.ArgumentTypeError(f"systems must be in 1..16, got {text!r}")
    return ids


def _system_id(text: str) -> int:
    ids = _parse_systems(text)
    if len(ids) != 1:
        raise argparse.ArgumentTypeError(f"expected one system, got {text!r}")
    return ids[0]


def _pipeline_config(args):
    values = {}
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        values.update(read_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = val.strip()
    if getattr(args, "seed", None) is not None:
        values["models.seed"] = args.seed
    return build_config(values)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_synth(args) -> None:
    with _Stage("synth"):
        if args.spec and args.preset == "benchmark":
            raise ValueError("--spec and --preset benchmark are exclusive")
        if args.spec:
            spec = load_spec(args.spec)
        elif args.preset == "benchmark":
            spec = benchmark_spec(0)
        else:
            spec = SynthSpec()
        over = {k: v for k, v in (("duration", args.duration), ("num_channels", args.channels),
                                  ("seed", args.seed)) if v is not None}
        spec = replace(spec, **over).validate()
        os.makedirs(args.out, exist_ok=True)
        for record, labels in generate_corpus(spec, args.records):
            write_csv_signal(record, os.path.join(args.out, record.record_id + ".csv"))
            write_labels(labels, _label_path(args.out, record.record_id))
            print(os.path.join(args.out, record.record_id + ".csv"))


def cmd_features(args) -> None:
    with _Stage("config"):
        cfg = _pipeline_config(args)
    with _Stage("ingest"):
        record = read_signal(args.input)
    with _Stage("features"):
        seqs = record_features(record, args.system, cfg)
        os.makedirs(args.out, exist_ok=True)
        stem = _stem(args.input)
        for i, seq in enumerate(seqs):
            path = os.path.join(args.out, f"{stem}.ch{i:02d}.feat")
            write_features(seq, path)
            print(f"{path}\t{seq.channel_name}\t{len(seq)} frames\tdim {seq.dim}")


def cmd_train(args) -> None:
    with _Stage("config"):
        cfg = _pipeline_config(args)
    with _Stage("load"):
        seqs, refs = _load_feature_corpus(args.features, args.labels, args.system)
        system_id = seqs[0].system_id
    with _Stage("train"):
        models = train(collect_epochs(seqs, refs), cfg.train)
    with _Stage("save"):
        save_models(models, args.out, system_id=system_id)
    print(args.out)


def cmd_classify(args) -> None:
    with _Stage("load"):
        if not os.path.exists(args.models):
            raise FileNotFoundError(f"model file not found: {args.models}")
        models, system_id = load_models(args.models)
        seqs, _ = _load_feature_corpus(args.features, None, system_id)
    with _Stage("classify"):
        hyps = []
        for seq in seqs:
            hyps.extend(classify(models, seq))
        if not hyps:
            raise ValueError("no epochs to score")
        write_hypotheses(hyps, args.out)
    print(args.out)


def cmd_score(args) -> None:
    with _Stage("score"):
        hyps = read_hypotheses(args.hyps)
        if not hyps:
            raise ValueError("no epochs to score")
        rates = error_rates(hyps, _refs_for(hyps, args.labels))
    for p in ("six", "four", "two"):
        print(f"{p}\t{100 * rates[p]:.2f}%")


def cmd_det(args) -> None:
    with _Stage("det"):
        hyps = read_hypotheses(args.hyps)
        if not hyps:
            raise ValueError("no epochs to score")
        points = det_curve(hyps, _refs_for(hyps, args.labels), args.thresholds)
        write_det_csv(points, args.out)
    print(args.out)


def run_experiment_cmd(train_dir: str, eval_dir: str, systems: Sequence[int], out_dir: str,
                       cfg) -> Tuple[str, Dict[int, List[DETPoint]]]:
    """Body of ``experiment``; returns the report text and DET points."""
    with _Stage("ingest"):
        train_corpus = load_corpus(train_dir)
        eval_corpus = load_corpus(eval_dir)
    with _Stage("features"):
        train_set = prepare_corpus(train_corpus, cfg)
        eval_set = prepare_corpus(eval_corpus, cfg)
    if eval_set.num_epochs == 0:
        raise StageError("score", ValueError("no epochs to score"))
    results: List[SystemResult] = []
    dets: Dict[int, List[DETPoint]] = {}
    os.makedirs(out_dir, exist_ok=True)
    for sid in systems:
        with _Stage(f"system {sid}"):
            res = run_system(sid, train_set, eval_set, cfg)
            results.append(res.result)
            dets[sid] = res.det
            write_det_csv(res.det, os.path.join(out_dir, f"det_system{sid:02d}.csv"))
    report = format_report(results)
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(report)
    return report, dets


def cmd_experiment(args) -> None:
    with _Stage("config"):
        cfg = _pipeline_config(args)
    report, _ = run_experiment_cmd(args.train, args.eval, args.systems, args.out, cfg)
    sys.stdout.write(report)


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def _add_config(p, seed=True):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    if seed:
        p.add_argument("--seed", type=int, help="model training seed (models.seed)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eegcep",
                                     description="Cepstral + energy features and GMM-HMM "
                                                 "classification of EEG events.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labelled synthetic corpus")
    p.add_argument("--spec", help="JSON synth spec")
    p.add_argument("--preset", choices=("default", "benchmark"), default="default",
                   help="built-in spec when --spec is not given")
    p.add_argument("--seed", type=int)
    p.add_argument("--records", type=int, default=1)
    p.add_argument("--duration", type=float, help="seconds per record")
    p.add_argument("--channels", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="feature files for one signal file")
    p.add_argument("input", help="signal file (.csv or .edf)")
    p.add_argument("--system", type=_system_id, required=True, help="feature system 1..16")
    p.add_argument("--out", required=True, help="output directory")
    _add_config(p, seed=False)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train one model per class from feature files")
    p.add_argument("--features", required=True, help="directory of .feat files")
    p.add_argument("--labels", required=True, help="directory of <stem>.labels.csv files")
    p.add_argument("--system", type=_system_id, help="reject features from other systems")
    p.add_argument("--out", required=True, help="model file")
    _add_config(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="per-epoch hypotheses for feature files")
    p.add_argument("--models", required=True)
    p.add_argument("--features", required=True, help="directory of .feat files")
    p.add_argument("--out", required=True, help="hypothesis CSV")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("score", help="6/4/2-way error rates of a hypothesis file")
    p.add_argument("--hyps", required=True)
    p.add_argument("--labels", required=True, help="directory of <stem>.labels.csv files")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("det", help="DET curve of a hypothesis file")
    p.add_argument("--hyps", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--thresholds", type=int, help="evenly spaced thresholds (default: every score)")
    p.add_argument("--out", required=True, help="DET CSV")
    p.set_defaults(func=cmd_det)

    p = sub.add_parser("experiment", help="train and score several systems end to end")
    p.add_argument("--train", required=True, help="training corpus directory")
    p.add_argument("--eval", required=True, help="evaluation corpus directory")
    p.add_argument("--systems", type=_parse_systems, required=True, help="comma list, e.g. 1,5,10")
    p.add_argument("--out", required=True, help="directory for report.txt and DET CSVs")
    _add_config(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
