"""Scoring of epoch hypotheses: 6/4/2-way error rates and DET curves."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .errors import ParseError
from .labels import BACKGROUND_CLASSES, BCKG, CLASSES, RARITY_ORDER, TARG, TARGET_CLASSES

PARADIGMS = ("six", "four", "two")
LABEL_HEADER = ["channel", "start", "stop", "label"]
DET_HEADER = ["threshold", "p_fa", "p_det", "dev_fa", "dev_det"]

Cell = Tuple[str, int]


@dataclass(frozen=True)
class EventLabel:
    channel_name: str
    start_time: float
    stop_time: float
    label: str

    def __post_init__(self):
        if not self.start_time < self.stop_time:
            raise ValueError(f"label needs start < stop, got {self.start_time}..{self.stop_time}")
        if self.label not in CLASSES:
            raise ValueError(f"unknown class {self.label!r}")


@dataclass(frozen=True)
class DETPoint:
    threshold: float
    p_detection: float
    p_false_alarm: float

    @property
    def p_miss(self) -> float:
        return 1.0 - self.p_detection


def collapse(label: str, paradigm: str) -> str:
    if label not in CLASSES:
        raise ValueError(f"unknown class {label!r}")
    if paradigm == "six":
        return label
    if paradigm == "four":
        return BCKG if label in BACKGROUND_CLASSES else label
    if paradigm == "two":
        return TARG if label in TARGET_CLASSES else BCKG
    raise ValueError(f"unknown paradigm {paradigm!r}; expected one of {PARADIGMS}")


# --------------------------------------------------------------------------
# Labels
# --------------------------------------------------------------------------

def read_labels(path) -> List[EventLabel]:
    """Read a ``channel,start,stop,label`` CSV (header row optional)."""
    out = []
    with open(os.fspath(path), newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            row = [c.strip() for c in row]
            if lineno == 1 and row == LABEL_HEADER:
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields, found {len(row)}")
            channel, start, stop, label = row
            if label not in CLASSES:
                raise ParseError(f"{path}:{lineno}: unknown class {label!r}")
            try:
                out.append(EventLabel(channel, float(start), float(stop), label))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return out


def write_labels(labels: Iterable[EventLabel], path) -> None:
    with open(os.fspath(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LABEL_HEADER)
        for lab in labels:
            w.writerow([lab.channel_name, repr(lab.start_time), repr(lab.stop_time), lab.label])


def label_to_epochs(labels: Iterable[EventLabel], epoch_grid: Mapping[str, int],
                    epoch_dur: float = 1.0) -> Dict[Cell, str]:
    """Reference class for every (channel, epoch) cell.

    ``epoch_grid`` gives the number of epochs per channel; epoch ``e`` spans
    ``[e*epoch_dur, (e+1)*epoch_dur)``.  The class with the largest total
    overlap wins, ties going to the rarer class.  Unlabelled time does not
    vote; a cell with no overlapping label is BCKG.
    """
    overlap: Dict[Cell, Dict[str, float]] = {}
    for lab in labels:
        n = epoch_grid.get(lab.channel_name)
        if n is None:
            continue
        first = max(0, int(np.floor(lab.start_time / epoch_dur)))
        last = min(n - 1, int(np.ceil(lab.stop_time / epoch_dur)) - 1)
        for e in range(first, last + 1):
            ov = min(lab.stop_time, (e + 1) * epoch_dur) - max(lab.start_time, e * epoch_dur)
            if ov > 0:
                cell = overlap.setdefault((lab.channel_name, e), {})
                cell[lab.label] = cell.get(lab.label, 0.0) + ov

    rank = {c: i for i, c in enumerate(RARITY_ORDER)}
    refs = {}
    for channel, n in epoch_grid.items():
        for e in range(n):
            votes = overlap.get((channel, e))
            if not votes:
                refs[(channel, e)] = BCKG
            else:
                refs[(channel, e)] = min(votes, key=lambda c: (-votes[c], rank[c]))
    return refs


# --------------------------------------------------------------------------
# Error rates
# --------------------------------------------------------------------------

def _align(hyps, refs: Mapping[Cell, str]):
    hyp_cells = {(h.channel_name, h.epoch_index): h for h in hyps}
    if len(hyp_cells) != len(hyps):
        raise ValueError("duplicate (channel, epoch) cells among hypotheses")
    missing_ref = sorted(set(hyp_cells) - set(refs))
    missing_hyp = sorted(set(refs) - set(hyp_cells))
    if missing_ref or missing_hyp:
        raise ValueError(f"misaligned cells: no reference for {missing_ref[:10]}, "
                         f"no hypothesis for {missing_hyp[:10]}")
    return [(hyp_cells[c], refs[c]) for c in sorted(hyp_cells)]


def error_rate(hyps, refs: Mapping[Cell, str], paradigm: str) -> float:
    """Fraction of epochs whose collapsed hypothesis differs from the
    collapsed reference."""
    pairs = _align(hyps, refs)
    if not pairs:
        raise ValueError("no epochs to score")
    wrong = sum(collapse(h.hypothesis, paradigm) != collapse(r, paradigm) for h, r in pairs)
    return wrong / len(pairs)


def error_rates(hyps, refs: Mapping[Cell, str]) -> Dict[str, float]:
    return {p: error_rate(hyps, refs, p) for p in PARADIGMS}


# --------------------------------------------------------------------------
# DET
# --------------------------------------------------------------------------

def det_points(target_scores, background_scores,
               num_thresholds: Optional[int] = None) -> List[DETPoint]:
    """DET operating points from raw score arrays.

    Without ``num_thresholds`` every distinct score is a threshold, plus one
    above the maximum; otherwise ``num_thresholds`` evenly spaced thresholds
    run from just below the minimum to just above the maximum.  Detection
    and false alarm are P(score >= threshold) for each group.
    """
    tgt = np.sort(np.asarray(target_scores, dtype=np.float64))
    bkg = np.sort(np.asarray(background_scores, dtype=np.float64))
    if len(tgt) == 0 or len(bkg) == 0:
        raise ValueError("DET needs both target and background epochs")
    both = np.concatenate([tgt, bkg])
    lo, hi = both.min(), both.max()
    if num_thresholds is None:
        above = np.nextafter(hi, np.inf)
        taus = np.append(np.unique(both), above)
    else:
        if num_thresholds < 2:
            raise ValueError("num_thresholds must be >= 2")
        margin = 1e-9 * max(1.0, abs(lo), abs(hi)) + 1e-6 * (hi - lo)
        taus = np.linspace(lo - margin, hi + margin, num_thresholds)
    p_det = 1.0 - np.searchsorted(tgt, taus, side="left") / len(tgt)
    p_fa = 1.0 - np.searchsorted(bkg, taus, side="left") / len(bkg)
    return [DETPoint(float(t), float(d), float(f)) for t, d, f in zip(taus, p_det, p_fa)]


def det_curve(hyps, refs: Mapping[Cell, str], num_thresholds: Optional[int] = None) -> List[DETPoint]:
    """DET curve of the 2-way score against 2-way collapsed references."""
    pairs = _align(hyps, refs)
    tgt = [h.score for h, r in pairs if collapse(r, "two") == TARG]
    bkg = [h.score for h, r in pairs if collapse(r, "two") == BCKG]
    if not tgt or not bkg:
        raise ValueError("DET needs at least one TARG and one BCKG reference epoch")
    return det_points(tgt, bkg, num_thresholds)


def miss_at_false_alarm(points: Sequence[DETPoint], fa_grid) -> np.ndarray:
    """Lowest miss rate reachable at false-alarm rate <= each grid value."""
    fa = np.array([p.p_false_alarm for p in points])
    miss = np.array([p.p_miss for p in points])
    out = []
    for g in np.asarray(fa_grid, dtype=np.float64):
        ok = fa <= g + 1e-12
        out.append(miss[ok].min() if ok.any() else 1.0)
    return np.array(out)


def normal_deviate(p, eps: float = 1e-6):
    return norm.ppf(np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps))


def write_det_csv(points: Sequence[DETPoint], path) -> None:
    fa = np.array([p.p_false_alarm for p in points])
    det = np.array([p.p_detection for p in points])
    dev_fa, dev_det = normal_deviate(fa), normal_deviate(det)
    with open(os.fspath(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DET_HEADER)
        for p, a, b in zip(points, dev_fa, dev_det):
            w.writerow([format(p.threshold, ".10g"), format(p.p_false_alarm, ".10g"),
                        format(p.p_detection, ".10g"), format(a, ".6f"), format(b, ".6f")])


def read_det_csv(path) -> List[DETPoint]:
    out = []
    with open(os.fspath(path), newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        if header != DET_HEADER:
            raise ParseError(f"{path}: bad DET header {header}")
        for row in rows:
            out.append(DETPoint(float(row[0]), float(row[2]), float(row[1])))
    return out


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

@dataclass
class SystemResult:
    system_id: int
    description: str
    dim: int
    rates: Dict[str, float]


def format_report(results: Sequence[SystemResult]) -> str:
    """Fixed-width table: No. | System Description | Dims. | 6-Way | 4-Way | 2-Way."""
    desc_w = max([len("System Description")] + [len(r.description) for r in results])
    head = f"{'No.':>3}  {'System Description':<{desc_w}}  {'Dims.':>5}  {'6-Way':>6}  {'4-Way':>6}  {'2-Way':>6}"
    lines = [head, "-" * len(head)]
    for r in results:
        lines.append(f"{r.system_id:>3}  {r.description:<{desc_w}}  {r.dim:>5}  "
                     f"{100 * r.rates['six']:>5.1f}%  {100 * r.rates['four']:>5.1f}%  "
                     f"{100 * r.rates['two']:>5.1f}%")
    return "\n".join(lines) + "\n"
