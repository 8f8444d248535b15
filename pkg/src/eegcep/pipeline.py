"""Glue between the stages: signal -> features -> epochs -> models -> scores."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from .config import PipelineConfig
from .dynamics import FeatureSequence, assemble, get_system
from .energy import EnergyTerms, compute_energies
from .evaluate import (EventLabel, SystemResult, det_curve, error_rates, label_to_epochs)
from .frontend import analyze
from .ingest import Channel, SignalRecord, resample
from .labels import CLASSES
from .models import (EPOCH_FRAMES, EpochHypothesis, HmmModel, TrainConfig, classify,
                     epochs, train)

log = logging.getLogger(__name__)

Corpus = Sequence[Tuple[SignalRecord, Sequence[EventLabel]]]


@dataclass
class ChannelStreams:
    """Static streams of one channel, shared by every feature system."""

    name: str
    cepstra: np.ndarray
    energies: EnergyTerms
    frame_period: float

    def features(self, system_id: int, cfg: PipelineConfig) -> FeatureSequence:
        return assemble(self.cepstra, self.energies, get_system(system_id), cfg.delta,
                        self.frame_period, self.name)


def channel_streams(channel: Channel, cfg: PipelineConfig = PipelineConfig()) -> ChannelStreams:
    if channel.sample_rate != cfg.resample.target_rate:
        channel = resample(channel, cfg.resample)
    ana = analyze(channel.samples, cfg.frame, cfg.filterbank)
    energies = compute_energies(ana.frames, ana.spectral, cfg.diff, cfg.energy_floor)
    return ChannelStreams(channel.name, ana.cepstral.cepstra, energies, ana.frame_period)


def channel_features(channel: Channel, system_id: int,
                     cfg: PipelineConfig = PipelineConfig()) -> FeatureSequence:
    return channel_streams(channel, cfg).features(system_id, cfg)


def record_features(record: SignalRecord, system_id: int,
                    cfg: PipelineConfig = PipelineConfig()) -> List[FeatureSequence]:
    return [channel_features(ch, system_id, cfg) for ch in record.channels]


# --------------------------------------------------------------------------
# Corpus-level helpers
# --------------------------------------------------------------------------

def _cell_key(record_id: str, channel: str) -> str:
    return f"{record_id}/{channel}"


@dataclass
class PreparedCorpus:
    """Static streams and per-epoch references for every channel of a corpus.

    Channels are keyed ``record_id/channel`` so several records can share
    channel names.
    """

    streams: Dict[str, ChannelStreams]
    refs: Dict[Tuple[str, int], str]

    def sequences(self, system_id: int, cfg: PipelineConfig) -> List[FeatureSequence]:
        out = []
        for key, st in self.streams.items():
            seq = st.features(system_id, cfg)
            seq.channel_name = key
            out.append(seq)
        return out

    @property
    def num_epochs(self) -> int:
        return len(self.refs)


def prepare_corpus(corpus: Corpus, cfg: PipelineConfig = PipelineConfig()) -> PreparedCorpus:
    streams, refs = {}, {}
    for record, labels in corpus:
        grid = {}
        for ch in record.channels:
            st = channel_streams(ch, cfg)
            key = _cell_key(record.record_id, ch.name)
            streams[key] = st
            grid[ch.name] = len(st.cepstra) // EPOCH_FRAMES
        for (chan, e), lab in label_to_epochs(labels, grid).items():
            refs[(_cell_key(record.record_id, chan), e)] = lab
    return PreparedCorpus(streams, refs)


def collect_epochs(seqs: Iterable[FeatureSequence],
                   refs: Mapping[Tuple[str, int], str]) -> Dict[str, np.ndarray]:
    """Group epochs of ``seqs`` by their reference class."""
    buckets: Dict[str, list] = {c: [] for c in CLASSES}
    dim = None
    for seq in seqs:
        dim = seq.dim
        batch = epochs(seq)
        for e in range(len(batch)):
            buckets[refs[(seq.channel_name, e)]].append(batch[e])
    return {c: (np.stack(v) if v else np.empty((0, EPOCH_FRAMES, dim or 0)))
            for c, v in buckets.items()}


def classify_all(models: Mapping[str, HmmModel],
                 seqs: Iterable[FeatureSequence]) -> List[EpochHypothesis]:
    hyps = []
    for seq in seqs:
        hyps.extend(classify(models, seq))
    return hyps


@dataclass
class ExperimentResult:
    result: SystemResult
    hypotheses: List[EpochHypothesis]
    det: list
    models: Dict[str, HmmModel]


def run_system(system_id: int, train_set: PreparedCorpus, eval_set: PreparedCorpus,
               cfg: PipelineConfig = PipelineConfig(),
               train_config: TrainConfig | None = None) -> ExperimentResult:
    system = get_system(system_id)
    if eval_set.num_epochs == 0:
        raise ValueError("no epochs to score")
    tc = train_config or cfg.train
    train_sets = collect_epochs(train_set.sequences(system_id, cfg), train_set.refs)
    models = train(train_sets, tc)
    hyps = classify_all(models, eval_set.sequences(system_id, cfg))
    if not hyps:
        raise ValueError("no epochs to score")
    rates = error_rates(hyps, eval_set.refs)
    det = det_curve(hyps, eval_set.refs)
    log.info("system %d: %s", system_id, {k: round(v, 4) for k, v in rates.items()})
    return ExperimentResult(SystemResult(system_id, system.description, system.dim, rates),
                            hyps, det, models)


def run_experiment(train_corpus: Corpus, eval_corpus: Corpus, systems: Sequence[int],
                   cfg: PipelineConfig = PipelineConfig()) -> Dict[int, ExperimentResult]:
    train_set = prepare_corpus(train_corpus, cfg)
    eval_set = prepare_corpus(eval_corpus, cfg)
    if eval_set.num_epochs == 0:
        raise ValueError("no epochs to score")
    return {sid: run_system(sid, train_set, eval_set, cfg) for sid in systems}
