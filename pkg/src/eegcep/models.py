"""Left-to-right GMM-HMMs over 1-second epochs.

One model per event class.  An epoch is 10 consecutive feature frames; a
model scores it with the forward algorithm, always entering in state 0 and
free to finish in any state.  Training is flat start, Viterbi
re-segmentation with single Gaussians, then mixture splitting interleaved
with Baum-Welch.

All epochs share one length, so the recursions run over a batch axis
instead of a Python loop over epochs.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence

import numpy as np

from .dynamics import FeatureSequence
from .errors import FormatError, TrainingError
from .labels import BACKGROUND_CLASSES, CLASSES, TARGET_CLASSES

log = logging.getLogger(__name__)

EPOCH_FRAMES = 10
LOG_2PI = math.log(2.0 * math.pi)
MODEL_MAGIC = "EEGCEP-GMMHMM"
MODEL_VERSION = 1


def logsumexp(a, axis):
    """log(sum(exp(a))) along ``axis``; rows that are all -inf give -inf."""
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


@dataclass
class GaussianMixture:
    weights: np.ndarray    # (M,)
    means: np.ndarray      # (M, D)
    variances: np.ndarray  # (M, D), diagonal

    @property
    def num_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_logpdf(self, x) -> np.ndarray:
        """log w_m + log N(x; mu_m, var_m) for frames ``x`` of shape (N, D) -> (N, M)."""
        x = np.atleast_2d(x)
        prec = 1.0 / self.variances
        with np.errstate(divide="ignore"):
            const = (np.log(self.weights)
                     - 0.5 * (self.dim * LOG_2PI + np.log(self.variances).sum(axis=1))
                     - 0.5 * (self.means * self.means * prec).sum(axis=1))
        quad = (x * x) @ prec.T - 2.0 * (x @ (self.means * prec).T)
        return const - 0.5 * quad

    def logpdf(self, x) -> np.ndarray:
        return logsumexp(self.component_logpdf(x), axis=1)


@dataclass
class HmmModel:
    class_label: str
    transitions: np.ndarray              # (S, S) row-stochastic, upper bidiagonal
    states: List[GaussianMixture]

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return self.states[0].dim

    @property
    def num_mixtures(self) -> int:
        return max(s.num_components for s in self.states)

    def log_transitions(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.transitions)

    def log_emissions(self, epochs) -> np.ndarray:
        """(E, T, D) epochs -> (E, T, S) state log densities."""
        epochs = np.asarray(epochs, dtype=np.float64)
        E, T, D = epochs.shape
        flat = epochs.reshape(E * T, D)
        out = np.stack([s.logpdf(flat) for s in self.states], axis=1)
        return out.reshape(E, T, self.num_states)


def left_to_right(num_states: int, self_loop: float = 0.5) -> np.ndarray:
    a = np.zeros((num_states, num_states))
    for i in range(num_states - 1):
        a[i, i] = self_loop
        a[i, i + 1] = 1.0 - self_loop
    a[-1, -1] = 1.0
    return a


# --------------------------------------------------------------------------
# Recursions
# --------------------------------------------------------------------------

def forward(log_b: np.ndarray, log_a: np.ndarray) -> np.ndarray:
    """Log-domain forward variables, (E, T, S) -> (E, T, S).  Entry is state 0."""
    E, T, S = log_b.shape
    alpha = np.empty_like(log_b)
    alpha[:, 0] = -np.inf
    alpha[:, 0, 0] = log_b[:, 0, 0]
    for t in range(1, T):
        alpha[:, t] = logsumexp(alpha[:, t - 1, :, None] + log_a[None], axis=1) + log_b[:, t]
    return alpha


def backward(log_b: np.ndarray, log_a: np.ndarray) -> np.ndarray:
    E, T, S = log_b.shape
    beta = np.zeros_like(log_b)
    for t in range(T - 2, -1, -1):
        beta[:, t] = logsumexp(log_a[None] + (log_b[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
    return beta


def batch_loglik(model: HmmModel, epochs) -> np.ndarray:
    """Forward log-likelihood of each epoch in an (E, T, D) batch."""
    epochs = np.asarray(epochs, dtype=np.float64)
    if epochs.ndim != 3:
        raise ValueError("epochs must have shape (E, T, D)")
    if epochs.shape[2] != model.dim:
        raise ValueError(f"feature dim {epochs.shape[2]} does not match model dim {model.dim}")
    alpha = forward(model.log_emissions(epochs), model.log_transitions())
    return logsumexp(alpha[:, -1], axis=1)


def loglik(model: HmmModel, epoch) -> float:
    epoch = np.asarray(epoch, dtype=np.float64)
    if epoch.ndim != 2:
        raise ValueError("epoch must have shape (T, D)")
    return float(batch_loglik(model, epoch[None])[0])


def viterbi(log_b: np.ndarray, log_a: np.ndarray):
    """Best state path per epoch.  Returns (paths (E, T) int, scores (E,))."""
    E, T, S = log_b.shape
    delta = np.full((E, S), -np.inf)
    delta[:, 0] = log_b[:, 0, 0]
    back = np.zeros((E, T, S), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, :, None] + log_a[None]
        back[:, t] = np.argmax(cand, axis=1)
        delta = np.max(cand, axis=1) + log_b[:, t]
    paths = np.empty((E, T), dtype=np.int64)
    paths[:, -1] = np.argmax(delta, axis=1)
    for t in range(T - 1, 0, -1):
        paths[:, t - 1] = back[np.arange(E), t, paths[:, t]]
    return paths, delta.max(axis=1)


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------

@dataclass
class TrainConfig:
    num_states: int = 3
    num_mixtures: int = 4
    viterbi_passes: int = 5
    split_iters: int = 5
    max_iter: int = 50
    tol: float = 1e-6
    split_offset: float = 0.2
    variance_floor_scale: float = 1e-4
    seed: int = 0


@dataclass
class TrainStats:
    """Per-class log-likelihood traces, one list per EM stage."""

    em_history: List[List[float]] = field(default_factory=list)

    @property
    def final(self) -> List[float]:
        return self.em_history[-1] if self.em_history else []


def _fit_gaussian(x: np.ndarray, w: np.ndarray, floor: np.ndarray, old_mean, old_var):
    occ = w.sum()
    if occ <= 0:
        return old_mean, old_var
    mean = (w @ x) / occ
    diff = x - mean
    var = (w @ (diff * diff)) / occ
    return mean, np.maximum(var, floor)


def _fit_mixture(x: np.ndarray, xx: np.ndarray, post: np.ndarray, floor: np.ndarray,
                 old: GaussianMixture) -> GaussianMixture:
    """Weighted ML update of every component from posteriors ``post`` (N, M).

    ``x`` should be roughly centred; ``xx`` is ``x * x``.
    """
    occ = post.sum(axis=0)
    total = occ.sum()
    weights = occ / total if total > 0 else old.weights.copy()
    means = old.means.copy()
    variances = old.variances.copy()
    live = occ > 0
    if live.any():
        s1 = post[:, live].T @ x
        s2 = post[:, live].T @ xx
        mu = s1 / occ[live, None]
        means[live] = mu
        variances[live] = np.maximum(s2 / occ[live, None] - mu * mu, floor)
    return GaussianMixture(weights, means, variances)


def flat_start(epochs: np.ndarray, num_states: int, floor: np.ndarray) -> HmmModel:
    """Uniform segmentation: state s owns frames [s*T/S, (s+1)*T/S)."""
    E, T, D = epochs.shape
    bounds = np.round(np.linspace(0, T, num_states + 1)).astype(int)
    state_of_frame = np.searchsorted(bounds[1:], np.arange(T), side="right")
    paths = np.tile(state_of_frame, (E, 1))
    return _estimate_from_paths(epochs, paths, num_states, floor, None)


def _estimate_from_paths(epochs, paths, num_states, floor, prev: HmmModel | None) -> HmmModel:
    E, T, D = epochs.shape
    flat = epochs.reshape(-1, D)
    labels = paths.reshape(-1)
    states = []
    for s in range(num_states):
        sel = labels == s
        old_mean = prev.states[s].means[0] if prev else np.zeros(D)
        old_var = prev.states[s].variances[0] if prev else np.maximum(flat.var(axis=0), floor)
        mean, var = _fit_gaussian(flat[sel], np.ones(sel.sum()), floor, old_mean, old_var)
        states.append(GaussianMixture(np.ones(1), mean[None], var[None]))
    counts = np.zeros((num_states, num_states))
    np.add.at(counts, (paths[:, :-1].ravel(), paths[:, 1:].ravel()), 1.0)
    trans = prev.transitions.copy() if prev else left_to_right(num_states)
    for i in range(num_states - 1):
        row = counts[i, i] + counts[i, i + 1]
        if row > 0:
            trans[i, i] = counts[i, i] / row
            trans[i, i + 1] = counts[i, i + 1] / row
    return HmmModel("", trans, states)


def em_step(model: HmmModel, epochs: np.ndarray, floor: np.ndarray):
    """One Baum-Welch iteration.

    Returns (new_model, total log-likelihood of ``epochs`` under ``model``).
    The M-step is exact (variance flooring included), so the returned
    likelihoods never decrease from one call to the next.  ``epochs``
    should be centred (see :func:`train_class`) to keep the one-pass
    variance accurate.
    """
    E, T, D = epochs.shape
    S = model.num_states
    flat = epochs.reshape(E * T, D)
    comp = [st.component_logpdf(flat) for st in model.states]      # S x (N, M)
    log_b = np.stack([logsumexp(c, axis=1) for c in comp], axis=1).reshape(E, T, S)
    log_a = model.log_transitions()
    alpha = forward(log_b, log_a)
    beta = backward(log_b, log_a)
    ll = logsumexp(alpha[:, -1], axis=1)
    total = float(ll.sum())
    if not np.isfinite(total):
        raise TrainingError(f"non-finite training log-likelihood for class {model.class_label!r}")

    log_gamma = (alpha + beta - ll[:, None, None]).reshape(E * T, S)

    trans = model.transitions.copy()
    for i in range(S - 1):
        xi = np.exp(alpha[:, :-1, i, None] + log_a[i][None, None, :]
                    + log_b[:, 1:] + beta[:, 1:] - ll[:, None, None])
        stay, move = xi[..., i].sum(), xi[..., i + 1].sum()
        if stay + move > 0:
            trans[i, i] = stay / (stay + move)
            trans[i, i + 1] = move / (stay + move)

    xx = flat * flat
    lb = log_b.reshape(E * T, S)
    states = []
    for s, st in enumerate(model.states):
        post = np.exp(comp[s] - lb[:, s, None] + log_gamma[:, s, None])
        states.append(_fit_mixture(flat, xx, post, floor, st))
    return HmmModel(model.class_label, trans, states), total


def split_mixtures(model: HmmModel, target: int, offset: float, rng) -> HmmModel:
    """Grow each state towards ``target`` components by splitting the
    heaviest ones: mean +/- offset*sigma (random sign per dimension), weight
    halved, variance copied."""
    states = []
    for st in model.states:
        w, mu, var = list(st.weights), list(st.means), list(st.variances)
        n_new = min(target, 2 * len(w))
        while len(w) < n_new:
            k = int(np.argmax(w))
            step = offset * np.sqrt(var[k]) * rng.choice([-1.0, 1.0], size=len(var[k]))
            w[k] /= 2
            w.append(w[k])
            mu.append(mu[k] - step)
            mu[k] = mu[k] + step
            var.append(var[k].copy())
        states.append(GaussianMixture(np.array(w), np.array(mu), np.array(var)))
    return HmmModel(model.class_label, model.transitions.copy(), states)


def run_em(model, epochs, floor, max_iter, tol=None):
    """Iterate :func:`em_step`; stop early on relative gain < ``tol`` if given.

    Returns (model, history) where history[k] is the likelihood under the
    parameters after k updates.
    """
    history = []
    for _ in range(max_iter):
        new_model, total = em_step(model, epochs, floor)
        history.append(total)
        model = new_model
        if tol is not None and len(history) > 1:
            prev = history[-2]
            if history[-1] - prev < tol * abs(prev):
                break
    return model, history


def variance_floor(all_frames: np.ndarray, scale: float = 1e-4) -> np.ndarray:
    return np.maximum(scale * all_frames.var(axis=0), 1e-12)


def train_class(epochs, config: TrainConfig, floor: np.ndarray, label: str = "",
                rng=None, stats: TrainStats | None = None) -> HmmModel:
    epochs = np.asarray(epochs, dtype=np.float64)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    # train on centred data; the offset is added back to every mean at the end
    offset = epochs.reshape(-1, epochs.shape[2]).mean(axis=0)
    epochs = epochs - offset
    model = flat_start(epochs, config.num_states, floor)
    prev_paths = None
    for _ in range(config.viterbi_passes):
        paths, _ = viterbi(model.log_emissions(epochs), model.log_transitions())
        if prev_paths is not None and np.array_equal(paths, prev_paths):
            break
        model = _estimate_from_paths(epochs, paths, config.num_states, floor, model)
        prev_paths = paths
    model.class_label = label

    while model.num_mixtures < config.num_mixtures:
        model = split_mixtures(model, config.num_mixtures, config.split_offset, rng)
        model, hist = run_em(model, epochs, floor, config.split_iters)
        if stats is not None:
            stats.em_history.append(hist)
    model, hist = run_em(model, epochs, floor, config.max_iter, config.tol)
    if stats is not None:
        stats.em_history.append(hist)
    for st in model.states:
        st.means += offset
    return model


def train(epoch_sets: Mapping[str, np.ndarray], config: TrainConfig = TrainConfig(),
          stats: Dict[str, TrainStats] | None = None) -> Dict[str, HmmModel]:
    """Train one model per class in :data:`CLASSES`.

    ``epoch_sets`` maps class label to an (E, 10, D) array.  The variance
    floor is ``variance_floor_scale`` times the per-dimension variance of
    all training frames pooled over classes.
    """
    need = config.num_states * config.num_mixtures
    dims = set()
    for label in CLASSES:
        eps = epoch_sets.get(label)
        n = 0 if eps is None else len(eps)
        if n < need:
            raise TrainingError(f"class {label}: {n} training epochs, need at least {need}")
        dims.add(np.asarray(eps).shape[2])
    if len(dims) != 1:
        raise TrainingError(f"inconsistent feature dims across classes: {sorted(dims)}")

    dim = dims.pop()
    pooled = np.concatenate([np.asarray(epoch_sets[c], dtype=np.float64).reshape(-1, dim)
                             for c in CLASSES])
    floor = variance_floor(pooled, config.variance_floor_scale)
    models = {}
    for idx, label in enumerate(CLASSES):
        rng = np.random.default_rng([config.seed, idx])
        st = TrainStats()
        models[label] = train_class(epoch_sets[label], config, floor, label, rng, st)
        if stats is not None:
            stats[label] = st
        log.debug("trained %s: final loglik %.3f", label, st.final[-1] if st.final else float("nan"))
    return models


# --------------------------------------------------------------------------
# Epochs and classification
# --------------------------------------------------------------------------

def epochs(seq: FeatureSequence, frames_per_epoch: int = EPOCH_FRAMES) -> np.ndarray:
    """Non-overlapping 10-frame segments, shape (E, 10, D); a trailing
    partial epoch is dropped."""
    if not math.isclose(seq.frame_period, 0.1, rel_tol=1e-9):
        raise ValueError(f"epoching expects a 0.1 s frame period, got {seq.frame_period}")
    n = len(seq) // frames_per_epoch
    frames = np.asarray(seq.frames, dtype=np.float64)
    return frames[:n * frames_per_epoch].reshape(n, frames_per_epoch, seq.dim)


@dataclass
class EpochHypothesis:
    channel_name: str
    epoch_index: int
    per_class_loglik: Dict[str, float]
    hypothesis: str
    score: float


def decide(per_class: np.ndarray):
    """Argmax class (first in :data:`CLASSES` order on ties) and the 2-way
    score max(target) - max(background), for an (E, 6) loglik matrix."""
    idx = np.argmax(per_class, axis=1)
    tgt = [CLASSES.index(c) for c in TARGET_CLASSES]
    bkg = [CLASSES.index(c) for c in BACKGROUND_CLASSES]
    score = per_class[:, tgt].max(axis=1) - per_class[:, bkg].max(axis=1)
    return idx, score


def classify_epochs(models: Mapping[str, HmmModel], epoch_batch: np.ndarray) -> np.ndarray:
    missing = [c for c in CLASSES if c not in models]
    if missing:
        raise ValueError(f"missing models for {missing}")
    return np.stack([batch_loglik(models[c], epoch_batch) for c in CLASSES], axis=1)


def classify(models: Mapping[str, HmmModel], seq: FeatureSequence) -> List[EpochHypothesis]:
    batch = epochs(seq)
    if batch.shape[0] == 0:
        return []
    ll = classify_epochs(models, batch)
    idx, score = decide(ll)
    return [EpochHypothesis(seq.channel_name, e, dict(zip(CLASSES, map(float, ll[e]))),
                            CLASSES[idx[e]], float(score[e]))
            for e in range(len(batch))]


# --------------------------------------------------------------------------
# Model files
# --------------------------------------------------------------------------

def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.ravel(values))


def save_models(models: Mapping[str, HmmModel], path, system_id: int = 0) -> None:
    """Versioned text format; every float written with 17 significant digits."""
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION}", f"system_id {system_id}", f"num_models {len(models)}"]
    for label in CLASSES if set(models) == set(CLASSES) else sorted(models):
        m = models[label]
        lines += [f"model {label}", f"num_states {m.num_states}", f"dim {m.dim}"]
        for i in range(m.num_states):
            lines.append(f"transition {i} {_fmt(m.transitions[i])}")
        for s, st in enumerate(m.states):
            lines.append(f"state {s} num_mixtures {st.num_components}")
            lines.append(f"weights {_fmt(st.weights)}")
            for k in range(st.num_components):
                lines.append(f"mean {k} {_fmt(st.means[k])}")
                lines.append(f"variance {k} {_fmt(st.variances[k])}")
        lines.append("end_model")
    with open(os.fspath(path), "w") as fh:
        fh.write("\n".join(lines) + "\n")


class _Lines:
    def __init__(self, text, path):
        self.rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        self.pos = 0
        self.path = path

    def take(self, key: str, nfixed: int = 0) -> Sequence[str]:
        if self.pos >= len(self.rows):
            raise FormatError(f"{self.path}: unexpected end of file, wanted {key!r}")
        row = self.rows[self.pos]
        if row[0] != key:
            raise FormatError(f"{self.path}: line {self.pos + 1}: expected {key!r}, found {row[0]!r}")
        self.pos += 1
        return row[1:]


def _floats(tokens, n, path):
    if len(tokens) != n:
        raise FormatError(f"{path}: expected {n} values, found {len(tokens)}")
    return np.array([float(t) for t in tokens])


def load_models(path):
    """Inverse of :func:`save_models`.  Returns (models, system_id)."""
    with open(os.fspath(path)) as fh:
        lines = _Lines(fh.read(), path)
    head = lines.take(MODEL_MAGIC)
    if head != [str(MODEL_VERSION)]:
        raise FormatError(f"{path}: unsupported model file version {head}")
    system_id = int(lines.take("system_id")[0])
    count = int(lines.take("num_models")[0])
    models = {}
    for _ in range(count):
        label = lines.take("model")[0]
        S = int(lines.take("num_states")[0])
        D = int(lines.take("dim")[0])
        trans = np.array([_floats(lines.take("transition")[1:], S, path) for _ in range(S)])
        states = []
        for _s in range(S):
            M = int(lines.take("state")[2])
            weights = _floats(lines.take("weights"), M, path)
            means, variances = [], []
            for _k in range(M):
                means.append(_floats(lines.take("mean")[1:], D, path))
                variances.append(_floats(lines.take("variance")[1:], D, path))
            states.append(GaussianMixture(weights, np.array(means), np.array(variances)))
        lines.take("end_model")
        models[label] = HmmModel(label, trans, states)
    return models, system_id
