import itertools
import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from eegcep.dynamics import FeatureSequence
from eegcep.errors import FormatError, TrainingError
from eegcep.labels import CLASSES
from eegcep.models import (GaussianMixture, HmmModel, TrainConfig, TrainStats, backward,
                           batch_loglik, classify, classify_epochs, decide, epochs, forward,
                           left_to_right, load_models, loglik, run_em, save_models, train,
                           train_class, variance_floor, viterbi)


def random_model(rng, S=3, M=2, D=3, label="X"):
    a = left_to_right(S)
    for i in range(S - 1):
        p = rng.uniform(0.2, 0.8)
        a[i, i], a[i, i + 1] = p, 1 - p
    states = [GaussianMixture(rng.dirichlet(np.ones(M)), rng.normal(size=(M, D)),
                              rng.uniform(0.3, 2.0, size=(M, D))) for _ in range(S)]
    return HmmModel(label, a, states)


def state_density(gmm, x):
    return sum(w * multivariate_normal(mu, np.diag(v)).pdf(x)
               for w, mu, v in zip(gmm.weights, gmm.means, gmm.variances))


def path_probs(model, epoch):
    """Every state path that enters at state 0, with its joint probability."""
    T, S = len(epoch), model.num_states
    b = [[state_density(model.states[s], epoch[t]) for s in range(S)] for t in range(T)]
    out = {}
    for path in itertools.product(range(S), repeat=T):
        if path[0] != 0:
            continue
        p = b[0][0]
        for t in range(1, T):
            p *= model.transitions[path[t - 1], path[t]] * b[t][path[t]]
        out[path] = p
    return out


def sample_hmm(model, n_epochs, T, rng):
    out = np.empty((n_epochs, T, model.dim))
    for e in range(n_epochs):
        s = 0
        for t in range(T):
            g = model.states[s]
            k = rng.choice(g.num_components, p=g.weights)
            out[e, t] = rng.normal(g.means[k], np.sqrt(g.variances[k]))
            s = rng.choice(model.num_states, p=model.transitions[s])
    return out


class TestDensities:
    def test_gmm_against_scipy(self, rng):
        for _ in range(10):
            g = GaussianMixture(rng.dirichlet(np.ones(3)), rng.normal(size=(3, 4)) * 3,
                                rng.uniform(0.1, 4, size=(3, 4)))
            x = rng.normal(size=(20, 4)) * 3
            np.testing.assert_allclose(g.logpdf(x), np.log(state_density(g, x)), rtol=1e-9)

    def test_left_to_right_structure(self):
        a = left_to_right(3)
        np.testing.assert_array_equal(a, [[0.5, 0.5, 0], [0, 0.5, 0.5], [0, 0, 1]])


class TestRecursions:
    def test_forward_matches_enumeration(self, rng):
        for _ in range(5):
            m = random_model(rng)
            epoch = rng.normal(size=(5, 3))
            total = sum(path_probs(m, epoch).values())
            assert loglik(m, epoch) == pytest.approx(math.log(total), rel=1e-9)

    def test_viterbi_matches_enumeration(self, rng):
        for _ in range(5):
            m = random_model(rng)
            epoch = rng.normal(size=(6, 3))
            probs = path_probs(m, epoch)
            best = max(probs, key=probs.get)
            paths, score = viterbi(m.log_emissions(epoch[None]), m.log_transitions())
            assert tuple(paths[0]) == best
            assert score[0] == pytest.approx(math.log(probs[best]), rel=1e-9)

    def test_forward_backward_consistent(self, rng):
        m = random_model(rng)
        batch = rng.normal(size=(4, 10, 3))
        log_b = m.log_emissions(batch)
        alpha = forward(log_b, m.log_transitions())
        beta = backward(log_b, m.log_transitions())
        ll = batch_loglik(m, batch)
        for t in range(10):
            with np.errstate(divide="ignore"):
                per_t = np.log(np.exp(alpha[:, t] + beta[:, t]).sum(axis=1))
            np.testing.assert_allclose(per_t, ll, rtol=1e-9)

    def test_batch_equals_single(self, rng):
        m = random_model(rng)
        batch = rng.normal(size=(6, 10, 3))
        np.testing.assert_allclose(batch_loglik(m, batch), [loglik(m, e) for e in batch], rtol=1e-12)

    def test_dim_mismatch(self, rng):
        with pytest.raises(ValueError, match="dim"):
            loglik(random_model(rng), np.zeros((10, 4)))


class TestTraining:
    def test_em_monotone(self, rng):
        true = random_model(rng, S=3, M=2, D=2)
        data = sample_hmm(true, 60, 10, rng)
        data -= data.reshape(-1, 2).mean(axis=0)
        floor = variance_floor(data.reshape(-1, 2))
        start = random_model(np.random.default_rng(7), S=3, M=2, D=2)
        _, hist = run_em(start, data, floor, 30)
        steps = np.diff(hist)
        assert np.all(steps >= -1e-9 * np.abs(hist[:-1]))

    def test_stage_histories_monotone(self, rng):
        true = random_model(rng, S=3, M=2, D=3)
        stats = TrainStats()
        data = sample_hmm(true, 80, 10, rng)
        train_class(data, TrainConfig(), variance_floor(data.reshape(-1, 3)), stats=stats)
        assert len(stats.em_history) == 3      # 1->2, 2->4, final
        for hist in stats.em_history:
            assert np.all(np.diff(hist) >= -1e-9 * np.abs(np.asarray(hist[:-1])))

    def test_two_state_recovery(self, rng):
        true = HmmModel("X", np.array([[0.8, 0.2], [0.0, 1.0]]),
                        [GaussianMixture(np.ones(1), np.array([[0.0, 0.0]]), np.ones((1, 2))),
                         GaussianMixture(np.ones(1), np.array([[3.0, -2.0]]), np.ones((1, 2)))])
        data = sample_hmm(true, 1500, 10, rng)
        cfg = TrainConfig(num_states=2, num_mixtures=1)
        m = train_class(data, cfg, variance_floor(data.reshape(-1, 2)))
        for s in range(2):
            np.testing.assert_allclose(m.states[s].means[0], true.states[s].means[0], atol=0.1)
            np.testing.assert_allclose(m.states[s].variances[0], 1.0, atol=0.1)
        np.testing.assert_allclose(m.transitions, true.transitions, atol=0.1)

    def test_transitions_stay_left_to_right(self, rng):
        data = rng.normal(size=(40, 10, 2))
        m = train_class(data, TrainConfig(), variance_floor(data.reshape(-1, 2)))
        a = m.transitions
        np.testing.assert_allclose(a.sum(axis=1), 1.0)
        assert np.all(np.tril(a, -1) == 0) and np.all(np.triu(a, 2) == 0)
        assert m.num_mixtures == 4

    def test_variance_floor_applied(self, rng):
        data = rng.normal(size=(30, 10, 2))
        data[..., 1] = 5.0                         # zero-variance dimension
        floor = variance_floor(data.reshape(-1, 2) + rng.normal(size=(300, 2)))
        m = train_class(data, TrainConfig(num_mixtures=2), floor)
        for st in m.states:
            assert np.all(st.variances >= floor - 1e-15)

    def test_too_few_epochs_names_class(self, rng):
        sets = {c: rng.normal(size=(20, 10, 2)) for c in CLASSES}
        sets["PLED"] = sets["PLED"][:11]
        with pytest.raises(TrainingError, match="PLED"):
            train(sets)

    def test_deterministic(self, rng):
        sets = {c: rng.normal(loc=i, size=(15, 10, 2)) for i, c in enumerate(CLASSES)}
        a, b = train(sets, TrainConfig(seed=3)), train(sets, TrainConfig(seed=3))
        for c in CLASSES:
            assert np.array_equal(a[c].transitions, b[c].transitions)
            for sa, sb in zip(a[c].states, b[c].states):
                assert np.array_equal(sa.means, sb.means) and np.array_equal(sa.variances, sb.variances)


def separated_sets(rng, n):
    # one axis per class, centres 6 sigma apart
    return {c: rng.normal(loc=6.0 * np.eye(6)[i], size=(n, 10, 6)) for i, c in enumerate(CLASSES)}


class TestClassification:
    def test_decide_ties_and_score(self):
        ll = np.array([[0.0] * 6,
                       [-5, -1, -3, -2, -4, -1],
                       [-9, -8, -7, -1, -6, -2.5]])
        idx, score = decide(ll)
        assert [CLASSES[i] for i in idx] == ["SPSW", "GPED", "EYEM"]
        np.testing.assert_allclose(score, [0.0, 0.0, -6.0])

    def test_separated_classes(self, rng):
        models = train(separated_sets(rng, 40))
        test = separated_sets(rng, 50)
        correct = total = 0
        for i, c in enumerate(CLASSES):
            idx, _ = decide(classify_epochs(models, test[c]))
            correct += np.sum(idx == i)
            total += len(idx)
        assert correct / total >= 0.9

    def test_classify_sequence(self, rng):
        models = train(separated_sets(rng, 20))
        frames = np.concatenate([separated_sets(rng, 1)[c][0] for c in CLASSES] + [np.zeros((7, 6))])
        hyps = classify(models, FeatureSequence(frames, 0.1, "CH00", 0))
        assert len(hyps) == 6
        assert [h.epoch_index for h in hyps] == list(range(6))
        assert all(h.channel_name == "CH00" for h in hyps)
        assert [h.hypothesis for h in hyps] == list(CLASSES)
        for h in hyps:
            tgt = max(h.per_class_loglik[c] for c in ("SPSW", "GPED", "PLED"))
            bkg = max(h.per_class_loglik[c] for c in ("EYEM", "ARTF", "BCKG"))
            assert h.score == pytest.approx(tgt - bkg)

    def test_epoching(self):
        seq = FeatureSequence(np.arange(25 * 2.0).reshape(25, 2), 0.1, "a", 0)
        e = epochs(seq)
        assert e.shape == (2, 10, 2) and e[1, 0, 0] == 20.0
        with pytest.raises(ValueError):
            epochs(FeatureSequence(np.zeros((20, 2)), 0.05, "a", 0))


class TestModelFile:
    def test_round_trip(self, tmp_path, rng):
        models = {c: random_model(rng, M=4, D=5, label=c) for c in CLASSES}
        save_models(models, tmp_path / "m.txt", system_id=11)
        back, sid = load_models(tmp_path / "m.txt")
        assert sid == 11 and list(back) == list(CLASSES)
        batch = rng.normal(size=(3, 10, 5))
        for c in CLASSES:
            assert np.array_equal(back[c].transitions, models[c].transitions)
            for sa, sb in zip(back[c].states, models[c].states):
                assert np.array_equal(sa.weights, sb.weights)
                assert np.array_equal(sa.means, sb.means)
                assert np.array_equal(sa.variances, sb.variances)
            assert np.array_equal(batch_loglik(back[c], batch), batch_loglik(models[c], batch))
        save_models(back, tmp_path / "n.txt", system_id=11)
        assert (tmp_path / "m.txt").read_text() == (tmp_path / "n.txt").read_text()

    def test_truncated(self, tmp_path, rng):
        save_models({"SPSW": random_model(rng, label="SPSW")}, tmp_path / "m.txt")
        text = (tmp_path / "m.txt").read_text().splitlines()
        (tmp_path / "m.txt").write_text("\n".join(text[:-3]))
        with pytest.raises(FormatError):
            load_models(tmp_path / "m.txt")

    def test_bad_header(self, tmp_path):
        (tmp_path / "m.txt").write_text("something else\n")
        with pytest.raises(FormatError):
            load_models(tmp_path / "m.txt")
