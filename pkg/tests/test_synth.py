import collections
import json

import numpy as np
import pytest

from eegcep.energy import compute_energies
from eegcep.errors import ConfigError
from eegcep.evaluate import label_to_epochs
from eegcep.frontend import analyze
from eegcep.labels import CLASSES
from eegcep.synth import (DEFAULT_EVENTS, TABLE1_PRIORS, SynthSpec, biphasic, generate,
                          generate_corpus, load_spec, pink_noise, spec_from_dict)


def only(label):
    return {c: float(c == label) for c in CLASSES}


def quiet(label, **kw):
    """Spec with a single event class over near-silent, steady background."""
    return SynthSpec(class_priors=only(label), background_rms=1e-3, background_drift=0.0, **kw)


class TestBuildingBlocks:
    def test_pink_noise_unit_rms_and_slope(self, rng):
        x = pink_noise(2 ** 16, rng)
        assert x.std() == pytest.approx(1.0)
        p = np.abs(np.fft.rfft(x)) ** 2
        f = np.arange(len(p))
        lo, hi = p[(f >= 100) & (f < 200)].mean(), p[(f >= 1000) & (f < 2000)].mean()
        assert lo / hi == pytest.approx(10.0, rel=0.3)

    def test_biphasic_unit_peak(self):
        t = np.linspace(-1, 1, 200001)
        y = biphasic(t, 0.0, 0.1)
        assert np.max(np.abs(y)) == pytest.approx(1.0, abs=1e-6)
        assert y[100000] == 0.0


class TestGenerate:
    def test_deterministic(self):
        spec = SynthSpec(seed=42, duration=30, num_channels=2)
        (r1, l1), (r2, l2) = generate(spec), generate(spec)
        assert l1 == l2
        for a, b in zip(r1.channels, r2.channels):
            assert np.array_equal(a.samples, b.samples)
        r3, _ = generate(SynthSpec(seed=43, duration=30, num_channels=2))
        assert not np.array_equal(r1.channels[0].samples, r3.channels[0].samples)

    def test_layout(self):
        rec, labs = generate(SynthSpec(seed=1, duration=20, num_channels=3))
        assert rec.channel_names == ["CH00", "CH01", "CH02"]
        assert all(len(c.samples) == 5000 and c.sample_rate == 250 for c in rec.channels)
        assert not np.array_equal(rec.channels[0].samples, rec.channels[1].samples)
        for lab in labs:
            assert 0 <= lab.start_time < lab.stop_time <= 20 and lab.label != "BCKG"

    def test_corpus_records_distinct(self):
        corpus = generate_corpus(SynthSpec(seed=5, duration=10), 3)
        assert [r.record_id for r, _ in corpus] == ["synth5_000", "synth5_001", "synth5_002"]
        assert not np.array_equal(corpus[0][0].channels[0].samples, corpus[1][0].channels[0].samples)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_priors_converge_over_an_hour(self, seed):
        _, labs = generate(SynthSpec(seed=seed, duration=3600))
        counts = collections.Counter(label_to_epochs(labs, {"CH00": 3600}).values())
        for c in CLASSES:
            assert abs(counts[c] / 3600 - TABLE1_PRIORS[c]) < 0.02, c

    def test_spsw_only(self):
        spec = SynthSpec(seed=3, duration=120, class_priors=only("SPSW"), background_drift=0.0)
        rec, labs = generate(spec)
        x = rec.channels[0].samples
        lo = DEFAULT_EVENTS["SPSW"].amplitude[0]
        ratio = lo / spec.background_rms
        assert len(labs) > 0 and {l.label for l in labs} == {"SPSW"}
        for lab in labs:
            width = lab.stop_time - lab.start_time
            lo_w, hi_w = DEFAULT_EVENTS["SPSW"].duration
            assert lo_w <= width <= hi_w
            seg = x[int(lab.start_time * 250):int(np.ceil(lab.stop_time * 250)) + 1]
            # allow the background to eat a quarter of the pulse
            assert np.max(np.abs(seg)) > 0.75 * ratio * spec.background_rms

    def test_gped_intervals(self):
        spec = quiet("GPED", seed=4, duration=300)
        rec, labs = generate(spec)
        x = rec.channels[0].samples
        params = DEFAULT_EVENTS["GPED"]
        lo = 1.0 / params.rate[1] * (1 - spec.jitter)
        hi = 1.0 / params.rate[0] * (1 + spec.jitter)
        # pulse centres are the falling zero crossings between the two lobes
        cross = np.flatnonzero((x[10:-1] > 0) & (x[11:] <= 0) & (x[:-11] > 10.0)) + 10
        times = cross / 250.0
        n_checked = 0
        for lab in labs:
            inside = times[(times >= lab.start_time) & (times < lab.stop_time)]
            gaps = np.diff(inside)
            assert np.all((gaps >= lo - 0.01) & (gaps <= hi + 0.01)), gaps
            n_checked += len(gaps)
        assert n_checked > 50

    def test_eye_movement_is_slow(self):
        rec, labs = generate(quiet("EYEM", seed=6, duration=120))
        x = rec.channels[0].samples
        p = np.abs(np.fft.rfft(x)) ** 2
        f = np.fft.rfftfreq(len(x), 1 / 250)
        assert p[f < 4].sum() / p.sum() > 0.95
        assert np.max(np.abs(x)) > DEFAULT_EVENTS["EYEM"].amplitude[0] * 0.5

    def test_artifact_is_broadband(self):
        rec, _ = generate(quiet("ARTF", seed=7, duration=60))
        x = rec.channels[0].samples
        p = np.abs(np.fft.rfft(x)) ** 2
        f = np.fft.rfftfreq(len(x), 1 / 250)
        assert p[f > 20].sum() / p.sum() > 0.6

    def test_spsw_raises_differential_energy(self):
        rec, labs = generate(SynthSpec(seed=8, duration=600))
        ana = analyze(rec.channels[0].samples)
        e_d = compute_energies(ana.frames, ana.spectral).e_d
        centre = (np.arange(len(e_d)) * 25 + 25) / 250.0
        refs = label_to_epochs(labs, {"CH00": 600})
        bg = [e for (_, e), c in refs.items() if c == "BCKG"]
        bg_mask = np.isin(np.floor(centre).astype(int), bg)
        spsw = [l for l in labs if l.label == "SPSW"]
        assert spsw
        for lab in spsw:
            mask = (centre >= lab.start_time - 0.1) & (centre <= lab.stop_time + 0.1)
            assert e_d[mask].mean() > e_d[bg_mask].mean()


class TestSpecs:
    def test_priors_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            SynthSpec(class_priors={"BCKG": 0.5}).validate()
        with pytest.raises(ConfigError):
            SynthSpec(class_priors={"XXXX": 1.0}).validate()

    def test_degenerate_ranges(self):
        with pytest.raises(ConfigError):
            spec_from_dict({"event_params": {"ARTF": {"amplitude": [5, 1], "duration": [1, 2]}}})
        with pytest.raises(ConfigError):
            spec_from_dict({"event_params": {"ARTF": {"amplitude": [0, 1], "duration": [1, 2]}}})

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="bogus"):
            spec_from_dict({"bogus": 1})

    def test_load_spec(self, tmp_path):
        cfg = {"seed": 9, "duration": 12.0, "num_channels": 2,
               "event_params": {"SPSW": {"amplitude": [30, 60], "duration": [0.05, 0.1]}}}
        (tmp_path / "s.json").write_text(json.dumps(cfg))
        spec = load_spec(tmp_path / "s.json")
        assert spec.seed == 9 and spec.num_channels == 2
        assert spec.event_params["SPSW"].amplitude == (30, 60)
        assert spec.event_params["PLED"] == DEFAULT_EVENTS["PLED"]
