import numpy as np
import pytest

from eegcep.dynamics import (FEAT_MAGIC, SYSTEM_DIMS, SYSTEMS, DeltaSpec, FeatureSequence,
                             assemble, delta, get_system, read_features, write_features)
from eegcep.energy import EnergyTerms
from eegcep.errors import ConfigError, FormatError

TABLE_DIMS = {1: 7, 2: 8, 3: 8, 4: 8, 5: 9, 6: 14, 7: 16, 8: 16, 9: 16, 10: 18,
              11: 21, 12: 24, 13: 24, 14: 24, 15: 27, 16: 26}


def delta_oracle(seq, n):
    T = len(seq)
    den = 2 * sum(k * k for k in range(1, n + 1))
    out = []
    for t in range(T):
        acc = 0.0
        for k in range(1, n + 1):
            hi = seq[min(T - 1, t + k)]
            lo = seq[max(0, t - k)]
            acc += k * (hi - lo)
        out.append(acc / den)
    return out


def random_streams(rng, T=60):
    ceps = rng.normal(size=(T, 7))
    e = EnergyTerms(rng.normal(size=T), rng.normal(size=T), rng.uniform(0, 3, size=T))
    return ceps, e


class TestDelta:
    def test_constant(self):
        assert not delta(np.full(30, 7.0), 9).any()

    def test_ramp_interior(self):
        T = 40
        d = delta(2.0 * np.arange(T), 9)
        assert np.all(d[9:T - 9] == 2.0)

    def test_oracle(self, rng):
        for _ in range(20):
            seq = rng.normal(size=50)
            np.testing.assert_allclose(delta(seq, 3), delta_oracle(seq.tolist(), 3), atol=1e-12, rtol=0)

    def test_short_sequences(self, rng):
        for T in (1, 2, 3):
            seq = rng.normal(size=T)
            np.testing.assert_allclose(delta(seq, 9), delta_oracle(seq.tolist(), 9), atol=1e-12)

    def test_linear(self, rng):
        x, y = rng.normal(size=(2, 80))
        np.testing.assert_allclose(delta(2.5 * x - 0.75 * y, 9),
                                   2.5 * delta(x, 9) - 0.75 * delta(y, 9), atol=1e-12)

    def test_columns_independent(self, rng):
        m = rng.normal(size=(30, 4))
        d = delta(m, 3)
        for j in range(4):
            np.testing.assert_array_equal(d[:, j], delta(m[:, j], 3))


class TestSystems:
    def test_dimension_ledger(self):
        assert SYSTEM_DIMS == TABLE_DIMS

    @pytest.mark.parametrize("sid", range(1, 17))
    def test_assembled_dims(self, sid, rng):
        ceps, e = random_streams(rng)
        seq = assemble(ceps, e, get_system(sid))
        assert seq.dim == TABLE_DIMS[sid] and len(seq) == 60 and seq.system_id == sid

    def test_unknown_system(self):
        with pytest.raises(ConfigError):
            get_system(17)

    def test_system1_pass_through(self):
        ceps = np.tile(np.arange(1.0, 8.0), (25, 1))
        e = EnergyTerms(np.zeros(25), np.zeros(25), np.zeros(25))
        seq = assemble(ceps, e, SYSTEMS[1])
        assert np.array_equal(seq.frames, ceps)

    def test_static_order(self, rng):
        ceps, e = random_streams(rng)
        f = assemble(ceps, e, SYSTEMS[5]).frames
        assert np.array_equal(f[:, :7], ceps)
        assert np.array_equal(f[:, 7], e.e_f) and np.array_equal(f[:, 8], e.e_d)
        f3 = assemble(ceps, e, SYSTEMS[3]).frames
        assert np.array_equal(f3[:, 7], e.e_t)

    def test_delta_blocks(self, rng):
        ceps, e = random_streams(rng)
        f = assemble(ceps, e, SYSTEMS[15]).frames
        static = f[:, :9]
        np.testing.assert_array_equal(f[:, 9:18], delta(static, 9))
        np.testing.assert_array_equal(f[:, 18:27], delta(delta(static, 9), 3))

    def test_system16_drops_only_ed_second_delta(self, rng):
        ceps, e = random_streams(rng)
        f15 = assemble(ceps, e, SYSTEMS[15]).frames
        f16 = assemble(ceps, e, SYSTEMS[16]).frames
        assert np.array_equal(f16, f15[:, :26])
        assert SYSTEMS[16].feature_names[-1] == "dd_e_f"

    def test_length_mismatch(self, rng):
        ceps, e = random_streams(rng)
        with pytest.raises(ValueError, match="mismatch"):
            assemble(ceps[:-1], e, SYSTEMS[2])

    def test_receptive_field(self, rng):
        spec = DeltaSpec()
        reach = spec.n_first + spec.n_second
        ceps, e = random_streams(rng, T=120)
        base = assemble(ceps, e, SYSTEMS[15]).frames
        t0 = 60
        ceps2 = ceps.copy()
        ceps2[t0] += 10.0
        e2 = EnergyTerms(e.e_t.copy(), e.e_f.copy(), e.e_d.copy())
        e2.e_f[t0] -= 4.0
        moved = assemble(ceps2, e2, SYSTEMS[15]).frames
        changed = np.flatnonzero(np.any(moved != base, axis=1))
        assert changed.min() >= t0 - reach and changed.max() <= t0 + reach


class TestFeatFile:
    def test_round_trip(self, tmp_path, rng):
        seq = FeatureSequence(rng.normal(size=(33, 26)), 0.1, "FP1-F7 µ", 16)
        write_features(seq, tmp_path / "a.feat")
        back = read_features(tmp_path / "a.feat")
        assert (back.dim, len(back), back.system_id) == (26, 33, 16)
        assert back.frame_period == 0.1 and back.channel_name == "FP1-F7 µ"
        assert np.array_equal(back.frames, seq.frames.astype(np.float32))
        # a second trip is bit-exact
        write_features(back, tmp_path / "b.feat")
        assert (tmp_path / "a.feat").read_bytes() == (tmp_path / "b.feat").read_bytes()

    def test_layout(self, tmp_path):
        seq = FeatureSequence(np.array([[1.0, 2.0]]), 0.1, "ab", 3)
        write_features(seq, tmp_path / "a.feat")
        raw = (tmp_path / "a.feat").read_bytes()
        assert raw[:8] == FEAT_MAGIC
        assert raw[8:20] == bytes([2, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0])
        assert np.frombuffer(raw[20:28], "<f8")[0] == 0.1
        assert raw[28:34] == b"\x02\x00\x00\x00ab"
        assert np.frombuffer(raw[34:], "<f4").tolist() == [1.0, 2.0]

    def test_zero_frames(self, tmp_path):
        write_features(FeatureSequence(np.zeros((0, 9)), 0.1, "x", 5), tmp_path / "a.feat")
        back = read_features(tmp_path / "a.feat")
        assert len(back) == 0 and back.dim == 9

    def test_truncated(self, tmp_path, rng):
        write_features(FeatureSequence(rng.normal(size=(4, 9)), 0.1, "x", 5), tmp_path / "a.feat")
        raw = (tmp_path / "a.feat").read_bytes()
        (tmp_path / "a.feat").write_bytes(raw[:-10])
        with pytest.raises(FormatError, match=rf"expected {len(raw)} bytes, got {len(raw) - 10}"):
            read_features(tmp_path / "a.feat")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "a.feat").write_bytes(b"FEATv2\x00\x00" + bytes(40))
        with pytest.raises(FormatError, match="magic"):
            read_features(tmp_path / "a.feat")
