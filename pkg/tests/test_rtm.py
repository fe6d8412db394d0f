import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cadence_forge.errors import FormatError, ValidationError
from cadence_forge.rtm import (PreprocessConfig, RangeTimeMap, db_to_linear, linear_to_db, normalize_unit,
                               pad_and_resize, read_rtm, resize_bilinear, write_rtm)


def make_rtm(T=30, R=256, seed=0, label=3):
    rng = np.random.default_rng(seed)
    return RangeTimeMap(rng.uniform(-60, 0, size=(3, T, R)).astype(np.float32), label=label)


class TestConversions:
    def test_db_to_linear_examples(self):
        assert db_to_linear(0.0) == 1.0
        assert db_to_linear(-20.0) == pytest.approx(0.1, rel=1e-12)
        assert db_to_linear(6.0206) == pytest.approx(2.0, abs=1e-4)

    def test_db_to_linear_rejects_nonfinite(self):
        with pytest.raises(ValidationError):
            db_to_linear([0.0, np.inf])
        with pytest.raises(ValidationError):
            db_to_linear(np.nan)

    def test_linear_to_db_examples(self):
        assert abs(linear_to_db(1.0)) < 1e-8
        assert linear_to_db(0.0) == pytest.approx(-200.0, abs=1e-12)
        assert linear_to_db(db_to_linear(-40.0)) == pytest.approx(-40.0, abs=1e-4)

    def test_linear_to_db_rejects_negative(self):
        with pytest.raises(ValidationError):
            linear_to_db([-1e-3])
        with pytest.raises(ValidationError):
            linear_to_db(1.0, eps=0.0)

    @given(st.floats(1e-6, 1e3))
    def test_round_trip_adds_eps(self, x):
        eps = 1e-10
        assert db_to_linear(linear_to_db(x, eps)) == pytest.approx(x + eps, rel=1e-9)

    @given(st.floats(-150, 60), st.floats(-150, 60))
    def test_db_to_linear_monotone(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert db_to_linear(lo) <= db_to_linear(hi)
        if hi - lo > 1e-9:
            assert db_to_linear(lo) < db_to_linear(hi)


class TestNormalize:
    def test_spans_unit_interval(self):
        data = np.linspace(-60, 0, 3 * 4 * 5).reshape(3, 4, 5)
        out, degenerate = normalize_unit(RangeTimeMap(data))
        assert not degenerate
        assert out.data.min() == 0.0 and out.data.max() == 1.0

    def test_idempotent_on_unit_data(self):
        rng = np.random.default_rng(1)
        data = rng.uniform(0, 1, size=(3, 6, 7))
        data[0, 0, 0], data[0, 0, 1] = 0.0, 1.0
        out, _ = normalize_unit(RangeTimeMap(data))
        np.testing.assert_allclose(out.data, data, atol=1e-7)

    def test_constant_is_degenerate(self):
        out, degenerate = normalize_unit(RangeTimeMap(np.full((3, 5, 4), -12.0)))
        assert degenerate
        assert np.all(out.data == 0)

    def test_joint_scaling_keeps_antenna_ratios(self):
        data = np.zeros((3, 4, 4))
        data[0] += 10.0
        data[1] += 5.0
        out, _ = normalize_unit(RangeTimeMap(data))
        assert out.data[0].max() == 1.0 and out.data[1].max() == 0.5 and out.data[2].max() == 0.0

    @given(arrays(np.float64, (3, 4, 5), elements=st.floats(-1e3, 1e3)))
    def test_output_in_unit_interval(self, data):
        out, _ = normalize_unit(RangeTimeMap(data))
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0


class TestPadResize:
    def test_dataset_shape(self):
        out = pad_and_resize(make_rtm(T=30), PreprocessConfig(t_max=48, spatial_size=224))
        assert out.shape == (3, 224, 224)

    def test_identity_resize(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(3, 16, 16))
        out = pad_and_resize(RangeTimeMap(x), PreprocessConfig(t_max=16, spatial_size=16))
        np.testing.assert_allclose(out, x, atol=1e-6)

    def test_zero_in_zero_out(self):
        out = pad_and_resize(RangeTimeMap(np.zeros((3, 20, 256))), PreprocessConfig(spatial_size=32))
        assert np.all(out == 0)

    def test_padding_is_appended(self):
        x = np.ones((3, 4, 8))
        out = pad_and_resize(RangeTimeMap(x), PreprocessConfig(t_max=8, spatial_size=8))
        assert np.all(out[:, :4] == 1) and np.all(out[:, 4:] == 0)

    def test_rejects_long_input(self):
        with pytest.raises(ValidationError):
            pad_and_resize(make_rtm(T=50, R=8), PreprocessConfig(t_max=48))

    @given(st.floats(-10, 10), st.integers(0, 1000))
    def test_resize_is_linear(self, alpha, seed):
        x = np.random.default_rng(seed).normal(size=(3, 9, 13))
        np.testing.assert_allclose(resize_bilinear(alpha * x, 7, 11), alpha * resize_bilinear(x, 7, 11), atol=1e-6)

    def test_resize_preserves_constant(self):
        out = resize_bilinear(np.full((2, 5, 9), 3.5), 12, 4)
        np.testing.assert_allclose(out, 3.5, rtol=1e-12)


class TestRangeTimeMap:
    def test_invariants(self):
        with pytest.raises(ValidationError):
            RangeTimeMap(np.zeros((2, 5, 5)))
        with pytest.raises(ValidationError):
            RangeTimeMap(np.zeros((3, 1, 5)))
        bad = np.zeros((3, 5, 5))
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValidationError):
            RangeTimeMap(bad)

    def test_conformance(self):
        assert make_rtm(T=30).is_dataset_conformant()
        assert not make_rtm(T=19).is_dataset_conformant()
        assert not make_rtm(T=30, R=128).is_dataset_conformant()


class TestRtmFile:
    def test_round_trip(self, tmp_path):
        rtm = make_rtm(T=23, R=17, label=5)
        write_rtm(tmp_path / "a.rtm", rtm)
        back = read_rtm(tmp_path / "a.rtm")
        assert back.label == 5 and back.frame_rate_hz == pytest.approx(13.0)
        np.testing.assert_array_equal(back.data, rtm.data)

    def test_unlabelled(self, tmp_path):
        rtm = make_rtm(T=5, R=4, label=None)
        write_rtm(tmp_path / "u.rtm", rtm)
        assert read_rtm(tmp_path / "u.rtm").label is None

    def test_layout(self, tmp_path):
        data = np.arange(3 * 2 * 4, dtype=np.float32).reshape(3, 2, 4)
        write_rtm(tmp_path / "l.rtm", RangeTimeMap(data, label=1))
        raw = (tmp_path / "l.rtm").read_bytes()
        magic, version, a, t, r, fr, label = struct.unpack_from("<4sIIIIfi", raw)
        assert (magic, version, a, t, r, label) == (b"RTM1", 1, 3, 2, 4, 1)
        np.testing.assert_array_equal(np.frombuffer(raw[28:], "<f4"), data.ravel())

    def test_bad_magic(self, tmp_path):
        write_rtm(tmp_path / "m.rtm", make_rtm(T=4, R=4))
        raw = bytearray((tmp_path / "m.rtm").read_bytes())
        raw[:4] = b"XXXX"
        (tmp_path / "m.rtm").write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            read_rtm(tmp_path / "m.rtm")

    def test_truncated(self, tmp_path):
        write_rtm(tmp_path / "t.rtm", make_rtm(T=4, R=4))
        raw = (tmp_path / "t.rtm").read_bytes()
        (tmp_path / "t.rtm").write_bytes(raw[:-3])
        with pytest.raises(FormatError):
            read_rtm(tmp_path / "t.rtm")
        (tmp_path / "t.rtm").write_bytes(raw[:10])
        with pytest.raises(FormatError):
            read_rtm(tmp_path / "t.rtm")
