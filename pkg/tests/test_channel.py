import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nrhandover.channel import (
    BsLayout,
    FilterConfig,
    LayoutError,
    MalformedHeaderError,
    RadioConfig,
    RawTrace,
    ShapeMismatchError,
    UnsupportedVersionError,
    generate_layout,
    generate_path,
    l1_filter,
    l3_filter,
    read_trace,
    straight_path,
    synthesize_trace,
    write_trace,
)
from nrhandover.scenarios import crossing_point, crossing_traces


def _trace(rsrp, sinr=None, seed=0):
    rsrp = np.asarray(rsrp, dtype=float)
    return RawTrace(0, 0.01, rsrp, rsrp if sinr is None else sinr, seed, {})


class TestLayout:
    def test_two_stations_respect_spacing(self):
        lay = generate_layout(2, (1000, 600), seed=1)
        assert lay.n_bs == 2
        assert np.hypot(*(lay.positions[0] - lay.positions[1])) >= 100

    def test_deterministic(self):
        a = generate_layout(7, (1300, 700), seed=7)
        b = generate_layout(7, (1300, 700), seed=7)
        assert a.n_bs == 7
        np.testing.assert_array_equal(a.positions, b.positions)
        d = np.linalg.norm(a.positions[:, None] - a.positions[None], axis=-1)
        assert d[np.triu_indices(7, 1)].min() >= 100

    def test_infeasible_packing(self):
        # 25 exclusion discs of radius 50 m cover more than 200 x 200 m
        assert 25 * math.pi * 50**2 > 200 * 200
        with pytest.raises(LayoutError):
            generate_layout(25, (200, 200), seed=0)

    def test_single_station_rejected(self):
        with pytest.raises(ValueError):
            generate_layout(1, (1000, 1000), seed=0)


class TestPath:
    def test_walking_speed_step_size(self):
        p = generate_path((1300, 700), 3, 60, seed=3)
        assert len(p) == 6000
        steps = p.step_lengths()
        nominal = 3 / 3.6 * 0.01
        assert nominal == pytest.approx(0.00833, abs=1e-5)
        assert steps.max() <= 1.2 * nominal + 1e-12
        assert 0.8 * nominal <= steps.max()

    def test_tick_count(self):
        p = generate_path((1300, 700), 50, 10, seed=3)
        assert len(p) == 1000
        np.testing.assert_allclose(np.diff(p.t), 0.01)

    def test_reproducible_and_inside_area(self):
        a = generate_path((1300, 700), 90, 60, seed=11)
        b = generate_path((1300, 700), 90, 60, seed=11)
        np.testing.assert_array_equal(a.xy, b.xy)
        assert a.xy.min() >= 0 and (a.xy <= [1300, 700]).all()
        assert a.step_lengths().max() <= 1.2 * 90 / 3.6 * 0.01 + 1e-12

    @pytest.mark.parametrize("speed", [0.5, 200])
    def test_speed_range(self, speed):
        with pytest.raises(ValueError):
            generate_path((100, 100), speed, 1, seed=0)


class TestSynthesis:
    def test_equidistant_symmetry(self):
        lay = BsLayout([[0, 0], [200, 0]], 20.0)
        path = straight_path((100, -50), (100, 50), 30)
        tr = synthesize_trace(lay, path, RadioConfig(shadow_sigma_db=0), seed=0)
        np.testing.assert_array_equal(tr.sinr_db[:, 0], tr.sinr_db[:, 1])

    def test_single_bs_is_snr_and_decreasing(self):
        radio = RadioConfig(shadow_sigma_db=0)
        lay = BsLayout([[0, 0]], 20.0)
        path = straight_path((10, 0), (500, 0), 50)
        tr = synthesize_trace(lay, path, radio, seed=0)
        snr = tr.rsrp_dbm[:, 0] - radio.noise_dbm
        np.testing.assert_allclose(tr.sinr_db[:, 0], snr, atol=1e-9)
        assert np.all(np.diff(tr.sinr_db[:, 0]) < 0)

    def test_distance_clamped_at_bs_position(self):
        radio = RadioConfig(shadow_sigma_db=0)
        lay = BsLayout([[0, 0], [300, 0]], 20.0)
        path = straight_path((0, 0), (5, 0), 30)
        tr = synthesize_trace(lay, path, radio, seed=0)
        assert np.isfinite(tr.rsrp_dbm).all()
        assert tr.rsrp_dbm[0, 0] == pytest.approx(20.0 - radio.ref_loss_db)

    def test_crossing_matches_closed_form(self):
        radio = RadioConfig(shadow_sigma_db=0)
        tx = (23.0, 20.0)
        lay = BsLayout([[0, 0], [400, 0]], tx)
        path = straight_path((20, 0), (380, 0), 50)
        tr = synthesize_trace(lay, path, radio, seed=0)
        diff = tr.sinr_db[:, 1] - tr.sinr_db[:, 0]
        crossings = np.nonzero(np.diff(np.sign(diff)))[0]
        assert len(crossings) == 1
        # independent solver: bisection on the raw pathloss difference
        def f(x):
            return (tx[1] - 35 * math.log10(400 - x)) - (tx[0] - 35 * math.log10(x))
        lo, hi = 20.0, 380.0
        for _ in range(200):
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if f(mid) < 0 else (lo, mid)
        assert crossing_point(400, *tx, 3.5) == pytest.approx(lo, abs=1e-9)
        k = crossings[0] + 1
        step = 50 / 3.6 * 0.01
        assert path.xy[k - 1, 0] < lo <= path.xy[k, 0] + 1e-9
        assert k == math.ceil((lo - 20) / step)

    def test_crossing_toy_ticks(self):
        for ct in crossing_traces(5, seed=3):
            s = ct.trace.sinr_db
            first = int(np.argmax(s[:, 1] >= s[:, 0]))
            assert first == ct.crossing_tick

    def test_deterministic_per_seed(self):
        lay = generate_layout(4, (800, 500), seed=1)
        path = generate_path((800, 500), 30, 5, seed=2)
        assert synthesize_trace(lay, path, RadioConfig(), 9) == synthesize_trace(lay, path, RadioConfig(), 9)
        assert not synthesize_trace(lay, path, RadioConfig(), 9) == synthesize_trace(lay, path, RadioConfig(), 10)

    def test_shadowing_statistics(self):
        lay = BsLayout([[0, 0], [5000, 5000]], 20.0)
        path = generate_path((1000, 1000), 90, 600, seed=5)
        radio = RadioConfig(shadow_sigma_db=6.0)
        flat = synthesize_trace(lay, path, RadioConfig(shadow_sigma_db=0), seed=1)
        shad = synthesize_trace(lay, path, radio, seed=1)
        s = flat.rsrp_dbm - shad.rsrp_dbm
        assert s.std() == pytest.approx(6.0, rel=0.25)

    def test_permutation_equivariance(self):
        lay = generate_layout(5, (900, 600), seed=4)
        path = generate_path((900, 600), 30, 3, seed=4)
        tr = synthesize_trace(lay, path, RadioConfig(), seed=4)
        perm = np.array([3, 0, 4, 1, 2])
        lay_p = BsLayout(lay.positions[perm], lay.tx_power_dbm[perm])
        tr_p = synthesize_trace(lay_p, path, RadioConfig(shadow_sigma_db=0), seed=4)
        tr_0 = synthesize_trace(lay, path, RadioConfig(shadow_sigma_db=0), seed=4)
        np.testing.assert_allclose(tr_p.sinr_db, tr_0.sinr_db[:, perm], atol=1e-9)
        rx = 10 ** (tr.rsrp_dbm / 10)
        np.testing.assert_allclose(rx.sum(1), rx[:, perm].sum(1), rtol=1e-12)

    def test_radio_config_validation(self):
        with pytest.raises(ValueError):
            RadioConfig(pathloss_exp=2.0)
        with pytest.raises(ValueError):
            RadioConfig(shadow_sigma_db=-1)
        with pytest.raises(ValueError):
            RadioConfig(noise_dbm=float("inf"))


class TestFilters:
    def test_l1_identity(self):
        tr = _trace(np.random.default_rng(0).normal(size=(50, 3)))
        assert l1_filter(tr, FilterConfig(l1_window=1, l3_k=0)).rsrp_dbm.tolist() == tr.rsrp_dbm.tolist()

    def test_l1_constant_fixed_point(self):
        tr = _trace(np.full((20, 2), -87.25))
        out = l1_filter(tr, FilterConfig(l1_window=5))
        np.testing.assert_array_equal(out.rsrp_dbm, tr.rsrp_dbm)

    def test_l1_hand_computed(self):
        x = np.array([[0.0], [10.0], [10.0], [10.0]])
        # brute force: mean over the available samples of each causal window
        expected = [np.mean(x[max(0, k - 1): k + 1, 0]) for k in range(4)]
        assert expected == [0.0, 5.0, 10.0, 10.0]
        out = l1_filter(_trace(x), FilterConfig(l1_window=2))
        assert out.sinr_db[:, 0].tolist() == expected

    def test_l3_identity(self):
        x = np.random.default_rng(1).normal(size=(40, 3))
        assert l3_filter(x, FilterConfig(l3_k=0)).tolist() == x.tolist()

    def test_l3_constant(self):
        x = np.full(30, -91.5)
        np.testing.assert_array_equal(l3_filter(x, FilterConfig(l3_k=4)), x)

    def test_l3_one_step(self):
        assert FilterConfig(l3_k=4).l3_coeff == 0.5
        assert l3_filter([0.0, 2.0], FilterConfig(l3_k=4)).tolist() == [0.0, 1.0]

    @settings(max_examples=60, deadline=None)
    @given(arrays(float, st.integers(1, 60), elements=st.floats(-150, 50)), st.integers(0, 12))
    def test_l3_stays_within_prefix_range(self, x, k):
        out = l3_filter(x, FilterConfig(l3_k=k))
        lo = np.minimum.accumulate(x)
        hi = np.maximum.accumulate(x)
        tol = 1e-9 * (1 + np.abs(x).max())
        assert np.all(out >= lo - tol) and np.all(out <= hi + tol)

    @settings(max_examples=30, deadline=None)
    @given(arrays(float, st.tuples(st.integers(1, 30), st.integers(1, 4)), elements=st.floats(-150, 50)))
    def test_identity_settings_leave_trace_unchanged(self, x):
        cfg = FilterConfig(l1_window=1, l3_k=0)
        tr = _trace(x)
        assert l1_filter(tr, cfg).rsrp_dbm.tolist() == x.tolist()
        assert l3_filter(x, cfg).tolist() == x.tolist()


class TestTraceFile:
    def _sample(self):
        lay = generate_layout(3, (600, 400), seed=2)
        path = generate_path((600, 400), 50, 2, seed=2)
        return synthesize_trace(lay, path, RadioConfig(), seed=2, ue_id=4)

    def test_round_trip_exact(self, tmp_path):
        tr = self._sample()
        write_trace(tr, tmp_path / "t.csv")
        back = read_trace(tmp_path / "t.csv")
        assert back == tr
        assert back.rsrp_dbm.tobytes() == tr.rsrp_dbm.tobytes()

    def test_truncated_body(self, tmp_path):
        tr = self._sample()
        p = tmp_path / "t.csv"
        write_trace(tr, p)
        lines = p.read_text().splitlines()
        p.write_text("\n".join(lines[:-5]) + "\n")
        with pytest.raises(ShapeMismatchError):
            read_trace(p)

    def test_short_row(self, tmp_path):
        tr = self._sample()
        p = tmp_path / "t.csv"
        write_trace(tr, p)
        lines = p.read_text().splitlines()
        lines[5] = ",".join(lines[5].split(",")[:-1])
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(ShapeMismatchError):
            read_trace(p)

    def test_unsupported_version(self, tmp_path):
        p = tmp_path / "t.csv"
        write_trace(self._sample(), p)
        p.write_text(p.read_text().replace('"version": 1', '"version": 99', 1))
        with pytest.raises(UnsupportedVersionError):
            read_trace(p)

    def test_malformed_header(self, tmp_path):
        p = tmp_path / "t.csv"
        write_trace(self._sample(), p)
        p.write_text("garbage\n" + p.read_text())
        with pytest.raises(MalformedHeaderError):
            read_trace(p)
        p.write_text("# nrhandover-trace {not json\n")
        with pytest.raises(MalformedHeaderError):
            read_trace(p)

    def test_errors_are_distinct(self):
        kinds = {MalformedHeaderError, ShapeMismatchError, UnsupportedVersionError}
        assert len(kinds) == 3
        assert not any(issubclass(a, b) for a in kinds for b in kinds if a is not b)

    @settings(max_examples=25, deadline=None)
    @given(arrays(float, st.tuples(st.integers(0, 12), st.integers(1, 4)),
                  elements=st.floats(-1e6, 1e6, allow_subnormal=True)))
    def test_round_trip_property(self, tmp_path_factory, x):
        p = tmp_path_factory.mktemp("rt") / "t.csv"
        tr = RawTrace(1, 0.01, x, -x, 5, {"note": "x", "v": [1.5, 2]})
        write_trace(tr, p)
        assert read_trace(p) == tr
