import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nrhandover.channel import RawTrace
from nrhandover.metrics import (
    EvalReport,
    RateConfig,
    average_rate,
    count_events,
    ecdf_eval,
    ecdf_table,
    evaluate_run,
    event_probabilities,
    gamma_r,
    max_rate,
    pool_reports,
    relative_rate,
    sinr_ecdf_at_ho,
    write_ecdf,
    write_report_csv,
)
from nrhandover.protocol import Event, EventKind

K = EventKind
B = 10e6


def db_for_bits(k):
    """SINR in dB whose Shannon efficiency is exactly k bit/s/Hz."""
    return 10 * math.log10(2**k - 1)


class TestRates:
    def test_zero_db_gives_bandwidth(self):
        sinr = np.zeros((20, 1))
        assert average_rate(sinr, [0] * 20) == pytest.approx(B)

    def test_no_service(self):
        assert average_rate(np.zeros((5, 2)), [-1] * 5) == 0.0

    def test_ten_tick_hand_sum(self):
        bits = np.array([[1, 2], [1, 2], [3, 1], [3, 1], [2, 2], [1, 4], [1, 4], [2, 3], [4, 1], [1, 1]])
        sinr = np.vectorize(db_for_bits)(bits)
        serving = [0, 1, -1, 0, 1, -1, 1, 1, 0, 1]
        # 1 + 2 + 0 + 3 + 2 + 0 + 4 + 3 + 4 + 1 = 20 bit/s/Hz over 10 ticks
        assert average_rate(sinr, serving) == pytest.approx(20 / 10 * B, rel=1e-12)
        # per-tick maxima: 2 + 2 + 3 + 3 + 2 + 4 + 4 + 3 + 4 + 1 = 28
        assert max_rate(sinr) == pytest.approx(28 / 10 * B, rel=1e-12)

    def test_crossover_max(self):
        bits = np.array([[3, 1]] * 4 + [[1, 2]] * 6)
        sinr = np.vectorize(db_for_bits)(bits)
        assert max_rate(sinr) == pytest.approx((4 * 3 + 6 * 2) / 10 * B, rel=1e-12)

    def test_single_bs_and_dominant_bs(self):
        rng = np.random.default_rng(0)
        one = rng.normal(0, 5, size=(50, 1))
        assert max_rate(one) == average_rate(one, [0] * 50)
        dom = np.column_stack([one[:, 0] + 30, one[:, 0]])
        assert max_rate(dom) == average_rate(dom, [0] * 50)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            average_rate(np.zeros((5, 2)), [0] * 4)

    def test_gamma_r(self):
        assert gamma_r(3.0, 3.0) == 1.0
        with pytest.raises(ValueError):
            gamma_r(1.0, 0.0)

    def test_bandwidth_validated(self):
        with pytest.raises(ValueError):
            RateConfig(bandwidth_hz=0)

    @settings(max_examples=60)
    @given(arrays(float, st.tuples(st.integers(1, 40), st.integers(1, 5)), elements=st.floats(-30, 40)), st.data())
    def test_average_below_max(self, sinr, data):
        serving = data.draw(st.lists(st.integers(-1, sinr.shape[1] - 1), min_size=len(sinr), max_size=len(sinr)))
        assert average_rate(sinr, serving) <= max_rate(sinr) * (1 + 1e-12)

    @settings(max_examples=60)
    @given(arrays(float, st.tuples(st.integers(1, 40), st.integers(2, 5)), elements=st.floats(-30, 40)),
           st.data(), st.sampled_from([0.5, 2.0, 3.7, 100.0]))
    def test_relative_rate_invariances(self, sinr, data, scale):
        n_bs = sinr.shape[1]
        serving = np.array(data.draw(st.lists(st.integers(0, n_bs - 1), min_size=len(sinr), max_size=len(sinr))))
        perm = np.array(data.draw(st.permutations(range(n_bs))))
        inv = np.argsort(perm)
        g = relative_rate(sinr, serving)
        assert relative_rate(sinr[:, perm], inv[serving]) == g
        small = gamma_r(average_rate(sinr, serving, RateConfig(B)), max_rate(sinr, RateConfig(B)))
        big = gamma_r(average_rate(sinr, serving, RateConfig(B * scale)), max_rate(sinr, RateConfig(B * scale)))
        assert big == pytest.approx(small, rel=1e-12)
        assert 0.0 <= g <= 1.0 + 1e-12


def synthetic_log(n_ho, n_hof_before_cmd, n_pp):
    ev = []
    t = 0
    for i in range(n_ho):
        ev += [Event(t, K.HO_PREP_START, 0, 1), Event(t + 5, K.HO_CMD, 0, 1), Event(t + 9, K.HO_COMPLETE, 0, 1)]
        if i < n_pp:
            ev.append(Event(t + 9, K.PP, 0, 1))
        t += 20
    for _ in range(n_hof_before_cmd):
        ev += [Event(t, K.HO_PREP_START, 0, 1), Event(t + 3, K.HOF, 0, 1), Event(t + 3, K.RLF, 0, 1)]
        t += 50
    return ev


class TestProbabilities:
    def test_counting_example(self):
        assert event_probabilities([synthetic_log(100, 2, 45)]) == (2 / 102, 45 / 100)

    def test_hof_at_command_counts_once(self):
        ev = [Event(0, K.HO_PREP_START, 0, 1), Event(5, K.HO_CMD, 0, 1), Event(5, K.HOF, 0, 1),
              Event(5, K.RLF, 0, 1)]
        c = count_events(ev)
        assert (c.ho_attempts, c.hof, c.ho_complete) == (1, 1, 0)
        assert event_probabilities([ev]) == (1.0, None)

    def test_empty(self):
        assert event_probabilities([[]]) == (None, None)

    def test_all_pp(self):
        assert event_probabilities([synthetic_log(7, 0, 7)])[1] == 1.0

    def test_pooling_adds_counts(self):
        a, b, c = synthetic_log(10, 1, 3), synthetic_log(4, 0, 4), synthetic_log(0, 2, 0)
        pooled = event_probabilities([a, b, c])
        assert pooled == event_probabilities([c, a, b]) == event_probabilities([a + b + c])
        assert pooled == (3 / 17, 7 / 14)


class TestEcdf:
    def test_single_sample(self):
        trace = RawTrace(0, 0.01, np.zeros((20, 2)), np.full((20, 2), 3.0), 0, {})
        trace.sinr_db[5, 0] = -7.0
        ev = [Event(0, K.HO_PREP_START, 0, 1), Event(5, K.HO_CMD, 0, 1), Event(9, K.HO_COMPLETE, 0, 1)]
        start, end = sinr_ecdf_at_ho([ev], [trace])
        assert start.tolist() == [-7.0] and end.tolist() == [3.0]
        assert ecdf_eval(start, -8) == 0.0 and ecdf_eval(start, -6) == 1.0
        assert ecdf_eval(start, -7) == 1.0

    def test_pooled_equals_concatenated(self):
        rng = np.random.default_rng(1)
        traces, logs = [], []
        for _ in range(2):
            tr = RawTrace(0, 0.01, np.zeros((100, 2)), rng.normal(0, 5, (100, 2)), 0, {})
            ticks = sorted(rng.choice(np.arange(5, 90), 6, replace=False))
            logs.append([Event(int(t), K.HO_CMD, 0, 1) for t in ticks])
            traces.append(tr)
        start, _ = sinr_ecdf_at_ho(logs, traces)
        each = [sinr_ecdf_at_ho([l], [t])[0] for l, t in zip(logs, traces)]
        assert start.tolist() == sorted(np.concatenate(each).tolist())

    @settings(max_examples=60)
    @given(arrays(float, st.integers(1, 50), elements=st.floats(-30, 30)), st.lists(st.floats(-40, 40), min_size=2))
    def test_monotone_step_function(self, samples, xs):
        s = np.sort(samples)
        vals = [ecdf_eval(s, x) for x in sorted(xs)]
        assert vals == sorted(vals)
        assert ecdf_eval(s, s[0] - 1e-9) == 0.0
        assert ecdf_eval(s, s[-1]) == 1.0

    def test_table_and_file(self, tmp_path):
        s = np.array([-3.0, 1.0, 2.5, 7.0])
        assert ecdf_table(s) == [(-3.0, 0.25), (1.0, 0.5), (2.5, 0.75), (7.0, 1.0)]
        write_ecdf(s, tmp_path / "e.csv")
        lines = (tmp_path / "e.csv").read_text().splitlines()
        assert lines[0] == "sinr_db,cum_prob" and lines[-1] == "7.0,1.0"


class TestReports:
    def test_oracle_policy_is_ideal(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            sinr = rng.normal(0, 8, size=(rng.integers(5, 200), rng.integers(1, 8)))
            tr = RawTrace(0, 0.01, sinr, sinr, 0, {})
            r = evaluate_run(tr, [], np.argmax(sinr, axis=1))
            assert abs(r.gamma_r - 1.0) <= 1e-12
            assert r.hof_prob is None and r.pp_prob is None

    def test_pool_reports(self):
        sinr = np.zeros((200, 2))
        tr = RawTrace(0, 0.01, sinr, sinr, 3, {"speed_kmh": 30})
        r1 = evaluate_run(tr, synthetic_log(3, 1, 1), [0] * 200)
        r2 = evaluate_run(tr, synthetic_log(5, 0, 0), [0] * 100 + [-1] * 100)
        pooled = pool_reports([r1, r2])
        assert pooled.gamma_r == pytest.approx(0.75)
        assert (pooled.ho_count, pooled.hof_count, pooled.pp_count, pooled.ho_attempts) == (8, 1, 1, 9)
        assert pooled.hof_prob == 1 / 9 and pooled.pp_prob == 1 / 8
        assert pooled.n_traces == 2 and pooled.speed_kmh == 30
        assert pool_reports([r2, r1]).hof_prob == pooled.hof_prob
        with pytest.raises(ValueError):
            pool_reports([])

    def test_report_csv(self, tmp_path):
        sinr = np.zeros((10, 2))
        tr = RawTrace(0, 0.01, sinr, sinr, 3, {"speed_kmh": 50})
        rep = evaluate_run(tr, [], [0] * 10)
        assert isinstance(rep, EvalReport)
        write_report_csv([("t0", rep)], tmp_path / "r.csv")
        rows = (tmp_path / "r.csv").read_text().splitlines()
        assert rows[0].startswith("trace,speed_kmh,seed,gamma_r")
        assert rows[1].startswith("t0,50,3,1.0,")
