import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsqa.metrics import (EvalReport, EvalRow, _average_ranks, build_report,
                          emit_plot_data, pcc, rmse, srcc)


def _brute_rmse(x, y):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y)) / len(x))


def _brute_pcc(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    dx = math.sqrt(sum((a - mx) ** 2 for a in x))
    dy = math.sqrt(sum((b - my) ** 2 for b in y))
    return num / (dx * dy)


def _brute_ranks(x):
    out = []
    for v in x:
        less = sum(1 for u in x if u < v)
        equal = sum(1 for u in x if u == v)
        out.append(less + (equal + 1) / 2.0)
    return out


class TestRmse:
    def test_known_value(self):
        # errors (1, 2): sqrt((1+4)/2) = sqrt(2.5)
        assert rmse([1.0, 2.0], [2.0, 4.0]) == pytest.approx(math.sqrt(2.5))

    def test_zero_at_identity(self, rng):
        x = rng.standard_normal(50)
        assert rmse(x, x) == 0.0

    def test_symmetric(self, rng):
        x = rng.standard_normal(30)
        y = rng.standard_normal(30)
        assert rmse(x, y) == rmse(y, x)

    def test_triangle_bound(self, rng):
        x = rng.standard_normal(40)
        y = rng.standard_normal(40)
        z = rng.standard_normal(40)
        assert rmse(x, z) <= rmse(x, y) + rmse(y, z) + 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            rmse([], [])

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            rmse([1.0], [1.0, 2.0])


class TestPcc:
    def test_known_value(self):
        # hand case with r = 0.8
        x = [1.0, 2.0, 3.0, 4.0, 5.0]
        y = [2.0, 1.0, 4.0, 3.0, 5.0]
        assert pcc(x, y) == pytest.approx(0.8)

    def test_perfect_correlation(self):
        x = [1.0, 2.0, 3.0]
        assert pcc(x, [10.0, 20.0, 30.0]) == pytest.approx(1.0)

    def test_perfect_anticorrelation(self):
        assert pcc([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-1.0)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError, match="zero variance"):
            pcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError, match="zero variance"):
            pcc([1.0, 2.0, 3.0], [2.0, 2.0, 2.0])

    def test_single_pair_rejected(self):
        with pytest.raises(ValueError):
            pcc([1.0], [2.0])

    def test_bounded(self, rng):
        for _ in range(20):
            x = rng.standard_normal(10)
            y = rng.standard_normal(10)
            assert -1.0 - 1e-12 <= pcc(x, y) <= 1.0 + 1e-12


class TestRanks:
    def test_no_ties(self):
        assert np.allclose(_average_ranks(np.array([30.0, 10.0, 20.0])),
                           [3.0, 1.0, 2.0])

    def test_tie_shares_average(self):
        # two tied smallest values share rank (1+2)/2 = 1.5
        assert np.allclose(_average_ranks(np.array([5.0, 5.0, 9.0])),
                           [1.5, 1.5, 3.0])

    def test_all_tied(self):
        assert np.allclose(_average_ranks(np.full(4, 2.0)), [2.5] * 4)

    def test_matches_brute_force(self, rng):
        for _ in range(50):
            x = rng.integers(0, 5, size=12).astype(float)
            assert np.allclose(_average_ranks(x), _brute_ranks(x))


class TestSrcc:
    def test_monotone_perfect(self):
        x = [1.0, 2.0, 3.0, 4.0]
        y = [1.1, 4.0, 9.5, 100.0]  # nonlinear but monotone
        assert srcc(x, y) == pytest.approx(1.0)

    def test_reversed(self):
        assert srcc([1.0, 2.0, 3.0], [9.0, 5.0, 1.0]) == pytest.approx(-1.0)

    def test_ties_handled(self):
        # without average ranks this hand case is wrong
        x = [1.0, 1.0, 2.0]
        y = [3.0, 3.0, 5.0]
        assert srcc(x, y) == pytest.approx(1.0)

    def test_all_tied_rejected(self):
        with pytest.raises(ValueError, match="zero variance"):
            srcc([1.0, 1.0], [2.0, 3.0])


class TestAgainstBruteForce:
    def test_random_instances(self, rng):
        """Randomized oracle sweep: pure-python formulas at 1e-12.  The
        full-size sweep lives in the acceptance suite; this is the smoke
        version."""
        for i in range(200):
            n = int(rng.integers(2, 61))
            x = rng.uniform(1, 5, n)
            y = rng.uniform(1, 5, n)
            if rng.random() < 0.3:  # force ties into a third of the cases
                x = np.round(x * 2) / 2
                y = np.round(y * 2) / 2
            assert rmse(x, y) == pytest.approx(_brute_rmse(x, y), abs=1e-12)
            try:
                expect = _brute_pcc(x, y)
            except ZeroDivisionError:
                continue
            assert pcc(x, y) == pytest.approx(expect, abs=1e-12)
            assert srcc(x, y) == pytest.approx(
                _brute_pcc(_brute_ranks(x), _brute_ranks(y)), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=-1000, max_value=1000), min_size=3,
                max_size=30, unique=True),
       st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_srcc_invariant_under_monotone_transforms(xs, seed):
    y = np.random.default_rng(seed).standard_normal(len(xs))
    if np.unique(y).size < 2:
        return
    x = np.array(xs, dtype=np.float64) * 0.1
    base = srcc(x, y)
    assert srcc(np.exp(x / 50.0), y) == pytest.approx(base, abs=1e-9)
    assert srcc(x ** 3, y) == pytest.approx(base, abs=1e-9)
    assert srcc(3.0 * x + 7.0, y) == pytest.approx(base, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1),
       st.floats(min_value=0.1, max_value=10.0),
       st.floats(min_value=-5.0, max_value=5.0))
def test_pcc_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(15)
    y = rng.standard_normal(15)
    assert pcc(a * x + b, y) == pytest.approx(pcc(x, y), abs=1e-12)
    assert pcc(-a * x + b, y) == pytest.approx(-pcc(x, y), abs=1e-12)


class TestReport:
    def _rows(self):
        return [EvalRow("a.wav", 4.0, 3.5, "white_snr10"),
                EvalRow("b.wav", 2.0, 2.5, "white_snr10"),
                EvalRow("c.wav", 3.0, 3.0, "clip_0.5"),
                EvalRow("d.wav", 1.5, 2.0, "clip_0.5")]

    def test_aggregate_consistency(self):
        rows = self._rows()
        rep = build_report(rows)
        t = [r.true_mos for r in rows]
        p = [r.predicted_mos for r in rows]
        assert rep.aggregate["rmse"] == pytest.approx(rmse(t, p))
        assert rep.aggregate["pcc"] == pytest.approx(pcc(t, p))
        assert rep.aggregate["srcc"] == pytest.approx(srcc(t, p))

    def test_by_condition_split(self):
        rep = build_report(self._rows())
        assert set(rep.by_condition) == {"white_snr10", "clip_0.5"}
        sub = rep.by_condition["white_snr10"]
        assert sub["rmse"] == pytest.approx(0.5)

    def test_single_clip_condition_yields_none(self):
        rows = [EvalRow("a.wav", 4.0, 3.5, "solo"),
                EvalRow("b.wav", 2.0, 2.5, "duo"),
                EvalRow("c.wav", 2.5, 2.7, "duo")]
        rep = build_report(rows)
        assert rep.by_condition["solo"]["rmse"] is not None  # rmse works on 1
        assert rep.by_condition["solo"]["pcc"] is None
        assert rep.by_condition["solo"]["srcc"] is None

    def test_zero_variance_yields_none_not_crash(self):
        rows = [EvalRow("a.wav", 3.0, 2.0, ""), EvalRow("b.wav", 3.0, 2.5, "")]
        rep = build_report(rows)
        assert rep.aggregate["pcc"] is None
        assert rep.aggregate["rmse"] is not None

    def test_json_round_trip(self, tmp_path):
        rep = build_report(self._rows())
        p = tmp_path / "report.json"
        rep.save(p)
        data = json.loads(p.read_text())
        assert set(data) == {"rows", "aggregate", "by_condition"}
        assert len(data["rows"]) == 4
        assert data["rows"][0]["clip_path"] == "a.wav"
        assert data["aggregate"]["rmse"] == pytest.approx(rep.aggregate["rmse"])

    def test_json_null_for_unavailable(self):
        rows = [EvalRow("a.wav", 3.0, 2.0, ""), EvalRow("b.wav", 3.0, 2.5, "")]
        data = json.loads(build_report(rows).to_json())
        assert data["aggregate"]["pcc"] is None


class TestPlotData:
    def test_files_and_shape(self, tmp_path, rng):
        rows = [EvalRow(f"{i}.wav", float(t), float(p), "")
                for i, (t, p) in enumerate(zip(rng.uniform(1, 5, 30),
                                               rng.uniform(1, 5, 30)))]
        rep = build_report(rows)
        scatter, hist = emit_plot_data(rep, tmp_path / "plots")
        s_lines = scatter.read_text().splitlines()
        assert s_lines[0] == "true_mos,predicted_mos"
        assert len(s_lines) == 31
        h_lines = hist.read_text().splitlines()
        assert h_lines[0] == "bin_center,count_true,count_pred"
        assert len(h_lines) == 21  # 20 bins

    def test_hist_counts_cover_all_clips(self, tmp_path, rng):
        rows = [EvalRow(f"{i}.wav", float(t), float(p), "")
                for i, (t, p) in enumerate(zip(rng.uniform(1.1, 4.9, 25),
                                               rng.uniform(1.1, 4.9, 25)))]
        _, hist = emit_plot_data(build_report(rows), tmp_path)
        body = [l.split(",") for l in hist.read_text().splitlines()[1:]]
        assert sum(int(r[1]) for r in body) == 25
        assert sum(int(r[2]) for r in body) == 25


class TestEvalReportTypes:
    def test_report_is_frozen(self):
        rep = build_report([EvalRow("a.wav", 3.0, 2.0, ""),
                            EvalRow("b.wav", 4.0, 2.5, "")])
        assert isinstance(rep, EvalReport)
        with pytest.raises(AttributeError):
            rep.aggregate = {}
