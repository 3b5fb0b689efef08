import math

import numpy as np
import pytest

from seizurecs.errors import DimensionError
from seizurecs.metrics import EvalReport, FoldMetrics, classify_metrics, mean_defined, pcc, psnr


def loop_pcc(x, y):
    rs = []
    for c in range(x.shape[1]):
        a, b = list(x[:, c]), list(y[:, c])
        ma, mb = sum(a) / len(a), sum(b) / len(b)
        cov = sum((u - ma) * (v - mb) for u, v in zip(a, b))
        va = sum((u - ma) ** 2 for u in a)
        vb = sum((v - mb) ** 2 for v in b)
        if va > 0 and vb > 0:
            rs.append(cov / math.sqrt(va * vb))
    return sum(rs) / len(rs) if rs else None


class TestClassify:
    def test_all_correct(self):
        m = classify_metrics([0, 1, 1, 0], [0, 1, 1, 0])
        assert (m.accuracy, m.sensitivity, m.fpr_per_hour) == (1.0, 1.0, 0.0)

    def test_fpr_arithmetic(self):
        labels = np.zeros(270, dtype=int)
        preds = labels.copy()
        preds[:3] = 1
        m = classify_metrics(preds, labels)
        assert m.interictal_hours == pytest.approx(1.5)
        assert m.fpr_per_hour == pytest.approx(2.0)

    def test_no_positives(self):
        assert classify_metrics([0, 1], [0, 0]).sensitivity is None

    def test_no_negatives(self):
        m = classify_metrics([1, 0], [1, 1])
        assert m.fpr_per_hour is None and m.sensitivity == 0.5

    def test_counts(self):
        m = classify_metrics([1, 1, 0, 0, 1], [1, 0, 0, 1, 1])
        assert (m.tp, m.tn, m.fp, m.fn) == (2, 1, 1, 1)
        assert m.accuracy == pytest.approx(3 / 5)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            classify_metrics([0, 1], [0])

    def test_random_against_loop(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(1, 200))
            p, y = rng.integers(0, 2, n), rng.integers(0, 2, n)
            m = classify_metrics(p, y)
            tp = sum(1 for a, b in zip(p, y) if a == 1 and b == 1)
            fn = sum(1 for a, b in zip(p, y) if a == 0 and b == 1)
            fp = sum(1 for a, b in zip(p, y) if a == 1 and b == 0)
            neg = sum(1 for b in y if b == 0)
            assert m.accuracy == sum(1 for a, b in zip(p, y) if a == b) / n
            assert m.sensitivity == (tp / (tp + fn) if tp + fn else None)
            assert m.fpr_per_hour == (fp / (neg * 20 / 3600) if neg else None)


class TestPcc:
    def test_identity(self):
        x = np.random.default_rng(1).standard_normal((50, 3))
        assert pcc(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_negation(self):
        x = np.random.default_rng(2).standard_normal((50, 3))
        assert pcc(x, -x) == pytest.approx(-1.0, abs=1e-12)

    def test_against_loop(self):
        rng = np.random.default_rng(3)
        x, y = rng.standard_normal((40, 4)), rng.standard_normal((40, 4))
        assert abs(pcc(x, y) - loop_pcc(x, y)) < 1e-12

    def test_constant_channel_skipped(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((30, 2))
        y = x.copy()
        y[:, 1] = 5.0
        assert pcc(x, y) == pytest.approx(1.0)

    def test_all_degenerate(self):
        assert pcc(np.ones((10, 2)), np.ones((10, 2))) is None

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            pcc(np.zeros((3, 2)), np.zeros((3, 3)))


class TestPsnr:
    def test_perfect(self):
        x = np.random.default_rng(5).standard_normal((20, 2)) + 3
        assert psnr(x, x) == math.inf

    def test_twenty_db(self):
        x = np.zeros((100, 1))
        x[0] = 1.0
        y = x + 0.1
        assert psnr(x, y) == pytest.approx(20.0, abs=1e-12)

    def test_scaling_shifts_ten_db(self):
        # linear peak: max grows x10 while MSE grows x100, a net -10 dB
        rng = np.random.default_rng(6)
        x = rng.standard_normal((64, 3))
        y = x + 0.2 * rng.standard_normal((64, 3))
        assert psnr(10 * x, 10 * y) - psnr(x, y) == pytest.approx(-10.0, abs=1e-10)

    def test_squared_peak_flag(self):
        x = np.full((10, 1), 2.0)
        y = x + 0.1
        assert psnr(x, y, squared_peak=True) - psnr(x, y) == pytest.approx(10 * math.log10(2.0))

    def test_non_positive_peak(self):
        with pytest.warns(RuntimeWarning):
            assert psnr(-np.ones((5, 2)), np.zeros((5, 2))) is None


def fold(i, acc, pcc_value=None):
    return FoldMetrics(i, acc, 1.0, 0.5, pcc_value, None, 5, 5, 1, 0, 0.1)


class TestReport:
    def test_summary(self):
        report = EvalReport([fold(0, 0.9, 0.8), fold(1, 0.7, None)])
        s = report.summary()
        assert s["accuracy"][0] == pytest.approx(0.8)
        assert s["accuracy"][1] == pytest.approx(0.1)
        assert s["pcc"] == (0.8, 0.0)
        assert s["psnr"] == (None, None)

    def test_csv(self, tmp_path):
        EvalReport([fold(0, 0.9), fold(1, 0.8)]).to_csv(tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0].startswith("fold,accuracy,sensitivity,fpr_per_hour,pcc,psnr")
        assert [ln.split(",")[0] for ln in lines[1:]] == ["0", "1", "mean", "std"]

    def test_mean_defined(self):
        assert mean_defined([1.0, None, math.inf, 3.0]) == 2.0
        assert mean_defined([None]) is None
