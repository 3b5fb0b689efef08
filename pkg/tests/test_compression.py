from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seizurecs.compression import (
    PAPER_RATIOS,
    CompressionMatrix,
    ExperimentalRatioWarning,
    binarize_ste,
    check_ratio,
    compress,
    compress_batch,
    compressed_length,
    export_matrix,
    import_matrix,
    parse_ratio,
)
from seizurecs.errors import ConfigError, DimensionError, FormatError
from seizurecs.tensor import Tensor, backward, grad_check_tensors
from seizurecs import functional as F


class TestRatio:
    @pytest.mark.parametrize("text,expected", [("1/2", Fraction(1, 2)), (" 1/16 ", Fraction(1, 16)), ("3/8", Fraction(3, 8))])
    def test_parse(self, text, expected):
        assert parse_ratio(text) == expected

    @pytest.mark.parametrize("bad", ["0.25", "1e-1", 0.25, "abc", "1/0", "2/1", "0", 1])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            parse_ratio(bad)

    def test_non_paper_ratio_warns(self):
        with pytest.warns(ExperimentalRatioWarning):
            check_ratio("1/3")

    def test_paper_ratios_silent(self, recwarn):
        for r in PAPER_RATIOS:
            check_ratio(r)
        assert not recwarn.list

    @pytest.mark.parametrize("r", PAPER_RATIOS)
    @pytest.mark.parametrize("n", [256, 5120])
    def test_compressed_length(self, r, n):
        assert compressed_length(n, r) == n * r

    def test_half_rounds_up(self):
        # 1/4 of 10 is 2.5
        assert compressed_length(10, "1/4") == 3

    @given(st.integers(32, 10_000), st.sampled_from(PAPER_RATIOS))
    @settings(max_examples=60, deadline=None)
    def test_length_is_rounded_product(self, n, r):
        m = compressed_length(n, r)
        assert abs(m - n * r) <= Fraction(1, 2)


class TestCompress:
    def test_identity_rows(self):
        n, m = 8, 4
        mat = CompressionMatrix(n, Fraction(m, n), weight=np.eye(n)[:m])
        x = np.random.default_rng(0).standard_normal((n, 3))
        np.testing.assert_array_equal(compress(mat, x).data, x[:m])

    def test_zero_input(self):
        mat = CompressionMatrix(16, "1/4", rng=np.random.default_rng(1))
        np.testing.assert_array_equal(compress(mat, np.zeros((16, 2))).data, np.zeros((4, 2)))

    def test_matches_loop(self):
        rng = np.random.default_rng(2)
        mat = CompressionMatrix(32, "1/8", rng=rng)
        x = rng.standard_normal((32, 3))
        w = mat.effective_matrix()
        ref = np.array([[np.dot(w[i], x[:, c]) for c in range(3)] for i in range(4)])
        np.testing.assert_allclose(compress(mat, x).data, ref, atol=1e-12, rtol=0)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(3)
        mat = CompressionMatrix(20, "1/2", rng=rng)
        xb = rng.standard_normal((3, 4, 20))
        zb = compress_batch(mat, xb).data
        for i in range(3):
            np.testing.assert_allclose(zb[i], compress(mat, xb[i].T).data.T, atol=1e-13)

    def test_linearity(self):
        rng = np.random.default_rng(4)
        mat = CompressionMatrix(64, "1/4", rng=rng)
        x, y = rng.standard_normal((64, 2)), rng.standard_normal((64, 2))
        lhs = compress(mat, 2.5 * x - 0.7 * y).data
        rhs = 2.5 * compress(mat, x).data - 0.7 * compress(mat, y).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_row_mismatch(self):
        mat = CompressionMatrix(16, "1/4")
        with pytest.raises(DimensionError):
            compress(mat, np.zeros((15, 2)))

    def test_init_variance(self):
        mat = CompressionMatrix(4096, "1/2", rng=np.random.default_rng(5))
        assert mat.weight.data.var() == pytest.approx(1 / 4096, rel=0.02)
        assert abs(mat.weight.data.mean()) < 1e-4

    def test_gradient_wrt_weights_and_input(self):
        rng = np.random.default_rng(6)
        mat = CompressionMatrix(12, "1/4", rng=rng)
        x = Tensor(rng.standard_normal((2, 3, 12)), requires_grad=True)
        target = Tensor(rng.standard_normal((2, 3, 3)))
        err = grad_check_tensors(lambda: F.sum(compress_batch(mat, x) * target), [mat.weight, x])
        assert err < 1e-8


class TestBinary:
    def test_negative_latent_is_zero(self):
        out = binarize_ste(Tensor(np.full((3, 5), -0.3)))
        np.testing.assert_array_equal(out.data, np.zeros((3, 5)))

    def test_positive_latent_is_one(self):
        out = binarize_ste(Tensor(np.full((3, 5), 0.01)))
        np.testing.assert_array_equal(out.data, np.ones((3, 5)))

    def test_straight_through_rule(self):
        latent_vals = np.array([[-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.5]])
        upstream = np.random.default_rng(7).standard_normal(latent_vals.shape)
        latent = Tensor(latent_vals, requires_grad=True)
        backward(F.sum(binarize_ste(latent) * Tensor(upstream)))
        expected = np.where(np.abs(latent_vals) <= 1.0, upstream, 0.0)
        np.testing.assert_array_equal(latent.grad, expected)

    def test_effective_matrix_binary(self):
        mat = CompressionMatrix(40, "1/4", mode="binary", rng=np.random.default_rng(8))
        eff = mat.effective_matrix()
        assert set(np.unique(eff)) <= {0.0, 1.0}
        x = np.random.default_rng(9).standard_normal((40, 2))
        np.testing.assert_allclose(compress(mat, x).data, eff @ x, atol=1e-13)

    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            CompressionMatrix(16, "1/4", mode="ternary")


class TestMatrixFile:
    def test_float_round_trip(self, tmp_path):
        mat = CompressionMatrix(50, "1/2", rng=np.random.default_rng(10))
        export_matrix(mat, tmp_path / "w.c2sp")
        back = import_matrix(tmp_path / "w.c2sp")
        assert back.mode == "float" and back.shape == (25, 50)
        assert back.effective_matrix().tobytes() == mat.effective_matrix().tobytes()

    def test_binary_round_trip(self, tmp_path):
        mat = CompressionMatrix(64, "1/16", mode="binary", rng=np.random.default_rng(11))
        export_matrix(mat, tmp_path / "w.c2sp")
        back = import_matrix(tmp_path / "w.c2sp")
        np.testing.assert_array_equal(back.effective_matrix(), mat.effective_matrix())

    def test_binary_bit_layout(self, tmp_path):
        bits = np.array([[1, 0, 1, 1, 0, 0, 1, 0, 1]], dtype=float)
        mat = CompressionMatrix(9, Fraction(1, 9), mode="binary", weight=np.where(bits > 0, 1.0, -1.0))
        export_matrix(mat, tmp_path / "w.c2sp")
        raw = (tmp_path / "w.c2sp").read_bytes()
        assert raw[:4] == b"C2SP"
        assert raw[4] == 1 and raw[5] == 1
        assert int.from_bytes(raw[6:10], "little") == 9
        assert int.from_bytes(raw[10:14], "little") == 1
        assert raw[14:] == bytes([0b01001101, 0b00000001])

    def test_float_payload_layout(self, tmp_path):
        w = np.arange(8.0).reshape(2, 4)
        export_matrix(CompressionMatrix(4, "1/2", weight=w), tmp_path / "w.c2sp")
        raw = (tmp_path / "w.c2sp").read_bytes()
        assert raw[5] == 0
        np.testing.assert_array_equal(np.frombuffer(raw[14:], dtype="<f8"), np.arange(8.0))

    def test_wrong_magic(self, tmp_path):
        mat = CompressionMatrix(16, "1/4")
        export_matrix(mat, tmp_path / "w.c2sp")
        raw = bytearray((tmp_path / "w.c2sp").read_bytes())
        raw[:4] = b"XXXX"
        (tmp_path / "bad").write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="offset 0"):
            import_matrix(tmp_path / "bad")

    def test_wrong_version(self, tmp_path):
        export_matrix(CompressionMatrix(16, "1/4"), tmp_path / "w.c2sp")
        raw = bytearray((tmp_path / "w.c2sp").read_bytes())
        raw[4] = 9
        (tmp_path / "bad").write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            import_matrix(tmp_path / "bad")

    def test_truncated(self, tmp_path):
        export_matrix(CompressionMatrix(16, "1/4"), tmp_path / "w.c2sp")
        raw = (tmp_path / "w.c2sp").read_bytes()
        (tmp_path / "bad").write_bytes(raw[:-3])
        with pytest.raises(FormatError, match="offset"):
            import_matrix(tmp_path / "bad")
