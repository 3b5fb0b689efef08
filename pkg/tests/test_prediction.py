import math

import numpy as np
import pytest

from seizurecs import functional as F
from seizurecs.errors import ConfigError, DimensionError
from seizurecs.prediction import (
    FILTERS_STEM_GRID,
    SIZE_FC_GRID,
    PredictionConfig,
    PredictionNet,
    ResidualBlock,
    one_hot,
    predict_loss,
)
from seizurecs.tensor import Tensor, grad_check_tensors


def small_net(seed=0, **kwargs):
    cfg = PredictionConfig(in_channels=4, filters_stem=4, size_fc=25, **kwargs)
    return PredictionNet(cfg, rng=np.random.default_rng(seed))


class TestConfig:
    def test_block_widths(self):
        cfg = PredictionConfig(in_channels=4, filters_stem=8)
        assert [cfg.block_width(b) for b in range(1, 5)] == [16, 32, 48, 64]

    def test_bad_residual(self):
        with pytest.raises(ConfigError):
            PredictionConfig(in_channels=4, residual="sideways")

    def test_built_widths(self):
        net = small_net()
        assert [blk.out_channels for blk in net.blocks] == [8, 16, 24, 32]
        assert all(len(blk.stages) == 2 for blk in net.blocks)


class TestStem:
    @pytest.mark.parametrize("m", [7, 20, 64, 321, 1280])
    def test_output_shape(self, m):
        net = small_net()
        out = net.stem_forward(Tensor(np.random.default_rng(1).standard_normal((2, 4, m))))
        assert out.shape == (2, 4, math.ceil(math.ceil(m / 2) / 2))

    def test_zero_input(self):
        out = small_net().stem_forward(Tensor(np.zeros((2, 4, 64))))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_too_short(self):
        with pytest.raises(DimensionError):
            small_net().stem_forward(Tensor(np.zeros((1, 4, 6))))

    def test_wrong_channels(self):
        with pytest.raises(DimensionError):
            small_net().stem_forward(Tensor(np.zeros((1, 3, 64))))


class TestResidualBlock:
    def _block(self, b=2, seed=2):
        cfg = PredictionConfig(in_channels=4, filters_stem=4)
        return ResidualBlock(cfg.block_width(b - 1) if b > 1 else 4, cfg.block_width(b), cfg, np.random.default_rng(seed))

    @pytest.mark.parametrize("length", [8, 9, 33])
    def test_shape(self, length):
        block = self._block()
        out = block(Tensor(np.random.default_rng(3).standard_normal((2, 8, length))))
        assert out.shape == (2, 16, math.ceil(length / 2))

    def test_zero_branch_leaves_projection(self):
        block = self._block()
        for stage in block.stages:
            stage.conv.weight.data[:] = 0.0
        x = Tensor(np.random.default_rng(4).standard_normal((2, 8, 10)))
        np.testing.assert_allclose(block(x).data, block.bottleneck(x).data, atol=1e-14)

    def test_gradient(self):
        block = self._block()
        rng = np.random.default_rng(5)
        x = Tensor(rng.standard_normal((3, 8, 12)), requires_grad=True)
        target = Tensor(rng.standard_normal((3, 16, 6)))
        params = [p for _, p in block.named_parameters()]
        err = grad_check_tensors(lambda: F.sum(block(x) * target), [x] + params, max_coords=25)
        assert err < 1e-4

    def test_literal_variant_keeps_width(self):
        cfg = PredictionConfig(in_channels=4, filters_stem=4, residual="literal")
        block = ResidualBlock(4, 8, cfg, np.random.default_rng(6))
        out = block(Tensor(np.random.default_rng(7).standard_normal((2, 4, 10))))
        assert out.shape == (2, 4, 10)


class TestHead:
    def test_simplex(self):
        net = small_net()
        probs = net.head(Tensor(np.random.default_rng(8).standard_normal((5, 32, 3)))).data
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_zero_weights_give_softmax_of_bias(self):
        net = small_net()
        net.fc1.weight.data[:] = 0.0
        net.fc2.weight.data[:] = 0.0
        net.fc2.bias.data[:] = [0.3, -0.2]
        probs = net.head(Tensor(np.random.default_rng(9).standard_normal((4, 32, 5)))).data
        expected = np.exp([0.3, -0.2]) / np.exp([0.3, -0.2]).sum()
        np.testing.assert_allclose(probs, np.tile(expected, (4, 1)), atol=1e-14)

    def test_gap_matches_loop(self):
        x = np.random.default_rng(10).standard_normal((2, 3, 7))
        ref = np.array([[sum(x[b, c]) / 7 for c in range(3)] for b in range(2)])
        np.testing.assert_allclose(F.global_avg_pool(Tensor(x)).data, ref, atol=1e-14)


class TestNetwork:
    @pytest.mark.parametrize("fs", FILTERS_STEM_GRID)
    @pytest.mark.parametrize("fc", SIZE_FC_GRID)
    def test_simplex_over_grid(self, fs, fc):
        net = PredictionNet(PredictionConfig(in_channels=4, filters_stem=fs, size_fc=fc), rng=np.random.default_rng(0))
        probs = net(Tensor(np.random.default_rng(1).standard_normal((2, 4, 80)))).data
        assert probs.shape == (2, 2)
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("m", [16, 32, 64, 128, 320, 1280])
    def test_compressed_lengths(self, m):
        probs = small_net()(Tensor(np.random.default_rng(2).standard_normal((2, 4, m))))
        assert probs.shape == (2, 2)

    def test_full_gradient(self):
        net = small_net(seed=3)
        rng = np.random.default_rng(4)
        x = Tensor(rng.standard_normal((2, 4, 128)))
        y = one_hot([0, 1])
        params = [p for _, p in net.named_parameters()]
        err = grad_check_tensors(lambda: predict_loss(net(x), y), params, max_coords=8, rng=rng)
        assert err < 1e-4

    def test_eval_batch_independence(self):
        net = small_net()
        rng = np.random.default_rng(5)
        net.train()
        net(Tensor(rng.standard_normal((4, 4, 64))))
        net.eval()
        x = rng.standard_normal((3, 4, 64))
        alone = net(Tensor(x[:1])).data
        together = net(Tensor(x)).data[:1]
        np.testing.assert_allclose(alone, together, atol=1e-14)

    def test_not_time_blind(self):
        net = small_net().eval()
        rng = np.random.default_rng(6)
        x = rng.standard_normal((1, 4, 64))
        shuffled = x[:, :, rng.permutation(64)]
        assert np.abs(net(Tensor(x)).data - net(Tensor(shuffled)).data).max() > 1e-8


class TestLoss:
    def test_one_hot(self):
        np.testing.assert_array_equal(one_hot([1, 0, 1]), [[0, 1], [1, 0], [0, 1]])

    def test_uniform(self):
        assert predict_loss(Tensor(np.full((2, 2), 0.5)), one_hot([0, 1])).item() == pytest.approx(math.log(2), abs=1e-12)
