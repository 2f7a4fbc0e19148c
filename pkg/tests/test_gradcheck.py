import numpy as np
import pytest

from rsqa import gradcheck, nn


class TestRelErr:
    def test_symmetric(self):
        assert gradcheck._rel_err(1.0, 2.0) == gradcheck._rel_err(2.0, 1.0)

    def test_small_values_use_absolute_scale(self):
        # denominator floors at 1, so tiny gradients compare absolutely
        assert gradcheck._rel_err(1e-9, 0.0) == pytest.approx(1e-9)

    def test_large_values_relative(self):
        assert gradcheck._rel_err(100.0, 101.0) == pytest.approx(1.0 / 101.0)

    def test_exact_match(self):
        assert gradcheck._rel_err(3.5, 3.5) == 0.0


class TestLayerChecks:
    def test_dense_exact(self):
        assert gradcheck.check_dense(0) < gradcheck.TOL_DENSE

    def test_relu_exact(self):
        assert gradcheck.check_relu(0) < gradcheck.TOL_RELU

    @pytest.mark.parametrize("stride", [1, 3])
    def test_conv_exact(self, stride):
        assert gradcheck.check_conv(0, stride) < gradcheck.TOL_CONV

    def test_dropout_exact(self):
        assert gradcheck.check_dropout(0) < gradcheck.TOL_DENSE

    def test_pool_exact(self):
        assert gradcheck.check_pool(0) < gradcheck.TOL_POOL

    def test_model_small(self):
        assert gradcheck.check_model(0) < gradcheck.TOL_MODEL


class TestHarnessCatchesBugs:
    """The checker must fail when the backward really is wrong, otherwise a
    green suite means nothing."""

    def test_detects_scaled_gradient(self, rng):
        x = rng.standard_normal((3, 7))
        w = rng.standard_normal((4, 7))
        b = rng.standard_normal(4)
        y, cache = nn.dense_forward(x, w, b)
        dy = rng.standard_normal(y.shape)
        dx, dw, db = nn.dense_backward(dy, cache, w)

        def obj():
            yy, _ = nn.dense_forward(x, w, b)
            return float((yy * dy).sum())

        err = gradcheck._check_op(obj, (x,), (1.01 * dx,), rng, eps=1e-4)
        assert err > gradcheck.TOL_DENSE

    def test_detects_transposed_conv_weight_grad(self, rng):
        x = rng.standard_normal((1, 2, 4, 5))
        w = rng.standard_normal((2, 2, 3, 3))
        b = rng.standard_normal(2)
        y, cache = nn.conv2d_forward(x, w, b)
        dy = rng.standard_normal(y.shape)
        _, dw, _ = nn.conv2d_backward(dy, cache)
        wrong = dw[:, :, ::-1, ::-1]  # flipped taps: classic conv/corr mixup

        def obj():
            yy, _ = nn.conv2d_forward(x, w, b)
            return float((yy * dy).sum())

        err = gradcheck._check_op(obj, (w,), (wrong,), rng, eps=1e-4)
        assert err > gradcheck.TOL_CONV


class TestSuite:
    def test_rows_and_names(self):
        rows = gradcheck.run_suite(seed=0, n_seeds=2)
        names = [r.name for r in rows]
        assert names == ["dense", "relu", "conv_stride1", "conv_stride3",
                         "dropout", "masked_mean", "full_model"]
        assert all(r.ok for r in rows)

    def test_result_ok_property(self):
        good = gradcheck.CheckResult("x", 1e-7, 1e-6)
        bad = gradcheck.CheckResult("x", 1e-5, 1e-6)
        assert good.ok and not bad.ok

    def test_table_format(self):
        rows = [gradcheck.CheckResult("dense", 3e-10, 1e-6),
                gradcheck.CheckResult("conv", 5e-3, 1e-4)]
        table = gradcheck.format_table(rows)
        assert "dense" in table and "ok" in table
        assert "FAIL" in table
        assert len(table.splitlines()) == 3

    def test_deterministic(self):
        a = gradcheck.run_suite(seed=0, n_seeds=2)
        b = gradcheck.run_suite(seed=0, n_seeds=2)
        assert [(r.name, r.max_rel_err) for r in a] == \
               [(r.name, r.max_rel_err) for r in b]


class TestSampling:
    def test_no_repeats(self):
        rng = np.random.default_rng(0)
        idx = gradcheck._sample_indices(rng, (4, 5), 8)
        assert len(idx) == len(set(idx)) == 8

    def test_small_arrays_capped(self):
        rng = np.random.default_rng(0)
        idx = gradcheck._sample_indices(rng, (2,), 8)
        assert len(idx) == 2
