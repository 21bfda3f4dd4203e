import math

import numpy as np
import pytest

from meltflow import autodiff as ad
from meltflow.errors import DimensionError, NumericsError, ParameterError


def tensor(data, grad=True):
    return ad.Tensor(np.asarray(data, dtype=np.float64), requires_grad=grad)


class TestMatmul:
    def test_identity(self):
        eye = tensor(np.eye(2))
        m = tensor([[1.0, 2.0], [3.0, 4.0]])
        out = ad.matmul(eye, m)
        np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])

    def test_hand_product(self):
        a = tensor([[1.0, 2.0], [3.0, 4.0]])
        b = tensor([[5.0, 6.0], [7.0, 8.0]])
        out = ad.matmul(a, b)
        np.testing.assert_array_equal(out.data, [[19.0, 22.0], [43.0, 50.0]])

    def test_shape_mismatch_names_both_shapes(self):
        a = tensor(np.zeros((2, 3)))
        b = tensor(np.zeros((2, 2)))
        with pytest.raises(DimensionError) as err:
            ad.matmul(a, b)
        assert "(2, 3)" in str(err.value) and "(2, 2)" in str(err.value)

    def test_backward_rule(self):
        # dA = dC.B^T and dB = A^T.dC with dC = ones
        a = tensor([[1.0, 2.0], [3.0, 4.0]])
        b = tensor([[5.0, 6.0], [7.0, 8.0]])
        ad.matmul(a, b).sum().backward()
        np.testing.assert_allclose(a.grad, np.ones((2, 2)) @ b.data.T)
        np.testing.assert_allclose(b.grad, a.data.T @ np.ones((2, 2)))

    def test_stacked_matmul_gradient(self):
        rng = np.random.default_rng(7)
        a = tensor(rng.normal(size=(3, 2, 4)))
        b = tensor(rng.normal(size=(3, 4, 2)))
        err = ad.gradient_check(lambda t: ad.matmul(t, ad.Tensor(b.data)).sum(), a)
        assert err < 1e-6
        err = ad.gradient_check(lambda t: ad.matmul(ad.Tensor(a.data), t).sum(), b)
        assert err < 1e-6


class TestActivation:
    def test_analytic_points(self):
        assert ad.sigmoid(tensor([0.0])).data[0] == 0.5
        assert ad.tanh(tensor([0.0])).data[0] == 0.0
        out = ad.relu(tensor([-3.2, 1.7]))
        np.testing.assert_array_equal(out.data, [0.0, 1.7])

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            ad.activation(tensor([1.0]), "gelu")

    def test_sigmoid_extreme_inputs_stay_finite(self):
        out = ad.sigmoid(tensor([-1e4, 1e4]))
        assert out.data[0] == 0.0 and out.data[1] == 1.0

    @pytest.mark.parametrize("kind", ["sigmoid", "tanh"])
    def test_gradient(self, kind):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(4, 3))
        err = ad.gradient_check(lambda t: ad.activation(t, kind).sum(), ad.Tensor(x))
        assert err < 1e-6

    def test_relu_gradient_away_from_kink(self):
        x = np.array([-2.0, -0.5, 0.5, 2.0])
        err = ad.gradient_check(lambda t: ad.relu(t).sum(), ad.Tensor(x))
        assert err < 1e-6


class TestSoftmax:
    def test_equal_values_give_uniform(self):
        out = ad.softmax_rows(tensor([[5.0, 5.0, 5.0]]))
        np.testing.assert_allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]])

    def test_hand_ratio(self):
        # exp(0) = 1 and exp(ln 2) = 2, so the row is [1/3, 2/3]
        out = ad.softmax_rows(tensor([[0.0, math.log(2.0)]]))
        np.testing.assert_allclose(out.data, [[1 / 3, 2 / 3]], atol=1e-15)

    def test_large_logits_do_not_overflow(self):
        out = ad.softmax_rows(tensor([[1000.0, 0.0]]))
        assert out.data[0, 0] == pytest.approx(1.0)
        assert out.data[0, 1] == pytest.approx(0.0, abs=1e-300)

    def test_rows_sum_to_one_and_lie_in_unit_interval(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            x = rng.normal(scale=5.0, size=(6, 5))
            out = ad.softmax_rows(tensor(x)).data
            np.testing.assert_allclose(out.sum(axis=-1), np.ones(6), atol=1e-12)
            assert np.all(out > 0.0) and np.all(out < 1.0)

    def test_gradient(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(3, 4))
        err = ad.gradient_check(lambda t: (ad.softmax_rows(t) * ad.Tensor(w)).sum(), ad.Tensor(x))
        assert err < 1e-6


class TestCausalConv:
    def test_running_sum_kernel(self):
        # all-ones kernel of size 3 with left zero-padding
        x = tensor(np.array([[1.0], [2.0], [3.0], [4.0]]))
        w = tensor(np.ones((3, 1, 1)))
        out = ad.conv1d_causal(x, w, dilation=1)
        np.testing.assert_array_equal(out.data[:, 0], [1.0, 3.0, 6.0, 9.0])

    def test_dilation_two_hand_values(self):
        # y_t = x_t + x_{t-2}
        x = tensor(np.array([[1.0], [2.0], [3.0], [4.0], [5.0]]))
        w = tensor(np.ones((2, 1, 1)))
        out = ad.conv1d_causal(x, w, dilation=2)
        np.testing.assert_array_equal(out.data[:, 0], [1.0, 2.0, 4.0, 6.0, 8.0])

    def test_causality_bit_exact(self):
        rng = np.random.default_rng(19)
        x = rng.normal(size=(8, 2))
        w = rng.normal(size=(3, 2, 4))
        base = ad.conv1d_causal(ad.Tensor(x), ad.Tensor(w), dilation=2).data
        for t in range(1, 8):
            bumped = x.copy()
            bumped[t:] += rng.normal(size=bumped[t:].shape)
            pert = ad.conv1d_causal(ad.Tensor(bumped), ad.Tensor(w), dilation=2).data
            assert np.array_equal(base[:t], pert[:t])

    def test_output_length_matches_input(self):
        rng = np.random.default_rng(2)
        for t_len, d in [(4, 1), (9, 2), (12, 4)]:
            x = ad.Tensor(rng.normal(size=(t_len, 3)))
            w = ad.Tensor(rng.normal(size=(3, 3, 5)))
            assert ad.conv1d_causal(x, w, d).shape == (t_len, 5)

    def test_nonpositive_dilation_rejected(self):
        x = tensor(np.zeros((4, 1)))
        w = tensor(np.zeros((2, 1, 1)))
        with pytest.raises(ParameterError):
            ad.conv1d_causal(x, w, dilation=0)

    def test_gradients(self):
        rng = np.random.default_rng(23)
        x = rng.normal(size=(6, 2))
        w = rng.normal(size=(3, 2, 3))
        err = ad.gradient_check(lambda t: ad.conv1d_causal(t, ad.Tensor(w), 2).sum(), ad.Tensor(x))
        assert err < 1e-6
        err = ad.gradient_check(lambda t: ad.conv1d_causal(ad.Tensor(x), t, 2).sum(), ad.Tensor(w))
        assert err < 1e-6

    def test_batched_matches_loop(self):
        rng = np.random.default_rng(29)
        x = rng.normal(size=(4, 7, 2))
        w = rng.normal(size=(2, 2, 3))
        batched = ad.conv1d_causal(ad.Tensor(x), ad.Tensor(w), 2).data
        for b in range(4):
            single = ad.conv1d_causal(ad.Tensor(x[b]), ad.Tensor(w), 2).data
            np.testing.assert_array_equal(batched[b], single)


class TestBackward:
    def test_sum_gives_ones(self):
        w = tensor(np.arange(6.0).reshape(2, 3))
        w.sum().backward()
        np.testing.assert_array_equal(w.grad, np.ones((2, 3)))

    def test_hand_chain_rule(self):
        # loss = (w*x - y)^2 at w=1, x=2, y=1 -> dloss/dw = 2*(2-1)*2 = 4
        w = tensor([1.0])
        x = ad.Tensor([2.0])
        y = ad.Tensor([1.0])
        diff = w * x - y
        (diff * diff).sum().backward()
        assert w.grad[0] == pytest.approx(4.0)

    def test_non_scalar_loss_rejected(self):
        w = tensor([1.0, 2.0])
        with pytest.raises(DimensionError):
            (w * 2.0).backward()

    def test_deterministic_bit_identical(self):
        def run():
            rng = np.random.default_rng(99)
            a = tensor(rng.normal(size=(4, 4)))
            b = tensor(rng.normal(size=(4, 4)))
            loss = (ad.sigmoid(ad.matmul(a, b)) * ad.tanh(a)).sum()
            loss.backward()
            return a.grad.copy(), b.grad.copy()

        ga1, gb1 = run()
        ga2, gb2 = run()
        assert np.array_equal(ga1, ga2) and np.array_equal(gb1, gb2)

    def test_reused_subexpression_accumulates(self):
        w = tensor([3.0])
        out = (w * w).sum()  # d(w^2)/dw = 2w = 6
        out.backward()
        assert w.grad[0] == pytest.approx(6.0)

    def test_nan_surfaces_as_error(self):
        a = tensor([1.0])
        b = tensor([0.0])
        with pytest.raises(NumericsError):
            ad.div(a, b)


class TestGradientCheck:
    def test_sum_of_squares_is_nearly_exact(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(5,))
        err = ad.gradient_check(lambda t: (t * t).sum(), ad.Tensor(x))
        assert err < 1e-7

    def test_sigmoid_composition_depth_three(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(4,))
        err = ad.gradient_check(
            lambda t: ad.sigmoid(ad.sigmoid(ad.sigmoid(t))).sum(), ad.Tensor(x)
        )
        assert err < 1e-5

    def test_zero_step_rejected(self):
        with pytest.raises(ParameterError):
            ad.gradient_check(lambda t: t.sum(), ad.Tensor([1.0]), h=0.0)


class TestCompositeGradientProperty:
    """Analytic gradients agree with central differences on random small graphs."""

    def test_hundred_seeded_trials(self):
        # each entry: (constant shape relative to (rows, cols), loss builder)
        builders = [
            ("square", lambda t, c: ad.sigmoid(ad.matmul(t, c)).sum()),
            ("same", lambda t, c: ad.tanh(t * c).mean()),
            ("square", lambda t, c: ad.softmax_rows(ad.matmul(t, c)).sum()),
            ("same", lambda t, c: (ad.relu(t + 0.3) * c).sum()),
            ("same", lambda t, c: ad.sqrt((t * t).sum(axis=-1) + 1.0).sum()),
            ("same", lambda t, c: ad.div(t, (c * c) + 1.0).sum()),
        ]
        for trial in range(100):
            rng = np.random.default_rng(1000 + trial)
            rows = int(rng.integers(2, 5))
            cols = int(rng.integers(2, 5))
            x = rng.normal(size=(rows, cols))
            kind, build = builders[trial % len(builders)]
            c_shape = (cols, cols) if kind == "square" else (rows, cols)
            c = ad.Tensor(rng.normal(size=c_shape))
            err = ad.gradient_check(lambda t: build(t, c), ad.Tensor(x))
            assert err < 1e-5, f"trial {trial} exceeded tolerance: {err}"


class TestShapeOps:
    def test_concat_and_slice_roundtrip_gradient(self):
        rng = np.random.default_rng(31)
        a = tensor(rng.normal(size=(2, 3)))
        b = tensor(rng.normal(size=(2, 2)))
        joined = ad.concat([a, b], axis=1)
        joined[:, :3].sum().backward()
        np.testing.assert_array_equal(a.grad, np.ones((2, 3)))
        np.testing.assert_array_equal(b.grad, np.zeros((2, 2)))  # outside the slice

    def test_reshape_swapaxes_gradients(self):
        rng = np.random.default_rng(37)
        x = rng.normal(size=(2, 3, 4))
        err = ad.gradient_check(
            lambda t: (t.reshape(6, 4).swapaxes(0, 1) * 2.0).sum(), ad.Tensor(x)
        )
        assert err < 1e-6

    def test_dropout_eval_is_identity_and_train_scales(self):
        x = tensor(np.ones((1000,)))
        rng = np.random.default_rng(41)
        assert ad.dropout(x, 0.4, rng, training=False) is x
        dropped = ad.dropout(x, 0.4, rng, training=True)
        kept = dropped.data[dropped.data > 0]
        assert np.allclose(kept, 1.0 / 0.6)
        assert abs(dropped.data.mean() - 1.0) < 0.1

    def test_dropout_bad_rate(self):
        with pytest.raises(ParameterError):
            ad.dropout(tensor([1.0]), 1.0, np.random.default_rng(0), training=True)

    def test_no_grad_disables_recording(self):
        w = tensor([2.0])
        with ad.no_grad():
            out = (w * 3.0).sum()
        assert out._backward is None
