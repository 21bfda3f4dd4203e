import numpy as np
import pytest

from meltflow.autodiff import Tensor
from meltflow import optim
from meltflow.errors import DimensionError, ParameterError


def make_param(value):
    t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
    return t


def set_grad(p, g):
    p.grad = np.asarray(g, dtype=np.float64)


class TestStepAlgebra:
    def test_sgd_definition(self):
        p = make_param([1.0])
        opt = optim.SGD([p], lr=0.1)
        set_grad(p, [2.0])
        opt.step()
        assert p.data[0] == pytest.approx(0.8)

    def test_adam_first_step_magnitude_is_learning_rate(self):
        # at t=1 the bias-corrected ratio m_hat/sqrt(v_hat) equals sign(g)
        for g in (2.0, -0.5, 10.0):
            p = make_param([1.0])
            opt = optim.Adam([p], lr=0.01)
            set_grad(p, [g])
            opt.step()
            expected = 1.0 - 0.01 * g / (abs(g) + optim.EPS)
            assert p.data[0] == pytest.approx(expected, abs=1e-12)
            assert abs(p.data[0] - 1.0) == pytest.approx(0.01, rel=1e-6)

    def test_adamax_infinity_norm_update(self):
        p = make_param([1.0])
        opt = optim.Adamax([p], lr=0.01)
        set_grad(p, [4.0])
        opt.step()
        # m = 0.4, u = 4, correction 1/(1-0.9) = 10 -> step = 0.01*10*0.4/4
        assert p.data[0] == pytest.approx(1.0 - 0.01 * (0.4 / 0.1) / (4.0 + optim.EPS), abs=1e-12)

    def test_rmsprop_update(self):
        p = make_param([1.0])
        opt = optim.RMSProp([p], lr=0.1)
        set_grad(p, [3.0])
        opt.step()
        v = 0.1 * 9.0
        assert p.data[0] == pytest.approx(1.0 - 0.1 * 3.0 / (np.sqrt(v) + optim.EPS))

    @pytest.mark.parametrize("kind", optim.OPTIMIZER_KINDS)
    def test_zero_gradient_is_fixed_point(self, kind):
        p = make_param([5.0, -2.0])
        opt = optim.make_optimizer(kind, [p], lr=0.05)
        for _ in range(10):
            set_grad(p, [0.0, 0.0])
            opt.step()
        np.testing.assert_array_equal(p.data, [5.0, -2.0])

    def test_step_counter_increments(self):
        p = make_param([1.0])
        opt = optim.Adam([p], lr=0.01)
        for expected in range(1, 5):
            set_grad(p, [1.0])
            opt.step()
            assert opt.t == expected

    def test_shape_mismatch_rejected(self):
        p = make_param([1.0, 2.0])
        opt = optim.SGD([p], lr=0.1)
        p.grad = np.array([1.0])
        with pytest.raises(DimensionError):
            opt.step()

    def test_unknown_kind_rejected(self):
        with pytest.raises(ParameterError):
            optim.make_optimizer("adagrad", [make_param([1.0])], lr=0.1)

    def test_bad_learning_rate_rejected(self):
        with pytest.raises(ParameterError):
            optim.SGD([make_param([1.0])], lr=0.0)


class TestQuadraticConvergence:
    """Each optimizer kind drives (theta - 3)^2 below 1e-3 for some learning
    rate inside the searched range [1e-4, 1e-1]."""

    GRID = (1e-4, 1e-3, 1e-2, 1e-1)

    @staticmethod
    def run(kind, lr, steps=10_000, start=0.0):
        p = make_param([start])
        opt = optim.make_optimizer(kind, [p], lr=lr)
        for _ in range(steps):
            set_grad(p, 2.0 * (p.data - 3.0))
            opt.step()
            if abs(p.data[0] - 3.0) < 1e-3:
                return True
        return abs(p.data[0] - 3.0) < 1e-3

    @pytest.mark.parametrize("kind", optim.OPTIMIZER_KINDS)
    def test_converges_for_some_rate_in_range(self, kind):
        assert any(self.run(kind, lr) for lr in self.GRID), kind

    def test_sgd_converges_across_upper_decades(self):
        assert self.run("SGD", 1e-2) and self.run("SGD", 1e-1)


class TestDeterminism:
    def test_identical_trajectories(self):
        def run():
            rng = np.random.default_rng(3)
            p = make_param(rng.normal(size=4))
            opt = optim.Adam([p], lr=0.01)
            trace = []
            for k in range(50):
                set_grad(p, 2.0 * (p.data - 1.0) + 0.1 * np.sin(k))
                opt.step()
                trace.append(p.data.copy())
            return np.array(trace)

        assert np.array_equal(run(), run())
