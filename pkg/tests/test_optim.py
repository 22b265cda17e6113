import numpy as np
import pytest

from pcnta.engine.config import OptimizerConfig, OptimizerKind
from pcnta.engine.optim import Adagrad, Adam, Optimizer, build_optimizer
from pcnta.errors import ConfigError


class TestOptimizers:
    def test_sgd_adds_scaled_direction(self):
        param = np.array([1.0, 2.0])
        count = Optimizer(0.5).apply([param], [np.array([2.0, 0.0])])
        np.testing.assert_array_equal(param, [2.0, 2.0])
        assert count == 1

    def test_threshold(self):
        param = np.zeros(3)
        count = Optimizer(1.0).apply([param], [np.array([0.1, 0.5, -2.0])], threshold=0.2)
        assert count == 2

    def test_adam_first_step_is_lr_times_sign(self):
        param = np.zeros(3)
        Adam(0.01).apply([param], [np.array([3.0, -0.5, 0.0])])
        np.testing.assert_allclose(param, [0.01, -0.01, 0.0], rtol=1e-6)

    def test_adam_tracks_slots_separately(self):
        opt = Adam(0.1)
        a, b = np.zeros(1), np.zeros(2)
        opt.apply([a, b], [np.ones(1), np.ones(2)])
        opt.apply([a, b], [np.ones(1), np.ones(2)])
        assert opt.t == {0: 2, 1: 2}

    def test_adagrad_shrinks_steps(self):
        param = np.zeros(1)
        opt = Adagrad(1.0)
        opt.apply([param], [np.ones(1)])
        first = param.copy()
        opt.apply([param], [np.ones(1)])
        assert param[0] - first[0] == pytest.approx(1.0 / np.sqrt(2.0))

    def test_shape_mismatch_in_count(self):
        with pytest.raises(ValueError):
            Optimizer(0.1).apply([np.zeros(1)], [])

    @pytest.mark.parametrize("kind, cls", [
        (OptimizerKind.SGD, Optimizer),
        (OptimizerKind.ADAM, Adam),
        (OptimizerKind.ADAGRAD, Adagrad),
    ])
    def test_build(self, kind, cls):
        assert type(build_optimizer(OptimizerConfig(kind), 0.1)) is cls

    def test_invalid_betas(self):
        with pytest.raises(ConfigError):
            OptimizerConfig(OptimizerKind.ADAM, beta1=1.0)
