import numpy as np
from django.test import SimpleTestCase

from denoiser import tensor_engine as te
from denoiser.exceptions import ConfigError, ShapeError
from denoiser.optim import LrSchedule, OptimizerState, adam_step


class AdamStepTest(SimpleTestCase):
    def test_zero_gradient_leaves_parameter_unchanged(self):
        param = te.Parameter(np.array([0.5, -1.0]), name='p')
        adam_step([param], {'p': np.zeros(2)}, OptimizerState(lr=0.1))
        np.testing.assert_array_equal(param.numpy(), [0.5, -1.0])

    def test_first_step_moves_by_learning_rate(self):
        param = te.Parameter(np.zeros(1), name='p')
        state = OptimizerState(lr=0.1)
        adam_step([param], {'p': np.ones(1)}, state)
        self.assertAlmostEqual(param.item(), -0.1 / (1.0 + 1e-8), places=12)
        self.assertEqual(state.step, 1)

    def test_zero_learning_rate_is_a_no_op(self):
        param = te.Parameter(np.array([[1.0, 2.0]]), name='p')
        state = OptimizerState(lr=0.0)
        for _ in range(3):
            adam_step([param], {'p': np.array([[0.3, -4.0]])}, state)
        np.testing.assert_array_equal(param.numpy(), [[1.0, 2.0]])
        self.assertEqual(state.step, 3)

    def test_gradient_shape_mismatch(self):
        param = te.Parameter(np.zeros(3), name='p')
        with self.assertRaises(ShapeError):
            adam_step([param], {'p': np.zeros(2)}, OptimizerState())


class LrScheduleTest(SimpleTestCase):
    def test_piecewise_lookup(self):
        schedule = LrSchedule.parse([[0, 1e-3], [50, 5e-4], [100, 1e-4]])
        self.assertEqual(schedule.lr_at(0), 1e-3)
        self.assertEqual(schedule.lr_at(49), 1e-3)
        self.assertEqual(schedule.lr_at(50), 5e-4)
        self.assertEqual(schedule.lr_at(400), 1e-4)

    def test_preset_and_constant(self):
        schedule = LrSchedule.parse('short', {'short': [[0, 0.01], [2, 0.001]]})
        self.assertEqual(schedule.as_list(), [[0, 0.01], [2, 0.001]])
        self.assertEqual(LrSchedule.parse(0.5).lr_at(10), 0.5)

    def test_invalid_schedules(self):
        for value in ([], [[1, 0.1]], [[0, 0.1], [0, 0.2]], [[0, -1.0]], 'missing'):
            with self.subTest(value=value), self.assertRaises(ConfigError):
                LrSchedule.parse(value, {})
