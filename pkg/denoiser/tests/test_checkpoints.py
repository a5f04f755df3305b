import numpy as np
from django.test import SimpleTestCase

from denoiser import tensor_engine as te
from denoiser.checkpoints import (
    FORMAT, blob_path, load_checkpoint, load_parameters, restore_model, save_checkpoint,
)
from denoiser.exceptions import CheckpointError
from denoiser.hdst_net import HdstModel, ModelConfig
from denoiser.optim import OptimizerState, adam_step

from .fixtures import TempDirMixin


class CheckpointTest(TempDirMixin, SimpleTestCase):
    def setUp(self):
        self.config = ModelConfig.toy(seed=3)
        self.model = HdstModel(self.config)
        self.path = self.make_tempdir() / 'model.ckpt'

    def test_parameters_roundtrip_bit_exact(self):
        save_checkpoint(self.path, self.model, epoch=5, extra={'run_id': 7})
        checkpoint = load_checkpoint(self.path)
        self.assertEqual(checkpoint.config, self.config)
        self.assertEqual(checkpoint.epoch, 5)
        self.assertEqual(checkpoint.extra, {'run_id': 7})
        self.assertIsNone(checkpoint.optimizer)
        for name, param in self.model.named_parameters():
            np.testing.assert_array_equal(checkpoint.params[name], param.numpy())
            self.assertEqual(checkpoint.params[name].dtype, param.dtype)

    def test_restored_model_computes_the_same_output(self):
        save_checkpoint(self.path, self.model)
        restored = restore_model(load_checkpoint(self.path))
        cube = np.random.default_rng(0).random((1, 4, 8, 8))
        np.testing.assert_array_equal(restored(cube).numpy(), self.model(cube).numpy())

    def test_optimizer_state_roundtrip(self):
        params = self.model.parameters()
        state = OptimizerState(lr=3e-3)
        grads = {param.name: np.full(param.shape, 0.01) for param in params}
        adam_step(params, grads, state)
        save_checkpoint(self.path, self.model, state, epoch=1)
        loaded = load_checkpoint(self.path).optimizer
        self.assertEqual((loaded.lr, loaded.beta1, loaded.beta2, loaded.eps, loaded.step), (3e-3, 0.9, 0.999, 1e-8, 1))
        self.assertEqual(set(loaded.first_moment), set(state.first_moment))
        for name in state.first_moment:
            np.testing.assert_array_equal(loaded.first_moment[name], state.first_moment[name])
            np.testing.assert_array_equal(loaded.second_moment[name], state.second_moment[name])

    def test_manifest_is_readable_text(self):
        save_checkpoint(self.path, self.model)
        lines = self.path.read_text().splitlines()
        self.assertEqual(lines[0], f'format = {FORMAT}')
        self.assertIn('config.bands = 4', lines)
        self.assertTrue(any(line.startswith('tensor = param head.weight float64 8x4x3x3 0 ') for line in lines))
        self.assertTrue(blob_path(self.path).exists())
        self.assertFalse(self.path.with_name('model.ckpt.tmp').exists())

    def test_unknown_format(self):
        save_checkpoint(self.path, self.model)
        self.path.write_text(self.path.read_text().replace(FORMAT, 'hdst-checkpoint/99'))
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_truncated_blob(self):
        save_checkpoint(self.path, self.model)
        blob = blob_path(self.path)
        blob.write_bytes(blob.read_bytes()[:-8])
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_missing_file(self):
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_parameters_must_match_model(self):
        save_checkpoint(self.path, self.model)
        params = load_checkpoint(self.path).params
        other = HdstModel(self.config.for_variant('baseline'))
        with self.assertRaises(CheckpointError):
            load_parameters(other, params)
        params['head.bias'] = np.zeros(3)
        with self.assertRaises(CheckpointError):
            load_parameters(HdstModel(self.config), params)

    def test_float32_model(self):
        model = HdstModel(ModelConfig.toy(dtype='float32'))
        save_checkpoint(self.path, model)
        restored = restore_model(load_checkpoint(self.path))
        self.assertEqual(restored.head.weight.dtype, np.float32)
        np.testing.assert_array_equal(restored.head.weight.numpy(), model.head.weight.numpy())
        self.assertIsInstance(restored.head.weight, te.Parameter)
