"""
Checkpoint tests
"""

import tempfile
import unittest
from pathlib import Path

import mock
import numpy as np
from deepdiff import DeepDiff

from esgnet.core.checkpoint import (
    ADAM_M_SUFFIX,
    Checkpoint,
    check_compatible,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    restore,
    save_checkpoint
)
from esgnet.core.dataset import EventAnnotation
from esgnet.core.exceptions import (
    FeatureFormatError,
    VersionError
)
from esgnet.core.inference import evaluate_split
from esgnet.core.logger import Logger
from esgnet.core.model import ESGNet
from esgnet.test.utilities import (
    RecordingLogger,
    random_sample,
    toy_model_config
)


class CheckpointTest(unittest.TestCase):
    """
    Test saving and restoring models
    """

    def setUp(self):
        patcher = mock.patch.object(Logger, '_instance', RecordingLogger())
        self.logger = patcher.start()
        self.addCleanup(patcher.stop)
        self.cfg = toy_model_config()
        self.model = ESGNet(self.cfg)
        for param in self.model.parameters():
            param.adam_m = np.full(param.shape, 0.5, dtype=param.dtype)
            param.adam_v = np.full(param.shape, 0.25, dtype=param.dtype)

    def test_round_trip(self):
        """
        Test a restored model matches the saved one exactly
        """
        with tempfile.TemporaryDirectory() as folder:
            path = Path(folder) / 'last.ckpt'
            save_checkpoint(path, self.model, self.cfg, step=12, epoch=3)
            self.assertEqual([p.name for p in Path(folder).iterdir()],
                             ['last.ckpt'])
            checkpoint = load_checkpoint(path)
        self.assertEqual((checkpoint.step, checkpoint.epoch), (12, 3))
        self.assertEqual(checkpoint.model_config().to_json(),
                         self.cfg.to_json())

        other = ESGNet(self.cfg, seed=99)
        restore(other, checkpoint, self.cfg)
        for name, param in other.state().items():
            original = self.model.state()[name]
            np.testing.assert_array_equal(param.data, original.data)
            np.testing.assert_array_equal(param.adam_m, original.adam_m)
            np.testing.assert_array_equal(param.adam_v, original.adam_v)
            self.assertEqual(param.step_count, 12)
        self.assertEqual(self.logger.messages[0]['type'], Logger.CHECKPOINT)

    def test_restored_model_scores_the_same(self):
        """
        Test save, load and restore reproduce the evaluation exactly
        """
        cfg = toy_model_config(score_floor=0.0)
        model = ESGNet(cfg)
        rng = np.random.default_rng(7)
        samples = [random_sample(rng, length, 4,
                                 [EventAnnotation(length % 4, 1.0, 4.0)],
                                 'v{}'.format(length))
                   for length in (5, 6, 7, 8)]
        report, detections = evaluate_split(model, samples)
        with tempfile.TemporaryDirectory() as folder:
            path = Path(folder) / 'last.ckpt'
            save_checkpoint(path, model, cfg, step=1, epoch=1)
            other = ESGNet(cfg, seed=99)
            restore(other, load_checkpoint(path), cfg)
        restored_report, restored = evaluate_split(other, samples)
        self.assertFalse(DeepDiff(restored_report.to_json(),
                                  report.to_json()))
        self.assertEqual([d.to_json() for d in restored],
                         [d.to_json() for d in detections])
        self.assertTrue(any(d.candidates for d in detections))

    def test_records(self):
        """
        Test every parameter is stored with its two moments
        """
        checkpoint = checkpoint_of(self.model, self.cfg)
        names = list(self.model.state())
        self.assertEqual(len(checkpoint.tensors), 3 * len(names))
        self.assertIn(names[0] + ADAM_M_SUFFIX, checkpoint.tensors)

    def test_bytes_round_trip(self):
        """
        Test encoding keeps metadata, shapes and values
        """
        checkpoint = Checkpoint({'step': 4, 'note': 'x'},
                                {'a': np.arange(6, dtype=np.float32)
                                 .reshape(2, 3),
                                 'b': np.array(2.5, dtype=np.float32)})
        decoded = decode_checkpoint(encode_checkpoint(checkpoint))
        self.assertEqual(decoded.metadata, checkpoint.metadata)
        np.testing.assert_array_equal(decoded.tensors['a'],
                                      checkpoint.tensors['a'])
        self.assertEqual(decoded.tensors['b'].shape, ())

    def test_malformed(self):
        """
        Test corrupt files are reported
        """
        data = encode_checkpoint(checkpoint_of(self.model, self.cfg))
        for broken in (b'XXXX' + data[4:], data[:-3], data + b'\0'):
            with self.assertRaises(FeatureFormatError):
                decode_checkpoint(broken)

    def test_incompatible_format(self):
        """
        Test an unknown format version
        """
        checkpoint = checkpoint_of(self.model, self.cfg)
        checkpoint.metadata['format_version'] = 99
        with self.assertRaises(VersionError):
            check_compatible(checkpoint)

    def test_incompatible_config(self):
        """
        Test restoring into a different architecture
        """
        checkpoint = checkpoint_of(self.model, self.cfg)
        other_cfg = toy_model_config(embed_dim=12)
        with self.assertRaises(VersionError) as context:
            restore(ESGNet(other_cfg), checkpoint, other_cfg)
        self.assertIn('embed_dim', str(context.exception))
        with self.assertRaises(VersionError):
            restore(ESGNet(other_cfg), checkpoint)

    def test_missing_parameter(self):
        """
        Test a checkpoint lacking a parameter
        """
        checkpoint = checkpoint_of(self.model, self.cfg)
        del checkpoint.tensors[next(iter(self.model.state()))]
        with self.assertRaises(VersionError):
            restore(ESGNet(self.cfg), checkpoint, self.cfg)


def checkpoint_of(model, cfg) -> Checkpoint:
    """
    Saves a model to a temporary file and decodes it again
    """
    with tempfile.TemporaryDirectory() as folder:
        path = Path(folder) / 'model.ckpt'
        save_checkpoint(path, model, cfg, step=1)
        return decode_checkpoint(path.read_bytes())


if __name__ == '__main__':
    unittest.main()
