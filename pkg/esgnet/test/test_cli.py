"""
Command line tests
"""

import io
import json
import shutil
import tempfile
import unittest
from pathlib import Path

import mock

from esgnet.cli import (
    build_parser,
    main
)
from esgnet.core.config import RunConfig
from esgnet.core.constants import (
    DETECTIONS_FILE_NAME,
    LAST_CHECKPOINT_NAME,
    REPORT_JSON_NAME
)
from esgnet.core.logger import Logger
from esgnet.test.utilities import (
    RecordingLogger,
    toy_run_config
)


class CliTest(unittest.TestCase):
    """
    Test the esgnet command
    """

    def setUp(self):
        patcher = mock.patch.object(Logger, '_instance', RecordingLogger())
        self.logger = patcher.start()
        self.addCleanup(patcher.stop)
        self.folder = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.folder)

    def run_cli(self, *argv):
        """
        Runs the command, returning (exit status, stdout)
        """
        with mock.patch('sys.stdout', new_callable=io.StringIO) as stdout:
            status = main([str(a) for a in argv])
        return status, stdout.getvalue()

    def progress(self, job):
        """
        The progress percentages logged for a job
        """
        return [m['progress'] for m in self.logger.messages
                if isinstance(m, dict) and m.get('type') == Logger.PROGRESS
                and m['job'] == job]

    def test_config_init(self):
        """
        Test the default config file
        """
        path = self.folder / 'config.json'
        status, out = self.run_cli('config', 'init', '--out', path)
        self.assertEqual(status, 0)
        self.assertEqual(out.strip(), str(path))
        self.assertEqual(RunConfig.load(path).to_json(),
                         RunConfig().to_json())

    def test_summary(self):
        """
        Test parameter counts add up
        """
        path = self.folder / 'config.json'
        toy_run_config().save(path)
        status, out = self.run_cli('summary', '--config', path)
        self.assertEqual(status, 0)
        summary = json.loads(out)
        self.assertEqual(summary['total'], summary['esi'] + summary['mode']
                         + summary['decoder'])

    def test_missing_training_data(self):
        """
        Test a dataset without a train split is a logged error
        """
        status, _ = self.run_cli('train', '--data', self.folder / 'empty',
                                 '--out', self.folder / 'run')
        self.assertEqual(status, 1)
        self.assertEqual(self.logger.errors[0]['type'], 'error')
        self.assertEqual(self.logger.errors[0]['command'], 'train')

    def test_missing_checkpoint(self):
        """
        Test an unreadable checkpoint is a logged error
        """
        status, _ = self.run_cli('eval', '--checkpoint',
                                 self.folder / 'missing.ckpt')
        self.assertEqual(status, 1)
        self.assertEqual(len(self.logger.errors), 1)

    def test_invalid_config(self):
        """
        Test an inconsistent config file is a logged error
        """
        path = self.folder / 'config.json'
        path.write_text(json.dumps({'epochs': 0}))
        status, _ = self.run_cli('generate', '--config', path)
        self.assertEqual(status, 1)

    def test_malformed_config(self):
        """
        Test a config file that is not JSON is a logged error
        """
        path = self.folder / 'config.json'
        path.write_text('{"epochs": ', encoding='utf-8')
        status, _ = self.run_cli('summary', '--config', path)
        self.assertEqual(status, 1)
        self.assertIn('malformed', self.logger.errors[0]['error'])

    def test_parser(self):
        """
        Test argument defaults
        """
        args = build_parser().parse_args(['eval', '--checkpoint', 'a.ckpt'])
        self.assertEqual(args.split, 'test')
        self.assertEqual(args.workers, 1)
        self.assertFalse(args.timing)
        args = build_parser().parse_args(['dump-attn', '--checkpoint',
                                          'a.ckpt', 'video'])
        self.assertIsNone(args.split)
        with mock.patch('sys.stderr', new_callable=io.StringIO):
            with self.assertRaises(SystemExit):
                build_parser().parse_args(['eval'])

    def test_workflow(self):
        """
        Test generate, train, eval, infer and dump-attn end to end
        """
        config = self.folder / 'config.json'
        data = self.folder / 'data'
        run = self.folder / 'run'
        toy_run_config(epochs=1, warmup_epochs=0).save(config)
        common = ('--config', config, '--data', data)

        self.assertEqual(self.run_cli('generate', *common)[0], 0)
        self.assertTrue((data / 'train.jsonl').exists())

        self.assertEqual(self.run_cli('train', *common, '--out', run)[0], 0)
        checkpoint = run / LAST_CHECKPOINT_NAME
        self.assertTrue(checkpoint.exists())
        self.assertTrue((run / 'config.json').exists())

        status, out = self.run_cli('eval', '--data', data, '--checkpoint',
                                   checkpoint)
        self.assertEqual(status, 0)
        self.assertIn('Avg.', out)
        self.assertTrue((run / 'eval_test' / REPORT_JSON_NAME).exists())
        for job in ('generate', 'train', 'eval'):
            self.assertEqual(self.progress(job)[-1], 100, job)

        status, _ = self.run_cli('infer', '--data', data, '--checkpoint',
                                 checkpoint, '--ids', 'test_0001',
                                 'val_0000')
        self.assertEqual(status, 0)
        with open(run / 'infer' / DETECTIONS_FILE_NAME, 'r',
                  encoding='utf-8') as f:
            ids = [json.loads(line)['id'] for line in f]
        self.assertEqual(ids, ['test_0001', 'val_0000'])

        features = data / 'features' / 'train_0002_audio.davf'
        status, _ = self.run_cli('infer', '--data', data, '--checkpoint',
                                 checkpoint, '--out', self.folder / 'files',
                                 features)
        self.assertEqual(status, 0)
        self.assertTrue((self.folder / 'files' /
                         DETECTIONS_FILE_NAME).exists())

        status, out = self.run_cli('dump-attn', '--data', data,
                                   '--checkpoint', checkpoint, 'train_0000')
        self.assertEqual(status, 0)
        self.assertEqual(len(out.split()), 6)

        status, _ = self.run_cli('dump-attn', '--data', data,
                                 '--checkpoint', checkpoint, 'nobody')
        self.assertEqual(status, 1)


if __name__ == '__main__':
    unittest.main()
