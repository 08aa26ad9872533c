"""
Logger and progress feedback tests
"""

import io
import json
import tempfile
import unittest
from pathlib import Path

import mock

from esgnet.core.logger import (
    JsonLinesWriter,
    Logger,
    StreamLogger,
    read_json_lines
)
from esgnet.core.multi_step_feedback import (
    Feedback,
    LoggingFeedback,
    MultiStepFeedback
)
from esgnet.test.utilities import RecordingLogger


class StreamLoggerTest(unittest.TestCase):
    """
    Test the stream logger
    """

    def test_messages(self):
        """
        Test plain and JSON messages are one line each
        """
        stream = io.StringIO()
        logger = StreamLogger(stream)
        logger.log_message('Epoch 1/2')
        logger.log_message_json({'type': Logger.TRAIN_STEP, 'step': 3})
        lines = stream.getvalue().splitlines()
        self.assertEqual(lines[0], 'Epoch 1/2')
        self.assertEqual(json.loads(lines[1]),
                         {'type': 'train_step', 'step': 3})

    def test_error_source(self):
        """
        Test errors name the calling code relative to the package
        """
        stream = io.StringIO()
        logger = StreamLogger(stream)
        logger.log_error_json({'type': 'error'})
        record = json.loads(stream.getvalue())
        self.assertEqual(record['source_file'],
                         str(Path('test') / 'test_logger.py'))
        self.assertEqual(record['source_function'], 'test_error_source')

        stream = io.StringIO()
        StreamLogger(stream).log_error('broken')
        self.assertTrue(stream.getvalue().startswith(
            str(Path('test') / 'test_logger.py') + ':'))
        self.assertIn('(test_error_source): broken', stream.getvalue())

    def test_base_logger_is_silent(self):
        """
        Test the base class accepts every call
        """
        logger = Logger()
        logger.log_message('x')
        logger.log_message_json({})
        logger.log_error('x')
        logger.log_error_json({})


class JsonLinesTest(unittest.TestCase):
    """
    Test JSON-lines record files
    """

    def test_write_and_append(self):
        """
        Test appending keeps earlier records
        """
        with tempfile.TemporaryDirectory() as folder:
            path = Path(folder) / 'nested' / 'log.jsonl'
            with JsonLinesWriter(path) as writer:
                writer.write_all([{'step': 0}, {'step': 1}])
            with JsonLinesWriter(path, append=True) as writer:
                writer.write({'step': 2})
            self.assertEqual([r['step'] for r in read_json_lines(path)],
                             [0, 1, 2])

            with JsonLinesWriter(path) as writer:
                writer.write({'step': 5})
            self.assertEqual(list(read_json_lines(path)), [{'step': 5}])

    def test_blank_lines_skipped(self):
        """
        Test blank lines are ignored when reading
        """
        with tempfile.TemporaryDirectory() as folder:
            path = Path(folder) / 'log.jsonl'
            path.write_text('{"a": 1}\n\n  \n{"a": 2}\n', encoding='utf-8')
            self.assertEqual(list(read_json_lines(path)),
                             [{'a': 1}, {'a': 2}])


class FeedbackTest(unittest.TestCase):
    """
    Test progress feedback
    """

    def test_multi_step_progress(self):
        """
        Test step progress is scaled into the parent range
        """
        parent = Feedback()
        reported = []
        parent.on_progress_changed(reported.append)
        feedback = MultiStepFeedback(4, parent)
        feedback.set_progress(50)
        self.assertAlmostEqual(parent.progress(), 12.5)
        feedback.step_finished()
        self.assertAlmostEqual(parent.progress(), 25.0)
        feedback.set_progress(100)
        self.assertAlmostEqual(parent.progress(), 50.0)
        feedback.set_current_step(4)
        self.assertAlmostEqual(parent.progress(), 100.0)
        self.assertEqual(reported[-1], 100.0)

    def test_zero_steps(self):
        """
        Test a job without steps still reports progress
        """
        parent = Feedback()
        MultiStepFeedback(0, parent).set_progress(100)
        self.assertAlmostEqual(parent.progress(), 100.0)

    def test_cancel(self):
        """
        Test canceling the parent reaches the step feedback once
        """
        parent = Feedback()
        feedback = MultiStepFeedback(2, parent)
        calls = []
        feedback.on_canceled(lambda: calls.append(1))
        self.assertFalse(feedback.is_canceled())
        parent.cancel()
        parent.cancel()
        self.assertTrue(feedback.is_canceled())
        self.assertEqual(calls, [1])

    def test_logging_feedback(self):
        """
        Test progress is logged once per whole percent
        """
        logger = RecordingLogger()
        with mock.patch.object(Logger, '_instance', logger):
            feedback = LoggingFeedback('train')
            step = MultiStepFeedback(3, feedback)
            for progress in (10, 20, 50, 100):
                step.set_progress(progress)
            step.step_finished()
            step.set_current_step(3)
        self.assertEqual(logger.messages[0],
                         {'type': Logger.PROGRESS, 'job': 'train',
                          'progress': 3})
        self.assertEqual([m['progress'] for m in logger.messages],
                         [3, 6, 16, 33, 100])


if __name__ == '__main__':
    unittest.main()
