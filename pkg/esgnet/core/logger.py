"""
Run logging: the logger singleton and JSON-lines record files
"""

import json
import os
import pathlib
import sys
import threading
from inspect import (
    currentframe,
    getframeinfo
)
from typing import (
    Dict,
    Iterable,
    Iterator,
    Optional,
    TextIO
)


class Logger:
    """
    Logger interface, shared through a process-wide instance.

    Records of type ``*_json`` are dictionaries whose ``type`` key is one
    of the tags below. The base class discards everything.
    """

    _instance: Optional['Logger'] = None

    TRAIN_STEP = 'train_step'
    EVALUATION = 'evaluation'
    CHECKPOINT = 'checkpoint'
    DATASET = 'dataset'
    NON_FINITE = 'non_finite'
    INFERENCE = 'inference'
    PROGRESS = 'progress'

    @classmethod
    def instance(cls) -> 'Logger':
        """
        Returns the active logger
        """
        return cls._instance

    @classmethod
    def set_instance(cls, logger: 'Logger'):
        """
        Replaces the active logger
        """
        cls._instance = logger

    def log_message(self, message: str):
        """
        Records a plain status line
        """

    def log_message_json(self, message: Dict):
        """
        Records a structured message
        """

    def log_error(self, error: str):
        """
        Records a plain error line
        """

    def log_error_json(self, error: Dict):
        """
        Records a structured error
        """

    @staticmethod
    def anonymize_filename(filename: str) -> str:
        """
        Returns a source file path relative to the esgnet package root,
        so logs carry no user directories
        """
        root = pathlib.Path(__file__).parent.parent.resolve()
        return os.path.relpath(pathlib.Path(filename).resolve(), start=root)


class StreamLogger(Logger):
    """
    Writes log records to a text stream, stderr by default.

    Records may arrive from evaluation worker threads, so writes are
    serialized with a lock.
    """

    def __init__(self, stream: Optional[TextIO] = None):
        super().__init__()
        self._stream = stream
        self._lock = threading.Lock()

    def _write(self, text: str):
        stream = self._stream or sys.stderr
        with self._lock:
            stream.write(text + '\n')
            stream.flush()

    def log_message(self, message: str):
        self._write(message)

    def log_message_json(self, message: Dict):
        self._write(json.dumps(message))

    def _caller(self) -> Dict:
        # two frames up: past log_error*, into the code that logged
        frame = currentframe().f_back.f_back
        info = getframeinfo(frame)
        return {'source_file': self.anonymize_filename(info.filename),
                'source_line': frame.f_lineno,
                'source_function': info.function}

    def log_error(self, error: str):
        source = self._caller()
        self._write('{source_file}:{source_line} ({source_function}): '
                    .format(**source) + error)

    def log_error_json(self, error: Dict):
        error.update(self._caller())
        self._write(json.dumps(error))


class JsonLinesWriter:
    """
    Appends JSON objects to a file, one object per line
    """

    def __init__(self, path: pathlib.Path, append: bool = False):
        self.path = pathlib.Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        # pylint: disable=consider-using-with
        self._file = open(self.path, 'a' if append else 'w',
                          encoding='utf-8', newline='\n')
        # pylint: enable=consider-using-with
        self._lock = threading.Lock()

    def write(self, record: Dict):
        """
        Writes a single record
        """
        with self._lock:
            self._file.write(json.dumps(record) + '\n')
            self._file.flush()

    def write_all(self, records: Iterable[Dict]):
        """
        Writes a sequence of records
        """
        for record in records:
            self.write(record)

    def close(self):
        """
        Closes the underlying file
        """
        self._file.close()

    def __enter__(self) -> 'JsonLinesWriter':
        return self

    def __exit__(self, *args):
        self.close()


def read_json_lines(path: pathlib.Path) -> Iterator[Dict]:
    """
    Yields the records of a JSON-lines file, skipping blank lines
    """
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


Logger.set_instance(StreamLogger())
