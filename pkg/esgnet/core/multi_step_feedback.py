"""
Progress feedback for long running jobs
"""

from typing import (
    Callable,
    List
)

from .logger import Logger


class Feedback:
    """
    Receives progress reports (0-100) and cancellation requests
    """

    def __init__(self):
        self._progress = 0.0
        self._canceled = False
        self._progress_callbacks: List[Callable[[float], None]] = []
        self._cancel_callbacks: List[Callable[[], None]] = []

    def progress(self) -> float:
        """
        Returns the current progress percentage
        """
        return self._progress

    def set_progress(self, progress: float):
        """
        Sets the current progress and notifies listeners
        """
        self._progress = progress
        for callback in self._progress_callbacks:
            callback(progress)

    def on_progress_changed(self, callback: Callable[[float], None]):
        """
        Registers a callback for progress changes
        """
        self._progress_callbacks.append(callback)

    def on_canceled(self, callback: Callable[[], None]):
        """
        Registers a callback for cancellation
        """
        self._cancel_callbacks.append(callback)

    def cancel(self):
        """
        Requests cancellation of the job
        """
        if self._canceled:
            return
        self._canceled = True
        for callback in self._cancel_callbacks:
            callback()

    def is_canceled(self) -> bool:
        """
        Returns True if cancellation was requested
        """
        return self._canceled


class MultiStepFeedback(Feedback):
    """
    Maps the progress of the current step of a job onto the overall
    progress of a parent feedback
    """

    def __init__(self, steps: int, feedback: Feedback):
        """
        Splits the parent range into ``steps`` equal parts. Cancelling
        the parent cancels this feedback too.
        """
        super().__init__()
        self.steps = max(steps, 1)
        self.current_step = 0
        self._feedback = feedback

        self._feedback.on_canceled(self.cancel)
        self.on_progress_changed(self._update_overall_progress)

    def step_finished(self):
        """
        Moves on to the next step
        """
        self.set_current_step(self.current_step + 1)

    def set_current_step(self, step: int):
        """
        Jumps to the given step, reporting the steps before it as done
        """
        self.current_step = step
        self._feedback.set_progress(
            100 * (self.current_step / self.steps)
        )

    def _update_overall_progress(self, progress: float):
        """
        Forwards progress within the current step to the parent
        """
        base_progress = 100.0 * self.current_step / self.steps
        current_step_progress = progress / self.steps
        self._feedback.set_progress(base_progress + current_step_progress)


class LoggingFeedback(Feedback):
    """
    Logs the progress of a job as PROGRESS records, once per whole
    percent
    """

    def __init__(self, job: str):
        super().__init__()
        self.job = job
        self._logged = -1
        self.on_progress_changed(self._log_progress)

    def _log_progress(self, progress: float):
        percent = int(progress)
        if percent == self._logged:
            return
        self._logged = percent
        Logger.instance().log_message_json({
            'type': Logger.PROGRESS,
            'job': self.job,
            'progress': percent,
        })
