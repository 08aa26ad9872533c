"""
Inference over videos and split evaluation
"""

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import (
    Dict,
    List,
    Optional,
    Sequence
)

from ..tensor.tensor import no_grad
from .constants import (
    DETECTIONS_FILE_NAME,
    REPORT_JSON_NAME,
    REPORT_TEXT_NAME,
    ROUTE_LOG_NAME
)
from .dataset import VideoSample
from .detection import (
    Candidate,
    postprocess
)
from .evaluation import (
    EvaluationReport,
    mean_ap
)
from .logger import (
    JsonLinesWriter,
    Logger
)
from .mode import expert_usage_stats
from .model import ESGNet
from .multi_step_feedback import Feedback


@dataclass
class VideoDetections:
    """
    Soft-NMS output and MoE route of one video
    """
    id: str
    candidates: List[Candidate]
    route: List[int]

    def to_json(self) -> Dict:
        """
        Returns the detections file record
        """
        return {'id': self.id,
                'detections': [c.to_json() for c in self.candidates]}

    def route_json(self) -> Dict:
        """
        Returns the route log record
        """
        return {'id': self.id, 'route': list(self.route)}


def detect(model: ESGNet, sample: VideoSample) -> VideoDetections:
    """
    Runs inference on one video. No noise is sampled, so repeated calls
    give identical results.
    """
    with no_grad():
        outputs, _, valid = model.forward_sample(sample)
    length = float(valid.sum())
    candidates = postprocess(outputs.heads.probs.data,
                             outputs.heads.distances.data,
                             outputs.level_lengths,
                             length,
                             model.config)
    return VideoDetections(sample.id, candidates, outputs.route)


def run_inference(model: ESGNet,
                  samples: Sequence[VideoSample],
                  workers: int = 1,
                  feedback: Optional[Feedback] = None) \
        -> List[VideoDetections]:
    """
    Runs inference on many videos, in parallel when ``workers`` > 1.
    Results keep the order of ``samples``.
    """
    res = []
    total = max(len(samples), 1)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        for i, result in enumerate(executor.map(
                lambda s: detect(model, s), samples)):
            res.append(result)
            if feedback:
                feedback.set_progress(100 * (i + 1) / total)
    return res


def evaluate_split(model: ESGNet,
                   samples: Sequence[VideoSample],
                   workers: int = 1,
                   feedback: Optional[Feedback] = None,
                   timed: bool = False):
    """
    Runs inference on a split and scores it. The inference time goes to
    the log, and into the report when ``timed`` is set.

    Returns (report, per-video detections).
    """
    started = time.perf_counter()
    results = run_inference(model, samples, workers, feedback)
    elapsed = time.perf_counter() - started

    report = mean_ap({r.id: r.candidates for r in results},
                     {s.id: s.events for s in samples},
                     model.config.num_classes)
    if timed:
        report.inference_seconds = elapsed
    report.expert_usage = expert_usage_stats([r.route for r in results],
                                             model.config.experts)
    Logger.instance().log_message_json({
        'type': Logger.EVALUATION,
        'videos': len(samples),
        'avg_map': report.avg_map,
        'inference_seconds': elapsed,
    })
    return report, results


def write_detections(output_dir: Path, results: Sequence[VideoDetections]):
    """
    Writes the detections file and the route log
    """
    output_dir = Path(output_dir)
    with JsonLinesWriter(output_dir / DETECTIONS_FILE_NAME) as writer:
        writer.write_all(r.to_json() for r in results)
    with JsonLinesWriter(output_dir / ROUTE_LOG_NAME) as writer:
        writer.write_all(r.route_json() for r in results)


def write_report(output_dir: Path, report: EvaluationReport):
    """
    Writes the JSON report and the plain-text table
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    with open(output_dir / REPORT_JSON_NAME, 'w', encoding='utf-8') as f:
        json.dump(report.to_json(), f, indent=2, sort_keys=True)
        f.write('\n')
    with open(output_dir / REPORT_TEXT_NAME, 'w', encoding='utf-8') as f:
        f.write(report.to_text())
