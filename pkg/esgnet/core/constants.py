"""
esgnet constants
"""

FEATURE_FILE_MAGIC = b'DAVF'
FEATURE_FILE_VERSION = 1
FEATURE_FILE_SUFFIX = '.davf'

CHECKPOINT_MAGIC = b'DAVC'

ANNOTATION_FILE_SUFFIX = '.jsonl'
METRICS_LOG_NAME = 'metrics.jsonl'
ROUTE_LOG_NAME = 'routes.jsonl'
DETECTIONS_FILE_NAME = 'detections.jsonl'
REPORT_JSON_NAME = 'report.json'
REPORT_TEXT_NAME = 'report.txt'
BEST_CHECKPOINT_NAME = 'best.ckpt'
LAST_CHECKPOINT_NAME = 'last.ckpt'

#: tIoU thresholds [0.1:0.1:0.9]
TIOU_THRESHOLDS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
#: thresholds averaged for the high-overlap summary [0.5:0.1:0.9]
HIGH_TIOU_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)

LAYER_NORM_EPS = 1e-5
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
GIOU_EPS = 1e-8
EXPERT_LEAKY_SLOPE = 0.01
CLS_PRIOR_PROB = 0.01
FINAL_LR_RATIO = 0.05
