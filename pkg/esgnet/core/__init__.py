"""
esgnet core module

Only the lightweight modules are re-exported here; the model, training
and evaluation modules are imported from their own paths.
"""

from .enums import (  # noqa
    Activation,
    GateMode,
    NmsMethod,
    Padding,
    Precision,
    Split
)
from .exceptions import (  # noqa
    EsgNetException,
    ConfigError,
    ContractError,
    DimensionError,
    FeatureFormatError,
    NonFiniteError,
    TrainingAborted,
    UnknownVideoError,
    VersionError
)
from .config import (  # noqa
    CoOccurrence,
    ModelConfig,
    RunConfig,
    SynthConfig
)
from .logger import (  # noqa
    JsonLinesWriter,
    Logger,
    StreamLogger
)
from .meta import PACKAGE_METADATA_PARSER  # noqa
from .multi_step_feedback import (  # noqa
    Feedback,
    LoggingFeedback,
    MultiStepFeedback
)
