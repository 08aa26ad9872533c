"""
Minimal dense tensor library with reverse-mode differentiation
"""

from .tensor import (  # noqa
    Tensor,
    Param,
    Graph,
    Node,
    backward,
    no_grad,
    precision,
    default_dtype,
    set_default_precision,
    set_finite_checks,
    is_grad_enabled
)
from .ops import (  # noqa
    activation,
    add,
    as_tensor,
    concat,
    conv1d,
    depthwise_conv1d,
    gated_sum,
    gelu,
    layer_norm,
    leaky_relu,
    linear,
    log,
    masked_mean_rows,
    matmul,
    maximum,
    minimum,
    power,
    prelu,
    relu,
    sigmoid,
    softmax_rows,
    softplus,
    straight_through
)
from .nn import (  # noqa
    AttentionParams,
    Conv1d,
    CrossAttentionBlock,
    DepthwiseConv1d,
    FeedForward,
    LayerNorm,
    Linear,
    MLPHead,
    Module,
    PReLU,
    SelfAttentionBlock,
    attention_mask,
    multi_head_attention
)
from .optim import (  # noqa
    Adam,
    adam_step,
    clip_grad_norm
)
from .gradcheck import (  # noqa
    GradCheckResult,
    check_gradients,
    relative_error
)
