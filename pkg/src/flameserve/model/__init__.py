"""Reference scoring model: config, parameters, masks, attention, forward pass,
and the scalar-operation estimator."""

from .attention import (
    attention_naive,
    attention_sumi,
    attention_sumi_candidates,
    attention_tiled,
    masked_softmax_rows,
)
from .config import ModelConfig
from .flops import FlopsEstimate, allowed_pairs, estimate_flops, matmul_flops
from .forward import (
    block_forward,
    expert_heads,
    gated_fusion,
    gelu,
    layer_norm,
    model_forward,
    model_forward_sequential,
    sigmoid,
    split_sequence,
)
from .mask import SumiMask, build_sumi_mask
from .params import (
    BlockParams,
    LayerParams,
    ModelParams,
    init_params,
    iter_param_arrays,
    load_params,
    params_to_bytes,
    save_params,
)

__all__ = [
    "ModelConfig",
    "ModelParams",
    "BlockParams",
    "LayerParams",
    "SumiMask",
    "FlopsEstimate",
    "attention_naive",
    "attention_sumi",
    "attention_sumi_candidates",
    "attention_tiled",
    "masked_softmax_rows",
    "build_sumi_mask",
    "block_forward",
    "expert_heads",
    "gated_fusion",
    "gelu",
    "layer_norm",
    "model_forward",
    "model_forward_sequential",
    "sigmoid",
    "split_sequence",
    "allowed_pairs",
    "estimate_flops",
    "matmul_flops",
    "init_params",
    "iter_param_arrays",
    "load_params",
    "params_to_bytes",
    "save_params",
]
