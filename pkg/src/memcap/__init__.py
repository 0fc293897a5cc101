"""memcap: compile labeled sequence datasets into exact memorizing weights."""

from .errors import (
    ConsistencyError,
    DegenerateData,
    DimensionMismatch,
    GapViolation,
    MemcapError,
    NotDistinct,
    PrecisionExhausted,
    PreconditionViolation,
    RangeError,
    SchemaError,
    SearchExhausted,
)
from .numerics import BigRational, CertifiedReal, Dyadic, bin_slice, bit_len
from .ir import (
    AffineLayer,
    DeepSetModel,
    EmbeddingTransformerModel,
    HardmaxAttentionBlock,
    ReluMLP,
    SynthesisReport,
    TransformerModel,
    UniformAttentionBlock,
    accounting,
    eval_deepset,
    eval_embedding_transformer,
    eval_hardmax_column,
    eval_mlp,
    eval_transformer,
    eval_uniform_attention,
)
from .separation import (
    Multiset,
    RestrictionSet,
    SeparatingFunction,
    SeparationParams,
    check_separated,
    consistency_groups,
    find_projection_vector,
    restriction_set,
    separating_function,
    sequence_to_multiset,
)
from .ffn import (
    CraftedWeights,
    ScalarEmbedding,
    bit_extract_net,
    block_decoder_net,
    hittest_net,
    memorizing_ffn,
    memorizing_ffn_limited_bits,
    project_net,
    subset_router_net,
    support_net,
)
from .transformer import (
    build_attention,
    build_context_stage,
    build_ff1,
    synthesize_deepset,
    synthesize_embedding,
    synthesize_next_token,
    synthesize_next_token_limited_bits,
    synthesize_seq2seq,
)
from .verify import (
    VerificationReport,
    brute_force_context_check,
    fit_scaling_slope,
    shatter_sweep,
    verify_bounds,
    verify_memorization,
)
from .weights import load_weights, model_from_json, model_to_json, save_weights

__version__ = "0.1.0"
