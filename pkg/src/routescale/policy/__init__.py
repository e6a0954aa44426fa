from .accounting import decode_steps, flops_estimate, param_count
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import PRESET_SIZES, PRESETS, ModelConfig, preset
from .model import (
    NonFiniteActivationError,
    RMSNorm,
    RoutingPolicy,
    SNLinear,
    decoder_step,
    embed_nodes,
    encoder_forward,
)
from .spectral import block_power_iteration, sigma_estimate, spectral_normalize
