"""USES network: parameters, forward pass and checkpoints."""

from uses_se.model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from uses_se.model.network import (
    MemoryMode,
    MemoryState,
    decode,
    decode_spectrum,
    decode_tensor,
    encode,
    encode_segment,
    enhance,
    forward_segment,
    forward_waveform,
    merge_reference,
    multi_path_block,
    process_spectrum,
    tac,
)
from uses_se.model.params import UsesModel, init_params, param_count

__all__ = [
    "Checkpoint",
    "MemoryMode",
    "MemoryState",
    "UsesModel",
    "decode",
    "decode_spectrum",
    "decode_tensor",
    "encode",
    "encode_segment",
    "enhance",
    "forward_segment",
    "forward_waveform",
    "init_params",
    "load_checkpoint",
    "merge_reference",
    "multi_path_block",
    "param_count",
    "process_spectrum",
    "save_checkpoint",
    "tac",
]
