from .config import (
    PRESETS,
    ConvLayer,
    ModalityConvSpec,
    NetworkConfig,
    PoolLayer,
    load_config,
    preset,
)
from .network import (
    BinaryActivityCode,
    Recognizer,
    build_network,
    coding_forward,
    reset_states,
    threshold,
)

__all__ = [
    "PRESETS",
    "BinaryActivityCode",
    "ConvLayer",
    "ModalityConvSpec",
    "NetworkConfig",
    "PoolLayer",
    "Recognizer",
    "build_network",
    "coding_forward",
    "load_config",
    "preset",
    "reset_states",
    "threshold",
]
