"""DEFT, LoRA and PaRa low-rank adapters over a frozen base weight."""

from ._core import (
    Adapter,
    ConfigError,
    DeftError,
    DivergenceError,
    FormatError,
    IoError,
    NumericError,
    PairingError,
    PreconditionError,
    ShapeError,
    backends,
    check_containment,
    decode_matrix,
    decompose,
    encode_matrix,
    matrix_hash,
    numerical_rank,
    param_count,
    reconstruction_error,
    verify_decomposition_identity,
)

__all__ = [
    "Adapter",
    "ConfigError",
    "DeftError",
    "DivergenceError",
    "FormatError",
    "IoError",
    "NumericError",
    "PairingError",
    "PreconditionError",
    "ShapeError",
    "backends",
    "check_containment",
    "decode_matrix",
    "decompose",
    "encode_matrix",
    "matrix_hash",
    "numerical_rank",
    "param_count",
    "reconstruction_error",
    "verify_decomposition_identity",
]
