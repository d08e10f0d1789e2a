"""Context-aware optimal-transport learning for unpaired image enhancement."""

from ._ctxot import (
    contextual_cost,
    contextual_cost_grad,
    cost_matrix,
    degrade,
    emd_exact,
    encode,
    enhance,
    generate_retina,
    one_sided_cost,
    psnr,
    read_features,
    read_ppm,
    rem_distance,
    ssim,
    train,
    write_features,
    write_ppm,
)

__all__ = [
    "contextual_cost",
    "contextual_cost_grad",
    "cost_matrix",
    "degrade",
    "emd_exact",
    "encode",
    "enhance",
    "generate_retina",
    "one_sided_cost",
    "psnr",
    "read_features",
    "read_ppm",
    "rem_distance",
    "ssim",
    "train",
    "write_features",
    "write_ppm",
]

__version__ = "0.1.0"
