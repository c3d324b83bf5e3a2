"""Tensor-network secret sharing: randomized decompositions as shares,
arithmetic on dispersed shares, and leakage metrics."""
from .decomp import DecompositionReport, pad_noise, rht, rtd, tr_svd, tt_svd
from .errors import TNVaultError
from .formats import (
    HTRepresentation,
    TRRepresentation,
    TTMatrixRepresentation,
    TTRepresentation,
    TuckerRepresentation,
    num_params,
    reconstruct,
)
from .ops import (
    identity_tt_matrix,
    rerandomize,
    tt_add,
    tt_hadamard,
    tt_inner,
    tt_matvec,
    tt_round,
    tucker_binary,
)
from .sharing import (
    ShareManifest,
    ShareSet,
    additive_to_tn,
    generate_shares,
    reconstruct_from_shares,
    tn_to_additive,
)

__version__ = "0.1.0"

__all__ = [
    "DecompositionReport",
    "pad_noise",
    "rht",
    "rtd",
    "tr_svd",
    "tt_svd",
    "TNVaultError",
    "HTRepresentation",
    "TRRepresentation",
    "TTMatrixRepresentation",
    "TTRepresentation",
    "TuckerRepresentation",
    "num_params",
    "reconstruct",
    "identity_tt_matrix",
    "rerandomize",
    "tt_add",
    "tt_hadamard",
    "tt_inner",
    "tt_matvec",
    "tt_round",
    "tucker_binary",
    "ShareManifest",
    "ShareSet",
    "additive_to_tn",
    "generate_shares",
    "reconstruct_from_shares",
    "tn_to_additive",
]
