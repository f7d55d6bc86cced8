from .solver import (
    PATHS,
    PRECISIONS,
    Bidiagonal,
    GsvdResult,
    NoiseModel,
    SolverConfig,
    back_transform,
    bidiagonalize,
    canonicalize,
    compute_tolerance,
    gsvd,
    gsvd_reference,
    init_vectors,
    mat_inverse,
    mat_mul,
    qr_iterate,
    reference_solve,
    solve_products,
    sort_descending,
)

__all__ = [
    "PATHS", "PRECISIONS", "Bidiagonal", "GsvdResult", "NoiseModel", "SolverConfig",
    "back_transform", "bidiagonalize", "canonicalize", "compute_tolerance", "gsvd",
    "gsvd_reference", "init_vectors", "mat_inverse", "mat_mul", "qr_iterate", "reference_solve",
    "solve_products", "sort_descending",
]
