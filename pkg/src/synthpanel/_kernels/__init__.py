from .backend import USING_NUMBA, kernel
from .ops import (
    cv_enet_errors,
    enet_cd,
    enet_kkt,
    gram,
    gram_rhs,
    proj_simplex,
    qp_kkt,
    qp_solve,
    top_eig,
)

__all__ = [
    "USING_NUMBA",
    "kernel",
    "cv_enet_errors",
    "enet_cd",
    "enet_kkt",
    "gram",
    "gram_rhs",
    "proj_simplex",
    "qp_kkt",
    "qp_solve",
    "top_eig",
]
