"""Hot loops: SMO dual solver, CART growth and ensembles, L1 logistic FISTA.

The jitted versions are used when numba is importable and ``QSTRAT_NO_NUMBA``
is unset; otherwise the numpy versions are bound under the same names.
Both modules can be imported directly for comparison and benchmarking.
"""
from .._accel import HAVE_NUMBA

if HAVE_NUMBA:
    from ._numba import (
        boost_fit_head,
        build_tree,
        ensemble_leaves,
        fista_l1_logistic,
        forest_fit,
        prox_grad_norm,
        smo_solve,
        tree_apply,
    )
else:  # pragma: no cover - exercised via QSTRAT_NO_NUMBA=1
    from ._numpy import (
        boost_fit_head,
        build_tree,
        ensemble_leaves,
        fista_l1_logistic,
        forest_fit,
        prox_grad_norm,
        smo_solve,
        tree_apply,
    )

__all__ = [
    "boost_fit_head",
    "build_tree",
    "ensemble_leaves",
    "fista_l1_logistic",
    "forest_fit",
    "prox_grad_norm",
    "smo_solve",
    "tree_apply",
]
