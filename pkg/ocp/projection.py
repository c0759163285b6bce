"""L2 projection onto the admissible control set."""
from typing import Union

import numpy as np
import scipy.sparse as sp

from fem.assembly import SparseOperator
from ocp.problem import ConstraintSpec


def mass_diagonal(M: Union[SparseOperator, sp.spmatrix, np.ndarray]) -> np.ndarray:
    if isinstance(M, SparseOperator):
        return M.full.diagonal()
    if sp.issparse(M):
        return M.diagonal()
    return np.asarray(M, dtype=float)


def weighted_mean(w: np.ndarray, M) -> float:
    weights = mass_diagonal(M)
    return float(weights @ w / weights.sum())


def project_K(w: np.ndarray, M, K: ConstraintSpec) -> np.ndarray:
    """Closest point of K to w in the M-weighted norm.

    nonneg-mean shifts w by -min(0, mean(w)); box clamps each cell; none is the identity.
    """
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        raise ValueError("Cannot project an empty control vector")
    if not np.all(np.isfinite(w)):
        raise ValueError("Control vector is not finite")

    if K.kind == "nonneg-mean":
        weights = mass_diagonal(M)
        if weights.shape != w.shape:
            raise ValueError(f"Control mass has {weights.size} cells, control has {w.size}")
        return w - min(0.0, weighted_mean(w, weights))
    if K.kind == "box":
        return np.clip(w, K.lower, K.upper)
    return w.copy()
