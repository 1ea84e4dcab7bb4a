"""Rounding matrices and vectors correlated with hidden structure into labels.

hyperplane_round turns a PSD unit-diagonal matrix into signs of a Gaussian
with that covariance (Goemans-Williamson style); spectral_round samples a
random unit vector in a top eigenspace; cleanup_to_simplex converts column
estimates of the shifted community vectors w_s into per-vertex probability
vectors by a correlation-preserving projection onto the shifted simplex.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from . import projection as prj
from .errors import ParameterError
from .model import LabelMatrix, expected_w_entry_sq

log = logging.getLogger(__name__)

__all__ = [
    "hyperplane_round",
    "spectral_round",
    "fix_sign",
    "cleanup_to_simplex",
]


def hyperplane_round(Y: np.ndarray, rng: np.random.Generator,
                     psd_tol: float = 1e-8) -> np.ndarray:
    """Coordinate-wise signs of g ~ N(0, Y); sign(0) is +1.

    Y must be (numerically) PSD with unit diagonal; eigenvalues in
    [-psd_tol, 0) are clipped, anything lower is rejected.
    """
    Y = np.asarray(Y, dtype=np.float64)
    n = Y.shape[0]
    if np.abs(np.diag(Y) - 1).max() > 1e-6:
        raise ParameterError("hyperplane rounding needs unit diagonal")
    evals, evecs = np.linalg.eigh((Y + Y.T) / 2)
    if evals[0] < -psd_tol * max(1.0, evals[-1]):
        raise ParameterError(f"matrix not PSD: min eigenvalue {evals[0]:.3g}")
    evals = np.clip(evals, 0.0, None)
    g = evecs @ (np.sqrt(evals) * rng.normal(size=n))
    signs = np.sign(g)
    signs[signs == 0] = 1.0
    return signs


def spectral_round(P: np.ndarray, top_r: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random unit vector in the span of the top_r eigenvectors
    (largest eigenvalues) of the symmetrized input."""
    if top_r < 1:
        raise ParameterError("top_r must be >= 1")
    P = np.asarray(P, dtype=np.float64)
    P = (P + P.T) / 2
    top_r = min(top_r, P.shape[0])
    _, evecs = np.linalg.eigh(P)
    basis = evecs[:, -top_r:]
    z = rng.normal(size=top_r)
    x = basis @ z
    return x / np.linalg.norm(x)


def fix_sign(x: np.ndarray, s3: float) -> np.ndarray:
    """Return -x when the cubic cross-validation statistic is negative.

    Ties (s3 == 0) keep x.
    """
    return -x if s3 < 0 else x


def cleanup_to_simplex(xs: np.ndarray, k: int, alpha: float,
                       delta: float = 0.2,
                       rng: np.random.Generator | None = None,
                       tol: float = 1e-7, max_iter: int = 2000,
                       large_delta_cutoff: float = 0.9) -> LabelMatrix:
    """Turn k unit vectors correlated with the shifted community vectors w_s
    into per-vertex probability vectors.

    The columns are scaled to the expected norm of w_s and projected onto the
    set of n x k matrices whose rows are probability vectors shifted by
    -(1/k)(1 - 1/sqrt(alpha+1)) (the affine hull the w-matrix lives in). For
    delta below `large_delta_cutoff` the projection is the minimum-norm point
    of that set intersected with a correlation halfspace, which preserves a
    delta/2 fraction of the correlation; for larger delta a plain Euclidean
    projection suffices. Rows are then un-shifted back to the simplex.

    Projection infeasibility degrades to uniform labels.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2:
        raise ParameterError("xs must be an (n, k) or (k, n) array")
    if xs.shape[0] == k and xs.shape[1] != k:
        xs = xs.T
    n = xs.shape[0]
    if xs.shape[1] != k:
        raise ParameterError(f"expected {k} vectors, got shape {xs.shape}")
    rng = rng or np.random.default_rng()

    shift = (1.0 - 1.0 / math.sqrt(alpha + 1.0)) / k
    w_col_norm = math.sqrt(n * expected_w_entry_sq(k, alpha))
    col_norms = np.linalg.norm(xs, axis=0)
    col_norms[col_norms == 0] = 1.0
    X = xs / col_norms * w_col_norm
    simplex = prj.RowShiftedSimplex(k, shift)

    if delta >= large_delta_cutoff:
        Q = simplex.project(X)
    else:
        w_norm = math.sqrt(k) * w_col_norm
        bound = delta * np.linalg.norm(X) * w_norm
        res = prj.min_norm_in_intersection(
            [simplex, prj.Halfspace(X, bound)],
            (n, k),
            tol=tol,
            max_iter=max_iter,
            scale=w_norm,
        )
        if not res.converged and res.residual > 1e-3 * w_norm:
            log.warning(
                "cleanup projection infeasible (residual %.3g); uniform labels",
                res.residual,
            )
            return LabelMatrix(np.full((n, k), 1.0 / k))
        Q = simplex.project(res.point)
    tau = Q + shift
    # guard against tiny negative round-off
    tau = np.clip(tau, 0.0, None)
    tau /= tau.sum(axis=1, keepdims=True)
    return LabelMatrix(tau)
