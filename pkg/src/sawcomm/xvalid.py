"""Holdout cross-validation estimators of community-vector moments.

A random holdout set A is split off; edges between A and its complement are
statistically independent of anything computed on the induced graph on the
complement. Sums over holdout vertices of products of centered bipartite edge
indicators estimate sum_s <v_s, x>^3 / ||v_s||^3 and sum_s <v_s, x>^4 /
||v_s||^4 for any candidate direction x on the complement, and likewise for
the shifted vectors w_s. These power the oracle and sign checks of the
recovery pipelines.

The normalizing constants are assembled from exact Dirichlet moment
contractions: with g_a,i = (x_edge(a,i) - d/n) x_i,

  E P_a  = (eps d/n)^3 C3 sum_{ijk distinct} V_ijk x_i x_j x_k
  E Q_a  = (eps d/n)^4 [C4 (4-index sum) + 3 D4 (paired sum)]
  E R_a  = (eps d/n)^2 C2 sum_{i != j} <s~_i, s~_j> x_i x_j

so the D4 cross-term of Q is cancelled using the square of the R-sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .errors import ParameterError
from .model import (
    Graph,
    SbmParams,
    dirichlet_constants,
    expected_v_entry_sq,
    expected_w_entry_sq,
)

__all__ = ["HoldoutSplit", "holdout_split", "s3", "s4", "s3_w", "s4_w"]


@dataclass
class HoldoutSplit:
    """Holdout vertex set A, remainder, and the bipartite edge view."""

    holdout: np.ndarray  # vertex ids in A, sorted
    rest: np.ndarray  # vertex ids of the complement, sorted
    bip: csr_matrix  # |A| x |rest| 0/1 adjacency between A and the rest
    params: SbmParams

    @property
    def n_holdout(self) -> int:
        return len(self.holdout)

    @property
    def n_rest(self) -> int:
        return len(self.rest)


def holdout_split(
    graph: Graph, eta: float, rng: np.random.Generator, params: SbmParams
) -> tuple[HoldoutSplit, Graph, np.ndarray]:
    """Uniformly random holdout set of size ceil(eta n).

    Returns (split, induced graph on the complement, complement vertex ids);
    vertex i of the induced graph is split.rest[i] in the original.
    """
    if not 0 < eta < 0.5:
        raise ParameterError(f"need 0 < eta < 1/2, got {eta}")
    n = graph.n
    size = math.ceil(eta * n)
    if size < 1 or n - size < 2:
        raise ParameterError("degenerate holdout sizes")
    perm = rng.permutation(n)
    holdout = np.sort(perm[:size])
    rest = np.sort(perm[size:])
    in_hold = np.zeros(n, dtype=bool)
    in_hold[holdout] = True
    pos_hold = np.zeros(n, dtype=np.int64)
    pos_hold[holdout] = np.arange(size)
    pos_rest = np.zeros(n, dtype=np.int64)
    pos_rest[rest] = np.arange(n - size)

    rows, cols = [], []
    if graph.m:
        e = graph.edges
        hu, hv = in_hold[e[:, 0]], in_hold[e[:, 1]]
        cross_a = e[hu & ~hv]
        cross_b = e[~hu & hv]
        rows = np.concatenate([pos_hold[cross_a[:, 0]], pos_hold[cross_b[:, 1]]])
        cols = np.concatenate([pos_rest[cross_a[:, 1]], pos_rest[cross_b[:, 0]]])
    bip = csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(size, n - size)
    )
    induced, _ = graph.induced_subgraph(rest)
    split = HoldoutSplit(holdout=holdout, rest=rest, bip=bip, params=params)
    return split, induced, rest


def _power_sums(split: HoldoutSplit, x: np.ndarray, max_r: int) -> np.ndarray:
    """p[r-1][a] = sum_i ((B_ai - d/n) x_i)^r for each holdout vertex a.

    O(|bipartite edges| + |A|) via the sparse adjacency: non-edges contribute
    (-d/n x_i)^r, edges swap that for ((1 - d/n) x_i)^r.
    """
    c0 = split.params.d / split.params.n
    out = np.empty((max_r, split.n_holdout))
    xr = np.ones_like(x)
    for r in range(1, max_r + 1):
        xr = xr * x
        base = (-c0) ** r * xr.sum()
        bump = (1 - c0) ** r - (-c0) ** r
        out[r - 1] = base + bump * (split.bip @ xr)
    return out


def _normalize_input(split: HoldoutSplit, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (split.n_rest,):
        raise ParameterError(
            f"x must live on the {split.n_rest} non-holdout vertices"
        )
    nrm = np.linalg.norm(x)
    if nrm == 0:
        raise ParameterError("x must be nonzero")
    return x / nrm


def _moment_estimates(split: HoldoutSplit, x: np.ndarray) -> tuple[float, float, float]:
    """Estimates of (sum_s <v_s,x>^3, sum_s <v_s,x>^4, sum_s <v_s,x>^2),
    each restricted to distinct indices where applicable."""
    if split.n_holdout == 0:
        raise ParameterError("empty holdout set")
    p = _power_sums(split, x, 4)
    p1, p2, p3, p4 = p
    params = split.params
    cst = dirichlet_constants(params.k, params.alpha)
    rate = params.eps * params.d / params.n
    m = split.n_holdout

    sum_p = (p1**3 - 3 * p1 * p2 + 2 * p3).sum()
    sum_q = (p1**4 - 6 * p1**2 * p2 + 3 * p2**2 + 8 * p1 * p3 - 6 * p4).sum()
    sum_r = (p1**2 - p2).sum()

    s2_hat = sum_r / (m * rate**2 * cst.C2)
    v3_hat = sum_p / (m * rate**3 * cst.C3) if cst.C3 != 0 else 0.0
    q_hat = sum_q / (m * rate**4)
    v4_hat = (q_hat - 3 * cst.D4 * s2_hat**2) / cst.C4
    return v3_hat, v4_hat, s2_hat


def s3(split: HoldoutSplit, x: np.ndarray) -> float:
    """Estimate of sum_s <v_s, x>^3 / ||v_s||^3 from the holdout edges."""
    x = _normalize_input(split, x)
    v3_hat, _, _ = _moment_estimates(split, x)
    params = split.params
    scale = (split.n_rest * expected_v_entry_sq(params.k, params.alpha)) ** 1.5
    return v3_hat / scale


def s4(split: HoldoutSplit, x: np.ndarray) -> float:
    """Estimate of sum_s <v_s, x>^4 / ||v_s||^4 from the holdout edges."""
    x = _normalize_input(split, x)
    _, v4_hat, _ = _moment_estimates(split, x)
    params = split.params
    scale = (split.n_rest * expected_v_entry_sq(params.k, params.alpha)) ** 2
    return v4_hat / scale


def _w_moments(split: HoldoutSplit, x: np.ndarray) -> tuple[float, float]:
    """(sum_s <w_s,x>^3, sum_s <w_s,x>^4) estimates via the shift identity
    w_s = v_s + c * 1; terms linear in sum_s v_s vanish."""
    params = split.params
    v3_hat, v4_hat, s2_hat = _moment_estimates(split, x)
    # sum_s <v_s, x>^2 includes the diagonal i = j part, whose conditional
    # mean is E||s~||^2 ||x||^2 by concentration over vertices.
    k, alpha = params.k, params.alpha
    s2_full = s2_hat + k * expected_v_entry_sq(k, alpha)
    c = 1.0 / (k * math.sqrt(alpha + 1.0))
    sx = c * x.sum()
    w3 = v3_hat + 3 * sx * s2_full + k * sx**3
    w4 = v4_hat + 4 * sx * v3_hat + 6 * sx**2 * s2_full + k * sx**4
    return w3, w4


def s3_w(split: HoldoutSplit, x: np.ndarray) -> float:
    """Estimate of sum_s <w_s, x>^3 / ||w_s||^3."""
    x = _normalize_input(split, x)
    w3, _ = _w_moments(split, x)
    params = split.params
    scale = (split.n_rest * expected_w_entry_sq(params.k, params.alpha)) ** 1.5
    return w3 / scale


def s4_w(split: HoldoutSplit, x: np.ndarray) -> float:
    """Estimate of sum_s <w_s, x>^4 / ||w_s||^4."""
    x = _normalize_input(split, x)
    _, w4 = _w_moments(split, x)
    params = split.params
    scale = (split.n_rest * expected_w_entry_sq(params.k, params.alpha)) ** 2
    return w4 / scale
