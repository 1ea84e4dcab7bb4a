"""Random models and label containers for sparse block models.

Implements the mixed-membership stochastic block model (disjoint communities
are the alpha=0 special case), spiked Wigner matrices, the Dirichlet prior
with its exact moment constants, centered community vectors, and the
permutation-maximized correlation score between two labelings.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.special import gammaln

from .errors import ParameterError

__all__ = [
    "SbmParams",
    "Graph",
    "LabelMatrix",
    "CommunityVectors",
    "WignerInstance",
    "sample_dirichlet",
    "sample_mixed_membership",
    "sample_two_community",
    "sample_spiked_wigner",
    "corr",
    "community_vectors",
    "dirichlet_raw_moment",
    "dirichlet_central_tensor",
    "dirichlet_constants",
    "expected_v_entry_sq",
    "expected_w_entry_sq",
    "read_edge_list",
    "write_edge_list",
    "read_labels",
    "write_labels",
]


# ---------------------------------------------------------------------------
# Parameters


@dataclass(frozen=True)
class SbmParams:
    """Parameters of the mixed-membership block model.

    n:     number of vertices
    d:     expected average degree
    eps:   edge bias epsilon in (0, 1]
    k:     number of communities
    alpha: Dirichlet overlap parameter (alpha = 0 gives disjoint communities)
    """

    n: int
    d: float
    eps: float
    k: int
    alpha: float = 0.0

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError(f"need n >= 2, got {self.n}")
        if not 0 < self.d < self.n:
            raise ParameterError(f"need 0 < d < n, got d={self.d}")
        # eps = 0 (the Erdos-Renyi null) is allowed for control experiments.
        if not 0 <= self.eps <= 1:
            raise ParameterError(f"need eps in [0, 1], got {self.eps}")
        if self.k < 1:
            raise ParameterError(f"need k >= 1, got {self.k}")
        if self.alpha < 0:
            raise ParameterError(f"need alpha >= 0, got {self.alpha}")
        # Edge probabilities (1 + (<s_i,s_j> - 1/k) eps) d/n must stay in [0,1];
        # the extreme inner products are 0 and 1.
        hi = (1 + (1 - 1 / self.k) * self.eps) * self.d / self.n
        lo = (1 - self.eps / self.k) * self.d / self.n
        if hi > 1 or lo < 0:
            raise ParameterError(
                f"edge probability out of [0,1]: range [{lo:.4g}, {hi:.4g}]"
            )

    def delta(self) -> float:
        """Distance to the critical threshold, 1 - k^2 (alpha+1)^2 / (eps^2 d)."""
        return 1.0 - self.k**2 * (self.alpha + 1) ** 2 / (self.eps**2 * self.d)

    def t_effective(self) -> float:
        """Effective number of occupied communities, (alpha+1) k / (k+alpha)."""
        return (self.alpha + 1) * self.k / (self.k + self.alpha)


# ---------------------------------------------------------------------------
# Containers


class Graph:
    """Sparse undirected simple graph with O(1) edge queries.

    Edges are stored as a (m, 2) int array with u < v in each row, sorted
    lexicographically, so iteration order is deterministic given construction.
    """

    __slots__ = ("n", "edges", "_adj", "_edge_set")

    def __init__(self, n: int, edges: np.ndarray):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            u = edges.min(axis=1)
            v = edges.max(axis=1)
            if u.min() < 0 or v.max() >= n:
                raise ParameterError("edge endpoint out of range")
            if (u == v).any():
                raise ParameterError("self-loops not allowed")
            edges = np.stack([u, v], axis=1)
            edges = np.unique(edges, axis=0)
        self.n = int(n)
        self.edges = edges
        self._adj = None
        self._edge_set = None

    @property
    def m(self) -> int:
        return len(self.edges)

    def has_edge(self, u: int, v: int) -> bool:
        if self._edge_set is None:
            self._edge_set = {(int(a), int(b)) for a, b in self.edges}
        a, b = (u, v) if u < v else (v, u)
        return (a, b) in self._edge_set

    def adjacency(self) -> csr_matrix:
        """Symmetric 0/1 adjacency as CSR (cached)."""
        if self._adj is None:
            if self.m:
                u, v = self.edges[:, 0], self.edges[:, 1]
                rows = np.concatenate([u, v])
                cols = np.concatenate([v, u])
                data = np.ones(2 * self.m)
                self._adj = csr_matrix((data, (rows, cols)), shape=(self.n, self.n))
            else:
                self._adj = csr_matrix((self.n, self.n))
        return self._adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        if self.m:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def induced_subgraph(self, vertices: np.ndarray) -> tuple["Graph", np.ndarray]:
        """Induced subgraph on `vertices`; returns (graph, old index array).

        Vertex i of the subgraph corresponds to old index vertices[i].
        """
        vertices = np.asarray(sorted(vertices), dtype=np.int64)
        pos = -np.ones(self.n, dtype=np.int64)
        pos[vertices] = np.arange(len(vertices))
        if self.m:
            keep = (pos[self.edges[:, 0]] >= 0) & (pos[self.edges[:, 1]] >= 0)
            sub = pos[self.edges[keep]]
        else:
            sub = np.empty((0, 2), dtype=np.int64)
        return Graph(len(vertices), sub), vertices


class LabelMatrix:
    """n rows of k-dimensional probability vectors."""

    __slots__ = ("rows",)

    TOL = 1e-9

    def __init__(self, rows: np.ndarray):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ParameterError("label matrix must be 2-d")
        if (rows < -self.TOL).any():
            raise ParameterError("label matrix has negative entries")
        if np.abs(rows.sum(axis=1) - 1).max() > 1e-7:
            raise ParameterError("label rows must sum to 1")
        self.rows = rows

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def k(self) -> int:
        return self.rows.shape[1]

    @classmethod
    def hard(cls, assignment: np.ndarray, k: int) -> "LabelMatrix":
        """Labels from a vector of community indices."""
        assignment = np.asarray(assignment, dtype=np.int64)
        rows = np.zeros((len(assignment), k))
        rows[np.arange(len(assignment)), assignment] = 1.0
        return cls(rows)

    def centered(self) -> np.ndarray:
        return self.rows - 1.0 / self.k


@dataclass
class CommunityVectors:
    """Centered community vectors v_s and their shifted versions w_s.

    v_s(i) = sigma_i(s) - 1/k and w_s(i) = v_s(i) + 1/(k sqrt(alpha+1)).
    Both are stored as (k, n) arrays. The shift makes the w_s uncorrelated
    across communities, and for large n the matrix (1/k) sum_s w_s w_s^T,
    normalized by E||w_s||^2, concentrates on the identity.
    """

    v: np.ndarray
    w: np.ndarray
    alpha: float

    @property
    def k(self) -> int:
        return self.v.shape[0]

    @property
    def n(self) -> int:
        return self.v.shape[1]

    def scatter(self) -> np.ndarray:
        """M = sum_s w_s w_s^T as an n x n array."""
        return self.w.T @ self.w

    def whitened(self) -> np.ndarray:
        """M^{-1/2} w_s for each s, computed through the k x k Gram matrix."""
        gram = self.w @ self.w.T
        evals, evecs = np.linalg.eigh(gram)
        evals = np.maximum(evals, 1e-12 * evals.max())
        inv_sqrt = evecs @ np.diag(evals**-0.5) @ evecs.T
        return inv_sqrt @ self.w


def community_vectors(labels: LabelMatrix, alpha: float) -> CommunityVectors:
    v = labels.centered().T.copy()
    shift = 1.0 / (labels.k * math.sqrt(alpha + 1.0))
    return CommunityVectors(v=v, w=v + shift, alpha=alpha)


@dataclass
class WignerInstance:
    """Spiked Wigner matrix A = lambda v v^T + W."""

    A: np.ndarray
    v: np.ndarray
    lam: float

    @property
    def n(self) -> int:
        return len(self.v)


# ---------------------------------------------------------------------------
# Samplers


def sample_dirichlet(k: int, alpha: float, rng: np.random.Generator, size=None):
    """Sample from the symmetric Dirichlet with per-coordinate parameter alpha/k.

    At alpha = 0 the distribution degenerates to the uniform distribution over
    the k coordinate vectors, which is sampled explicitly.
    """
    if k < 1:
        raise ParameterError(f"need k >= 1, got {k}")
    if alpha < 0:
        raise ParameterError(f"need alpha >= 0, got {alpha}")
    squeeze = size is None
    m = 1 if squeeze else int(size)
    if k == 1:
        out = np.ones((m, 1))
    elif alpha == 0:
        idx = rng.integers(k, size=m)
        out = np.zeros((m, k))
        out[np.arange(m), idx] = 1.0
    else:
        out = rng.dirichlet(np.full(k, alpha / k), size=m)
        # Gamma sampling can underflow for small alpha/k; resample bad rows.
        bad = ~np.isfinite(out).all(axis=1) | (out.sum(axis=1) < 0.5)
        while bad.any():
            out[bad] = rng.dirichlet(np.full(k, alpha / k), size=int(bad.sum()))
            bad = ~np.isfinite(out).all(axis=1) | (out.sum(axis=1) < 0.5)
    return out[0] if squeeze else out


def sample_mixed_membership(
    params: SbmParams, rng: np.random.Generator
) -> tuple[Graph, LabelMatrix]:
    """Sample (graph, labels) from the mixed-membership block model.

    Labels are iid Dirichlet rows; each pair {i,j} is an edge independently
    with probability d/n * (1 + (<sigma_i, sigma_j> - 1/k) eps).
    """
    n, k = params.n, params.k
    sigma = sample_dirichlet(k, params.alpha, rng, size=n)
    base = params.d / n
    edges = []
    # Row blocks keep the n^2 probability matrix out of memory for large n.
    block = max(1, int(4e6 // max(n, 1)))
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        probs = base * (1.0 + (sigma[lo:hi] @ sigma.T - 1.0 / k) * params.eps)
        upper = np.triu(np.ones((hi - lo, n), dtype=bool), k=lo + 1)
        u = rng.random((hi - lo, n))
        hit = upper & (u < probs)
        r, c = np.nonzero(hit)
        if len(r):
            edges.append(np.stack([r + lo, c], axis=1))
    edge_arr = np.concatenate(edges) if edges else np.empty((0, 2), dtype=np.int64)
    return Graph(n, edge_arr), LabelMatrix(sigma)


def sample_two_community(
    n: int, d: float, eps: float, rng: np.random.Generator
) -> tuple[Graph, np.ndarray]:
    """Two-community model in the +-eps convention: y uniform in {+-1}^n and
    each pair {i,j} an edge with probability (1 + eps y_i y_j) d/n.

    This is the k=2 disjoint model with bias eps = eps_mm / 2 relative to the
    mixed-membership parametrization; its threshold reads eps^2 d = 1.
    """
    if not 0 <= eps <= 1:
        raise ParameterError(f"need eps in [0, 1], got {eps}")
    if not 0 < d < n or (1 + eps) * d / n > 1:
        raise ParameterError("edge probability out of [0, 1]")
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    base = d / n
    probs = base * (1.0 + eps * np.outer(y, y))
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    hit = upper & (rng.random((n, n)) < probs)
    r, c = np.nonzero(hit)
    return Graph(n, np.stack([r, c], axis=1)), y


def sample_spiked_wigner(n: int, lam: float, rng: np.random.Generator) -> WignerInstance:
    """A = lam v v^T + W with W_ij ~ N(0, 1/n) symmetric and v ~ N(0, Id/n)."""
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    if lam < 0:
        raise ParameterError(f"need lambda >= 0, got {lam}")
    scale = 1.0 / math.sqrt(n)
    W = rng.normal(scale=scale, size=(n, n))
    W = np.triu(W, 1)
    W = W + W.T + np.diag(rng.normal(scale=scale, size=n))
    v = rng.normal(scale=scale, size=n)
    return WignerInstance(A=lam * np.outer(v, v) + W, v=v, lam=lam)


# ---------------------------------------------------------------------------
# Correlation metric


def corr(sigma: LabelMatrix, tau: LabelMatrix) -> float:
    """max_pi (1/n) sum_i <sigma_i, Pi tau_i> - 1/k over community permutations.

    The maximum over k x k permutation matrices is computed exactly by
    optimal assignment on the profit matrix B[s, t] = (1/n) sum_i
    sigma_i(s) tau_i(t).
    """
    if sigma.n != tau.n or sigma.k != tau.k:
        raise ParameterError(
            f"shape mismatch: {sigma.rows.shape} vs {tau.rows.shape}"
        )
    profit = sigma.rows.T @ tau.rows / sigma.n
    rows, cols = linear_sum_assignment(profit, maximize=True)
    return float(profit[rows, cols].sum() - 1.0 / sigma.k)


# ---------------------------------------------------------------------------
# Dirichlet moments
#
# Raw moments of the symmetric Dirichlet with per-coordinate parameter a come
# from the Gamma-function identity
#     E prod_j sigma_j^{gamma_j}
#       = Gamma(k a) / Gamma(k a + |gamma|) * prod_j Gamma(a + gamma_j) / Gamma(a).
# Our models use a = alpha/k, which makes the centered covariance equal to
# Pi / (k (alpha+1)) with Pi the projector orthogonal to the all-ones vector.
# The constants below are derived numerically from this identity once per
# (k, alpha) and cached.


def dirichlet_raw_moment(gamma: tuple[int, ...], k: int, alpha: float) -> float:
    """E prod_j sigma_j^{gamma_j} for the per-coordinate-alpha/k Dirichlet."""
    gamma = tuple(int(g) for g in gamma)
    if len(gamma) > k:
        raise ParameterError("more exponents than coordinates")
    if any(g < 0 for g in gamma):
        raise ParameterError("exponents must be nonnegative")
    total = sum(gamma)
    if total == 0:
        return 1.0
    support = sum(1 for g in gamma if g > 0)
    if alpha == 0:
        # Uniform over coordinate vectors: only single-coordinate monomials survive.
        return 1.0 / k if support == 1 else 0.0
    a = alpha / k
    log_val = gammaln(k * a) - gammaln(k * a + total)
    for g in gamma:
        if g > 0:
            log_val += gammaln(a + g) - gammaln(a)
    return float(math.exp(log_val))


@functools.lru_cache(maxsize=128)
def dirichlet_central_tensor(k: int, alpha: float, order: int) -> np.ndarray:
    """E (sigma - 1/k)^{tensor order} as a dense k^order array (cached)."""
    if order < 1 or order > 4:
        raise ParameterError("order must be in 1..4")
    shape = (k,) * order
    out = np.zeros(shape)
    raw_cache: dict[tuple[int, ...], float] = {}

    def raw(counts: tuple[int, ...]) -> float:
        if counts not in raw_cache:
            raw_cache[counts] = dirichlet_raw_moment(counts, k, alpha)
        return raw_cache[counts]

    for idx in np.ndindex(*shape):
        total = 0.0
        # E prod_t (sigma_{idx_t} - 1/k), by expanding over subsets of slots.
        for mask in range(1 << order):
            counts = [0] * k
            bits = 0
            for t in range(order):
                if mask >> t & 1:
                    counts[idx[t]] += 1
                    bits += 1
            total += (-1.0 / k) ** (order - bits) * raw(tuple(counts))
        out[idx] = total
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class DirichletConstants:
    """Contraction constants of centered Dirichlet moments.

    For centered directions x_i (sum of coordinates zero):
      E <s~,x1><s~,x2>               = C2 <x1,x2>
      E <s~,x1><s~,x2><s~,x3>        = C3 sum_s x1(s) x2(s) x3(s)
      E <s~,x1>...<s~,x4>            = C4 sum_s prod x_i(s)
                                       + D4 (<x1,x2><x3,x4> + 2 perms)
    """

    C2: float
    C3: float
    C4: float
    D4: float


@functools.lru_cache(maxsize=128)
def dirichlet_constants(k: int, alpha: float) -> DirichletConstants:
    c2 = 1.0 / (k * (alpha + 1.0))
    if k == 1:
        return DirichletConstants(C2=0.0, C3=0.0, C4=0.0, D4=0.0)
    t3 = dirichlet_central_tensor(k, alpha, 3)
    t4 = dirichlet_central_tensor(k, alpha, 4)
    rng = np.random.default_rng(7)

    def centered(m):
        x = rng.normal(size=(m, k))
        return x - x.mean(axis=1, keepdims=True)

    # C3 from a single generic contraction. For k = 2 both sides vanish on
    # centered inputs, so any value works; use 0.
    xs = centered(3)
    lhs3 = np.einsum("stu,s,t,u->", t3, xs[0], xs[1], xs[2])
    basis3 = np.einsum("s,s,s->", xs[0], xs[1], xs[2])
    c3 = float(lhs3 / basis3) if abs(basis3) > 1e-9 else 0.0

    # C4, D4 by least squares over generic contractions. For k <= 3 the two
    # invariants are linearly dependent on centered inputs (the coordinate
    # 4-sum equals 1/6 of the pair-dot sum identically), so the split is
    # pinned at D4 = 0, which is exact and keeps downstream estimators from
    # dividing by an arbitrarily small C4.
    rows = []
    vals = []
    for _ in range(12):
        x = centered(4)
        a4 = np.einsum("s,s,s,s->", x[0], x[1], x[2], x[3])
        pairs = (
            x[0] @ x[1] * (x[2] @ x[3])
            + x[0] @ x[2] * (x[1] @ x[3])
            + x[0] @ x[3] * (x[1] @ x[2])
        )
        rows.append([a4, pairs] if k >= 4 else [a4])
        vals.append(np.einsum("stuv,s,t,u,v->", t4, x[0], x[1], x[2], x[3]))
    coef, resid, *_ = np.linalg.lstsq(np.array(rows), np.array(vals), rcond=None)
    d4 = float(coef[1]) if k >= 4 else 0.0
    return DirichletConstants(C2=c2, C3=c3, C4=float(coef[0]), D4=d4)


def expected_v_entry_sq(k: int, alpha: float) -> float:
    """E v_s(i)^2 = C2 (1 - 1/k)."""
    return dirichlet_constants(k, alpha).C2 * (1.0 - 1.0 / k)


def expected_w_entry_sq(k: int, alpha: float) -> float:
    """E w_s(i)^2 = 1 / (k (alpha+1))."""
    return 1.0 / (k * (alpha + 1.0))


# ---------------------------------------------------------------------------
# File formats: edge list ("n m" then "u v" per line) and label CSV.


def write_edge_list(graph: Graph, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{graph.n} {graph.m}\n")
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


def read_edge_list(path) -> Graph:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParameterError("edge list header must be 'n m'")
        n, m = int(header[0]), int(header[1])
        edges = np.loadtxt(fh, dtype=np.int64, ndmin=2) if m else np.empty((0, 2))
    if len(edges) != m:
        raise ParameterError(f"expected {m} edges, found {len(edges)}")
    return Graph(n, edges)


def write_labels(labels: LabelMatrix, path) -> None:
    np.savetxt(path, labels.rows, delimiter=",", fmt="%.12g")


def read_labels(path) -> LabelMatrix:
    return LabelMatrix(np.loadtxt(path, delimiter=",", ndmin=2))
