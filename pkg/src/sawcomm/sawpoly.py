"""Self-avoiding-walk matrix polynomials and 3-armed-star tensors.

The estimators sum, over all self-avoiding paths (or 3-armed stars) in the
complete graph, the product of edge weights along the shape. Exact sums are
exponential in the path length, so they are evaluated by color coding: assign
each vertex a uniformly random color from a palette of size L, count only
shapes whose vertices receive pairwise-distinct colors (a subset dynamic
program does this in poly(n) 2^L time), reweight by the inverse probability
that a fixed vertex set is rainbow, and average over colorings. The average
over all colorings equals the exact sum, for every input.

The module is generic over the edge-weight rule; centered edge indicators
x_ab - d/n (block models) and raw matrix entries (spiked Wigner) are the two
instances used by the pipelines.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import GuardError, ParameterError
from .model import Graph

__all__ = [
    "EdgeWeights",
    "centered_edge_weights",
    "wigner_weights",
    "rainbow_probability",
    "default_palette",
    "default_n_colorings",
    "default_ell",
    "saw_matrix_bruteforce",
    "star_tensor_bruteforce",
    "colorful_path_eval",
    "saw_matrix_estimate",
    "saw_matrix_apply",
    "star_tensor_estimate",
    "build_w_tensor",
    "saw_path_count",
    "star_count",
]

_ENUM_GUARD = 10**7


# ---------------------------------------------------------------------------
# Edge weights


@dataclass
class EdgeWeights:
    """Symmetric pair-weight rule, internally rescaled by `scale`.

    sparse kind: w(a,b) = offset + bump * [ab is an edge]   (a != b)
    dense kind:  w(a,b) = dense[a, b]                       (a != b)

    The DP runs on scale * w to keep float magnitudes near 1; results are
    divided by scale**n_edges at the end.
    """

    n: int
    kind: str  # "sparse" | "dense"
    scale: float
    offset: float = 0.0  # scaled
    bump: float = 0.0  # scaled
    edges: np.ndarray | None = None
    dense: np.ndarray | None = None  # scaled, zero diagonal

    def pair_weight(self, a: int, b: int) -> float:
        """Unscaled weight of the unordered pair {a, b}."""
        if a == b:
            raise ParameterError("pair weight needs distinct endpoints")
        if self.kind == "dense":
            return float(self.dense[a, b]) / self.scale
        w = self.offset
        if self._edge_set() and (min(a, b), max(a, b)) in self._edge_set():
            w += self.bump
        return w / self.scale

    def scaled_dense(self) -> np.ndarray:
        """Full scaled weight matrix with zero diagonal (small n only)."""
        if self.kind == "dense":
            return self.dense
        W = np.full((self.n, self.n), self.offset)
        if self.edges is not None and len(self.edges):
            u, v = self.edges[:, 0], self.edges[:, 1]
            W[u, v] += self.bump
            W[v, u] += self.bump
        np.fill_diagonal(W, 0.0)
        return W

    def _edge_set(self):
        if not hasattr(self, "_eset"):
            self._eset = (
                {(int(a), int(b)) for a, b in self.edges}
                if self.edges is not None
                else set()
            )
        return self._eset


def centered_edge_weights(graph: Graph, d: float) -> EdgeWeights:
    """w(a, b) = x_ab - d/n for the observed graph x."""
    n = graph.n
    scale = n / d
    return EdgeWeights(
        n=n,
        kind="sparse",
        scale=scale,
        offset=-d / n * scale,
        bump=1.0 * scale,
        edges=graph.edges,
    )


def wigner_weights(A: np.ndarray) -> EdgeWeights:
    """w(a, b) = A_ab for a symmetric observation matrix."""
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    scale = math.sqrt(n)
    W = A * scale
    W = (W + W.T) / 2
    np.fill_diagonal(W, 0.0)
    return EdgeWeights(n=n, kind="dense", scale=scale, dense=W)


# ---------------------------------------------------------------------------
# Coloring bookkeeping


def rainbow_probability(n_vertices: int, palette: int) -> float:
    """Probability that n_vertices fixed vertices get distinct colors."""
    if palette < n_vertices:
        return 0.0
    logp = (
        math.lgamma(palette + 1)
        - math.lgamma(palette - n_vertices + 1)
        - n_vertices * math.log(palette)
    )
    return math.exp(logp)


def default_palette(n_shape_vertices: int) -> int:
    return 2 * n_shape_vertices


def default_n_colorings(n_shape_vertices: int, palette: int) -> int:
    p = rainbow_probability(n_shape_vertices, palette)
    if p == 0:
        raise ParameterError(
            f"palette {palette} too small for shapes on {n_shape_vertices} vertices"
        )
    return math.ceil(25.0 / p)


def default_ell(n: int, eps: float, d: float, k: int = 2, alpha: float = 0.0,
                eta: float = 0.0) -> int:
    """Default path length: log n / log((1-eta) eps^2 d), clamped to [3, 8].

    The growth rate eps^2 d is the per-step signal-to-noise ratio of the
    centered edge estimators; lengths past log n / log(rate) stop helping.
    """
    rate = (1 - eta) * eps**2 * d
    if rate <= 1.05:
        return 3
    return int(np.clip(math.ceil(math.log(n) / math.log(rate)), 3, 8))


class _ColorLayout:
    """Per-coloring index structures for the subset DP."""

    def __init__(self, colors: np.ndarray, palette: int, weights: EdgeWeights):
        self.colors = np.asarray(colors)
        self.L = palette
        self.classes = [np.flatnonzero(colors == g) for g in range(palette)]
        self.sizes = np.array([len(c) for c in self.classes])
        pos = np.empty(len(colors), dtype=np.int64)
        for cls in self.classes:
            pos[cls] = np.arange(len(cls))
        self.pos = pos
        # directed edges keyed by (source color, target color); positions are
        # within the respective color classes
        self.edge_cu = self.edge_cv = None
        if weights.kind == "sparse" and weights.edges is not None and len(weights.edges):
            e = weights.edges
            u = np.concatenate([e[:, 0], e[:, 1]])
            v = np.concatenate([e[:, 1], e[:, 0]])
            cu, cv = self.colors[u], self.colors[v]
            order = np.lexsort((self.pos[v], cv, cu))
            self.edge_cu = cu[order].astype(np.int64)
            self.edge_cv = cv[order].astype(np.int64)
            self.edge_upos = self.pos[u[order]]
            self.edge_vpos = self.pos[v[order]]

    def offsets(self, mask: int) -> tuple[list[int], dict[int, int]]:
        """Sorted colors of a subset mask and the column offset of each."""
        cols = [g for g in range(self.L) if mask >> g & 1]
        off = {}
        acc = 0
        for g in cols:
            off[g] = acc
            acc += self.sizes[g]
        return cols, off

    def width(self, mask: int) -> int:
        return int(sum(self.sizes[g] for g in range(self.L) if mask >> g & 1))

    def transfer(self, src_mask: int, bump: float, dtype):
        """Sparse transfer matrix from the compact columns of src_mask to the
        compact columns of its complement: entry (target pos, source pos) is
        `bump` for each edge crossing from a src color to a non-src color."""
        from scipy.sparse import csr_matrix

        comp_mask = _full_mask(self.L) & ~src_mask
        shape = (self.width(comp_mask), self.width(src_mask))
        if self.edge_cu is None:
            return csr_matrix(shape, dtype=dtype)
        _, comp_off = self.offsets(comp_mask)
        _, src_off = self.offsets(src_mask)
        in_src = np.zeros(self.L, dtype=bool)
        for g in src_off:
            in_src[g] = True
        sel = in_src[self.edge_cu] & ~in_src[self.edge_cv]
        src_off_arr = np.zeros(self.L, dtype=np.int64)
        comp_off_arr = np.zeros(self.L, dtype=np.int64)
        for g, o in src_off.items():
            src_off_arr[g] = o
        for g, o in comp_off.items():
            comp_off_arr[g] = o
        rows = comp_off_arr[self.edge_cv[sel]] + self.edge_vpos[sel]
        cols = src_off_arr[self.edge_cu[sel]] + self.edge_upos[sel]
        return csr_matrix(
            (np.full(len(rows), bump, dtype=dtype), (rows, cols)), shape=shape
        )


def _full_mask(L: int) -> int:
    return (1 << L) - 1


def _masks_of_size(L: int, size: int):
    for combo in itertools.combinations(range(L), size):
        m = 0
        for g in combo:
            m |= 1 << g
        yield m


def _subset_dp(weights: EdgeWeights, ell: int, layout: _ColorLayout,
               probes: np.ndarray | None, dtype) -> dict[int, np.ndarray]:
    """Run the colorful-walk DP up to walks with ell edges.

    State per color subset S: the matrix of weighted colorful-walk sums,
    stored TRANSPOSED as (compact endpoint columns of S, source rows) so that
    the sparse transfer product, the rank-one offset term, and the per-color
    block copies all touch contiguous memory. Sources are all n vertices, or
    probe combinations when `probes` is given as (n, q). Returns the final
    level keyed by subset bitmask of size ell+1.

    Each source subset is advanced by a single product with its sparse
    transfer matrix covering all target colors at once; the constant offset of
    sparse weight rules is a rank-one term applied via per-source sums.
    """
    L = layout.L
    n = weights.n
    dense = weights.dense if weights.kind == "dense" else None
    full = _full_mask(L)

    level: dict[int, np.ndarray] = {}
    for g in range(L):
        cls = layout.classes[g]
        if probes is None:
            M = np.zeros((len(cls), n), dtype=dtype)
            M[np.arange(len(cls)), cls] = 1.0
        else:
            M = np.ascontiguousarray(probes[cls].astype(dtype))
        level[1 << g] = M

    for size in range(2, ell + 2):
        nxt: dict[int, np.ndarray] = {}
        for src_mask, Mp in level.items():
            if Mp.shape[0] == 0:
                continue
            comp_mask = full & ~src_mask
            comp_cols, comp_off = layout.offsets(comp_mask)
            if dense is None:
                T = layout.transfer(src_mask, weights.bump, dtype)
                R = T @ Mp
                if weights.offset != 0.0:
                    R += weights.offset * Mp.sum(axis=0)[None, :]
            else:
                src_cols, _ = layout.offsets(src_mask)
                src = np.concatenate([layout.classes[g] for g in src_cols])
                tgt = np.concatenate(
                    [layout.classes[g] for g in comp_cols if layout.sizes[g]]
                    or [np.empty(0, dtype=np.int64)]
                )
                R = dense[np.ix_(tgt, src)].astype(dtype) @ Mp
            for gam in comp_cols:
                ng = layout.sizes[gam]
                if ng == 0:
                    continue
                tgt_mask = src_mask | (1 << gam)
                block = R[comp_off[gam]:comp_off[gam] + ng]
                tgt = nxt.get(tgt_mask)
                if tgt is None:
                    tgt = np.zeros((layout.width(tgt_mask), Mp.shape[1]), dtype=dtype)
                    nxt[tgt_mask] = tgt
                _, toff = layout.offsets(tgt_mask)
                tgt[toff[gam]:toff[gam] + ng] += block
        level = nxt
        if not level:
            break
    return level


def _uniform_coloring(n: int, palette: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(palette, size=n)


# ---------------------------------------------------------------------------
# Matrix (pairwise) estimators


def colorful_path_eval(weights: EdgeWeights, ell: int, coloring: np.ndarray,
                       palette: int, dtype=np.float64) -> np.ndarray:
    """Sum over length-ell paths with rainbow vertices, for all pairs at once,
    scaled by the inverse rainbow probability of ell+1 fixed vertices.

    Averaged over uniformly random colorings this is an unbiased estimator of
    the exact self-avoiding-walk polynomial matrix.
    """
    if palette < ell + 1:
        raise ParameterError(f"palette {palette} < {ell + 1} path vertices")
    coloring = np.asarray(coloring)
    layout = _ColorLayout(coloring, palette, weights)
    top = _subset_dp(weights, ell, layout, None, dtype)
    P = np.zeros((weights.n, weights.n))
    for mask, M in top.items():
        cols, off = layout.offsets(mask)
        for g in cols:
            cls = layout.classes[g]
            P[cls] += M[off[g]:off[g] + layout.sizes[g]]
    P = (P + P.T) / 2  # states store (endpoint, source); estimator symmetric
    P /= rainbow_probability(ell + 1, palette) * weights.scale**ell
    return P


def saw_matrix_estimate(weights: EdgeWeights, ell: int,
                        palette: int | None = None,
                        n_colorings: int | None = None,
                        rng: np.random.Generator | None = None,
                        dtype=np.float64) -> np.ndarray:
    """Average of colorful_path_eval over iid uniform colorings."""
    palette = palette or default_palette(ell + 1)
    n_colorings = n_colorings or default_n_colorings(ell + 1, palette)
    rng = rng or np.random.default_rng()
    acc = np.zeros((weights.n, weights.n))
    for sub in rng.spawn(n_colorings):
        coloring = _uniform_coloring(weights.n, palette, sub)
        acc += colorful_path_eval(weights, ell, coloring, palette, dtype)
    return acc / n_colorings


def saw_matrix_apply(weights: EdgeWeights, ell: int, probes: np.ndarray,
                     palette: int | None = None,
                     n_colorings: int | None = None,
                     rng: np.random.Generator | None = None,
                     dtype=np.float64) -> np.ndarray:
    """P_hat @ probes without materializing the n x n estimate.

    probes is (n, q); the return value is (n, q). Uses the symmetry of the
    per-coloring colorful-walk matrices.
    """
    palette = palette or default_palette(ell + 1)
    n_colorings = n_colorings or default_n_colorings(ell + 1, palette)
    rng = rng or np.random.default_rng()
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    if probes.shape[0] != weights.n:
        probes = probes.T
    n, q = probes.shape
    acc = np.zeros((q, n))
    for sub in rng.spawn(n_colorings):
        coloring = _uniform_coloring(n, palette, sub)
        layout = _ColorLayout(coloring, palette, weights)
        top = _subset_dp(weights, ell, layout, probes, dtype)
        for mask, R in top.items():
            cols, off = layout.offsets(mask)
            for g in cols:
                cls = layout.classes[g]
                acc[:, cls] += R[off[g]:off[g] + layout.sizes[g]].T
    acc /= n_colorings * rainbow_probability(ell + 1, palette) * weights.scale**ell
    return acc.T


# ---------------------------------------------------------------------------
# Star (triple) estimator


def star_tensor_estimate(weights: EdgeWeights, ell: int,
                         palette: int | None = None,
                         n_colorings: int | None = None,
                         rng: np.random.Generator | None = None,
                         basis: np.ndarray | None = None,
                         dtype=np.float64) -> np.ndarray:
    """Color-coding estimate of the 3-armed-star tensor.

    Entry (i, j, k) sums the weight products of all stars made of three
    length-ell self-avoiding arms joined at a common center and ending at the
    distinct terminals i, j, k. Entries with repeated indices are zero.

    With `basis` (n, q) the tensor is returned contracted with the basis on
    every slot, a (q, q, q) array; basis=None materializes the full tensor
    (equivalent to the identity basis; meant for small n).
    """
    palette = palette or default_palette(3 * ell + 1)
    n_colorings = n_colorings or default_n_colorings(3 * ell + 1, palette)
    rng = rng or np.random.default_rng()
    if palette < 3 * ell + 1:
        raise ParameterError(f"palette {palette} < {3 * ell + 1} star vertices")
    B = np.eye(weights.n) if basis is None else np.asarray(basis, dtype=np.float64)
    q = B.shape[1]
    acc = np.zeros((q, q, q))
    for sub in rng.spawn(n_colorings):
        coloring = _uniform_coloring(weights.n, palette, sub)
        acc += _colorful_star_eval(weights, ell, coloring, palette, B, dtype)
    acc /= n_colorings * rainbow_probability(3 * ell + 1, palette) * weights.scale ** (
        3 * ell
    )
    return acc


def _colorful_star_eval(weights: EdgeWeights, ell: int, coloring: np.ndarray,
                        palette: int, basis: np.ndarray, dtype) -> np.ndarray:
    """Unnormalized rainbow-star sum for one coloring, basis-contracted.

    Arms are colorful walks whose color sets share exactly the center color;
    the three arm color sets are combined per center class: pair products are
    accumulated by their color-set union, partial sums K[E] = sum over unions
    containing E allow the third arm's disjointness constraint to be resolved
    by inclusion-exclusion.
    """
    q = basis.shape[1]
    layout = _ColorLayout(coloring, palette, weights)
    arm_level = _subset_dp(weights, ell, layout, basis, dtype)
    out = np.zeros((q, q, q))
    for gam in range(palette):
        n_g = layout.sizes[gam]
        if n_g == 0:
            continue
        gbit = 1 << gam
        arms: dict[int, np.ndarray] = {}
        for mask, R in arm_level.items():
            if mask & gbit:
                _, off = layout.offsets(mask)
                arms[mask & ~gbit] = np.asarray(
                    R[off[gam]:off[gam] + n_g].T, dtype=np.float64
                )
        if len(arms) < 3:
            continue
        keys = list(arms)
        # pair stage: ordered disjoint pairs of arm color sets, by union
        pair_acc: dict[int, np.ndarray] = {}
        for t1, t2 in itertools.permutations(keys, 2):
            if t1 & t2:
                continue
            d = t1 | t2
            block = np.einsum("pa,qa->pqa", arms[t1], arms[t2])
            if d in pair_acc:
                pair_acc[d] += block
            else:
                pair_acc[d] = block
        if not pair_acc:
            continue
        # partial sums over supersets: K[e] = sum of pair_acc[d] over d >= e
        K: dict[int, np.ndarray] = {}
        for d, block in pair_acc.items():
            for e in _submasks_up_to(d, ell):
                if e in K:
                    K[e] += block
                else:
                    K[e] = block.copy()
        zero = np.zeros((q, q, n_g))
        for t3, A3 in arms.items():
            s = None
            for e in _submasks_up_to(t3, ell):
                term = K.get(e)
                if term is None:
                    continue
                sign = -1.0 if bin(e).count("1") % 2 else 1.0
                s = sign * term if s is None else s + sign * term
            if s is None:
                continue
            out += np.einsum("pqa,ra->pqr", s, A3)
    return out


def _submasks_up_to(mask: int, max_bits: int):
    bits = [1 << b for b in range(mask.bit_length()) if mask >> b & 1]
    for r in range(0, min(max_bits, len(bits)) + 1):
        for combo in itertools.combinations(bits, r):
            m = 0
            for b in combo:
                m |= b
            yield m


# ---------------------------------------------------------------------------
# Brute force references


def saw_matrix_bruteforce(weights: EdgeWeights, ell: int, i: int, j: int) -> float:
    """Exact sum over self-avoiding length-ell paths from i to j of weight
    products; O(n^(ell-1)) enumeration behind a guard."""
    n = weights.n
    if i == j:
        raise ParameterError("endpoints must be distinct")
    if ell < 1:
        raise ParameterError("ell must be >= 1")
    if n ** max(ell - 1, 0) > _ENUM_GUARD:
        raise GuardError(f"n^(ell-1) = {n**(ell - 1)} exceeds enumeration guard")
    W = weights.scaled_dense()
    total = 0.0

    def extend(last: int, used: set, depth: int, value: float):
        nonlocal total
        if depth == ell - 1:
            total += value * W[last, j]
            return
        for v in range(n):
            if v != j and v not in used:
                extend(v, used | {v}, depth + 1, value * W[last, v])

    extend(i, {i, j}, 0, 1.0)
    return total / weights.scale**ell


def star_tensor_bruteforce(weights: EdgeWeights, ell: int, i: int, j: int,
                           k: int) -> float:
    """Exact sum over 3-armed stars with arm length ell and terminals i, j, k."""
    if len({i, j, k}) < 3:
        return 0.0
    n = weights.n
    free = 3 * (ell - 1) + 1
    if n**free > _ENUM_GUARD:
        raise GuardError(f"n^{free} exceeds enumeration guard")
    W = weights.scaled_dense()
    total = 0.0
    terminals = (i, j, k)

    def arm_sums(center: int, start: int, used: frozenset):
        """Yield (weight product, used set) over self-avoiding length-ell
        walks start -> center avoiding `used`."""
        if ell == 1:
            yield W[start, center], used
            return
        stack = [(start, used, 1.0, 0)]
        while stack:
            last, u, val, depth = stack.pop()
            if depth == ell - 1:
                yield val * W[last, center], u
                continue
            for v in range(n):
                if v != center and v not in u:
                    stack.append((v, u | {v}, val * W[last, v], depth + 1))

    for center in range(n):
        if center in terminals:
            continue
        base = frozenset(terminals) | {center}
        for w1, u1 in arm_sums(center, i, base):
            for w2, u2 in arm_sums(center, j, u1):
                for w3, _ in arm_sums(center, k, u2):
                    total += w1 * w2 * w3
    return total / weights.scale ** (3 * ell)


def saw_path_count(n: int, ell: int) -> int:
    """Number of self-avoiding length-ell paths between two fixed vertices."""
    count = 1
    for t in range(ell - 1):
        count *= n - 2 - t
    return count


def star_count(n: int, ell: int) -> int:
    """Number of 3-armed stars with fixed distinct terminals."""
    count = n - 3
    for t in range(3 * (ell - 1)):
        count *= n - 4 - t
    return count


# ---------------------------------------------------------------------------
# Combining pair and triple estimates into the shifted-tensor estimate


def build_w_tensor(star_est: np.ndarray, pair_est: np.ndarray, k: int,
                   alpha: float, ones: np.ndarray | None = None,
                   shift: float | None = None) -> np.ndarray:
    """Estimator of sum_s w_s^{x3} from estimators of sum_s v_s^{x3} (star_est)
    and sum_s v_s v_s^T (pair_est), using w_s = v_s + c * 1 with
    c = 1/(k sqrt(alpha+1)):

        sum_s w^{x3} = sum_s v^{x3} + c * sym(pair x 1) + k c^3 1^{x3},

    the cross terms linear in v vanishing because sum_s v_s = 0. `ones` is
    the all-ones vector expressed in the working coordinates (defaults to the
    ambient all-ones vector).
    """
    star_est = np.asarray(star_est, dtype=np.float64)
    pair_est = np.asarray(pair_est, dtype=np.float64)
    m = star_est.shape[0]
    if star_est.shape != (m, m, m) or pair_est.shape != (m, m):
        raise ParameterError("shape mismatch between star and pair estimates")
    one = np.ones(m) if ones is None else np.asarray(ones, dtype=np.float64)
    c = 1.0 / (k * math.sqrt(alpha + 1.0)) if shift is None else float(shift)
    out = star_est.copy()
    if c != 0.0:
        out += c * (
            np.einsum("ij,l->ijl", pair_est, one)
            + np.einsum("il,j->ijl", pair_est, one)
            + np.einsum("jl,i->ijl", pair_est, one)
        )
        out += k * c**3 * np.einsum("i,j,l->ijl", one, one, one)
    return out
