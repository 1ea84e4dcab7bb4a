"""Low-correlation orthogonal tensor decomposition via degree-4 pseudoexpectations.

A degree-4 pseudoexpectation is represented by its moment matrix over the
monomials {1} u {x_i} u {x_i x_j, i <= j}. Off-diagonal pair monomials carry a
sqrt(2) basis scaling, which makes the flattened n^2 x n^2 view of the fourth
moments an isometric image of the pair block; operator-norm and Frobenius
constraints on that view then project exactly in the global metric.

The Frobenius-minimal pseudoexpectation correlated with an input 4-tensor is
found by Dykstra's algorithm (module projection does the same for plain
matrices) cycling through: alias consistency (entries agreeing across
monomial aliases, pE[1] = 1, optional sphere equalities), the PSD cone of the
moment matrix, trace/localization halfspaces for ||x||^2 <= 1, operator-norm
balls on pE xx^T and on the n^2 x n^2 view, the correlation halfspace, and
conjugation by the lifted projector for deflation constraints <x, v_r> = 0.

Components are then recovered by Gaussian contractions M = pE <g,x>^2 xx^T:
with inverse-polynomial probability the random g aligns with a component a_i
well enough that the top eigenspace of M leans toward a_i, and an oracle
(cross-validation in the block-model pipeline) filters the candidate vectors.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GuardError, InfeasibleError, ParameterError

log = logging.getLogger(__name__)

__all__ = [
    "PseudoExpectation4",
    "DecompositionConfig",
    "MomentIndex",
    "solve_pseudoexpectation",
    "gaussian_contract",
    "decompose",
    "lift_3_to_4",
    "tensor_oracle",
]

MAX_DIM = 24  # moment matrix 325 x 325, flattened view 576 x 576


# ---------------------------------------------------------------------------
# Monomial bookkeeping


class MomentIndex:
    """Index maps and alias classes of the degree-<=2 monomial basis."""

    _cache: dict[int, "MomentIndex"] = {}

    def __new__(cls, n: int):
        if n in cls._cache:
            return cls._cache[n]
        self = super().__new__(cls)
        self._build(n)
        cls._cache[n] = self
        return self

    def _build(self, n: int):
        self.n = n
        pairs = [(i, j) for i in range(n) for j in range(i, n)]
        self.pairs = pairs
        self.pair_pos = {p: idx for idx, p in enumerate(pairs)}
        self.dim = 1 + n + len(pairs)
        # basis scaling: sqrt(2) for off-diagonal pair monomials
        scale = np.ones(self.dim)
        for idx, (i, j) in enumerate(pairs):
            if i != j:
                scale[1 + n + idx] = math.sqrt(2.0)
        self.scale = scale
        # monomial exponent of each basis element, as a sorted tuple of vars
        basis_vars = [()] + [(i,) for i in range(n)] + [tuple(p) for p in pairs]
        self.basis_vars = basis_vars
        # class id per moment-matrix entry (the monomial of the product)
        D = self.dim
        class_of: dict[tuple, int] = {}
        ids = np.empty((D, D), dtype=np.int64)
        for a in range(D):
            for b in range(D):
                key = tuple(sorted(basis_vars[a] + basis_vars[b]))
                ids[a, b] = class_of.setdefault(key, len(class_of))
        self.class_ids = ids
        self.n_classes = len(class_of)
        self.class_of = class_of
        # outer products of basis scalings: entry value = coeff * moment
        self.coeff = np.outer(scale, scale)
        self.coeff_sq_sums = np.bincount(
            ids.ravel(), weights=(self.coeff**2).ravel(), minlength=self.n_classes
        )
        # flattening helpers: map (i, j) -> pair index, and canonical flat index
        pair_of = np.empty((n, n), dtype=np.int64)
        for p, (i, j) in enumerate(pairs):
            pair_of[i, j] = pair_of[j, i] = p
        self.pair_of_flat = pair_of.ravel()  # n^2 -> pair index
        self.pair_scale = scale[1 + n:]
        self.canon_flat = np.array([i * n + j for (i, j) in pairs])

    def moments_from_matrix(self, M: np.ndarray) -> np.ndarray:
        """Weighted-average moment value per monomial class."""
        num = np.bincount(
            self.class_ids.ravel(),
            weights=(self.coeff * M).ravel(),
            minlength=self.n_classes,
        )
        return num / self.coeff_sq_sums

    def matrix_from_moments(self, mu: np.ndarray) -> np.ndarray:
        return self.coeff * mu[self.class_ids]

    def pair_block(self, M: np.ndarray) -> np.ndarray:
        off = 1 + self.n
        return M[off:, off:]

    def expand_pairs(self, block: np.ndarray) -> np.ndarray:
        """Isometric map from the scaled pair block to the n^2 x n^2 view."""
        sym = (block + block.T) / 2
        big = sym[np.ix_(self.pair_of_flat, self.pair_of_flat)]
        w = self.pair_scale[self.pair_of_flat]
        return big / np.outer(w, w)

    def compress_pairs(self, big: np.ndarray) -> np.ndarray:
        """Inverse of expand_pairs on index-symmetric matrices."""
        sub = big[np.ix_(self.canon_flat, self.canon_flat)]
        return sub * np.outer(self.pair_scale, self.pair_scale)


# ---------------------------------------------------------------------------
# Pseudoexpectation container


@dataclass
class PseudoExpectation4:
    """Degree-4 pseudomoment state over R^n, stored as a moment matrix."""

    n: int
    M: np.ndarray  # dim x dim, in the scaled basis

    def __post_init__(self):
        self.idx = MomentIndex(self.n)

    def _moments(self) -> np.ndarray:
        return self.idx.moments_from_matrix(self.M)

    def m2(self) -> np.ndarray:
        """pE xx^T."""
        return self.M[1:1 + self.n, 1:1 + self.n].copy()

    def t3(self) -> np.ndarray:
        n = self.n
        sym = (self.M + self.M.T) / 2
        blk = sym[1:1 + n, 1 + n:]  # x_i rows vs pair columns, scaled
        blk = blk / self.idx.pair_scale
        return blk[:, self.idx.pair_of_flat].reshape(n, n, n)

    def t4(self) -> np.ndarray:
        big = self.flat4()
        n = self.n
        return big.reshape(n, n, n, n)

    def flat4(self) -> np.ndarray:
        """pE xx^T (x) xx^T as an n^2 x n^2 matrix."""
        return self.idx.expand_pairs(self.idx.pair_block(self.M))

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh((self.M + self.M.T) / 2)[0])

    def consistency_gap(self) -> float:
        mu = self._moments()
        return float(np.abs(self.M - self.idx.matrix_from_moments(mu)).max())


# ---------------------------------------------------------------------------
# Dykstra primitives on the moment matrix


class _Consistency:
    """Affine set: aliases agree, pE[1] = 1, optional sphere equalities
    sum_i pE[x_a x_i^2] = pE[x_a] for monomials of degree <= 2 (||x||^2 = 1).

    Projection happens in class space with the alias multiplicity weights, so
    it is the exact Euclidean projection in the moment-matrix metric.
    """

    def __init__(self, idx: MomentIndex, sphere: bool = False):
        self.idx = idx
        self.sphere = sphere
        self._one = idx.class_of[()]
        if sphere:
            rows = []
            rhs = []
            for base in idx.basis_vars:
                row = np.zeros(idx.n_classes)
                for i in range(idx.n):
                    row[idx.class_of[tuple(sorted(base + (i, i)))]] += 1.0
                row[idx.class_of[base]] -= 1.0
                rows.append(row)
                rhs.append(0.0)
            # pE[1] = 1 folded into the same system
            row = np.zeros(idx.n_classes)
            row[self._one] = 1.0
            rows.append(row)
            rhs.append(1.0)
            A = np.array(rows)
            Winv = 1.0 / idx.coeff_sq_sums
            G = (A * Winv) @ A.T
            self._A = A
            self._rhs = np.array(rhs)
            self._Winv = Winv
            self._Ginv = np.linalg.pinv(G)

    def project(self, M):
        mu = self.idx.moments_from_matrix(M)
        if self.sphere:
            resid = self._A @ mu - self._rhs
            mu = mu - self._Winv * (self._A.T @ (self._Ginv @ resid))
        else:
            mu[self._one] = 1.0
        return self.idx.matrix_from_moments(mu)


class _PsdMoment:
    def project(self, M):
        S = (M + M.T) / 2
        evals, evecs = np.linalg.eigh(S)
        if evals[0] >= 0:
            return S
        return (evecs * np.clip(evals, 0, None)) @ evecs.T


class _M2OpNorm:
    def __init__(self, idx: MomentIndex, radius: float):
        self.idx = idx
        self.radius = radius

    def project(self, M):
        n = self.idx.n
        out = M.copy()
        blk = (M[1:1 + n, 1:1 + n] + M[1:1 + n, 1:1 + n].T) / 2
        evals, evecs = np.linalg.eigh(blk)
        if abs(evals[0]) > self.radius or abs(evals[-1]) > self.radius:
            blk = (evecs * np.clip(evals, -self.radius, self.radius)) @ evecs.T
        out[1:1 + n, 1:1 + n] = blk
        return out


class _Flat4OpNorm:
    def __init__(self, idx: MomentIndex, radius: float):
        self.idx = idx
        self.radius = radius

    def project(self, M):
        out = M.copy()
        big = self.idx.expand_pairs(self.idx.pair_block(M))
        evals, evecs = np.linalg.eigh((big + big.T) / 2)
        if abs(evals[0]) <= self.radius and abs(evals[-1]) <= self.radius:
            return out
        big = (evecs * np.clip(evals, -self.radius, self.radius)) @ evecs.T
        off = 1 + self.idx.n
        out[off:, off:] = self.idx.compress_pairs(big)
        return out


class _Flat4FrobBall:
    def __init__(self, idx: MomentIndex, radius: float):
        self.idx = idx
        self.radius = radius

    def project(self, M):
        off = 1 + self.idx.n
        out = M.copy()
        blk = out[off:, off:]
        nrm = np.linalg.norm(blk)
        if nrm > self.radius:
            out[off:, off:] = blk * (self.radius / nrm)
        return out


class _TraceHalfspaces:
    """pE ||x||^2 <= 1 and pE ||x||^4 <= pE ||x||^2 (localization surrogates)."""

    def __init__(self, idx: MomentIndex):
        n = idx.n
        g1 = np.zeros((idx.dim, idx.dim))
        g1[1:1 + n, 1:1 + n] = np.eye(n)
        self.h1 = g1  # <h1, M> = pE ||x||^2
        g2 = np.zeros((idx.dim, idx.dim))
        for i in range(n):
            pi = 1 + n + idx.pair_pos[(i, i)]
            for j in range(n):
                pj = 1 + n + idx.pair_pos[(j, j)]
                g2[pi, pj] = 1.0
        self.h2 = g2  # <h2, M> = pE ||x||^4 (on diagonal-pair entries)
        self._n1 = float((g1**2).sum())
        self._diff = g1 - g2
        self._nd = float((self._diff**2).sum())

    def project(self, M):
        out = M
        v1 = float((self.h1 * out).sum())
        if v1 > 1.0:
            out = out - ((v1 - 1.0) / self._n1) * self.h1
        gap = float((self._diff * out).sum())
        if gap < 0:
            out = out - (gap / self._nd) * self._diff
        return out if out is not M else M.copy()


class _Deflation:
    """Conjugation by the lifted projector orthogonal to given vectors."""

    def __init__(self, idx: MomentIndex, vs: np.ndarray):
        n = idx.n
        P = np.eye(n) - vs.T @ vs  # vs: (r, n) orthonormal rows
        L = np.zeros((idx.dim, idx.dim))
        L[0, 0] = 1.0
        L[1:1 + n, 1:1 + n] = P
        # lifted action on scaled pair coordinates via the co-isometry U
        npairs = len(idx.pairs)
        U = np.zeros((npairs, n * n))
        for p, (i, j) in enumerate(idx.pairs):
            s = idx.scale[1 + n + p]
            U[p, i * n + j] += 1.0 / s
            if i != j:
                U[p, j * n + i] += 1.0 / s
        PP = np.kron(P, P)
        L[1 + n:, 1 + n:] = U @ PP @ U.T
        self.L = L

    def project(self, M):
        return self.L @ M @ self.L


class _CorrelationHalfspace:
    def __init__(self, grad: np.ndarray, bound: float):
        self.grad = grad
        self.bound = bound
        self._nsq = float((grad**2).sum())

    def project(self, M):
        gap = self.bound - float((self.grad * M).sum())
        if gap <= 0:
            return M.copy()
        return M + (gap / self._nsq) * self.grad


def _grad_from_tensor4(idx: MomentIndex, B: np.ndarray) -> np.ndarray:
    """Moment-matrix gradient of M -> <B, pE x^(x)4>(M)."""
    n = idx.n
    Bs = _symmetrize4(B)
    G = np.zeros((idx.dim, idx.dim))
    off = 1 + n
    for a, (i, j) in enumerate(idx.pairs):
        mult_a = 1.0 if i == j else 2.0
        sa = idx.scale[off + a]
        for b, (k, l) in enumerate(idx.pairs):
            mult_b = 1.0 if k == l else 2.0
            sb = idx.scale[off + b]
            G[off + a, off + b] = Bs[i, j, k, l] * mult_a * mult_b / (sa * sb)
    return (G + G.T) / 2


def _grad_from_tensor3(idx: MomentIndex, B3: np.ndarray) -> np.ndarray:
    n = idx.n
    B3s = _symmetrize3(B3)
    G = np.zeros((idx.dim, idx.dim))
    off = 1 + n
    for i in range(n):
        for b, (k, l) in enumerate(idx.pairs):
            mult = 1.0 if k == l else 2.0
            G[1 + i, off + b] = B3s[i, k, l] * mult / idx.scale[off + b]
    return (G + G.T) / 2


def _symmetrize4(B: np.ndarray) -> np.ndarray:
    out = np.zeros_like(B)
    for perm in itertools.permutations(range(4)):
        out += B.transpose(perm)
    return out / 24.0


def _symmetrize3(B: np.ndarray) -> np.ndarray:
    out = np.zeros_like(B)
    for perm in itertools.permutations(range(3)):
        out += B.transpose(perm)
    return out / 6.0


# ---------------------------------------------------------------------------
# Solvers


def _run_dykstra(sets, dim, tol, max_iter, start=None):
    x = np.zeros((dim, dim)) if start is None else start.copy()
    corrections = [np.zeros((dim, dim)) for _ in sets]
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        for i, cset in enumerate(sets):
            y = cset.project(x + corrections[i])
            corrections[i] = x + corrections[i] - y
            x = y
        if it % 25 == 0 or it == max_iter:
            resid = max(
                float(np.linalg.norm(x - c.project(x))) for c in sets
            )
            if resid <= tol:
                return x, it, resid, True
            history.append(resid)
            if len(history) >= 8 and history[-1] > history[-8] * 0.995:
                break
    resid = max(float(np.linalg.norm(x - c.project(x))) for c in sets)
    return x, it, resid, resid <= tol


def solve_pseudoexpectation(
    B: np.ndarray,
    m: int,
    delta: float,
    deflation_vs: np.ndarray | None = None,
    tol: float = 1e-6,
    max_iter: int = 4000,
) -> PseudoExpectation4:
    """Frobenius-minimal degree-4 pseudoexpectation with entropy constraints:

        pE satisfies {||x||^2 <= 1, <x, v_r> = 0},
        <pE x^(x)4, B/||B||> >= delta/(2m),
        ||pE xx^T||_op <= 1/m,  ||pE xx^T (x) xx^T||_op <= 1/m.

    Raises InfeasibleError when Dykstra stalls well above tolerance (callers
    fall back to random output vectors).
    """
    B = np.asarray(B, dtype=np.float64)
    n = B.shape[0]
    if B.shape != (n, n, n, n):
        raise ParameterError("B must be an n^4 tensor")
    if n > MAX_DIM:
        raise GuardError(f"degree-4 solves are capped at n = {MAX_DIM}")
    if m < 1 or not 0 < delta <= 1:
        raise ParameterError("need m >= 1 and delta in (0, 1]")
    Bs = _symmetrize4(B)
    nrm = np.linalg.norm(Bs)
    if nrm == 0:
        raise ParameterError("zero tensor has no correlated pseudoexpectation")
    idx = MomentIndex(n)
    sets = [
        _Consistency(idx),
        _PsdMoment(),
        _TraceHalfspaces(idx),
        _M2OpNorm(idx, 1.0 / m),
        _Flat4OpNorm(idx, 1.0 / m),
        _CorrelationHalfspace(
            _grad_from_tensor4(idx, Bs / nrm), delta / (2 * m)
        ),
    ]
    if deflation_vs is not None and len(deflation_vs):
        vs = _orthonormalize(np.atleast_2d(np.asarray(deflation_vs, dtype=np.float64)))
        if len(vs):
            sets.append(_Deflation(idx, vs))
    M, it, resid, ok = _run_dykstra(sets, idx.dim, tol, max_iter)
    if not ok and resid > max(1000 * tol, 5e-3):
        raise InfeasibleError(
            f"pseudoexpectation solve stalled at residual {resid:.3g} after {it} iters"
        )
    # final polish: exact alias consistency, so all views are exactly symmetric
    M = sets[0].project(M)
    pe = PseudoExpectation4(n=n, M=M)
    pe.residual = resid
    pe.iterations = it
    return pe


def _orthonormalize(vs: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    out = []
    for v in vs:
        w = v.astype(np.float64).copy()
        for u in out:
            w -= (w @ u) * u
        nrm = np.linalg.norm(w)
        if nrm > tol:
            out.append(w / nrm)
    return np.array(out) if out else np.empty((0, vs.shape[1]))


def gaussian_contract(pe: PseudoExpectation4, rng: np.random.Generator) -> np.ndarray:
    """M = pE <g,x>^2 xx^T for g ~ N(0, Id)."""
    g = rng.normal(size=pe.n)
    big = pe.flat4().reshape(pe.n, pe.n, pe.n, pe.n)
    return np.einsum("ijkl,i,j->kl", big, g, g)


def tensor_oracle(B: np.ndarray, threshold: float):
    """Oracle surrogate evaluating the input tensor at v^(x)4.

    Usable when the error tensor has small injective norm; the block-model
    pipeline uses the holdout-validation statistic instead.
    """
    B = np.asarray(B, dtype=np.float64)

    def oracle(v: np.ndarray) -> bool:
        val = np.einsum("ijkl,i,j,k,l->", B, v, v, v, v)
        return bool(val >= threshold)

    return oracle


@dataclass
class DecompositionConfig:
    m: int
    delta: float
    rounds: int | None = None
    contractions: int = 50
    oracle: object = None  # callable unit vector -> bool
    tol: float = 1e-6
    max_iter: int = 4000
    top_dim: int | None = None
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def resolved_rounds(self) -> int:
        return self.rounds if self.rounds is not None else self.m

    def resolved_top_dim(self, n: int) -> int:
        if self.top_dim is not None:
            return max(1, min(self.top_dim, n))
        return max(1, min(math.ceil(32.0 / self.delta**2), n))


def decompose(B: np.ndarray, config: DecompositionConfig) -> np.ndarray:
    """Recover orthonormal vectors correlated with the components of an
    orthogonal 4-tensor that B is delta-correlated with.

    Per round: solve the entropy-constrained pseudoexpectation (deflating the
    vectors already kept), draw Gaussian contractions, sample a random unit
    vector in the top eigenspace of each, and keep the first vector the
    oracle accepts. Failed rounds are skipped; if nothing is ever accepted
    the output is random orthonormal vectors. Always returns exactly m
    orthonormal vectors as the rows of an (m, n) array.
    """
    B = np.asarray(B, dtype=np.float64)
    n = B.shape[0]
    cfg = config
    rng = cfg.rng
    oracle = cfg.oracle
    if oracle is None:
        # surrogate: correlation of the candidate's 4th power with B itself
        oracle = tensor_oracle(
            B / np.linalg.norm(B), 0.25 * cfg.delta / math.sqrt(cfg.m)
        )
    kept: list[np.ndarray] = []
    top_dim = cfg.resolved_top_dim(n)
    pe = None
    pe_deflation = -1  # number of kept vectors the cached solve used
    for rnd in range(cfg.resolved_rounds()):
        if len(kept) >= cfg.m:
            break
        if pe is None or pe_deflation != len(kept):
            try:
                pe = solve_pseudoexpectation(
                    B,
                    cfg.m,
                    cfg.delta,
                    deflation_vs=np.array(kept) if kept else None,
                    tol=cfg.tol,
                    max_iter=cfg.max_iter,
                )
                pe_deflation = len(kept)
            except InfeasibleError as exc:
                log.warning("decompose round %d: %s", rnd, exc)
                break
        accepted = None
        for _ in range(cfg.contractions):
            M = gaussian_contract(pe, rng)
            evals, evecs = np.linalg.eigh((M + M.T) / 2)
            basis = evecs[:, -top_dim:]
            cand = basis @ rng.normal(size=basis.shape[1])
            for u in kept:
                cand = cand - (cand @ u) * u
            nrm = np.linalg.norm(cand)
            if nrm < 1e-8:
                continue
            cand /= nrm
            if oracle(cand):
                accepted = cand
                break
        if accepted is None:
            log.info("decompose round %d: no oracle acceptance", rnd)
            continue
        kept.append(accepted)
    return _pad_orthonormal(kept, cfg.m, n, rng)


def _pad_orthonormal(kept: list, m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    out = list(kept[:m])
    attempts = 0
    while len(out) < m and attempts < 50 * m:
        attempts += 1
        v = rng.normal(size=n)
        for u in out:
            v -= (v @ u) * u
        nrm = np.linalg.norm(v)
        if nrm > 1e-6:
            out.append(v / nrm)
    vs = np.array(out)
    # final Gram-Schmidt pass to enforce orthonormality to 1e-8
    return _orthonormalize(vs) if len(vs) else vs


def lift_3_to_4(
    B3: np.ndarray,
    m: int,
    delta: float,
    tol: float = 1e-6,
    max_iter: int = 4000,
    large_delta_cutoff: float = 0.99,
) -> np.ndarray:
    """Lift a 3-tensor correlated with sum_i a_i^(x)3 to a 4-tensor correlated
    with sum_i a_i^(x)4: minimize the pseudoexpectation norm subject to
    {||x||^2 = 1}, <pE x^(x)3, B3> >= delta ||B3|| / sqrt(m) and
    ||pE x^(x)4||_F <= 1/sqrt(m); return m * pE x^(x)4.

    In the large-delta regime the program degenerates to projecting the
    (normalized) input onto the same constraint set.
    """
    B3 = np.asarray(B3, dtype=np.float64)
    n = B3.shape[0]
    if B3.shape != (n, n, n):
        raise ParameterError("B3 must be an n^3 tensor")
    if n > MAX_DIM:
        raise GuardError(f"degree-4 solves are capped at n = {MAX_DIM}")
    B3s = _symmetrize3(B3)
    nrm = np.linalg.norm(B3s)
    if nrm == 0:
        raise InfeasibleError("zero tensor: correlation constraint infeasible")
    idx = MomentIndex(n)
    sets = [
        _Consistency(idx, sphere=True),
        _PsdMoment(),
        _Flat4FrobBall(idx, 1.0 / math.sqrt(m)),
        _CorrelationHalfspace(
            _grad_from_tensor3(idx, B3s / nrm), delta / math.sqrt(m)
        ),
    ]
    start = None
    if delta >= large_delta_cutoff:
        g3 = _grad_from_tensor3(idx, B3s / nrm)
        start = g3 / max(np.linalg.norm(g3), 1e-12) * (1.0 / math.sqrt(m))
    M, it, resid, ok = _run_dykstra(sets, idx.dim, tol, max_iter, start=start)
    if not ok and resid > max(1000 * tol, 5e-3):
        raise InfeasibleError(
            f"3-to-4 lift stalled at residual {resid:.3g} after {it} iters"
        )
    M = sets[0].project(M)
    pe = PseudoExpectation4(n=n, M=M)
    return m * pe.t4()
