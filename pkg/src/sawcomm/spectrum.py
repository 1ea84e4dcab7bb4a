"""Low-degree Fourier mass of the block-model likelihood ratio.

The relative density of the k-community block model with respect to the
Erdos-Renyi base measure G(n, d/n) has Fourier coefficients, in the d/n-biased
character basis chi_alpha = prod_{e in alpha} (x_e - p)/sqrt(p(1-p)), equal to
E_SBM chi_alpha. Coefficients of shapes with a degree-one vertex vanish, and
shapes that are unions of cycles carry the leading mass: the per-length cycle
sum grows or decays geometrically with ratio eps^2 d / k^2, which is the
threshold diagnosis this module exposes. Everything here is exact small-n /
small-shape computation; asymptotic claims are reported as finite-n trends
only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import GuardError, ParameterError
from .model import SbmParams

__all__ = [
    "ShapeGraph",
    "biased_character",
    "mu_hat",
    "cycle_mu_hat",
    "low_degree_norm_bruteforce",
    "cycle_sum_contribution",
]

_LABEL_GUARD = 2 * 10**6
_SUBSET_GUARD = 10**7


@dataclass(frozen=True)
class ShapeGraph:
    """A small edge set on labeled vertices, considered as a graph."""

    edges: tuple[tuple[int, int], ...]

    @classmethod
    def from_edges(cls, edges) -> "ShapeGraph":
        canon = tuple(sorted((min(u, v), max(u, v)) for u, v in edges))
        if len(set(canon)) != len(canon):
            raise ParameterError("duplicate edges in shape")
        if any(u == v for u, v in canon):
            raise ParameterError("self-loop in shape")
        return cls(edges=canon)

    @classmethod
    def cycle(cls, t: int, offset: int = 0) -> "ShapeGraph":
        if t < 3:
            raise ParameterError("cycles need length >= 3")
        return cls.from_edges(
            [(offset + i, offset + (i + 1) % t) for i in range(t)]
        )

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def vertices(self) -> tuple[int, ...]:
        return tuple(sorted({v for e in self.edges for v in e}))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices())

    def degrees(self) -> dict[int, int]:
        deg: dict[int, int] = {}
        for u, v in self.edges:
            deg[u] = deg.get(u, 0) + 1
            deg[v] = deg.get(v, 0) + 1
        return deg

    def has_degree_one_vertex(self) -> bool:
        return any(d == 1 for d in self.degrees().values())

    def n_components(self) -> int:
        verts = list(self.vertices())
        parent = {v: v for v in verts}

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for u, v in self.edges:
            parent[find(u)] = find(v)
        return len({find(v) for v in verts})


def _char_scale(p: float) -> float:
    return 1.0 / math.sqrt(p * (1 - p))


def biased_character(graph_edges, shape: ShapeGraph, p: float) -> float:
    """chi_alpha(G) = prod_{e in alpha} (x_e - p) / sqrt(p (1-p)).

    graph_edges is any container answering `in` for sorted vertex pairs.
    The characters are orthonormal under G(n, p).
    """
    if not 0 < p < 1:
        raise ParameterError("need 0 < p < 1")
    val = 1.0
    s = _char_scale(p)
    for u, v in shape.edges:
        x = 1.0 if (u, v) in graph_edges else 0.0
        val *= (x - p) * s
    return val


def mu_hat(shape: ShapeGraph, params: SbmParams) -> float:
    """Exact Fourier coefficient E_SBM chi_alpha for the hard-label model.

    Sums over all k^V label assignments of prod_e (eps p <s~_a, s~_b>) scaled
    by the character normalization, where <s~_a, s~_b> = 1{z_a = z_b} - 1/k.
    """
    if shape.n_edges == 0:
        return 1.0
    verts = shape.vertices()
    k = params.k
    if k**len(verts) > _LABEL_GUARD:
        raise GuardError(f"label sum k^{len(verts)} exceeds guard")
    p = params.d / params.n
    pos = {v: i for i, v in enumerate(verts)}
    total = 0.0
    for labels in itertools.product(range(k), repeat=len(verts)):
        prod = 1.0
        for u, v in shape.edges:
            prod *= (1.0 if labels[pos[u]] == labels[pos[v]] else 0.0) - 1.0 / k
        total += prod
    mean = total / k ** len(verts)
    return (params.eps * p * _char_scale(p)) ** shape.n_edges * mean


def cycle_mu_hat(t: int, params: SbmParams) -> float:
    """mu_hat of a t-cycle in closed form.

    The label sum telescopes to Tr((Pi/k)^t) = (k-1)/k^t with Pi the centered
    projector, so mu_hat = (eps p / sqrt(p(1-p)))^t (k-1)/k^t.
    """
    if t < 3:
        raise ParameterError("cycles need length >= 3")
    p = params.d / params.n
    k = params.k
    return (params.eps * p * _char_scale(p)) ** t * (k - 1) / k**t


def low_degree_norm_bruteforce(params: SbmParams, max_deg: int) -> float:
    """||mu^{<= max_deg}||^2 = sum over all edge subsets of size <= max_deg of
    mu_hat^2, by exhaustive enumeration (tiny n only)."""
    n = params.n
    pairs = list(itertools.combinations(range(n), 2))
    count = sum(math.comb(len(pairs), r) for r in range(max_deg + 1))
    if count > _SUBSET_GUARD:
        raise GuardError(f"{count} subsets exceeds enumeration guard")
    total = 1.0  # empty character
    for r in range(1, max_deg + 1):
        for combo in itertools.combinations(pairs, r):
            shape = ShapeGraph.from_edges(combo)
            if shape.has_degree_one_vertex():
                continue  # coefficient vanishes
            total += mu_hat(shape, params) ** 2
    return total


def cycle_sum_contribution(params: SbmParams, max_len: int) -> list[dict]:
    """Per-length cycle contributions to the low-degree Fourier mass.

    For each t: term = (#t-cycles on n vertices) * mu_hat(t-cycle)^2, with
    #t-cycles = n!/((n-t)! 2t). Reports term, cumulative sum, and the ratio
    term_{t}/term_{t-1}, whose limit eps^2 d / k^2 crosses 1 exactly at the
    threshold.
    """
    if max_len < 3:
        raise ParameterError("need max_len >= 3")
    rows = []
    cumulative = 0.0
    prev = None
    for t in range(3, max_len + 1):
        count = 1.0
        for i in range(t):
            count *= params.n - i
        count /= 2 * t
        term = count * cycle_mu_hat(t, params) ** 2
        cumulative += term
        rows.append(
            {
                "t": t,
                "term": term,
                "cumulative": cumulative,
                "ratio": term / prev if prev else float("nan"),
            }
        )
        prev = term
    return rows
