"""End-to-end recovery algorithms and the experiment harness.

recover_two_communities: SAW matrix estimate -> minimum-norm correlation-
preserving projection onto {PSD, unit diagonal, correlated halfspace} ->
hyperplane rounding.

recover_matrix_mm: SAW matrix estimate -> random unit vector in the top
eigenspace (the k-dependent warm path).

recover_mixed_membership: holdout split, then branch on the distance delta to
the threshold: tiny delta runs the warm path plus holdout gating and a
single-vector cleanup; small/large delta estimate the 3-armed-star tensor,
reduce to the top eigenspace of the pair estimate (degree-4 solves cap at 24
dimensions), lift 3-tensors to 4-tensors, run the low-correlation
decomposition with the holdout statistic as its oracle, fix signs, and clean
up to probability vectors.

Every pipeline is a pure function of (inputs, seed); stage failures degrade
to uniform/random outputs rather than raising.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import projection as prj
from . import rounding, sawpoly, tensordecomp, xvalid
from .errors import GuardError, InfeasibleError, ParameterError
from .model import (
    Graph,
    LabelMatrix,
    SbmParams,
    community_vectors,
    corr,
    dirichlet_constants,
    sample_mixed_membership,
    sample_spiked_wigner,
    sample_two_community,
)

log = logging.getLogger(__name__)

__all__ = [
    "PipelineKnobs",
    "recover_two_communities",
    "recover_matrix_mm",
    "recover_mixed_membership",
    "wigner_demo",
    "experiment",
]


@dataclass(frozen=True)
class PipelineKnobs:
    """Tunable constants the source material leaves unspecified."""

    ell: int | None = None  # SAW length (default: the log-ratio recipe)
    palette: int | None = None  # colors for path shapes (default 8 capped)
    n_colorings: int | None = None
    star_ell: int = 2
    star_palette: int | None = None
    star_colorings: int | None = None
    eta: float = 0.1  # holdout fraction
    delta_prime: float | None = None  # correlation level for the projection
    proj_tol: float = 1e-6
    proj_max_iter: int = 40
    top_r: int | None = None  # spectral rounding dimension
    reduce_dim: int | None = None  # tensor-stage dimension, min(24, 4k)
    theta: float = 0.25  # holdout oracle threshold on the normalized scale
    branch_c: float = 0.1  # large-delta branch: delta >= 1 - c
    branch_big_c: float = 3.0  # tiny-delta branch: delta <= k^(-1/branch_big_c)
    lift_delta: float | None = None
    decomp_delta: float | None = None
    decomp_top_dim: int = 2
    contractions: int = 30
    rounds: int | None = None
    dtype: type = np.float64
    wigner_probes: int = 12


def _default_knobs_for_size(n: int, knobs: PipelineKnobs) -> PipelineKnobs:
    # float32 states once the DP tables get large
    if n >= 600 and knobs.dtype is np.float64:
        knobs = replace(knobs, dtype=np.float32)
    return knobs


def _path_palette(ell: int, knobs: PipelineKnobs) -> int:
    if knobs.palette is not None:
        return knobs.palette
    # the full 2(ell+1) default is fine for small shapes; cap at 8 to keep
    # the subset DP's memory within desk scale for long paths
    return min(sawpoly.default_palette(ell + 1), 8)


def _path_colorings(ell: int, palette: int, knobs: PipelineKnobs) -> int:
    if knobs.n_colorings is not None:
        return knobs.n_colorings
    # enough colorings to keep the coloring-noise variance inflation
    # 1 + (1/p - 1)/m modest; the sawpoly-default 25/p is far more than the
    # separation experiments need
    p = sawpoly.rainbow_probability(ell + 1, palette)
    return int(np.clip(math.ceil(1.5 / p), 12, 36))


def _star_colorings(ell: int, palette: int, knobs: PipelineKnobs) -> int:
    if knobs.star_colorings is not None:
        return knobs.star_colorings
    p = sawpoly.rainbow_probability(3 * ell + 1, palette)
    return int(np.clip(math.ceil(2.5 / p), 15, 36))


# ---------------------------------------------------------------------------
# Two communities (Algorithm with +-eps convention, threshold eps^2 d = 1)


def recover_two_communities(
    graph: Graph,
    d: float,
    eps: float,
    knobs: PipelineKnobs = PipelineKnobs(),
    rng: np.random.Generator | None = None,
    return_estimate: bool = False,
):
    """SAW estimate, correlation-preserving projection, hyperplane rounding.

    Returns a +-1 labeling (and optionally the SAW matrix estimate). On
    projection failure the labeling is uniformly random.
    """
    rng = rng or np.random.default_rng()
    n = graph.n
    knobs = _default_knobs_for_size(n, knobs)
    delta = 1.0 - 1.0 / max(eps**2 * d, 1e-9)
    ell = knobs.ell or sawpoly.default_ell(n, eps, d)
    palette = _path_palette(ell, knobs)
    n_col = _path_colorings(ell, palette, knobs)
    weights = sawpoly.centered_edge_weights(graph, d)
    P = sawpoly.saw_matrix_estimate(
        weights, ell, palette=palette, n_colorings=n_col, rng=rng, dtype=knobs.dtype
    )
    P = (P + P.T) / 2
    p_norm = np.linalg.norm(P)
    labels = rng.choice([-1.0, 1.0], size=n)
    if p_norm == 0:
        return (labels, P) if return_estimate else labels
    delta_prime = (
        knobs.delta_prime if knobs.delta_prime is not None else max(0.05, 0.6 * delta)
    )
    sets = [
        prj.Halfspace(P, delta_prime * p_norm * n),
        prj.diag_equals(n, 1.0),
        prj.PsdCone(dtype=knobs.dtype),
    ]
    res = prj.min_norm_in_intersection(
        sets, (n, n), tol=knobs.proj_tol, max_iter=knobs.proj_max_iter,
        scale=float(n), check_every=knobs.proj_max_iter,
    )
    if res.residual > 0.05 * n:
        log.warning("two-community projection infeasible; random labels")
        return (labels, P) if return_estimate else labels
    Y = _polish_correlation_matrix(res.point)
    labels = rounding.hyperplane_round(Y, rng)
    return (labels, P) if return_estimate else labels


def _polish_correlation_matrix(Y: np.ndarray) -> np.ndarray:
    """Nearest PSD pass then exact unit diagonal (keeps PSD)."""
    Y = prj.project_psd(Y)
    dd = np.sqrt(np.clip(np.diag(Y), 1e-12, None))
    Y = Y / np.outer(dd, dd)
    np.fill_diagonal(Y, 1.0)
    return Y


# ---------------------------------------------------------------------------
# Matrix estimation warm path for the mixed-membership model


def saw_pair_estimate(
    graph: Graph, params: SbmParams, ell: int, knobs: PipelineKnobs,
    rng: np.random.Generator,
) -> np.ndarray:
    """SAW matrix estimate rescaled to covariance units: the output's (i, j)
    entry concentrates on <s~_i, s~_j> = sum_s v_s(i) v_s(j)."""
    palette = _path_palette(ell, knobs)
    n_col = _path_colorings(ell, palette, knobs)
    weights = sawpoly.centered_edge_weights(graph, params.d * graph.n / params.n)
    P = sawpoly.saw_matrix_estimate(
        weights, ell, palette=palette, n_colorings=n_col, rng=rng, dtype=knobs.dtype
    )
    c2 = dirichlet_constants(params.k, params.alpha).C2
    rate = params.eps * params.d / params.n
    scale = sawpoly.saw_path_count(graph.n, ell) * rate**ell * c2 ** (ell - 1)
    return (P + P.T) / (2 * scale)


def recover_matrix_mm(
    graph: Graph,
    params: SbmParams,
    knobs: PipelineKnobs = PipelineKnobs(),
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Warm path: random unit vector in the top eigenspace of the pair
    estimate; correlates with some centered community vector."""
    rng = rng or np.random.default_rng()
    knobs = _default_knobs_for_size(graph.n, knobs)
    delta = max(params.delta(), 0.05)
    ell = knobs.ell or sawpoly.default_ell(
        graph.n, params.eps, params.d * graph.n / params.n,
        k=params.k, alpha=params.alpha,
    )
    # the mm recipe divides the rate by k^2 (alpha+1)^2
    rate = params.eps**2 * params.d / (params.k**2 * (params.alpha + 1) ** 2)
    if knobs.ell is None:
        ell = 3 if rate <= 1.05 else int(np.clip(
            math.ceil(math.log(graph.n) / math.log(rate)), 3, 6
        ))
    P = saw_pair_estimate(graph, params, ell, knobs, rng)
    top_r = knobs.top_r or int(np.clip(math.ceil((params.k / delta) ** 2), 1, 50))
    return rounding.spectral_round(P, top_r, rng)


# ---------------------------------------------------------------------------
# Mixed-membership recovery (branching main algorithm)


def _check_eta(params: SbmParams, eta: float) -> None:
    delta = params.delta()
    lhs = 1.0 - params.k**2 * (params.alpha + 1) ** 2 / (
        params.eps**2 * params.d * (1 - eta)
    )
    if lhs < delta**2 - 1e-12 and delta > 0:
        raise ParameterError(
            f"holdout fraction eta={eta} too large: {lhs:.3f} < delta^2 = {delta**2:.3f}"
        )


def _uniform_labels(n: int, k: int) -> LabelMatrix:
    return LabelMatrix(np.full((n, k), 1.0 / k))


def recover_mixed_membership(
    graph: Graph,
    params: SbmParams,
    knobs: PipelineKnobs = PipelineKnobs(),
    rng: np.random.Generator | None = None,
) -> LabelMatrix:
    """Main mixed-membership algorithm: holdout split plus delta-dependent
    branch (tiny: warm path + gating; small/large: tensor pipeline)."""
    rng = rng or np.random.default_rng()
    knobs = _default_knobs_for_size(graph.n, knobs)
    _check_eta(params, knobs.eta)
    k = params.k
    try:
        split, induced, rest = xvalid.holdout_split(graph, knobs.eta, rng, params)
    except ParameterError:
        log.warning("degenerate holdout; uniform labels")
        return _uniform_labels(graph.n, k)
    n0 = induced.n
    params0 = SbmParams(
        n=n0, d=params.d * (1 - knobs.eta), eps=params.eps, k=k, alpha=params.alpha
    )
    delta = params.delta()
    tiny_cut = k ** (-1.0 / knobs.branch_big_c)
    threshold = knobs.theta

    try:
        if delta <= tiny_cut:
            tau0 = _tiny_delta_branch(
                induced, params0, split, threshold, knobs, rng
            )
        else:
            tau0 = _tensor_branch(
                induced, params0, split, delta, threshold, knobs, rng
            )
    except (InfeasibleError, GuardError, ParameterError) as exc:
        log.warning("mixed-membership stage failed (%s); uniform labels", exc)
        return _uniform_labels(graph.n, k)
    rows = np.full((graph.n, k), 1.0 / k)
    rows[rest] = tau0.rows
    return LabelMatrix(rows)


def _tiny_delta_branch(induced, params0, split, threshold, knobs, rng):
    k = params0.k
    x = recover_matrix_mm(induced, params0, knobs, rng)
    if xvalid.s4(split, x) < threshold:
        return _uniform_labels(induced.n, k)
    x = rounding.fix_sign(x, xvalid.s3(split, x))
    X = np.zeros((induced.n, k))
    X[:, 0] = x
    return rounding.cleanup_to_simplex(
        X, k, params0.alpha, delta=0.3, rng=rng
    )


def _tensor_branch(induced, params0, split, delta, threshold, knobs, rng):
    k = params0.k
    alpha = params0.alpha
    n0 = induced.n
    cst = dirichlet_constants(k, alpha)

    # pair stage: covariance-unit estimate of sum_s v_s v_s^T
    rate = params0.eps**2 * params0.d / (k**2 * (alpha + 1) ** 2)
    ell = knobs.ell or (3 if rate <= 1.05 else int(np.clip(
        math.ceil(math.log(n0) / math.log(rate)), 3, 6)))
    pair = saw_pair_estimate(induced, params0, ell, knobs, rng)
    shift_c = 1.0 / (k * math.sqrt(alpha + 1.0))
    west = pair + k * shift_c**2
    west[np.diag_indices(n0)] += 1.0 / (alpha + 1.0)  # expected scatter diagonal
    r = knobs.reduce_dim or min(24, 4 * k)
    evals, evecs = np.linalg.eigh((west + west.T) / 2)
    U = evecs[:, -r:]

    # star stage in the reduced coordinates
    s_ell = knobs.star_ell
    s_palette = knobs.star_palette or min(
        sawpoly.default_palette(3 * s_ell + 1), 14
    )
    s_col = _star_colorings(s_ell, s_palette, knobs)
    weights = sawpoly.centered_edge_weights(induced, params0.d)
    star_red = sawpoly.star_tensor_estimate(
        weights, s_ell, palette=s_palette, n_colorings=s_col, rng=rng,
        basis=U, dtype=knobs.dtype,
    )
    edge_rate = params0.eps * params0.d / n0
    star_scale = (
        sawpoly.star_count(n0, s_ell)
        * edge_rate ** (3 * s_ell)
        * cst.C2 ** (3 * (s_ell - 1))
        * cst.C3
    )
    if star_scale == 0:
        raise InfeasibleError("degenerate star normalization (k = 2?)")
    star_red /= star_scale
    pair_red = U.T @ pair @ U
    ones_red = U.T @ np.ones(n0)
    B3 = sawpoly.build_w_tensor(star_red, pair_red, k, alpha, ones=ones_red)

    # scale-free from here: lift normalizes internally
    lift_delta = knobs.lift_delta if knobs.lift_delta is not None else min(
        0.5, max(0.15, 0.4 * delta)
    )
    T4 = tensordecomp.lift_3_to_4(B3, k, lift_delta)

    def oracle(x_red: np.ndarray) -> bool:
        x_full = U @ x_red
        nrm = np.linalg.norm(x_full)
        if nrm == 0:
            return False
        return xvalid.s4_w(split, x_full / nrm) >= threshold

    decomp_delta = knobs.decomp_delta if knobs.decomp_delta is not None else min(
        0.5, max(0.2, 0.5 * delta)
    )
    cfg = tensordecomp.DecompositionConfig(
        m=k,
        delta=decomp_delta,
        rounds=knobs.rounds or 2 * k,
        contractions=knobs.contractions,
        oracle=oracle,
        top_dim=knobs.decomp_top_dim,
        rng=rng,
    )
    bs = tensordecomp.decompose(T4, cfg)

    # back to graph coordinates; gate and fix signs via the holdout statistics
    X = np.zeros((n0, k))
    for t, b in enumerate(bs):
        x = U @ b
        nrm = np.linalg.norm(x)
        x = x / nrm if nrm > 0 else x
        if nrm == 0 or xvalid.s4_w(split, x) < threshold:
            x = rng.normal(size=n0)
            x /= np.linalg.norm(x)
        else:
            x = rounding.fix_sign(x, xvalid.s3_w(split, x))
        X[:, t] = x
    return rounding.cleanup_to_simplex(
        X, k, alpha, delta=min(0.95, max(0.2, delta)), rng=rng
    )


# ---------------------------------------------------------------------------
# Spiked Wigner demo


def wigner_demo(
    n: int,
    lam: float,
    ell: int,
    knobs: PipelineKnobs = PipelineKnobs(),
    rng: np.random.Generator | None = None,
    return_matrix: bool = False,
):
    """Sample a spiked Wigner instance, evaluate the SAW estimator with raw
    matrix-entry weights, and report the normalized correlation
    Tr f(A) vv^T / (||f(A)||_F ||vv^T||_F) against the planted spike.

    ||f||_F is estimated by Hutchinson probes so large instances never
    materialize the n x n estimate; pass return_matrix=True (small n) to also
    get the dense estimate scaled by n^{ell-1}/lam^ell.
    """
    rng = rng or np.random.default_rng()
    inst = sample_spiked_wigner(n, lam, rng)
    weights = sawpoly.wigner_weights(inst.A)
    palette = _path_palette(ell, knobs)
    n_col = _path_colorings(ell, palette, knobs)
    vhat = inst.v / np.linalg.norm(inst.v)
    probes = np.column_stack(
        [vhat] + [rng.normal(size=n) for _ in range(knobs.wigner_probes)]
    )
    applied = sawpoly.saw_matrix_apply(
        weights, ell, probes, palette=palette, n_colorings=n_col, rng=rng,
        dtype=knobs.dtype if n >= 400 else np.float64,
    )
    quad = float(vhat @ applied[:, 0])
    frob_sq = float(np.mean((applied[:, 1:] ** 2).sum(axis=0)))
    report = {
        "lambda": lam,
        "n": n,
        "ell": ell,
        "quad_form": quad,
        "frob_estimate": math.sqrt(max(frob_sq, 1e-300)),
        "correlation": quad / math.sqrt(max(frob_sq, 1e-300)),
    }
    if not return_matrix:
        return None, report
    est = sawpoly.saw_matrix_estimate(
        weights, ell, palette=palette, n_colorings=n_col, rng=rng
    )
    count = sawpoly.saw_path_count(n, ell)
    est *= n ** (ell - 1) / max(lam, 1e-12) ** ell / count
    return est, report


# ---------------------------------------------------------------------------
# Experiment harness


def _experiment_trial(task: dict) -> dict:
    t0 = time.perf_counter()
    algorithm = task["algorithm"]
    rng = np.random.default_rng(task["seed"])
    knobs = task.get("knobs") or PipelineKnobs()
    row = {key: task.get(key, "") for key in (
        "trial", "algorithm", "n", "d", "eps", "k", "alpha", "ell"
    )}
    row["seed"] = task["seed"]
    try:
        if algorithm == "recover2":
            n, d, eps = int(task["n"]), float(task["d"]), float(task["eps"])
            if task.get("ell"):
                knobs = replace(knobs, ell=int(task["ell"]))
            graph, y = sample_two_community(n, d, eps, rng)
            yhat = recover_two_communities(graph, d, eps, knobs, rng)
            row["delta"] = 1 - 1 / (eps**2 * d)
            row["metric_name"] = "overlap_sq"
            row["metric_value"] = float(yhat @ y) ** 2 / n**2
        elif algorithm in ("recover-mm", "recover-matrix"):
            params = SbmParams(
                n=int(task["n"]), d=float(task["d"]), eps=float(task["eps"]),
                k=int(task["k"]), alpha=float(task.get("alpha", 0.0)),
            )
            if task.get("ell"):
                knobs = replace(knobs, ell=int(task["ell"]))
            graph, labels = sample_mixed_membership(params, rng)
            row["delta"] = params.delta()
            if algorithm == "recover-mm":
                tau = recover_mixed_membership(graph, params, knobs, rng)
                row["metric_name"] = "corr"
                row["metric_value"] = corr(labels, tau)
            else:
                x = recover_matrix_mm(graph, params, knobs, rng)
                cv = community_vectors(labels, params.alpha)
                row["metric_name"] = "max_component_sq"
                row["metric_value"] = max(
                    float(x @ v) ** 2 / float(v @ v) for v in cv.v
                )
        elif algorithm == "wigner":
            ell = int(task.get("ell") or 6)
            lam = float(task["eps"])  # reuse the eps column for lambda
            _, report = wigner_demo(int(task["n"]), lam, ell, knobs, rng)
            row["delta"] = lam - 1
            row["ell"] = ell
            row["metric_name"] = "correlation"
            row["metric_value"] = report["correlation"]
        else:
            raise ParameterError(f"unknown algorithm {algorithm!r}")
        row["status"] = "ok"
    except (ParameterError, GuardError, InfeasibleError) as exc:
        row["status"] = f"error:{type(exc).__name__}"
        row["metric_name"] = row.get("metric_name", "")
        row["metric_value"] = ""
    row["runtime_ms"] = round(1000 * (time.perf_counter() - t0), 3)
    return row


CSV_COLUMNS = [
    "trial", "algorithm", "n", "d", "eps", "k", "alpha", "ell", "delta",
    "metric_name", "metric_value", "seed", "runtime_ms", "status",
]


def experiment(config: dict, knobs: PipelineKnobs = PipelineKnobs()) -> list[dict]:
    """Sweep a parameter grid, run trials with derived seeds, return CSV rows.

    config keys: algorithm (str), trials (int), seed (int), threads (int),
    and per-parameter lists n, d, eps, k, alpha, ell (scalars allowed).
    Per-row failures are recorded in the status column; the run continues.
    """
    algorithm = config.get("algorithm", "recover2")
    trials = int(config.get("trials", 1))
    seed = int(config.get("seed", 0))
    threads = int(config.get("threads", 1))

    def as_list(key, default):
        val = config.get(key, default)
        if isinstance(val, (list, tuple)):
            return list(val)
        return [val]

    grid = []
    for n in as_list("n", 200):
        for d in as_list("d", 4.0):
            for eps in as_list("eps", 1.0):
                for k in as_list("k", 2):
                    for alpha in as_list("alpha", 0.0):
                        for ell in as_list("ell", None):
                            grid.append(
                                dict(n=n, d=d, eps=eps, k=k, alpha=alpha, ell=ell)
                            )
    tasks = []
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(grid) * trials)
    idx = 0
    for point in grid:
        for t in range(trials):
            task = dict(point)
            task["algorithm"] = algorithm
            task["trial"] = t
            task["seed"] = int(children[idx].generate_state(1)[0])
            task["knobs"] = knobs
            tasks.append(task)
            idx += 1
    if threads > 1:
        import multiprocessing as mp

        with mp.Pool(threads) as pool:
            rows = pool.map(_experiment_trial, tasks)
    else:
        rows = [_experiment_trial(t) for t in tasks]
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row.get(c, "")) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"
