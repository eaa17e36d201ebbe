"""Capacity computation for jammed state-dependent channels.

Discrete case: the max-min program
    C = max_{P(u|s), x(u,s)}  min_{Q(j|s)}  I(U;Y) - I(U;S),
with the auxiliary symbol acting through a deterministic strategy x(u,s) and
the jammer choosing a memoryless conditional law Q.  The inner problem is
convex in Q (the U->Y channel is affine in Q and the U-marginal is fixed), so
it is solved with Frank-Wolfe over the product of per-state simplices with
exact line search.  The outer problem is non-concave; it is attacked by
enumerating strategies, multi-start projected gradient ascent on P(u|s), and
an optional dense-grid sweep that certifies small instances.

Gaussian case: closed form 0.5*log2(1 + P/(Lambda + sigma^2)), independent of
the state variance.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import xlogy

from .errors import (
    DegenerateChannel,
    DimensionMismatch,
    NonConvergence,
    ProblemTooLarge,
)
from .probability import ConditionalKernel, Distribution

LOG2 = math.log(2)
# floor for log-ratios at empty cells; keeps Frank-Wolfe directions finite
_LOG_FLOOR = -100.0


# ---------------------------------------------------------------------------
# problem instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GpChannelSpec:
    """Discrete instance: channel table W[y | x, s, j] and state law P_S."""

    w: ConditionalKernel  # table shape (|X|, |S|, |J|, |Y|)
    p_s: Distribution

    def __post_init__(self):
        if self.w.t.ndim != 4:
            raise DimensionMismatch("W must be indexed by (x, s, j) -> y")
        if self.p_s.p.ndim != 1 or self.p_s.size != self.n_states:
            raise DimensionMismatch("P_S size differs from the state axis of W")
        if np.any(self.p_s.p <= 0):
            raise DegenerateChannel("every state needs positive probability")

    @property
    def n_inputs(self) -> int:
        return self.w.t.shape[0]

    @property
    def n_states(self) -> int:
        return self.w.t.shape[1]

    @property
    def n_jam(self) -> int:
        return self.w.t.shape[2]

    @property
    def n_outputs(self) -> int:
        return self.w.t.shape[3]


@dataclass(frozen=True)
class ShannonStrategy:
    """Deterministic input map x = table[u, s]."""

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.int64)
        object.__setattr__(self, "table", t)
        if t.ndim != 2:
            raise DimensionMismatch("strategy table must be (|U|, |S|)")

    @property
    def n_aux(self) -> int:
        return self.table.shape[0]


@dataclass(frozen=True)
class DpChannelSpec:
    """Gaussian instance: powers and variances (P, Lambda, sigma^2, sigma_S^2)."""

    p: float
    lam: float
    sigma2: float
    sigma_s2: float

    def __post_init__(self):
        for name in ("p", "lam", "sigma2", "sigma_s2"):
            if getattr(self, name) < 0:
                raise DegenerateChannel(f"{name} must be >= 0")


@dataclass
class GpCapacityResult:
    value: float
    p_u_given_s: ConditionalKernel
    strategy: ShannonStrategy
    worst_q: ConditionalKernel
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class GpSolverConfig:
    n_aux: int | None = None        # default |X|^|S|; lower = relaxation
    n_starts: int = 16
    inner_tol: float = 1e-8
    inner_max_iters: int = 2000
    grad_step: float = 1e-5
    max_ascent_iters: int = 80
    grid_resolution: int | None = None   # e.g. 32 enables the certifying sweep
    grid_point_limit: int = 2_000_000
    grid_inner_limit: int = 4096         # max grid points when |J| > 1
    strategy_guard: int = 256
    seed: int = 0


# ---------------------------------------------------------------------------
# information helpers on dense tables
# ---------------------------------------------------------------------------


def _h_bits(p: np.ndarray, axis=None) -> np.ndarray:
    return -xlogy(p, p).sum(axis=axis) / LOG2


def _mi_table(puy: np.ndarray) -> float:
    pu = puy.sum(axis=1)
    py = puy.sum(axis=0)
    return float(_h_bits(pu) + _h_bits(py) - _h_bits(puy))


def _as_table(obj, like: str) -> np.ndarray:
    if isinstance(obj, ConditionalKernel):
        return obj.t
    if isinstance(obj, ShannonStrategy):
        return obj.table
    return np.asarray(obj)


def _gathered_channel(spec: GpChannelSpec, strategy) -> np.ndarray:
    """W with the input axis resolved through the strategy: [u, s, j, y]."""
    table = _as_table(strategy, "strategy").astype(np.int64)
    if table.shape[1] != spec.n_states:
        raise DimensionMismatch("strategy state axis differs from channel")
    if table.min() < 0 or table.max() >= spec.n_inputs:
        raise DimensionMismatch("strategy emits a symbol outside the input alphabet")
    s_idx = np.arange(spec.n_states)[None, :]
    return spec.w.t[table, s_idx, :, :]


def _uy_coefficients(spec: GpChannelSpec, p_u_given_s, strategy) -> np.ndarray:
    """A[u, y, s, j] with P_{U,Y} = sum_{s,j} A[u,y,s,j] * Q[s,j]."""
    pus = _as_table(p_u_given_s, "kernel")
    if pus.shape[0] != spec.n_states:
        raise DimensionMismatch("P(u|s) must have one row per state")
    w_su = spec.p_s.p[:, None] * pus            # joint P(s, u)
    wg = _gathered_channel(spec, strategy)      # (u, s, j, y)
    return np.einsum("su,usjy->uysj", w_su, wg)


def induced_channel(w: ConditionalKernel, q: ConditionalKernel) -> ConditionalKernel:
    """Average the jammer out: V(y|x,s) = sum_j W(y|x,s,j) Q(j|s)."""
    if w.t.ndim != 4:
        raise DimensionMismatch("W must be indexed by (x, s, j) -> y")
    qt = _as_table(q, "kernel")
    if qt.shape != (w.t.shape[1], w.t.shape[2]):
        raise DimensionMismatch("Q must be (|S|, |J|)")
    v = np.einsum("xsjy,sj->xsy", w.t, qt)
    return ConditionalKernel(v)


def objective(p_u_given_s, strategy, q, spec: GpChannelSpec) -> float:
    """I(U;Y) - I(U;S) in bits under (P_S, P(u|s), x(u,s), W, Q)."""
    pus = _as_table(p_u_given_s, "kernel")
    qt = _as_table(q, "kernel")
    a = _uy_coefficients(spec, pus, strategy)
    puy = np.einsum("uysj,sj->uy", a, qt)
    p_su = spec.p_s.p[:, None] * pus
    return _mi_table(puy) - _mi_table(p_su)


# ---------------------------------------------------------------------------
# inner minimization: Frank-Wolfe over the product of simplices
# ---------------------------------------------------------------------------


def _mi_gradient(a: np.ndarray, puy: np.ndarray) -> np.ndarray:
    """d I(U;Y) / d Q[s,j]; the U-marginal is Q-invariant so terms cancel."""
    py = puy.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log2(puy) - np.log2(py)[None, :]
    ratio = np.where(np.isfinite(ratio), ratio, _LOG_FLOOR)
    return np.einsum("uysj,uy->sj", a, ratio)


def worst_memoryless_jammer(
    p_u_given_s,
    strategy,
    spec: GpChannelSpec,
    tol: float = 1e-8,
    max_iters: int = 2000,
    q0: np.ndarray | None = None,
):
    """Inner min over Q(j|s) of I(U;Y) - I(U;S).

    Returns (Q*, value, info).  Convex problem; Frank-Wolfe with exact line
    search, stopping when the duality gap drops below tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    pus = _as_table(p_u_given_s, "kernel")
    a = _uy_coefficients(spec, pus, strategy)
    ns, nj = spec.n_states, spec.n_jam
    i_us = _mi_table(spec.p_s.p[:, None] * pus)

    if nj == 1:
        q = np.ones((ns, 1))
        puy = np.einsum("uysj,sj->uy", a, q)
        return ConditionalKernel(q), _mi_table(puy) - i_us, {"iterations": 0, "gap": 0.0}

    q = np.full((ns, nj), 1.0 / nj) if q0 is None else np.array(q0, dtype=float)
    puy = np.einsum("uysj,sj->uy", a, q)
    gap = math.inf
    for it in range(max_iters):
        grad = _mi_gradient(a, puy)
        vertex = np.zeros_like(q)
        vertex[np.arange(ns), grad.argmin(axis=1)] = 1.0
        gap = float(((q - vertex) * grad).sum())
        if gap < tol:
            return (
                ConditionalKernel(q),
                _mi_table(puy) - i_us,
                {"iterations": it, "gap": gap},
            )
        puy_v = np.einsum("uysj,sj->uy", a, vertex)
        d = puy_v - puy

        def phi(t):
            return _mi_table(puy + t * d)

        res = minimize_scalar(phi, bounds=(0.0, 1.0), method="bounded",
                              options={"xatol": 1e-14})
        t = float(res.x)
        if phi(1.0) < res.fun:
            t = 1.0
        if t <= 0:
            t = 1e-12
        q = q + t * (vertex - q)
        puy = puy + t * d
    raise NonConvergence(f"Frank-Wolfe gap {gap:.3e} > tol {tol:.1e} after {max_iters} iterations")


# ---------------------------------------------------------------------------
# outer maximization
# ---------------------------------------------------------------------------


def project_rows(mat: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    v = np.atleast_2d(np.asarray(mat, dtype=float))
    k = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, k + 1)
    cond = u - css / ind > 0
    rho = k - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho + 1)[..., None]
    out = np.clip(v - theta, 0.0, None)
    return out.reshape(np.shape(mat))


def all_input_maps(n_inputs: int, n_states: int) -> np.ndarray:
    """Every function from states to inputs, one row each; |X|^|S| rows."""
    return np.array(list(itertools.product(range(n_inputs), repeat=n_states)),
                    dtype=np.int64)


def enumerate_strategies(spec: GpChannelSpec, n_aux: int, guard: int):
    """Strategy tables for the given auxiliary alphabet size.

    With n_aux = |X|^|S| there is one canonical table (u ranges over all input
    maps); for smaller n_aux every n_aux-subset of maps is enumerated, which
    is a documented lower-bounding relaxation.
    """
    maps = all_input_maps(spec.n_inputs, spec.n_states)
    total = maps.shape[0]
    if total > guard:
        raise ProblemTooLarge(f"{total} input maps exceeds the guard of {guard}")
    if n_aux > total or n_aux < 1:
        raise DimensionMismatch(f"n_aux must be in 1..{total}")
    if n_aux == total:
        return [ShannonStrategy(maps)]
    combos = list(itertools.combinations(range(total), n_aux))
    if len(combos) > guard:
        raise ProblemTooLarge(
            f"{len(combos)} strategy subsets exceed the guard of {guard}"
        )
    return [ShannonStrategy(maps[list(c)]) for c in combos]


def _inner_value(pus, strategy, spec, cfg, q_warm):
    try:
        q, val, info = worst_memoryless_jammer(
            pus, strategy, spec, tol=cfg.inner_tol,
            max_iters=cfg.inner_max_iters, q0=q_warm,
        )
        return val, q.t, info, None
    except NonConvergence as exc:  # pragma: no cover - rare; surfaced in diags
        return -math.inf, q_warm, {"iterations": cfg.inner_max_iters}, exc


def _ascend(pus0, strategy, spec, cfg):
    """Projected gradient ascent on P(u|s) of the inner min value."""
    pus = np.array(pus0, dtype=float)
    ns, nu = pus.shape
    val, q_warm, _, err = _inner_value(pus, strategy, spec, cfg, None)
    h = cfg.grad_step
    for _ in range(cfg.max_ascent_iters):
        grad = np.zeros_like(pus)
        for s in range(ns):
            for u in range(nu):
                up = pus.copy()
                up[s, u] += h
                up[s] /= up[s].sum()
                dn = pus.copy()
                dn[s, u] = max(dn[s, u] - h, 0.0)
                dn[s] /= dn[s].sum()
                vp, _, _, _ = _inner_value(up, strategy, spec, cfg, q_warm)
                vm, _, _, _ = _inner_value(dn, strategy, spec, cfg, q_warm)
                grad[s, u] = (vp - vm) / (2 * h)
        step = 0.25
        improved = False
        while step >= 1e-6:
            cand = project_rows(pus + step * grad)
            cval, cq, _, _ = _inner_value(cand, strategy, spec, cfg, q_warm)
            if cval > val + 1e-12:
                pus, val, q_warm = cand, cval, cq
                improved = True
                break
            step /= 2
        if not improved:
            break
    return pus, val, q_warm


def _simplex_grid(n_cells: int, resolution: int) -> np.ndarray:
    """All points of the simplex with coordinates k/resolution."""
    combos = _compositions(resolution, n_cells)
    return combos / resolution


def _compositions(total: int, k: int) -> np.ndarray:
    if k == 1:
        return np.array([[total]])
    rows = []
    for v in range(total + 1):
        for rest in _compositions(total - v, k - 1):
            rows.append([v, *rest])
    return np.array(rows)


def _grid_pass(strategy, spec, cfg):
    """Dense sweep over P(u|s) grids; exact for |J|=1, FW per point otherwise."""
    nu = strategy.n_aux
    ns = spec.n_states
    rows = _simplex_grid(nu, cfg.grid_resolution)
    n_rows = rows.shape[0]
    total = n_rows**ns
    if total > cfg.grid_point_limit:
        return None
    if spec.n_jam > 1 and total > cfg.grid_inner_limit:
        return None

    if spec.n_jam == 1:
        # vectorized closed-form objective over the whole grid
        wg = _gathered_channel(spec, strategy)[:, :, 0, :]  # (u, s, y)
        best_val, best_idx = -math.inf, None
        idx_iter = itertools.product(range(n_rows), repeat=ns)
        batch, batch_idx = [], []
        bsize = 8192
        ps = spec.p_s.p

        def flush(best_val, best_idx):
            if not batch:
                return best_val, best_idx
            pus_b = np.stack(batch)                       # (B, s, u)
            w_su = ps[None, :, None] * pus_b
            puy = np.einsum("bsu,usy->buy", w_su, wg)
            pu = puy.sum(axis=2)
            py = puy.sum(axis=1)
            iuy = _h_bits(pu, axis=1) + _h_bits(py, axis=1) - _h_bits(puy, axis=(1, 2))
            hu_s = (ps[None, :] * _h_bits(pus_b, axis=2)).sum(axis=1)
            ius = _h_bits(pu, axis=1) - hu_s
            vals = iuy - ius
            k = int(vals.argmax())
            if vals[k] > best_val + 1e-15:
                best_val, best_idx = float(vals[k]), batch_idx[k]
            batch.clear()
            batch_idx.clear()
            return best_val, best_idx

        for combo in idx_iter:
            batch.append(rows[list(combo)])
            batch_idx.append(combo)
            if len(batch) == bsize:
                best_val, best_idx = flush(best_val, best_idx)
        best_val, best_idx = flush(best_val, best_idx)
        return best_val, rows[list(best_idx)]

    best_val, best_pus = -math.inf, None
    for combo in itertools.product(range(n_rows), repeat=ns):
        pus = rows[list(combo)]
        val, _, _, _ = _inner_value(pus, strategy, spec, cfg, None)
        if val > best_val + 1e-15:
            best_val, best_pus = val, pus
    return best_val, best_pus


def gp_avc_capacity(spec: GpChannelSpec, config: GpSolverConfig | None = None) -> GpCapacityResult:
    """Max-min capacity of the discrete jammed state-dependent channel.

    Enumerates strategy tables, runs multi-start projected ascent per strategy
    (the first start is always the uniform kernel, which pins the value at or
    above zero), optionally sweeps a dense grid, and returns the best triple.
    The reported value is a certified lower bound of the max-min program.
    """
    cfg = config or GpSolverConfig()
    n_aux = cfg.n_aux or spec.n_inputs**spec.n_states
    strategies = enumerate_strategies(spec, n_aux, cfg.strategy_guard)
    rng = np.random.default_rng(cfg.seed)

    best = None  # (value, strat_idx, pus, strategy, q)
    diag = {"strategy_values": [], "nonconvergences": 0, "grid_used": False}
    for si, strat in enumerate(strategies):
        starts = [np.full((spec.n_states, n_aux), 1.0 / n_aux)]
        for _ in range(cfg.n_starts - 1):
            starts.append(rng.dirichlet(np.ones(n_aux), size=spec.n_states))
        s_best = None
        for pus0 in starts:
            pus, val, q = _ascend(pus0, strat, spec, cfg)
            if not math.isfinite(val):
                diag["nonconvergences"] += 1
                continue
            if s_best is None or val > s_best[0] + 1e-12:
                s_best = (val, pus, q)
        if cfg.grid_resolution:
            grid = _grid_pass(strat, spec, cfg)
            if grid is not None:
                diag["grid_used"] = True
                gval, gpus = grid
                if gval > s_best[0] + 1e-12:
                    _, q, _, _ = _inner_value(gpus, strat, spec, cfg, None)
                    s_best = (gval, gpus, q)
        diag["strategy_values"].append(s_best[0])
        if best is None or s_best[0] > best[0] + 1e-12:
            best = (s_best[0], si, s_best[1], strat, s_best[2])

    value, _, pus, strat, q = best
    # re-evaluate at the returned triple for saddle consistency
    value = objective(pus, strat, q, spec)
    diag["reevaluated_value"] = value
    return GpCapacityResult(
        value=value,
        p_u_given_s=ConditionalKernel(pus),
        strategy=strat,
        worst_q=ConditionalKernel(q),
        diagnostics=diag,
    )


# ---------------------------------------------------------------------------
# Gaussian closed form
# ---------------------------------------------------------------------------


def dp_avc_capacity(spec: DpChannelSpec) -> float:
    """0.5*log2(1 + P/(Lambda + sigma^2)); the state variance drops out."""
    denom = spec.lam + spec.sigma2
    if denom <= 0:
        raise DegenerateChannel("Lambda + sigma^2 must be positive")
    return 0.5 * math.log2(1.0 + spec.p / denom)
