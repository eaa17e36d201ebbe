"""Finite-alphabet probability primitives.

Distributions and stochastic kernels as dense numpy tables, empirical types,
l-infinity typical sets, and exact uniform samplers over (conditional) typical
sets via type enumeration.  Everything here is pure-value: samplers take an
explicit numpy Generator and keep no hidden state.

All information quantities are in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .errors import (
    DimensionMismatch,
    EmptyTypicalSet,
    InvalidDistribution,
    ProblemTooLarge,
)

# constructors renormalize when |sum - 1| <= this and reject beyond it
NORMALIZE_TOL = 1e-9
# slack when comparing integer-count deviations against a float radius
TYPE_EDGE_TOL = 1e-9
# guard on exhaustive type enumeration
MAX_ENUMERATED_TYPES = 5_000_000


@dataclass(frozen=True)
class Alphabet:
    """A finite symbol set; symbols are 0..size-1, labels are cosmetic."""

    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 1:
            raise InvalidDistribution(f"alphabet size must be >= 1, got {self.size}")
        if self.labels is not None and len(self.labels) != self.size:
            raise DimensionMismatch("label count != alphabet size")


class Distribution:
    """Probability mass table over one alphabet or a product of alphabets.

    The mass array may have any shape; a multi-axis array is read as a joint
    distribution over the product alphabet.  Inputs whose total mass is within
    1e-9 of 1 are renormalized exactly; anything further off is rejected.
    """

    __slots__ = ("p",)

    def __init__(self, mass):
        p = np.asarray(mass, dtype=float)
        if p.size == 0:
            raise InvalidDistribution("empty mass table")
        if np.any(p < -NORMALIZE_TOL):
            raise InvalidDistribution("negative probability entry")
        p = np.clip(p, 0.0, None)
        total = p.sum()
        if abs(total - 1.0) > NORMALIZE_TOL:
            raise InvalidDistribution(f"mass sums to {total!r}, outside 1 +/- 1e-9")
        self.p = p / total

    @property
    def shape(self) -> tuple[int, ...]:
        return self.p.shape

    @property
    def size(self) -> int:
        return self.p.size

    def marginal(self, axis: int) -> "Distribution":
        """Marginal onto a single axis of a joint table."""
        axes = tuple(i for i in range(self.p.ndim) if i != axis)
        return Distribution(self.p.sum(axis=axes))

    def __repr__(self):
        return f"Distribution({self.p!r})"


class ConditionalKernel:
    """Stochastic kernel as a dense table, conditioning axes first, output last.

    table[c1, ..., ck, :] is the output distribution for conditioning symbols
    (c1, ..., ck).  Every slice must sum to 1 within 1e-9 (then renormalized).
    """

    __slots__ = ("t",)

    def __init__(self, table):
        t = np.asarray(table, dtype=float)
        if t.ndim < 2:
            raise DimensionMismatch("kernel needs at least one conditioning axis")
        if np.any(t < -NORMALIZE_TOL):
            raise InvalidDistribution("negative kernel entry")
        t = np.clip(t, 0.0, None)
        sums = t.sum(axis=-1)
        if np.any(np.abs(sums - 1.0) > NORMALIZE_TOL):
            bad = float(np.abs(sums - 1.0).max())
            raise InvalidDistribution(f"kernel slice off by {bad:.3e} from 1")
        self.t = t / sums[..., None]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.t.shape

    @property
    def n_outputs(self) -> int:
        return self.t.shape[-1]

    def slice(self, *cond) -> Distribution:
        return Distribution(self.t[cond])

    def __repr__(self):
        return f"ConditionalKernel(shape={self.t.shape})"


def uniform_kernel(cond_shape, n_outputs: int) -> ConditionalKernel:
    shape = tuple(cond_shape) + (n_outputs,)
    return ConditionalKernel(np.full(shape, 1.0 / n_outputs))


@dataclass(frozen=True)
class TypicalSetParams:
    """l-infinity radius and block length for a typical set."""

    delta: float
    n: int

    def __post_init__(self):
        if self.delta < 0:
            raise InvalidDistribution("delta must be >= 0")
        if self.n < 1:
            raise InvalidDistribution("n must be >= 1")


@dataclass(frozen=True)
class EmpiricalType:
    """Joint symbol counts of one or more aligned sequences."""

    counts: np.ndarray
    n: int

    @property
    def freq(self) -> np.ndarray:
        return self.counts / self.n


def _as_mass(p) -> np.ndarray:
    if isinstance(p, Distribution):
        return p.p
    return np.asarray(p, dtype=float)


def joint_counts(seqs, sizes) -> np.ndarray:
    """Count joint symbol occurrences of aligned sequences.

    sizes fixes the arity: one size means seqs is a single integer sequence,
    k sizes mean seqs is a k-tuple of aligned sequences.  Returns an integer
    array of shape sizes.
    """
    sizes = tuple(int(k) for k in np.atleast_1d(sizes))
    if len(sizes) == 1:
        arrs = [np.asarray(seqs, dtype=np.int64)]
    else:
        if len(seqs) != len(sizes):
            raise DimensionMismatch("need one sequence per alphabet size")
        arrs = [np.asarray(s, dtype=np.int64) for s in seqs]
    n = arrs[0].size
    for a in arrs:
        if a.size != n:
            raise DimensionMismatch("sequences must share a length")
    flat = np.zeros(n, dtype=np.int64)
    for a, k in zip(arrs, sizes):
        if a.size and (a.min() < 0 or a.max() >= k):
            raise DimensionMismatch("symbol outside alphabet")
        flat = flat * k + a
    total = int(np.prod(sizes))
    return np.bincount(flat, minlength=total).reshape(sizes)


def empirical_type(seqs, sizes) -> EmpiricalType:
    c = joint_counts(seqs, sizes)
    return EmpiricalType(counts=c, n=int(c.sum()))


def linf_deviation(seqs, p) -> float:
    """Max per-cell gap between the (joint) type of seqs and the table p."""
    mass = _as_mass(p)
    c = joint_counts(seqs, mass.shape)
    return float(np.abs(c / c.sum() - mass).max())


def is_typical(x, p, params: TypicalSetParams) -> bool:
    """True iff the (joint) type of x is within params.delta of p in l-inf.

    x may be a single sequence (p one-axis) or a tuple of aligned sequences
    (p a joint table with one axis per sequence).
    """
    return linf_deviation(x, p) <= params.delta + TYPE_EDGE_TOL


def entropy(p) -> float:
    """Shannon entropy in bits; 0 log(1/0) := 0."""
    mass = _as_mass(p)
    return float(-xlogy(mass, mass).sum() / math.log(2))


def mutual_information(joint) -> float:
    """I(A;B) in bits from a two-axis joint table."""
    pj = _as_mass(joint)
    if pj.ndim != 2:
        raise DimensionMismatch("mutual_information wants a two-axis joint")
    pa = pj.sum(axis=1)
    pb = pj.sum(axis=0)
    return entropy(pa) + entropy(pb) - entropy(pj)


def conditional_entropy(joint) -> float:
    """H(B|A) in bits for a two-axis joint table (A first axis)."""
    pj = _as_mass(joint)
    return entropy(pj) - entropy(pj.sum(axis=1))


# ---------------------------------------------------------------------------
# exact typical-set machinery (method of types)
# ---------------------------------------------------------------------------


def _count_windows(n: int, p: np.ndarray, delta: float):
    """Per-cell integer count ranges allowed by |c/n - p| <= delta."""
    lo = np.ceil(n * (p - delta) - TYPE_EDGE_TOL).astype(np.int64)
    hi = np.floor(n * (p + delta) + TYPE_EDGE_TOL).astype(np.int64)
    lo = np.clip(lo, 0, n)
    hi = np.clip(hi, 0, n)
    return lo, hi


def _enumerate_compositions(total: int, lo, hi) -> np.ndarray:
    """All integer vectors c with lo <= c <= hi (elementwise), sum(c) = total.

    Depth-first with remaining-sum pruning; raises ProblemTooLarge past the
    enumeration guard.
    """
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    k = lo.size
    suf_lo = np.concatenate([np.cumsum(lo[::-1])[::-1], [0]])
    suf_hi = np.concatenate([np.cumsum(hi[::-1])[::-1], [0]])
    out: list[tuple[int, ...]] = []
    cur = [0] * k

    def rec(i: int, rem: int):
        if i == k - 1:
            if lo[i] <= rem <= hi[i]:
                cur[i] = rem
                out.append(tuple(cur))
                if len(out) > MAX_ENUMERATED_TYPES:
                    raise ProblemTooLarge("type enumeration exceeds guard")
            return
        vmin = max(int(lo[i]), rem - int(suf_hi[i + 1]))
        vmax = min(int(hi[i]), rem - int(suf_lo[i + 1]))
        for v in range(vmin, vmax + 1):
            cur[i] = v
            rec(i + 1, rem - v)

    rec(0, total)
    if not out:
        return np.zeros((0, k), dtype=np.int64)
    return np.array(out, dtype=np.int64)


def log2_multinomial(n: int, counts) -> np.ndarray:
    """log2 of n! / prod(c_i!) for one count vector or a stack of them."""
    c = np.asarray(counts, dtype=float)
    return (gammaln(n + 1) - gammaln(c + 1).sum(axis=-1)) / math.log(2)


def enumerate_typical_types(p, params: TypicalSetParams):
    """All type count-vectors within the l-inf ball, with log2 class sizes.

    Returns (types, log2_sizes): types has shape (T, |alphabet|).
    """
    mass = _as_mass(p).ravel()
    lo, hi = _count_windows(params.n, mass, params.delta)
    types = _enumerate_compositions(params.n, lo, hi)
    if types.shape[0] == 0:
        raise EmptyTypicalSet(
            f"no type within delta={params.delta} of p at n={params.n}"
        )
    return types, log2_multinomial(params.n, types)


def log2_typical_set_size(p, params: TypicalSetParams) -> float:
    """Exact log2 |T^n_delta(p)| by summing type-class sizes."""
    _, log_sizes = enumerate_typical_types(p, params)
    return float(logsumexp(log_sizes * math.log(2)) / math.log(2))


def sample_uniform_typical(p, params: TypicalSetParams, rng, size: int | None = None) -> np.ndarray:
    """Exact uniform draw from the l-inf typical set of p.

    Enumerate qualifying types, pick one with probability proportional to its
    class size, then emit a uniformly random arrangement of that type.  With
    size set, returns (size, n) i.i.d. rows using one shared enumeration.
    """
    mass = _as_mass(p).ravel()
    types, log_sizes = enumerate_typical_types(p, params)
    logw = log_sizes * math.log(2)
    w = np.exp(logw - logsumexp(logw))
    w = w / w.sum()
    if size is None:
        idx = rng.choice(types.shape[0], p=w)
        seq = np.repeat(np.arange(mass.size), types[idx])
        rng.shuffle(seq)
        return seq
    idxs = rng.choice(types.shape[0], p=w, size=size)
    templates = np.vstack([
        np.repeat(np.arange(mass.size), t) for t in types
    ])
    out = np.empty((size, params.n), dtype=np.int64)
    chunk = max(1, (1 << 23) // max(params.n, 1))
    for lo in range(0, size, chunk):
        rows = templates[idxs[lo:lo + chunk]]
        keys = rng.random(rows.shape).argsort(axis=1)
        out[lo:lo + chunk] = np.take_along_axis(rows, keys, axis=1)
    return out


@lru_cache(maxsize=4096)
def _row_compositions(row_total: int, lo: tuple, hi: tuple):
    comps = _enumerate_compositions(row_total, np.array(lo), np.array(hi))
    if comps.shape[0] == 0:
        return None, None
    logw = log2_multinomial(row_total, comps) * math.log(2)
    return comps, logw


def sample_conditional_type(y, joint, params: TypicalSetParams, rng) -> np.ndarray:
    """Uniform draw of z from {z : ||T_{y,z} - joint||_inf <= delta}, y fixed.

    One member is sampled (a conditional count matrix chosen proportional to
    the number of its arrangements, laid out canonically), then the z entries
    are permuted uniformly within each index class {i : y_i = a}; the two
    steps together give the exact uniform law on the conditional ball.
    """
    pj = _as_mass(joint)
    if pj.ndim != 2:
        raise DimensionMismatch("joint must have two axes (y then z)")
    y = np.asarray(y, dtype=np.int64)
    n = y.size
    if n != params.n:
        raise DimensionMismatch("y length differs from params.n")
    ny, nz = pj.shape
    y_counts = np.bincount(y, minlength=ny)
    lo, hi = _count_windows(n, pj, params.delta)

    # symbols absent from y force zero counts on their row
    for a in range(ny):
        if y_counts[a] == 0 and np.any(lo[a] > 0):
            raise EmptyTypicalSet(f"row {a} absent from y but needs mass")

    z = np.empty(n, dtype=np.int64)
    for a in range(ny):
        if y_counts[a] == 0:
            continue
        comps, logw = _row_compositions(
            int(y_counts[a]), tuple(int(v) for v in lo[a]), tuple(int(v) for v in hi[a])
        )
        if comps is None:
            raise EmptyTypicalSet(f"no feasible z-counts for y-symbol {a}")
        w = np.exp(logw - logsumexp(logw))
        w = w / w.sum()
        row = comps[rng.choice(comps.shape[0], p=w)]
        fill = np.repeat(np.arange(nz), row)
        rng.shuffle(fill)  # uniform permutation within the y==a index class
        z[y == a] = fill
    return z
