"""Binned discrete codebooks, typicality encoder, and the list decoder.

The code construction pairs a binned codebook of auxiliary sequences with a
symbolwise input map.  The encoder searches its bin for a codeword whose joint
type with the observed state sequence is close to the design joint; the
decoder collects every codeword whose joint type with the channel output can
be explained by *some* memoryless jamming law, and succeeds when the
collected codewords agree on a single bin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .capacity import GpChannelSpec, ShannonStrategy, _uy_coefficients
from .errors import (
    CodebookTooLarge,
    ConfigError,
    DimensionMismatch,
    LpFailure,
)
from .jammers import JammerStrategy, PublicCodeParams
from .probability import (
    ConditionalKernel,
    Distribution,
    TYPE_EDGE_TOL,
    TypicalSetParams,
    sample_uniform_typical,
)
from .records import GpTrialRecord, summarize_gp

DEFAULT_MEMORY_CAP = 2 ** 26  # total array elements across the codebook
_TRIAL_TAG = 0x74726C
_BOOK_TAG = 0x626F6F6B
_PERM_TAG = 0x7065726D


def _bin_counts(n: int, rate: float, rate_bin: float, memory_cap: int):
    n_bins = max(1, int(np.floor(2.0 ** (n * rate))))
    per_bin = max(1, int(np.floor(2.0 ** (n * rate_bin))))
    if n * n_bins * per_bin > memory_cap:
        raise CodebookTooLarge(
            f"codebook needs {n * n_bins * per_bin} cells, cap is {memory_cap}"
        )
    return n_bins, per_bin


@dataclass
class DiscreteBinnedCodebook:
    """Auxiliary codewords arranged as (bin, index, position)."""

    n: int
    rate: float          # realized log2(n_bins) / n
    rate_bin: float      # realized log2(per_bin) / n
    codewords: np.ndarray
    seed: int
    p_u: Distribution
    delta: float

    @property
    def n_bins(self) -> int:
        return self.codewords.shape[0]

    @property
    def per_bin(self) -> int:
        return self.codewords.shape[1]

    def flat(self) -> np.ndarray:
        return self.codewords.reshape(-1, self.n)


def generate_discrete_codebook(
    n: int,
    rate: float,
    rate_bin: float,
    p_u: Distribution,
    delta: float,
    seed: int,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> DiscreteBinnedCodebook:
    """Draw i.i.d. uniform-typical codewords into a (bins x per-bin) table.

    Bin and within-bin counts are floor(2^{n rate}) and floor(2^{n rate_bin}),
    each at least one; the realized rates are recorded on the codebook.
    """
    n_bins, per_bin = _bin_counts(n, rate, rate_bin, memory_cap)
    rng = np.random.default_rng(np.random.SeedSequence([_BOOK_TAG, seed]))
    params = TypicalSetParams(delta=delta, n=n)
    words = sample_uniform_typical(p_u, params, rng, size=n_bins * per_bin)
    words = np.asarray(words, dtype=np.int64).reshape(n_bins, per_bin, n)
    return DiscreteBinnedCodebook(
        n=n,
        rate=float(np.log2(n_bins)) / n,
        rate_bin=float(np.log2(per_bin)) / n,
        codewords=words,
        seed=seed,
        p_u=p_u,
        delta=delta,
    )


@dataclass
class GpEncoderParams:
    """Joint-typicality radius for the in-bin search; fallback is (1, 1)."""

    delta1: float

    def __post_init__(self):
        if self.delta1 <= 0:
            raise ConfigError("delta1 must be positive")


@dataclass
class GpDecoderParams:
    gamma: float
    lp_tol: float = 1e-9

    def __post_init__(self):
        if self.gamma <= 0 or self.lp_tol <= 0:
            raise ConfigError("gamma and lp_tol must be positive")


@dataclass
class GpEncodeResult:
    u: np.ndarray
    x: np.ndarray
    bin: int            # 1-based bin of the transmitted codeword
    index: int          # 0-based index within that bin
    fallback: bool


def _joint_dev_rows(words: np.ndarray, s: np.ndarray, p_joint: np.ndarray) -> np.ndarray:
    """Max-abs deviation of each row's joint type with s from p_joint."""
    k, n = words.shape
    nu, ns = p_joint.shape
    flat = words * ns + s[None, :] + (np.arange(k) * (nu * ns))[:, None]
    counts = np.bincount(flat.ravel(), minlength=k * nu * ns).reshape(k, nu * ns)
    return np.abs(counts / n - p_joint.ravel()[None, :]).max(axis=1)


def gp_encode(
    m: int,
    s: np.ndarray,
    codebook: DiscreteBinnedCodebook,
    strategy: ShannonStrategy,
    p_joint_us: np.ndarray,
    params: GpEncoderParams,
    rng: np.random.Generator,
) -> GpEncodeResult:
    """Pick a codeword from bin m whose joint type with s is within delta1.

    Ties are broken uniformly at random; if no codeword qualifies the encoder
    transmits the fixed fallback codeword (bin 1, index 1).  The channel input
    is the symbolwise strategy image x_i = table[u_i, s_i].
    """
    if not 1 <= m <= codebook.n_bins:
        raise ConfigError(f"message {m} outside 1..{codebook.n_bins}")
    s = np.asarray(s, dtype=np.int64)
    if s.shape != (codebook.n,):
        raise DimensionMismatch("state sequence length differs from codebook n")
    bin_words = codebook.codewords[m - 1]
    dev = _joint_dev_rows(bin_words, s, p_joint_us)
    hits = np.flatnonzero(dev <= params.delta1 + TYPE_EDGE_TOL)
    if hits.size:
        k = int(hits[rng.integers(0, hits.size)])
        u, b, fb = bin_words[k], m, False
    else:
        k, b, fb = 0, 1, True
        u = codebook.codewords[0, 0]
    x = strategy.table[u, s]
    return GpEncodeResult(u=u, x=x, bin=b, index=k, fallback=fb)


class ListGeometry:
    """Precomputed data for deciding membership in the decoding list.

    The reachable joint laws P^{(Q)}_{U,Y} form an affine image of the product
    of per-state simplices; membership asks whether some point of that image
    sits within an L-infinity ball around the observed joint type.  That is a
    small linear program, preceded here by a per-cell interval test that
    rejects most candidates without touching the LP.
    """

    def __init__(self, spec: GpChannelSpec, strategy: ShannonStrategy, p_u_given_s):
        a = _uy_coefficients(spec, p_u_given_s, strategy)  # (u, y, s, j)
        self.a = a
        self.n_aux, self.n_out, self.n_states, self.n_jam = a.shape
        self.cell_lo = a.min(axis=3).sum(axis=2)
        self.cell_hi = a.max(axis=3).sum(axis=2)
        # the U-marginal of P^{(Q)} does not depend on Q
        self.p_u = a[:, :, :, 0].sum(axis=(1, 2))
        pus_sj = a.reshape(self.n_aux * self.n_out, self.n_states * self.n_jam)
        self._m = pus_sj
        eye_t = np.ones((pus_sj.shape[0], 1))
        self._a_ub = np.block([[pus_sj, -eye_t], [-pus_sj, -eye_t]])
        a_eq = np.zeros((self.n_states, self.n_states * self.n_jam + 1))
        for s_i in range(self.n_states):
            a_eq[s_i, s_i * self.n_jam:(s_i + 1) * self.n_jam] = 1.0
        self._a_eq = a_eq
        self._b_eq = np.ones(self.n_states)
        self._bounds = [(0.0, None)] * (self.n_states * self.n_jam) + [(0.0, None)]
        self._c = np.zeros(self.n_states * self.n_jam + 1)
        self._c[-1] = 1.0
        self._cache: dict[bytes, float] = {}

    def quick_reject(self, t_joint: np.ndarray, gamma_tol: float) -> bool:
        """True when no jamming law can match even cell by cell."""
        gap = np.maximum(t_joint - self.cell_hi, self.cell_lo - t_joint)
        return bool(gap.max() > gamma_tol)

    def min_deviation(self, t_joint: np.ndarray) -> float:
        """min over jamming laws Q of || t_joint - P^{(Q)} ||_inf."""
        if self.n_jam == 1:
            fixed = self.a[:, :, :, 0].sum(axis=2)
            return float(np.abs(t_joint - fixed).max())
        key = t_joint.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        t_flat = t_joint.ravel()
        res = linprog(
            self._c,
            A_ub=self._a_ub,
            b_ub=np.concatenate([t_flat, -t_flat]),
            A_eq=self._a_eq,
            b_eq=self._b_eq,
            bounds=self._bounds,
            method="highs",
        )
        if not res.success:
            raise LpFailure(f"list membership LP failed: {res.message}")
        val = float(res.fun)
        if len(self._cache) < 200_000:
            self._cache[key] = val
        return val

    def deviation_at(self, t_joint: np.ndarray, q: ConditionalKernel) -> float:
        """Deviation against the single law induced by a fixed Q."""
        fixed = np.einsum("uysj,sj->uy", self.a, q.t)
        return float(np.abs(t_joint - fixed).max())


def joint_type_with_output(u: np.ndarray, y: np.ndarray, n_aux: int, n_out: int) -> np.ndarray:
    counts = np.bincount(u * n_out + y, minlength=n_aux * n_out)
    return counts.reshape(n_aux, n_out) / u.size


def list_membership(
    u: np.ndarray,
    y: np.ndarray,
    spec: GpChannelSpec,
    strategy: ShannonStrategy,
    p_u_given_s,
    gamma: float,
    tol: float = 1e-9,
    geometry: ListGeometry | None = None,
    q_fixed: ConditionalKernel | None = None,
) -> bool:
    """Decide whether (u, y) is explainable by some memoryless jamming law.

    With q_fixed the quantifier over laws collapses to that single law, the
    diagnostic mode discussed alongside the conditional-type footnote.
    """
    geo = geometry if geometry is not None else ListGeometry(spec, strategy, p_u_given_s)
    t_joint = joint_type_with_output(
        np.asarray(u, dtype=np.int64), np.asarray(y, dtype=np.int64),
        geo.n_aux, geo.n_out,
    )
    if q_fixed is not None:
        return geo.deviation_at(t_joint, q_fixed) <= gamma + tol
    if geo.quick_reject(t_joint, gamma + tol):
        return False
    return geo.min_deviation(t_joint) <= gamma + tol


@dataclass
class GpDecodeResult:
    mhat: int
    members: list = field(default_factory=list)  # (bin, index) pairs, 1-based bins


def gp_decode(
    y: np.ndarray,
    codebook: DiscreteBinnedCodebook,
    spec: GpChannelSpec,
    strategy: ShannonStrategy,
    p_u_given_s,
    params: GpDecoderParams,
    geometry: ListGeometry | None = None,
) -> GpDecodeResult:
    """Common bin of the decoding list, or 0 when empty or mixed.

    Codewords sharing a joint type with y are deduplicated before the LP, and
    a marginal-type pre-filter plus the per-cell interval test keep the LP
    count per call small.
    """
    geo = geometry if geometry is not None else ListGeometry(spec, strategy, p_u_given_s)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (codebook.n,):
        raise DimensionMismatch("output length differs from codebook n")
    n = codebook.n
    nu, ny = geo.n_aux, geo.n_out
    words = codebook.flat()
    total = words.shape[0]
    gamma_tol = params.gamma + params.lp_tol

    counts = np.empty((total, nu * ny), dtype=np.int64)
    chunk = max(1, (1 << 22) // n)
    for lo in range(0, total, chunk):
        block = words[lo:lo + chunk]
        flat = block * ny + y[None, :] + (np.arange(block.shape[0]) * (nu * ny))[:, None]
        counts[lo:lo + chunk] = np.bincount(
            flat.ravel(), minlength=block.shape[0] * nu * ny
        ).reshape(block.shape[0], nu * ny)

    uniq, inverse = np.unique(counts, axis=0, return_inverse=True)
    marg_dev = np.abs(
        uniq.reshape(-1, nu, ny).sum(axis=2) / n - geo.p_u[None, :]
    ).max(axis=1)
    ok = np.zeros(uniq.shape[0], dtype=bool)
    pre = marg_dev <= params.gamma + codebook.delta + TYPE_EDGE_TOL
    for i in np.flatnonzero(pre):
        t_joint = uniq[i].reshape(nu, ny) / n
        if geo.quick_reject(t_joint, gamma_tol):
            continue
        ok[i] = geo.min_deviation(t_joint) <= gamma_tol
    member_idx = np.flatnonzero(ok[inverse])
    if member_idx.size == 0:
        return GpDecodeResult(mhat=0)
    bins = member_idx // codebook.per_bin + 1
    members = [(int(b), int(i % codebook.per_bin)) for b, i in zip(bins, member_idx)]
    first = int(bins[0])
    return GpDecodeResult(mhat=first if np.all(bins == first) else 0, members=members)


def permuted_message_layer(n_messages: int, seed):
    """Uniform relabeling of {1..n_messages} with its inverse.

    seed is an int or a sequence of ints namespacing the draw.  The layer is
    part of the randomness shared by encoder and decoder but hidden from the
    adversary, so a simulation must redraw it for every transmission; a
    message-targeting strategy then faces a fresh uniform bin each time.
    """
    if n_messages < 1:
        raise ConfigError("need at least one message")
    words = [seed] if isinstance(seed, (int, np.integer)) else list(seed)
    rng = np.random.default_rng(np.random.SeedSequence([_PERM_TAG, *words]))
    perm = rng.permutation(n_messages)
    inv = np.empty(n_messages, dtype=np.int64)
    inv[perm] = np.arange(n_messages)

    def forward(m: int) -> int:
        return int(perm[m - 1]) + 1

    def inverse(m: int) -> int:
        return int(inv[m - 1]) + 1

    return forward, inverse


def channel_output(
    spec: GpChannelSpec,
    x: np.ndarray,
    s: np.ndarray,
    j: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample y_i from W(.|x_i, s_i, j_i) independently across positions."""
    probs = spec.w.t[x, s, j]
    cdf = np.cumsum(probs, axis=1)
    draws = rng.random(x.size)
    y = (draws[:, None] > cdf).sum(axis=1)
    return np.minimum(y, spec.n_outputs - 1)


def _coerce_jam_sequence(j, n_jam: int, n: int) -> np.ndarray:
    arr = np.asarray(j)
    if np.issubdtype(arr.dtype, np.floating):
        if not np.allclose(arr, np.round(arr)):
            raise ConfigError("jammer emitted non-integer symbols for a discrete channel")
        arr = np.round(arr).astype(np.int64)
    arr = arr.astype(np.int64)
    if arr.shape != (n,) or arr.min() < 0 or arr.max() >= n_jam:
        raise ConfigError("jammer emitted symbols outside the jamming alphabet")
    return arr


@dataclass
class GpSimParams:
    n: int
    rate: float
    rate_bin: float
    delta: float | None = None
    delta1: float | None = None
    gamma: float | None = None
    lp_tol: float = 1e-9
    calibration_trials: int = 200
    calibration_quantile: float = 0.99
    use_permutation: bool = False
    memory_cap: int = DEFAULT_MEMORY_CAP

    def resolved(self):
        delta = self.delta if self.delta is not None else float(self.n) ** (-1 / 3)
        delta1 = self.delta1 if self.delta1 is not None else 2.0 * delta
        return delta, delta1


def _p_joint_us(spec: GpChannelSpec, p_u_given_s) -> np.ndarray:
    pus = p_u_given_s.t if hasattr(p_u_given_s, "t") else np.asarray(p_u_given_s)
    return (spec.p_s.p[:, None] * pus).T  # (u, s)


def calibrate_gamma(
    spec: GpChannelSpec,
    strategy: ShannonStrategy,
    p_u_given_s,
    codebook: DiscreteBinnedCodebook,
    delta1: float,
    trials: int,
    seed: int,
    quantile: float = 0.99,
    geometry: ListGeometry | None = None,
) -> float:
    """Decoding radius from a jammer-free reference run.

    Under a uniform memoryless reference law, record per trial the smallest
    deviation any jamming law achieves against the transmitted codeword's
    joint type with the output, and return the requested quantile.  Fallback
    trials are excluded when any non-fallback trial exists.
    """
    geo = geometry if geometry is not None else ListGeometry(spec, strategy, p_u_given_s)
    enc = GpEncoderParams(delta1=delta1)
    p_joint = _p_joint_us(spec, p_u_given_s)
    q_ref = np.full((spec.n_states, spec.n_jam), 1.0 / spec.n_jam)
    devs, dev_fb = [], []
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([_TRIAL_TAG, seed, t]))
        s = rng.choice(spec.n_states, size=codebook.n, p=spec.p_s.p)
        m = int(rng.integers(0, codebook.n_bins)) + 1
        res = gp_encode(m, s, codebook, strategy, p_joint, enc, rng)
        if spec.n_jam > 1:
            cdf = np.cumsum(q_ref, axis=1)
            j = (rng.random(codebook.n)[:, None] > cdf[s]).sum(axis=1)
        else:
            j = np.zeros(codebook.n, dtype=np.int64)
        y = channel_output(spec, res.x, s, j, rng)
        t_joint = joint_type_with_output(res.u, y, geo.n_aux, geo.n_out)
        (dev_fb if res.fallback else devs).append(geo.min_deviation(t_joint))
    pool = devs if devs else dev_fb
    return float(np.quantile(pool, quantile))


def simulate_gp(
    spec: GpChannelSpec,
    strategy: ShannonStrategy,
    p_u_given_s,
    params: GpSimParams,
    jammer: JammerStrategy,
    trials: int,
    seed: int,
    trial_range: tuple[int, int] | None = None,
):
    """Monte Carlo block-error run; returns (trial records, summary).

    Per trial: state i.i.d. from P_S, bin search encoding, jammer emission
    from (message, state) only, memoryless channel draw, list decoding.  The
    error taxonomy marks encoder fallback, a dropped transmitted codeword, and
    impostor codewords from foreign bins.  Each trial is seeded independently
    from (seed, trial index), so a trial_range slice reproduces exactly the
    records a full run would produce for those indices; callers can shard
    work and merge slices in index order.
    """
    delta, delta1 = params.resolved()
    codebook = generate_discrete_codebook(
        params.n, params.rate, params.rate_bin, _marginal_u(spec, p_u_given_s),
        delta, seed, params.memory_cap,
    )
    geo = ListGeometry(spec, strategy, p_u_given_s)
    gamma = params.gamma
    if gamma is None:
        gamma = calibrate_gamma(
            spec, strategy, p_u_given_s, codebook, delta1,
            params.calibration_trials, seed + 1, params.calibration_quantile, geo,
        )
    enc = GpEncoderParams(delta1=delta1)
    dec = GpDecoderParams(gamma=gamma, lp_tol=params.lp_tol)
    p_joint = _p_joint_us(spec, p_u_given_s)
    public = PublicCodeParams(
        n=params.n, n_jam=spec.n_jam, rate=codebook.rate, rate_bin=codebook.rate_bin,
    )
    lo, hi = trial_range if trial_range is not None else (0, trials)
    if not 0 <= lo <= hi <= trials:
        raise ConfigError(f"trial_range {trial_range} outside [0, {trials}]")
    records = []
    for t in range(lo, hi):
        rng = np.random.default_rng(np.random.SeedSequence([_TRIAL_TAG, seed, t]))
        # shared randomness is redrawn per transmission, out of adversary view
        fwd, inv = permuted_message_layer(codebook.n_bins, (seed, t)) \
            if params.use_permutation else (None, None)
        jam_rng = np.random.default_rng(np.random.SeedSequence([_TRIAL_TAG, seed, t, 1]))
        s = rng.choice(spec.n_states, size=params.n, p=spec.p_s.p)
        m = int(rng.integers(0, codebook.n_bins)) + 1
        m_tx = fwd(m) if fwd else m
        res = gp_encode(m_tx, s, codebook, strategy, p_joint, enc, rng)
        j = _coerce_jam_sequence(
            jammer.emit(m, s, public, jam_rng), spec.n_jam, params.n,
        )
        y = channel_output(spec, res.x, s, j, rng)
        out = gp_decode(y, codebook, spec, strategy, p_u_given_s, dec, geo)
        mhat = (inv(out.mhat) if (inv and out.mhat) else out.mhat)
        decoded = mhat == m
        if decoded:
            err = ""
        elif res.fallback:
            err = "fallback"
        elif (res.bin, res.index) not in out.members:
            err = "dropped"
        else:
            err = "impostor"
        records.append(GpTrialRecord(
            trial=t, n=params.n, R=codebook.rate, Rtilde=codebook.rate_bin,
            jammer_id=jammer.id, encoder_fallback=res.fallback, decoded=decoded,
            m=m, mhat=mhat, error_type=err,
        ))
    return records, (summarize_gp(records) if records else None)


def _marginal_u(spec: GpChannelSpec, p_u_given_s) -> Distribution:
    pus = p_u_given_s.t if hasattr(p_u_given_s, "t") else np.asarray(p_u_given_s)
    return Distribution(spec.p_s.p @ pus)


def impostor_type_bound(
    spec: GpChannelSpec,
    strategy: ShannonStrategy,
    p_u_given_s,
    y: np.ndarray,
    delta: float,
    gamma: float,
    tol: float = 1e-9,
    geometry: ListGeometry | None = None,
    matrix_cap: int = 2_000_000,
) -> float:
    """log2 of an exact bound on the list-joining chance of a fresh codeword.

    For the given output sequence, enumerate every joint count matrix whose
    output marginal matches y, keep those whose input marginal is typical and
    that pass the list test, overcount each matched class by the product of
    per-output-symbol multinomials, and divide by the exact typical-set size.
    The result bounds P(U' in L(y, gamma)) for U' uniform on the typical set.
    """
    from scipy.special import logsumexp

    from .probability import (
        _count_windows,
        _enumerate_compositions,
        log2_multinomial,
        log2_typical_set_size,
    )

    geo = geometry if geometry is not None else ListGeometry(spec, strategy, p_u_given_s)
    nu, ny = geo.n_aux, geo.n_out
    y = np.asarray(y, dtype=np.int64)
    n = y.size
    y_counts = np.bincount(y, minlength=ny)
    cols = []
    total = 1
    for b in range(ny):
        comps = _enumerate_compositions(
            int(y_counts[b]), np.zeros(nu, dtype=np.int64),
            np.full(nu, int(y_counts[b]), dtype=np.int64),
        )
        cols.append(comps)
        total *= comps.shape[0]
        if total > matrix_cap:
            raise CodebookTooLarge("joint-type enumeration exceeds the matrix cap")

    lo_u, hi_u = _count_windows(n, np.asarray(geo.p_u, dtype=float), delta)
    log2_counts = []
    idx = np.zeros(ny, dtype=np.int64)
    sizes = [c.shape[0] for c in cols]
    tau = np.zeros((nu, ny), dtype=np.int64)
    while True:
        for b in range(ny):
            tau[:, b] = cols[b][idx[b]]
        row = tau.sum(axis=1)
        if np.all(row >= lo_u) and np.all(row <= hi_u):
            t_joint = tau / n
            if not geo.quick_reject(t_joint, gamma + tol):
                if geo.min_deviation(t_joint) <= gamma + tol:
                    lc = sum(
                        float(log2_multinomial(int(y_counts[b]), tau[:, b]))
                        for b in range(ny)
                    )
                    log2_counts.append(lc)
        pos = ny - 1
        while pos >= 0:
            idx[pos] += 1
            if idx[pos] < sizes[pos]:
                break
            idx[pos] = 0
            pos -= 1
        if pos < 0:
            break
    if not log2_counts:
        return -np.inf
    params = TypicalSetParams(delta=delta, n=n)
    log2_num = float(logsumexp(np.array(log2_counts) * np.log(2.0)) / np.log(2.0))
    return log2_num - log2_typical_set_size(geo.p_u, params)
