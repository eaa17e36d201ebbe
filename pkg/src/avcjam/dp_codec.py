"""Spherical dirty-paper codebooks, encoder, minimum-angle decoder, harness.

The random code places bins of codewords uniformly on a sphere; the encoder
looks in its bin for a codeword nearly orthogonal to the scaled state and
transmits the difference, and the decoder picks the codeword with the largest
normalized inner product against the received sequence.

Two codebook backends share the same trial semantics.  The explicit backend
materializes every codeword and is exact but limited by memory.  The virtual
backend never materializes the codebook: the chosen codeword is sampled from
the exact conditional law of a uniform sphere point given the bin-search
outcome (the cosine against the state direction has a shifted Beta law), and
the best impostor comparison is resolved by one Bernoulli draw whose success
probability is the exact sphere-cap tail aggregated over the codebook size.
This makes blocklengths and rates far beyond any explicit table runnable
without changing the per-trial error law, except that codewords are redrawn
across trials rather than frozen once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import beta as beta_dist

from .capacity import DpChannelSpec
from .errors import (
    CodebookTooLarge,
    ConfigError,
    DegenerateChannel,
    InvalidBackoff,
    JammerPowerViolation,
)
from .jammers import JammerStrategy, PublicCodeParams
from .records import DpTrialRecord, summarize_dp

_DP_BOOK_TAG = 0x64706231
_DP_TRIAL_TAG = 0x6470746C
DEFAULT_MEMORY_CAP = 2 ** 26


@dataclass(frozen=True)
class DpCodeConstants:
    """Derived code parameters shared by both backends."""

    p: float
    lam: float
    sigma2: float
    sigma_s2: float
    eps1: float
    p_prime: float
    alpha: float
    p_u: float


def derive_constants(spec: DpChannelSpec, eps1: float | None = None) -> DpCodeConstants:
    """Backed-off power, the scaling coefficient, and the codeword power."""
    if eps1 is None:
        eps1 = 0.05 * spec.p
    if not 0 < eps1 < spec.p:
        raise InvalidBackoff(f"eps1 must lie in (0, {spec.p}), got {eps1}")
    if spec.lam + spec.sigma2 <= 0:
        raise DegenerateChannel("jammer power and noise cannot both vanish")
    p_prime = spec.p - eps1
    alpha = p_prime / (p_prime + spec.lam + spec.sigma2)
    p_u = p_prime + alpha ** 2 * spec.sigma_s2
    return DpCodeConstants(
        p=spec.p, lam=spec.lam, sigma2=spec.sigma2, sigma_s2=spec.sigma_s2,
        eps1=eps1, p_prime=p_prime, alpha=alpha, p_u=p_u,
    )


def theta(spec: DpChannelSpec, eps1: float | None = None) -> float:
    """Decoding threshold: the guaranteed limit cosine of (received, chosen)."""
    c = derive_constants(spec, eps1)
    return math.sqrt(c.alpha * (c.p_prime + c.alpha * c.sigma_s2) / c.p_u)


def theta_complement(spec: DpChannelSpec, eps1: float | None = None) -> float:
    """Closed form for 1 - theta^2, exposed as an algebraic cross-check."""
    c = derive_constants(spec, eps1)
    return (c.lam + c.sigma2) * c.p_prime / (
        (c.p_prime + c.lam + c.sigma2) * c.p_u
    )


def fvw(v: float, w: float, spec: DpChannelSpec, eps1: float | None = None) -> float:
    """Worst-case cosine profile over correlation v and jammer power w.

    The denominator carries alpha*(w - lam): the squared-inequality chain
    behind the v,w minimization uses the jammer-power variable there, which
    is also what makes the profile attain its minimum at (0, lam).
    """
    c = derive_constants(spec, eps1)
    if not -1 - 1e-12 <= v <= 1 + 1e-12:
        raise ConfigError(f"v={v} outside [-1, 1]")
    if not -1e-12 <= w <= c.lam + 1e-12:
        raise ConfigError(f"w={w} outside [0, {c.lam}]")
    cross = v * c.alpha * math.sqrt(max(w, 0.0) * c.sigma_s2)
    num = math.sqrt(c.alpha) * (c.p_prime + c.alpha * c.sigma_s2 + cross)
    inner = c.p_prime + c.alpha * c.sigma_s2 + c.alpha * (w - c.lam) + 2 * cross
    return num / math.sqrt(c.p_u * inner)


def rate_bin_default(spec: DpChannelSpec, eps1: float | None = None,
                     eps: float = 0.1) -> float:
    """Binning rate covering the state-correlation window, plus slack."""
    c = derive_constants(spec, eps1)
    return 0.5 * math.log2(c.p_u / c.p_prime) + eps / 2


def sample_sphere(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Exact uniform draw on the sphere of the given radius."""
    if n < 1 or radius <= 0:
        raise ConfigError("need n >= 1 and radius > 0")
    while True:
        g = rng.standard_normal(n)
        norm = np.linalg.norm(g)
        if norm > 0:
            return g * (radius / norm)


def log_sphere_cap(n: int, c: float) -> float:
    """log P(<x_hat, e> >= c) for x uniform on the unit sphere in R^n.

    The cosine density is proportional to (1 - t^2)^((n-3)/2); the integral
    is done in log space on a grid concentrated at the cap boundary, so tail
    probabilities far below the floating-point floor stay representable.
    """
    if n < 2:
        raise ConfigError("cap probability needs n >= 2")
    if c <= -1:
        return 0.0
    if c >= 1:
        return -np.inf
    if c < 0:
        return math.log1p(-math.exp(log_sphere_cap(n, -c)))
    a = (n - 3) / 2.0
    x = np.linspace(0.0, 1.0, 4097)
    t = c + (1.0 - c) * x ** 2
    with np.errstate(divide="ignore"):
        logf = a * np.log1p(-t ** 2)
    logf[t >= 1.0] = -np.inf
    dt = np.diff(t)
    pair = np.logaddexp(logf[:-1], logf[1:]) - math.log(2.0)
    with np.errstate(divide="ignore"):
        log_integral = float(_logsumexp(pair + np.log(np.where(dt > 0, dt, 1e-300))))
    log_z = 0.5 * math.log(math.pi) + gammaln((n - 1) / 2.0) - gammaln(n / 2.0)
    return min(log_integral - log_z, 0.0)


def _logsumexp(v: np.ndarray) -> float:
    m = np.max(v)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(v - m))))


def _bernoulli_from_tail(log_q: float, log_count: float, rng) -> tuple[bool, float]:
    """Draw 1{max of exp(log_count) i.i.d. events occurs}, q per event."""
    if log_q == -np.inf or log_count == -np.inf:
        return False, 0.0
    log_nq = log_q + log_count
    if log_nq >= math.log(50.0):
        return True, 1.0
    q = math.exp(log_q)
    if q > 1e-12:
        t = math.exp(log_count) * math.log1p(-q)
    else:
        t = -math.exp(log_nq)
    p_hit = -math.expm1(t)
    return bool(rng.random() < p_hit), p_hit


@dataclass
class DpEncoderParams:
    """Bin-search slack (per symbol) and the power backoff."""

    delta1: float
    eps1: float | None = None

    def __post_init__(self):
        if self.delta1 <= 0:
            raise ConfigError("delta1 must be positive")


def _sizes(n: int, rate: float, rate_bin: float):
    n_bins = max(1, int(math.floor(2.0 ** (n * rate))))
    per_bin = max(1, int(math.floor(2.0 ** (n * rate_bin))))
    return n_bins, per_bin


@dataclass
class SphereCodebook:
    """Materialized codeword table (bin, index, position) on one sphere."""

    n: int
    rate: float
    rate_bin: float
    codewords: np.ndarray
    seed: int
    constants: DpCodeConstants

    @property
    def n_bins(self) -> int:
        return self.codewords.shape[0]

    @property
    def per_bin(self) -> int:
        return self.codewords.shape[1]

    def flat(self) -> np.ndarray:
        return self.codewords.reshape(-1, self.n)


def generate_sphere_codebook(
    n: int,
    rate: float,
    rate_bin: float,
    constants: DpCodeConstants,
    seed: int,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> SphereCodebook:
    # screen in log space first: the exact sizes below overflow float pow
    # once n*(rate + rate_bin) passes 1024
    log2_cells = math.log2(n) + n * rate + n * rate_bin
    if log2_cells > math.log2(memory_cap) + 1:
        raise CodebookTooLarge(
            f"codebook needs about 2^{log2_cells:.1f} cells, cap is {memory_cap}"
        )
    n_bins, per_bin = _sizes(n, rate, rate_bin)
    if n * n_bins * per_bin > memory_cap:
        raise CodebookTooLarge(
            f"codebook needs {n * n_bins * per_bin} cells, cap is {memory_cap}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([_DP_BOOK_TAG, seed]))
    total = n_bins * per_bin
    g = rng.standard_normal((total, n))
    norms = np.linalg.norm(g, axis=1)
    while np.any(norms == 0):
        bad = norms == 0
        g[bad] = rng.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(g, axis=1)
    words = g * (math.sqrt(n * constants.p_u) / norms)[:, None]
    return SphereCodebook(
        n=n, rate=math.log2(n_bins) / n, rate_bin=math.log2(per_bin) / n,
        codewords=words.reshape(n_bins, per_bin, n), seed=seed,
        constants=constants,
    )


@dataclass
class DpEncodeResult:
    u: np.ndarray
    x: np.ndarray
    bin: int
    index: int
    encoder_fallback: bool   # bin search found no codeword in the window
    power_fallback: bool     # ||u - alpha*s|| exceeded the power sphere


def _transmit(u: np.ndarray, s: np.ndarray, c: DpCodeConstants):
    v = u - c.alpha * s
    if float(v @ v) <= u.size * c.p:
        return v, False
    return np.zeros_like(v), True


def dp_encode(
    m: int,
    s: np.ndarray,
    codebook: SphereCodebook,
    params: DpEncoderParams,
    rng: np.random.Generator,
) -> DpEncodeResult:
    """Search bin m for |<u - alpha*s, s>| <= n*delta1; transmit u - alpha*s.

    The choice among satisfying codewords is uniform; with none, the fixed
    fallback codeword (bin 1, index 1) is used.  Whenever the difference
    vector leaves the power sphere the all-zero sequence is sent instead, so
    the transmitted power never exceeds n*P.
    """
    c = codebook.constants
    if not 1 <= m <= codebook.n_bins:
        raise ConfigError(f"message {m} outside 1..{codebook.n_bins}")
    s = np.asarray(s, dtype=float)
    scores = np.abs(codebook.codewords[m - 1] @ s - c.alpha * float(s @ s))
    hits = np.flatnonzero(scores <= codebook.n * params.delta1)
    if hits.size:
        k = int(hits[rng.integers(0, hits.size)])
        u, b, fb = codebook.codewords[m - 1, k], m, False
    else:
        k, b, fb = 0, 1, True
        u = codebook.codewords[0, 0]
    x, power_fb = _transmit(u, s, c)
    return DpEncodeResult(u=u, x=x, bin=b, index=k,
                          encoder_fallback=fb, power_fallback=power_fb)


def dp_decode(y: np.ndarray, codebook: SphereCodebook) -> int:
    """Bin of the codeword with the largest cosine against y; 0 when y = 0.

    All codewords share one norm, so the argmax of plain inner products is
    the minimum-angle choice; ties resolve to the earliest (bin, index).
    """
    y = np.asarray(y, dtype=float)
    if float(y @ y) == 0.0:
        return 0
    scores = codebook.flat() @ y
    return int(np.argmax(scores)) // codebook.per_bin + 1


class VirtualSphereCodebook:
    """Codebook backend that samples trial outcomes from their exact laws.

    The cosine of a uniform sphere point against any fixed direction has the
    law 2*Beta((n-1)/2, (n-1)/2) - 1.  The bin search over K independent
    codewords succeeds with probability 1 - (1-p)^K where p is the window
    mass under that law; conditioned on success the chosen cosine follows
    the window-restricted law, and the codeword is that cosine times the
    state direction plus an independent uniform orthogonal completion.
    """

    def __init__(self, n: int, rate: float, rate_bin: float,
                 constants: DpCodeConstants):
        self.n = n
        self.constants = constants
        self.log2_bins = n * rate
        self.log2_per_bin = n * rate_bin
        if self.log2_bins < 50:
            self.n_bins = max(1, int(math.floor(2.0 ** self.log2_bins)))
            self.log2_bins = math.log2(self.n_bins)
        else:
            self.n_bins = None
        if self.log2_per_bin < 50:
            self.per_bin = max(1, int(math.floor(2.0 ** self.log2_per_bin)))
            self.log2_per_bin = math.log2(self.per_bin)
        else:
            self.per_bin = None
        self.rate = self.log2_bins / n
        self.rate_bin = self.log2_per_bin / n
        self._beta_a = (n - 1) / 2.0

    def _radius(self) -> float:
        return math.sqrt(self.n * self.constants.p_u)

    def _assemble(self, t_star: float, s: np.ndarray, rng) -> np.ndarray:
        r_u = self._radius()
        s_norm = float(np.linalg.norm(s))
        if s_norm == 0.0:
            return sample_sphere(self.n, r_u, rng)
        s_hat = s / s_norm
        g = rng.standard_normal(self.n)
        g -= (g @ s_hat) * s_hat
        g_norm = float(np.linalg.norm(g))
        while g_norm == 0.0:
            g = rng.standard_normal(self.n)
            g -= (g @ s_hat) * s_hat
            g_norm = float(np.linalg.norm(g))
        resid = math.sqrt(max(r_u ** 2 * (1.0 - t_star ** 2), 0.0))
        return t_star * r_u * s_hat + resid * (g / g_norm)

    def _window(self, s: np.ndarray, delta1: float):
        """Cosine window implied by |<u, s> - alpha ||s||^2| <= n delta1."""
        c = self.constants
        s_sq = float(s @ s)
        s_norm = math.sqrt(s_sq)
        if s_norm == 0.0:
            return None
        half = self.n * delta1 / (self._radius() * s_norm)
        center = c.alpha * s_sq / (self._radius() * s_norm)
        lo = max(center - half, -1.0)
        hi = min(center + half, 1.0)
        return lo, hi

    def _window_mass(self, lo: float, hi: float) -> float:
        if hi <= lo:
            return 0.0
        a = self._beta_a
        if lo >= 0.0:
            # right-tail windows: difference of survival functions avoids
            # the catastrophic cancellation of two cdf values near one
            return float(beta_dist.sf((lo + 1) / 2, a, a)
                         - beta_dist.sf((hi + 1) / 2, a, a))
        return float(beta_dist.cdf((hi + 1) / 2, a, a)
                     - beta_dist.cdf((lo + 1) / 2, a, a))

    def encode(self, m: int, s: np.ndarray, delta1: float, rng):
        """Returns (u, encoder_fallback) with u an actual vector."""
        window = self._window(s, delta1)
        if window is None:
            return sample_sphere(self.n, self._radius(), rng), False
        lo, hi = window
        p = self._window_mass(lo, hi)
        if p > 0.0:
            log_window = math.log(p)
        else:
            # window mass underflows: subtract the two cap tails in log space
            log_lo = log_sphere_cap(self.n, lo)
            log_hi = log_sphere_cap(self.n, hi)
            if log_lo == -np.inf:
                log_window = -np.inf
            elif log_hi == -np.inf:
                log_window = log_lo
            else:
                log_window = log_lo + math.log1p(
                    -math.exp(min(log_hi - log_lo, 0.0)))
        log_k = self.log2_per_bin * math.log(2.0)
        success, _ = _bernoulli_from_tail(log_window, log_k, rng)
        if success:
            t_star = self._sample_window_cosine(lo, hi, rng)
            return self._assemble(t_star, s, rng), False
        # fallback: the fixed first codeword; for bin 1 it is known to have
        # failed the window, elsewhere it is an unconditioned sphere point
        t = self._sample_plain_cosine(rng)
        if m == 1 and p < 1.0:
            for _ in range(1000):
                if not lo <= t <= hi:
                    break
                t = self._sample_plain_cosine(rng)
        return self._assemble(t, s, rng), True

    def _sample_plain_cosine(self, rng) -> float:
        return 2.0 * float(beta_dist.rvs(self._beta_a, self._beta_a,
                                         random_state=rng)) - 1.0

    def _sample_window_cosine(self, lo: float, hi: float, rng) -> float:
        a = self._beta_a
        if lo >= 0.0:
            s_lo = beta_dist.sf((lo + 1) / 2, a, a)
            s_hi = beta_dist.sf((hi + 1) / 2, a, a)
            if s_lo - s_hi <= 1e-300:
                return 0.5 * (lo + hi)
            u = s_hi + rng.random() * (s_lo - s_hi)
            t = 2.0 * float(beta_dist.isf(u, a, a)) - 1.0
        else:
            c_lo = beta_dist.cdf((lo + 1) / 2, a, a)
            c_hi = beta_dist.cdf((hi + 1) / 2, a, a)
            if c_hi - c_lo <= 1e-300:
                return 0.5 * (lo + hi)
            u = c_lo + rng.random() * (c_hi - c_lo)
            t = 2.0 * float(beta_dist.ppf(u, a, a)) - 1.0
        return min(max(t, lo), hi)

    def impostor_beats(self, c_star: float, rng) -> tuple[bool, float]:
        """One Bernoulli for 'some foreign-bin codeword has cosine >= c_star'."""
        if self.n_bins == 1:
            return False, 0.0
        log_q = log_sphere_cap(self.n, c_star)
        if self.n_bins is not None:
            log_count = math.log(self.n_bins - 1) + self.log2_per_bin * math.log(2.0)
        else:
            log_count = (self.log2_bins + self.log2_per_bin) * math.log(2.0)
        return _bernoulli_from_tail(log_q, log_count, rng)


@dataclass
class DpSimParams:
    n: int
    rate: float
    rate_bin: float | None = None
    eps1: float | None = None
    delta1: float | None = None
    eps: float = 0.1
    mode: str = "auto"          # auto | explicit | virtual
    memory_cap: int = DEFAULT_MEMORY_CAP

    def __post_init__(self):
        if self.mode not in ("auto", "explicit", "virtual"):
            raise ConfigError(f"unknown mode {self.mode!r}")


def _resolve_params(spec: DpChannelSpec, params: DpSimParams):
    constants = derive_constants(spec, params.eps1)
    rate_bin = params.rate_bin
    if rate_bin is None:
        rate_bin = rate_bin_default(spec, constants.eps1, params.eps)
    delta1 = params.delta1
    if delta1 is None:
        delta1 = 0.05 * constants.sigma_s2 * constants.alpha
        if delta1 <= 0:
            delta1 = 0.05 * constants.p
    return constants, rate_bin, delta1


def _pick_mode(params: DpSimParams, rate_bin: float) -> str:
    if params.mode != "auto":
        return params.mode
    log2_cells = math.log2(params.n) + params.n * (params.rate + rate_bin)
    return "explicit" if log2_cells <= math.log2(params.memory_cap) else "virtual"


def _draw_message(rng, n_bins, exclude: int = 0) -> int:
    hi = n_bins if n_bins is not None else 2 ** 62
    while True:
        m = int(rng.integers(0, hi)) + 1
        if m != exclude:
            return m


def simulate_dp(
    spec: DpChannelSpec,
    params: DpSimParams,
    jammer: JammerStrategy,
    trials: int,
    seed: int,
    trial_range: tuple[int, int] | None = None,
):
    """Monte Carlo run of the dirty-paper scheme; returns (records, summary).

    Per trial: Gaussian state, bin-search encoding, jammer emission from
    (message, state) under the hard power cap, additive noise, minimum-angle
    decoding.  Virtual mode resolves the decoder comparison from exact laws
    instead of scanning a table; the auto mode switches on the memory guard.
    Trials are seeded independently from (seed, trial index), so slices taken
    with trial_range merge deterministically across workers.
    """
    constants, rate_bin, delta1 = _resolve_params(spec, params)
    mode = _pick_mode(params, rate_bin)
    theta_val = theta(spec, constants.eps1)
    n = params.n

    if mode == "explicit":
        book = generate_sphere_codebook(n, params.rate, rate_bin, constants,
                                        seed, params.memory_cap)
        n_bins, per_bin = book.n_bins, book.per_bin
        rate_real, rate_bin_real = book.rate, book.rate_bin
    else:
        book = VirtualSphereCodebook(n, params.rate, rate_bin, constants)
        n_bins, per_bin = book.n_bins, book.per_bin
        rate_real, rate_bin_real = book.rate, book.rate_bin

    enc = DpEncoderParams(delta1=delta1, eps1=constants.eps1)
    public = PublicCodeParams(n=n, lam=spec.lam, rate=rate_real,
                              rate_bin=rate_bin_real)
    r_u = math.sqrt(n * constants.p_u)
    lo_t, hi_t = trial_range if trial_range is not None else (0, trials)
    if not 0 <= lo_t <= hi_t <= trials:
        raise ConfigError(f"trial_range {trial_range} outside [0, {trials}]")
    records = []
    for t in range(lo_t, hi_t):
        rng = np.random.default_rng(np.random.SeedSequence([_DP_TRIAL_TAG, seed, t]))
        jam_rng = np.random.default_rng(
            np.random.SeedSequence([_DP_TRIAL_TAG, seed, t, 1]))
        s = rng.normal(0.0, math.sqrt(spec.sigma_s2), n) if spec.sigma_s2 > 0 \
            else np.zeros(n)
        m = _draw_message(rng, n_bins)

        if mode == "explicit":
            res = dp_encode(m, s, book, enc, rng)
            u, encoder_fb, power_fb, x = res.u, res.encoder_fallback, \
                res.power_fallback, res.x
        else:
            u, encoder_fb = book.encode(m, s, delta1, rng)
            x, power_fb = _transmit(u, s, constants)

        j = np.asarray(jammer.emit(m, s, public, jam_rng), dtype=float)
        if j.shape != (n,):
            raise ConfigError("jammer emitted a sequence of the wrong length")
        j_power = float(j @ j)
        if j_power > n * spec.lam * (1 + 1e-9):
            raise JammerPowerViolation(
                f"jammer power {j_power:.6g} exceeds budget {n * spec.lam:.6g}")

        z = rng.normal(0.0, math.sqrt(spec.sigma2), n) if spec.sigma2 > 0 \
            else np.zeros(n)
        y = x + s + j + z
        y_norm = float(np.linalg.norm(y))
        c_star = float(y @ u) / (y_norm * r_u) if y_norm > 0 else 0.0

        if mode == "explicit":
            mhat = dp_decode(y, book)
        else:
            if y_norm == 0.0:
                mhat = 0
            else:
                beaten, _ = book.impostor_beats(c_star, rng)
                if beaten:
                    mhat = _draw_message(rng, n_bins,
                                         exclude=1 if encoder_fb else m)
                else:
                    mhat = 1 if encoder_fb else m

        decoded = mhat == m
        if decoded:
            err = ""
        elif encoder_fb:
            err = "fallback"
        elif power_fb:
            err = "power"
        else:
            err = "impostor"
        records.append(DpTrialRecord(
            trial=t, n=n, R=rate_real, Rtilde=rate_bin_real,
            jammer_id=jammer.id, encoder_fallback=encoder_fb, decoded=decoded,
            m=m, mhat=mhat, error_type=err, yu_cosine=c_star,
            power_x=float(x @ x) / n, fallback=power_fb,
            jammer_power=j_power / n,
        ))
    return records, (summarize_dp(records, theta_val) if records else None)
