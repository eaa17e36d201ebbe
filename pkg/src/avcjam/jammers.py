"""Jamming adversaries for both channel families.

A strategy sees the message, the full state sequence, and public code
parameters; it never sees the shared-randomness (codebook) seed.  That
boundary is structural: generators receive a PublicCodeParams view with no
seed field, and emit() refuses views that smuggle one in.  Stochastic
strategies are deterministic functions of the caller-supplied RNG, so a fixed
adversary seed fixes the attack.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DegenerateChannel, JammerPowerViolation
from .probability import ConditionalKernel

_POWER_SLACK = 1 + 1e-9
_PATTERN_TAG = 0x6A616D  # namespace for per-message perturbation streams


@dataclass(frozen=True)
class PublicCodeParams:
    """Adversary-visible code parameters.  Deliberately has no seed field."""

    n: int
    lam: float | None = None      # jammer power budget (Gaussian channels)
    n_jam: int | None = None      # jamming alphabet size (discrete channels)
    rate: float | None = None
    rate_bin: float | None = None


@dataclass(frozen=True)
class JammerStrategy:
    id: str
    knows_message: bool
    knows_state: bool
    power: float | None           # Lambda for Gaussian strategies, else None
    generator: Callable[..., np.ndarray]

    def emit(self, m: int, s: np.ndarray, public: PublicCodeParams, rng) -> np.ndarray:
        # runtime capability check: the view must not carry codebook seeds
        for attr in ("seed", "codebook_seed", "master_seed"):
            if hasattr(public, attr):
                raise ConfigError("adversary view must not expose a seed")
        j = np.asarray(self.generator(m, np.asarray(s), public, rng))
        if self.power is not None:
            if float(j @ j) > j.size * self.power * _POWER_SLACK:
                raise JammerPowerViolation(
                    f"strategy {self.id} emitted ||j||^2 > n*Lambda"
                )
        return j


def memoryless_jammer(q: ConditionalKernel) -> JammerStrategy:
    """j_i ~ Q(. | s_i), independent across positions."""
    cdf = np.cumsum(q.t, axis=1)

    def gen(m, s, public, rng):
        u = rng.random(s.size)
        return (u[:, None] > cdf[s]).sum(axis=1).astype(np.int64)

    return JammerStrategy(
        id="memoryless", knows_message=False, knows_state=True, power=None,
        generator=gen,
    )


def gaussian_iid_truncated(lam: float, delta: float) -> JammerStrategy:
    """i.i.d. N(0, Lambda - delta), resampled whole until inside the power ball.

    Resampling implements exact conditioning on feasibility.
    """
    if not 0 < delta < lam:
        raise DegenerateChannel("need 0 < delta < Lambda")
    sd = np.sqrt(lam - delta)

    def gen(m, s, public, rng):
        n = s.size
        while True:
            j = rng.normal(0.0, sd, size=n)
            if j @ j <= n * lam:
                return j

    return JammerStrategy(
        id="gauss_trunc", knows_message=False, knows_state=False, power=lam,
        generator=gen,
    )


def state_cancelling_jammer(lam: float) -> JammerStrategy:
    """Antiparallel to the state at the largest feasible scale (clipped)."""
    if lam < 0:
        raise DegenerateChannel("Lambda must be >= 0")

    def gen(m, s, public, rng):
        norm2 = float(s @ s)
        if norm2 == 0.0:
            return np.zeros(s.size)
        c = min(1.0, np.sqrt(s.size * lam / norm2))
        return -c * s

    return JammerStrategy(
        id="state_cancel", knows_message=False, knows_state=True, power=lam,
        generator=gen,
    )


def random_direction_full_power(lam: float) -> JammerStrategy:
    """Uniform direction at exactly the power budget."""
    if lam <= 0:
        raise DegenerateChannel("Lambda must be > 0")

    def gen(m, s, public, rng):
        n = s.size
        while True:
            g = rng.normal(size=n)
            norm = np.linalg.norm(g)
            if norm > 0:
                return g * (np.sqrt(n * lam) / norm)

    return JammerStrategy(
        id="rand_dir", knows_message=False, knows_state=False, power=lam,
        generator=gen,
    )


def message_aware_jammer(
    base: JammerStrategy,
    message_map: Optional[Callable[[int], int]] = None,
) -> JammerStrategy:
    """Perturb a base strategy deterministically per message.

    message_map sends each message to a perturbation key; the key seeds a sign
    pattern (real-valued base) or a per-position symbol shift (discrete base).
    Both preserve feasibility.  With message_map None the wrapper is the
    identity and reproduces the base strategy exactly.
    """

    def gen(m, s, public, rng):
        j = base.generator(m, s, public, rng)
        if message_map is None:
            return j
        pat = np.random.default_rng(
            np.random.SeedSequence([_PATTERN_TAG, int(message_map(int(m)))])
        )
        j = np.asarray(j)
        if np.issubdtype(j.dtype, np.floating):
            signs = pat.integers(0, 2, size=j.size) * 2 - 1
            return j * signs  # sign flips keep the norm
        if public.n_jam is None:
            raise ConfigError("discrete perturbation needs public.n_jam")
        shift = pat.integers(0, public.n_jam, size=j.size)
        return (j + shift) % public.n_jam

    return JammerStrategy(
        id=f"msg_aware[{base.id}]",
        knows_message=message_map is not None,
        knows_state=base.knows_state,
        power=base.power,
        generator=gen,
    )


def zero_jammer() -> JammerStrategy:
    """No interference; the Lambda -> 0 reference point."""

    def gen(m, s, public, rng):
        return np.zeros(s.size)

    return JammerStrategy(
        id="zero", knows_message=False, knows_state=False, power=0.0,
        generator=gen,
    )
