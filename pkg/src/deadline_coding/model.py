"""System parameters, arrival laws, channel sampling and the per-slot revenue primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

PMF_TOL = 1e-12


class ParamError(ValueError):
    """Raised for invalid system parameters or arrival distributions."""


@dataclass(frozen=True)
class SystemParams:
    """Frame length, channel cost, penalty slope and arrival cap.

    ``channel_cap`` limits the number of channels activated in a single slot;
    ``None`` means unlimited (the cost term then bounds the useful block length).
    """

    T: int
    d: float
    lam: float
    a_max: int
    channel_cap: Optional[int] = None

    def __post_init__(self) -> None:
        if not isinstance(self.T, (int, np.integer)) or self.T < 1:
            raise ParamError(f"T must be a positive integer, got {self.T!r}")
        if not 0.0 <= self.d <= 1.0:
            raise ParamError(f"d must lie in [0, 1], got {self.d!r}")
        if self.lam < 0.0:
            raise ParamError(f"lambda must be nonnegative, got {self.lam!r}")
        if not isinstance(self.a_max, (int, np.integer)) or self.a_max < 0:
            raise ParamError(f"a_max must be a nonnegative integer, got {self.a_max!r}")
        if self.channel_cap is not None and (
            not isinstance(self.channel_cap, (int, np.integer)) or self.channel_cap < 1
        ):
            raise ParamError(f"channel_cap must be a positive integer, got {self.channel_cap!r}")
        if self.d == 0.0 and self.channel_cap is None:
            raise ParamError("d = 0 requires a channel_cap (channel use would be unbounded)")

    @property
    def m_max(self) -> int:
        """Cap on the total channel uses in one frame."""
        if self.d == 0.0:
            return self.T * self.channel_cap
        bound = math.ceil(self.T * self.a_max / self.d)
        if self.channel_cap is not None:
            bound = min(bound, self.T * self.channel_cap)
        return bound

    def revenue_floor(self, a: int) -> float:
        """Crude bound B_a with E[J(a, pi)] >= -B_a for any belief-driven policy."""
        if a == 0:
            return 0.0
        if self.d == 0.0:
            return self.lam * a
        return self.T * a / self.d + self.lam * a

    def block_cap(self, x: int, scale: int = 1) -> int:
        """Largest block length worth searching when encoding ``x`` packets.

        The one-step gain of sending ``x`` packets never exceeds ``x * (1 + lam)``,
        so blocks longer than ``x * (1 + lam) / d`` are dominated by idling.
        """
        if x == 0:
            return 0
        if self.d == 0.0:
            return self.channel_cap
        cap = scale * math.ceil(x * (1.0 + self.lam) / self.d)
        if self.channel_cap is not None:
            cap = min(cap, self.channel_cap)
        return cap


@dataclass(frozen=True)
class ArrivalDistribution:
    pmf: tuple

    def __post_init__(self) -> None:
        pmf = tuple(float(p) for p in self.pmf)
        if not pmf:
            raise ParamError("arrival pmf must have at least one entry")
        if any(p < 0.0 or not math.isfinite(p) for p in pmf):
            raise ParamError("arrival pmf entries must be finite and nonnegative")
        if abs(math.fsum(pmf) - 1.0) > PMF_TOL:
            raise ParamError(f"arrival pmf sums to {math.fsum(pmf)!r}, expected 1")
        object.__setattr__(self, "pmf", pmf)

    @property
    def a_max(self) -> int:
        return len(self.pmf) - 1

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(np.asarray(self.pmf))
        c[-1] = 1.0
        return c

    def support(self) -> list[int]:
        return [a for a, p in enumerate(self.pmf) if p > 0.0]


class CodeDecision(NamedTuple):
    """An (m, x) code: ``x`` packets spread over ``m`` activated channels."""

    m: int
    x: int


IDLE = CodeDecision(0, 0)


def clamp_belief(mu: float) -> float:
    """Map a raw estimate or index onto a usable channel-mean belief."""
    if math.isnan(mu):
        raise ParamError("belief is NaN")
    return min(1.0, max(0.0, float(mu)))


def _log_pmf_exp(m: int, k: int, mu: float) -> float:
    return math.exp(math.log(math.comb(m, k)) + k * math.log(mu) + (m - k) * math.log1p(-mu))


def binomial_tail(m: int, x: int, mu: float) -> float:
    """P(Binomial(m, mu) >= x).

    Sums probability masses outward from the tail boundary, building each
    term from its neighbour by a ratio, and always over the smaller tail.
    """
    if x <= 0:
        return 1.0
    if x > m:
        return 0.0
    if mu <= 0.0:
        return 0.0
    if mu >= 1.0:
        return 1.0
    q = 1.0 - mu
    if x > m * mu:
        # upper tail, k = x..m
        term = _log_pmf_exp(m, x, mu)
        total = 0.0
        ratio = mu / q
        for k in range(x, m + 1):
            total += term
            term *= (m - k) / (k + 1) * ratio
            if term == 0.0:
                break
        return min(1.0, total)
    # lower tail, k = x-1 down to 0
    k0 = x - 1
    term = _log_pmf_exp(m, k0, mu)
    total = 0.0
    ratio = q / mu
    for k in range(k0, -1, -1):
        total += term
        term *= k / (m - k + 1) * ratio
        if term == 0.0:
            break
    return max(0.0, 1.0 - total)


def throughput(decision: CodeDecision, realization: Sequence[int]) -> int:
    m, x = decision
    if len(realization) != m:
        raise ValueError(f"realization has {len(realization)} entries for a block of {m}")
    return x if int(np.sum(realization)) >= x and m > 0 else 0


def revenue(decision: CodeDecision, realization: Sequence[int], d: float) -> float:
    return throughput(decision, realization) - d * decision.m


def sample_channels(m: int, mu_star: float, rng) -> np.ndarray:
    """Draw ``m`` iid Bernoulli(mu_star) channel states, consuming ``m`` uniforms."""
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    return (rng.random(m) < mu_star).astype(np.uint8)


def sample_arrival(dist: ArrivalDistribution, rng) -> int:
    u = rng.random(1)
    a = int(np.searchsorted(dist.cdf, u[0], side="right"))
    return min(a, dist.a_max)


def uniform_arrivals(a_max: int) -> ArrivalDistribution:
    if a_max < 0:
        raise ParamError("a_max must be nonnegative")
    return ArrivalDistribution(tuple([1.0 / (a_max + 1)] * (a_max + 1)))


def truncated_poisson_arrivals(rate: float, a_max: int) -> ArrivalDistribution:
    if rate <= 0.0:
        raise ParamError("Poisson rate must be positive")
    if a_max < 0:
        raise ParamError("a_max must be nonnegative")
    logw = [k * math.log(rate) - rate - math.lgamma(k + 1) for k in range(a_max + 1)]
    top = max(logw)
    w = [math.exp(v - top) for v in logw]
    s = math.fsum(w)
    return ArrivalDistribution(tuple(v / s for v in w))


def point_arrivals(a: int) -> ArrivalDistribution:
    """Deterministic arrivals: exactly ``a`` packets every frame."""
    if a < 0:
        raise ParamError("arrival count must be nonnegative")
    return ArrivalDistribution(tuple([0.0] * a + [1.0]))
