"""Structural quantities of the optimal coding policy and UCB regret-bound curves."""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate

from .dp import TIE_TOL, genie_values, solve_policies, solve_policy
from .model import ArrivalDistribution, SystemParams

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class NoInteriorMaximum(ValueError):
    """The continuous value has no positive interior maximum: idling is optimal."""


class UnboundedRegretBound(ValueError):
    """The bounded-regret formula degenerates (true mean sits on a policy boundary)."""


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / SQRT2)


def normal_pdf(z: float) -> float:
    return INV_SQRT_2PI * math.exp(-0.5 * z * z)


# ---------------------------------------------------------------------------
# critical point and the single-packet closed form
# ---------------------------------------------------------------------------


def critical_point(params: SystemParams, tol: float = 1e-7) -> float:
    """Belief threshold below which the optimal policy never activates a channel.

    Bisection on the idle/non-idle predicate inside ``[d/(1+lam), 2d/(1+lam)]``;
    the idle set is an interval containing 0, so the predicate is monotone.
    """
    if params.d <= 0.0:
        raise ValueError("critical point needs d > 0: with free channels nothing idles")
    lo = params.d / (1.0 + params.lam)
    hi = min(1.0, 2.0 * params.d / (1.0 + params.lam))

    def idle(mu: float) -> bool:
        return solve_policy(mu, params).is_idle()

    if idle(hi):
        return hi
    if not idle(lo):
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if idle(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class DelayTolerantPolicy(NamedTuple):
    m: tuple  # m[s - 1] is the block length at stage s (s remaining slots)
    values: tuple  # J_0(1) .. J_T(1)


def delay_tolerant_policy(mu: float, params: SystemParams) -> DelayTolerantPolicy:
    """Threshold rule for a single packet with ``T`` attempts.

    With continuation gain G = 1 - J_{s-1}(1), adding a channel to a block of
    ``k`` pays off iff (1-mu)^k * mu * G > d, so the block length is the first
    ``k`` where that marginal stops being positive.
    """
    if params.a_max != 1:
        raise ValueError("the closed form covers a_max = 1 only")
    cap = params.channel_cap
    J = [-params.lam]
    ms = []
    for _ in range(params.T):
        gain = 1.0 - J[-1]
        k = 0
        while (1.0 - mu) ** k * mu * gain - params.d > TIE_TOL and (cap is None or k < cap):
            k += 1
        ms.append(k)
        J.append(J[-1] + (-params.d * k + (1.0 - (1.0 - mu) ** k) * gain if k else 0.0))
    return DelayTolerantPolicy(tuple(ms), tuple(J))


# ---------------------------------------------------------------------------
# continuous (Gaussian) approximation for a single slot
# ---------------------------------------------------------------------------


def _check_continuous(m: float, mu: float) -> None:
    if m <= 0.0:
        raise ValueError(f"block length must be positive, got {m}")
    if not 0.0 < mu < 1.0:
        raise ValueError(f"continuous approximation needs 0 < mu < 1, got {mu}")


def nu(m: float, x: float, mu: float, d: float, lam: float, convention: str = "success") -> float:
    """Gaussian approximation of the one-slot gain of an (m, x) code.

    ``convention="success"`` uses P(S_m >= x) ~ Phi((m mu - x) / sigma).
    ``convention="printed"`` uses the opposite sign of the argument, which
    gives the failure probability instead and has no interior maximum.
    """
    _check_continuous(m, mu)
    sigma = math.sqrt(m * mu * (1.0 - mu))
    z = (m * mu - x) / sigma
    if convention == "printed":
        z = -z
    elif convention != "success":
        raise ValueError(f"unknown convention {convention!r}")
    return -d * m + x * normal_cdf(z) * (1.0 + lam)


def _dnu_dm(m: float, x: float, mu: float, d: float, lam: float) -> float:
    sigma = math.sqrt(m * mu * (1.0 - mu))
    z = (m * mu - x) / sigma
    return -d + x * (1.0 + lam) * normal_pdf(z) * (mu + x / m) / (2.0 * sigma)


def block_length_residual(m: float, x: float, mu: float, d: float, lam: float) -> float:
    """First-order optimality residual in m; zero at the optimal block length.

    (1+lam) x / sigma * phi((x - m mu)/sigma) - 2d / (x/m + mu), sigma = sqrt(m mu (1-mu)).
    """
    _check_continuous(m, mu)
    sigma = math.sqrt(m * mu * (1.0 - mu))
    z = (x - m * mu) / sigma
    return (1.0 + lam) * x / sigma * normal_pdf(z) - 2.0 * d / (x / m + mu)


def _golden_max(f, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    e = a + GOLDEN * (b - a)
    fc, fe = f(c), f(e)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + GOLDEN * (b - a)
            fe = f(e)
    return 0.5 * (a + b)


def optimal_block_length(x: float, mu: float, d: float, lam: float, resid_tol: float = 1e-10) -> float:
    """Maximizer over m > 0 of ``nu(m, x)``.

    Golden-section search on a bracket grown outward from the median point
    m = x/mu, then bisection on the sign of the first-order residual.
    Raises :class:`NoInteriorMaximum` when the best value is not positive.
    """
    if x <= 0.0:
        raise ValueError("x must be positive")
    if d <= 0.0:
        raise NoInteriorMaximum("free channels: nu increases without bound in m")
    _check_continuous(1.0, mu)

    def slope(m: float) -> float:
        return _dnu_dm(m, x, mu, d, lam)

    m0 = x / mu
    lo = hi = m0
    if slope(m0) > 0.0:
        while slope(hi) > 0.0:
            lo, hi = hi, 2.0 * hi
    else:
        while slope(lo) <= 0.0:
            hi, lo = lo, 0.5 * lo
            if lo < 1e-12 * m0:
                raise NoInteriorMaximum(f"no stationary point for x={x}, mu={mu}")

    m_star = _golden_max(lambda m: nu(m, x, mu, d, lam), lo, hi, 1e-12)

    # refine on the residual; slope and residual share a sign
    step = max(1e-9, 1e-9 * m_star)
    a, b = m_star, m_star
    while slope(a) <= 0.0:
        a = max(a - step, 0.5 * a)
        step *= 2.0
    step = max(1e-9, 1e-9 * m_star)
    while slope(b) > 0.0:
        b += step
        step *= 2.0
    m_star = 0.5 * (a + b)
    for _ in range(200):
        r = block_length_residual(m_star, x, mu, d, lam)
        if abs(r) <= resid_tol or b - a <= 4.0 * np.spacing(m_star):
            break
        if r > 0.0:
            a = m_star
        else:
            b = m_star
        m_star = 0.5 * (a + b)

    if nu(m_star, x, mu, d, lam) <= 0.0:
        raise NoInteriorMaximum(f"nu is nonpositive at the stationary point for x={x}, mu={mu}")
    return m_star


class ContinuousOptimum(NamedTuple):
    m: float
    x: float
    rate: float
    value: float
    idle: bool


IDLE_OPTIMUM = ContinuousOptimum(0.0, 0.0, float("nan"), 0.0, True)


def continuous_optimum(a: int, mu: float, d: float, lam: float, tol: float = 1e-9,
                       x_min: float = 1.0) -> ContinuousOptimum:
    """Jointly optimal (m, x) under the Gaussian approximation with ``a`` packets queued.

    The word length ranges over ``[x_min, a]``. Below one packet the normal
    approximation breaks down (it favours vanishing codes with rate above 1),
    so the default floor is 1.
    """
    if a <= 0:
        return IDLE_OPTIMUM
    _check_continuous(1.0, mu)

    def best_for(x: float):
        try:
            m = optimal_block_length(x, mu, d, lam)
        except NoInteriorMaximum:
            return None, 0.0
        return m, nu(m, x, mu, d, lam)

    if not 0.0 < x_min <= a:
        raise ValueError(f"x_min must lie in (0, a], got {x_min}")
    # the value need not be unimodal in x (it can have no interior maximum on
    # part of the range), so scan a grid before refining
    grid = np.linspace(x_min, float(a), 8 * a + 1)
    scores = [best_for(float(x))[1] for x in grid]
    k = int(np.argmax(scores))
    lo = float(grid[max(k - 1, 0)])
    hi = float(grid[min(k + 1, grid.size - 1)])
    x_gs = _golden_max(lambda x: best_for(x)[1], lo, hi, tol)
    m_gs, v_gs = best_for(x_gs)
    if scores[k] > v_gs:
        x_gs = float(grid[k])
        m_gs, v_gs = best_for(x_gs)
    m_a, v_a = best_for(float(a))
    if m_a is not None and v_a >= v_gs:
        m1, x1, v1 = m_a, float(a), v_a
    else:
        m1, x1, v1 = m_gs, x_gs, v_gs
    if m1 is None or v1 <= 0.0:
        return IDLE_OPTIMUM
    return ContinuousOptimum(m1, x1, x1 / m1, v1, False)


# ---------------------------------------------------------------------------
# regret-bound ingredients
# ---------------------------------------------------------------------------


def n_epsilon(eps: float) -> int:
    """Smallest n >= 1 with n - log(n+1)/eps > 0.

    n - log(n+1)/eps is convex in n, so once it is nonpositive at n = 1 the
    positive set is a half-line; doubling then integer bisection finds it.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")

    def g(n: int) -> float:
        return n - math.log(n + 1) / eps

    if g(1) > 0.0:
        return 1
    lo, hi = 1, 2
    while g(hi) <= 0.0:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if g(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def psi(eps: float, T: int, m_max: int, rel_tol: float = 1e-9, chunk: int = 1 << 16) -> float:
    """Upper estimate of Psi(eps) = n_eps + T M pi^2/2 * sum_{n >= n_eps} 1/(n - log(n+1)/eps)^2.

    The series is summed in chunks until the last term is small enough that
    replacing the remainder by its integral overshoots by less than
    ``rel_tol`` relative; the integral tail is then added.
    """
    n0 = n_epsilon(eps)
    coef = T * m_max * math.pi ** 2 / 2.0
    total = 0.0
    start = n0
    while True:
        n = np.arange(start, start + chunk, dtype=float)
        terms = 1.0 / (n - np.log1p(n) / eps) ** 2
        total += math.fsum(terms)
        last = terms[-1]
        start += chunk
        if coef * last <= rel_tol * (n0 + coef * total):
            break
    K = start - 1

    def f(t: float) -> float:
        return 1.0 / (t - math.log1p(t) / eps) ** 2

    tail, _ = integrate.quad(f, K, np.inf, epsabs=1e-15, epsrel=1e-12, limit=200)
    return n0 + coef * (total + tail)


def zeta_interval(a: int, mu_star: float, params: SystemParams, grid_step: float = 1e-3,
                  tol: float = 1e-6) -> tuple[float, float]:
    """Largest interval around ``mu_star`` on which the decisions for ``a`` arrivals do not change."""
    if grid_step <= 0.0:
        raise ValueError("grid_step must be positive")
    ref = solve_policy(mu_star, params)

    def same(mu: float) -> bool:
        return ref.same_decisions(solve_policy(mu, params), a)

    def edge(direction: int) -> float:
        n_steps = int(math.ceil((1.0 - mu_star if direction > 0 else mu_star) / grid_step))
        if n_steps == 0:
            return mu_star
        grid = np.clip(mu_star + direction * grid_step * np.arange(1, n_steps + 1), 0.0, 1.0)
        dm, dx, _ = solve_policies(grid, params)
        hi = a + 1
        diff = np.any(dm[:, 1:, :hi] != ref.m[None, 1:, :hi], axis=(1, 2)) | np.any(
            dx[:, 1:, :hi] != ref.x[None, 1:, :hi], axis=(1, 2)
        )
        if not diff.any():
            return 1.0 if direction > 0 else 0.0
        k = int(np.argmax(diff))
        inside = mu_star if k == 0 else float(grid[k - 1])
        outside = float(grid[k])
        while abs(outside - inside) > tol:
            mid = 0.5 * (inside + outside)
            if same(mid):
                inside = mid
            else:
                outside = mid
        return inside

    return edge(-1), edge(+1)


class BoundSetup(NamedTuple):
    """Everything the regret bound needs that does not depend on the horizon."""

    case: str  # "logarithmic" or "bounded"
    zeta: float
    log_coef: float  # multiplies log N (logarithmic case only)
    constant: float


def bound_setup(mu_star: float, params: SystemParams, arrivals: ArrivalDistribution, beta: float,
                zeta_intervals: Optional[dict] = None, gap: str = "zeta",
                grid_step: float = 1e-3) -> BoundSetup:
    """Pre-compute the regret-bound coefficients for UCB with exploration ``beta``.

    ``gap="d"`` swaps the logarithmic-case denominator (zeta - mu*)^2 for
    (d - mu*)^2.
    """
    if beta < 4.0:
        raise ValueError("the regret bound requires beta >= 4")
    zeta = critical_point(params)
    M = params.m_max
    T = params.T
    alphas = arrivals.pmf
    if mu_star < zeta:
        ref = zeta if gap == "zeta" else params.d
        if gap not in ("zeta", "d"):
            raise ValueError(f"unknown gap convention {gap!r}")
        denom = (ref - mu_star) ** 2
        weight = math.fsum(alphas[a] * params.revenue_floor(a) for a in range(len(alphas)))
        log_coef = weight * 2.0 * beta / denom
        constant = weight * T * M * math.pi ** 2 / 6.0
        return BoundSetup("logarithmic", zeta, log_coef, constant)

    J = genie_values(mu_star, params)
    terms = []
    for a, alpha in enumerate(alphas):
        scale = alpha * (J[a] + params.revenue_floor(a))
        if a == 0 or scale == 0.0:
            continue
        if zeta_intervals is not None and a in zeta_intervals:
            upper = zeta_intervals[a][1]
        else:
            upper = zeta_interval(a, mu_star, params, grid_step)[1]
        eps = (mu_star - upper) ** 2 / (2.0 * beta)
        if eps == 0.0:
            raise UnboundedRegretBound(f"mu* = {mu_star} lies on the policy boundary for a={a}")
        terms.append(scale * (T * M * math.pi ** 2 / 3.0 + psi(eps, T, M)))
    return BoundSetup("bounded", zeta, 0.0, math.fsum(terms))


def regret_upper_bound(mu_star: float, params: SystemParams, arrivals: ArrivalDistribution,
                       beta: float, N: int, **kwargs) -> float:
    """Regret bound for UCB at horizon ``N`` (logarithmic below the critical point, constant above)."""
    setup = bound_setup(mu_star, params, arrivals, beta, **kwargs)
    return bound_curve(setup, [N])[0]


def bound_curve(setup: BoundSetup, ns: Iterable[int]) -> np.ndarray:
    ns = np.asarray(list(ns), dtype=float)
    if setup.case == "bounded":
        return np.full(ns.shape, setup.constant)
    return setup.log_coef * np.log(ns) + setup.constant


def sweep(lo: float, hi: float, steps: int) -> np.ndarray:
    return np.linspace(lo, hi, steps)


def policy_bands(params: SystemParams, mus: Sequence[float]) -> np.ndarray:
    """Block length per belief and slot (first slot first) for a full queue of ``a_max``."""
    dm, _, _ = solve_policies(np.asarray(mus, dtype=float), params)
    return dm[:, params.T:0:-1, params.a_max]
