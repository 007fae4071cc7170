"""Finite-horizon Bellman recursion for the optimal (m, x) coding policy.

Stages are indexed by the number of remaining slots: stage ``s = T`` is the
first slot of the frame and stage 1 the last one before the deadline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import CodeDecision, SystemParams, binomial_tail

log = logging.getLogger(__name__)

TIE_TOL = 1e-12


def tail_matrix(beliefs: np.ndarray, m_top: int, x_top: int) -> np.ndarray:
    """Success probabilities P(Bin(m, mu) >= x) for every belief, m <= m_top, x <= x_top.

    Built with the recursion P_m(x) = mu P_{m-1}(x-1) + (1-mu) P_{m-1}(x),
    which only forms convex combinations: entries with x > m are exactly 0,
    the x = 0 column is exactly 1 and small tails keep their relative accuracy.
    """
    b = np.asarray(beliefs, dtype=float)[:, None]
    q = 1.0 - b
    P = np.zeros((b.shape[0], m_top + 1, x_top + 1))
    P[:, :, 0] = 1.0
    for m in range(1, m_top + 1):
        prev = P[:, m - 1, :]
        P[:, m, 1:] = np.minimum(b * prev[:, :-1] + q * prev[:, 1:], 1.0)
    return P


def _block_caps(params: SystemParams, scale: int) -> np.ndarray:
    return np.array([params.block_cap(x, scale) for x in range(params.a_max + 1)])


def _cap_binds(params: SystemParams, scale: int, m: np.ndarray, x: np.ndarray) -> bool:
    if params.d == 0.0:
        return False
    caps = _block_caps(params, scale)
    soft = np.array(
        [
            params.channel_cap is None or params.block_cap(k, scale) < params.channel_cap
            for k in range(params.a_max + 1)
        ]
    )
    hit = (m > 0) & (m == caps[x]) & soft[x]
    return bool(hit.any())


def _solve_core(beliefs: np.ndarray, params: SystemParams, scale: int = 1):
    T, A, d, lam = params.T, params.a_max, params.d, params.lam
    B = beliefs.shape[0]
    caps = _block_caps(params, scale)
    M = int(caps.max())
    P = tail_matrix(beliefs, M, A)

    mgrid = np.arange(M + 1)[:, None]
    xs = np.arange(A + 1)
    allowed = mgrid <= caps[None, :]
    Xi = xs[:, None]
    xi = xs[None, :]
    rem = np.clip(Xi - xi, 0, None)
    # (X, m, x): x <= X and m within the cap for x
    valid = allowed[None, :, :] & (xi <= Xi)[:, None, :]
    cost = -d * mgrid

    values = np.zeros((B, T + 1, A + 1))
    values[:, 0, :] = 0.0 - lam * xs
    dm = np.zeros((B, T + 1, A + 1), dtype=np.int64)
    dx = np.zeros((B, T + 1, A + 1), dtype=np.int64)
    for s in range(1, T + 1):
        Jp = values[:, s - 1, :]
        gain = xi + Jp[:, rem] - Jp[:, Xi]
        vals = cost[None, None] + P[:, None, :, :] * gain[:, :, None, :]
        vals = np.where(valid[None], vals, -np.inf)
        flat = vals.reshape(B, A + 1, -1)
        best = flat.max(axis=-1)
        # layout is m-major, so the first near-maximal entry has the smallest m, then x
        pick = np.argmax(flat >= best[..., None] - TIE_TOL, axis=-1)
        dm[:, s, :] = pick // (A + 1)
        dx[:, s, :] = pick % (A + 1)
        chosen = np.take_along_axis(flat, pick[..., None], axis=-1)[..., 0]
        values[:, s, :] = Jp + chosen
    return dm, dx, values


def solve_policies(beliefs, params: SystemParams):
    """Solve the recursion for a batch of beliefs.

    Returns ``(m, x, values)`` arrays of shape ``(B, T+1, A+1)``. All work is
    elementwise across the batch, so a belief gets bit-identical tables
    whatever else is in the batch.
    """
    beliefs = np.atleast_1d(np.asarray(beliefs, dtype=float))
    if np.any((beliefs < 0.0) | (beliefs > 1.0)) or np.any(np.isnan(beliefs)):
        raise ValueError("beliefs must lie in [0, 1]; clamp indices before solving")
    scale = 1
    while True:
        dm, dx, values = _solve_core(beliefs, params, scale)
        if not _cap_binds(params, scale, dm, dx):
            return dm, dx, values
        log.warning("block-length search cap binds at scale %d; doubling", scale)
        scale *= 2


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Optimal decisions and values J_s(X) for one belief.

    ``m[s, X]`` and ``x[s, X]`` hold the code chosen at stage ``s`` with ``X``
    packets left; row 0 is unused. ``values[0]`` is the terminal penalty.
    """

    params: SystemParams
    belief: float
    m: np.ndarray
    x: np.ndarray
    values: np.ndarray

    def decision(self, s: int, X: int) -> CodeDecision:
        return CodeDecision(int(self.m[s, X]), int(self.x[s, X]))

    def is_idle(self) -> bool:
        return not self.m[1:].any()

    def same_decisions(self, other: "PolicyTable", a: int | None = None) -> bool:
        """Compare decisions on every stage for queue lengths up to ``a``."""
        hi = self.params.a_max if a is None else a
        return bool(
            np.array_equal(self.m[1:, : hi + 1], other.m[1:, : hi + 1])
            and np.array_equal(self.x[1:, : hi + 1], other.x[1:, : hi + 1])
        )

    def to_dict(self) -> dict:
        p = self.params
        stages = []
        for s in range(p.T, 0, -1):
            stages.append(
                {
                    "stage": s,
                    "slot": p.T - s + 1,
                    "decisions": [
                        {"queue": X, "m": int(self.m[s, X]), "x": int(self.x[s, X])}
                        for X in range(p.a_max + 1)
                    ],
                    "values": [float(v) for v in self.values[s]],
                }
            )
        return {
            "belief": self.belief,
            "params": {
                "T": p.T,
                "d": p.d,
                "lambda": p.lam,
                "a_max": p.a_max,
                "channel_cap": p.channel_cap,
            },
            "terminal_values": [float(v) for v in self.values[0]],
            "stages": stages,
        }


@dataclass(frozen=True, eq=False)
class PolicyEvaluation:
    """Expected frame revenue under the true channel mean, per initial queue length."""

    expected_revenue: np.ndarray


def solve_policy(belief: float, params: SystemParams) -> PolicyTable:
    dm, dx, values = solve_policies([belief], params)
    m, x, v = dm[0], dx[0], values[0]
    for arr in (m, x, v):
        arr.flags.writeable = False
    return PolicyTable(params, float(belief), m, x, v)


def evaluate_policy(table: PolicyTable, mu_star: float, params: SystemParams) -> PolicyEvaluation:
    """Expected revenue of the table's decisions when channels have mean ``mu_star``."""
    if table.params != params:
        raise ValueError("policy table was solved for different parameters")
    A = params.a_max
    E = [0.0 - params.lam * X for X in range(A + 1)]
    for s in range(1, params.T + 1):
        nxt = []
        for X in range(A + 1):
            m, x = table.decision(s, X)
            p = binomial_tail(m, x, mu_star)
            nxt.append(-params.d * m + p * (x + E[X - x]) + (1.0 - p) * E[X])
        E = nxt
    return PolicyEvaluation(np.array(E))


def evaluate_decisions(dm: np.ndarray, dx: np.ndarray, mu_star: float, params: SystemParams) -> np.ndarray:
    """Batched :func:`evaluate_policy` over stacked decision tables; returns ``(B, A+1)``."""
    A, d = params.a_max, params.d
    B = dm.shape[0]
    Pstar = tail_matrix(np.array([mu_star]), int(dm.max(initial=0)), A)[0]
    xs = np.arange(A + 1)
    E = np.broadcast_to(-params.lam * xs, (B, A + 1)).astype(float)
    for s in range(1, params.T + 1):
        m = dm[:, s, :]
        x = dx[:, s, :]
        p = Pstar[m, x]
        succ = np.take_along_axis(E, xs[None, :] - x, axis=1)
        E = -d * m + p * (x + succ) + (1.0 - p) * E
    return E


@lru_cache(maxsize=256)
def genie_table(mu_star: float, params: SystemParams) -> PolicyTable:
    """The policy a genie would run; cached because it is belief-constant."""
    return solve_policy(float(mu_star), params)


def genie_values(mu_star: float, params: SystemParams) -> np.ndarray:
    """J*(a) for every a: the best expected frame revenue when the mean is known."""
    return genie_table(float(mu_star), params).values[params.T]


def pseudo_regret_increment(a: int, belief: float, mu_star: float, params: SystemParams) -> float:
    """Expected revenue lost in a frame with ``a`` arrivals by acting on ``belief``.

    Both sides go through :func:`evaluate_policy`, so a belief that induces the
    genie's decisions scores exactly zero.
    """
    if a == 0:
        return 0.0
    best = evaluate_policy(genie_table(float(mu_star), params), mu_star, params)
    got = evaluate_policy(solve_policy(belief, params), mu_star, params)
    return float(best.expected_revenue[a] - got.expected_revenue[a])
