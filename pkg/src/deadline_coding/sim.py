"""Frame-by-frame simulation of learners driving the optimal coding policy.

Each replication owns two random streams derived from ``(base_seed, r)``:

* the environment stream supplies uniforms, consumed in a fixed order per
  replication: one at start-up (the free initial channel sample, used by UCB
  and discarded by the other learners), then per frame one for the arrival
  and ``m`` for every slot that activates ``m`` channels;
* the learner stream feeds Thompson sampling's Beta draws.

Stream seeds come from SplitMix64::

    seed_r   = splitmix64(base_seed XOR splitmix64(r))
    env      = numpy PCG64(seed_r)
    learner  = numpy PCG64(splitmix64(seed_r XOR 0xD1B54A32D192ED03))

Experiments run replications in lockstep batches. Every operation in the
batch path is elementwise per replication, so a replication's trace does not
depend on which other replications share its batch, and results are
identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import analysis
from .dp import evaluate_decisions, genie_table, pseudo_regret_increment, solve_policies, solve_policy
from .learners import (
    TsState,
    UcbState,
    genie_belief,
    ts_belief,
    ts_init,
    ts_update,
    ucb_belief,
    ucb_init,
    ucb_update,
)
from .model import ArrivalDistribution, CodeDecision, SystemParams, sample_arrival, sample_channels

MASK64 = (1 << 64) - 1
LEARNER_SALT = 0xD1B54A32D192ED03
TRANSITIONS = ("realized", "pseudocode")
BUFFER_SIZE = 4096


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def replication_seed(base_seed: int, r: int) -> int:
    return splitmix64((base_seed & MASK64) ^ splitmix64(r))


@dataclass
class Streams:
    env: np.random.Generator
    learner: np.random.Generator


def replication_streams(base_seed: int, r: int) -> Streams:
    seed = replication_seed(base_seed, r)
    return Streams(
        env=np.random.Generator(np.random.PCG64(seed)),
        learner=np.random.Generator(np.random.PCG64(splitmix64(seed ^ LEARNER_SALT))),
    )


@dataclass(frozen=True)
class LearnerSpec:
    kind: str  # "ucb", "ts" or "genie"
    beta: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in ("ucb", "ts", "genie"):
            raise ValueError(f"unknown learner {self.kind!r}")
        if self.kind == "ucb":
            if self.beta is None or self.beta < 3.0:
                raise ValueError("ucb learner needs beta >= 3")
        elif self.beta is not None:
            raise ValueError(f"{self.kind} learner takes no beta")

    @property
    def label(self) -> str:
        return f"ucb(beta={self.beta:g})" if self.kind == "ucb" else self.kind


@dataclass(frozen=True)
class GenieState:
    mu_star: float


LearnerState = Union[UcbState, TsState, GenieState]


@dataclass(frozen=True)
class ExperimentConfig:
    params: SystemParams
    arrivals: ArrivalDistribution
    mu_star: float
    learner: LearnerSpec
    horizon: int
    replications: int
    base_seed: int
    transition_mode: str = "realized"

    def __post_init__(self) -> None:
        if self.arrivals.a_max != self.params.a_max:
            raise ValueError(
                f"arrival pmf covers 0..{self.arrivals.a_max} but params.a_max is {self.params.a_max}"
            )
        if not 0.0 <= self.mu_star <= 1.0:
            raise ValueError("mu_star must lie in [0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.transition_mode not in TRANSITIONS:
            raise ValueError(f"transition_mode must be one of {TRANSITIONS}")


@dataclass
class FrameOutcome:
    n: int
    arrival: int
    belief: float
    decisions: list  # CodeDecision per slot, first slot first
    realizations: list  # channel bit arrays per slot
    delivered: int
    revenue: float
    regret: float

    @property
    def feedback(self) -> np.ndarray:
        if not self.realizations:
            return np.zeros(0, dtype=np.uint8)
        return np.concatenate(self.realizations)


@dataclass
class RegretCurve:
    n: np.ndarray
    mean_cum_regret: np.ndarray
    se_cum_regret: np.ndarray
    mean_throughput: np.ndarray
    final_regret: np.ndarray = field(repr=False)  # per replication

    @property
    def replications(self) -> int:
        return int(self.final_regret.shape[0])


def init_learner(spec: LearnerSpec, mu_star: float, streams: Streams) -> LearnerState:
    # the first environment uniform is reserved for UCB's free sample
    if spec.kind == "ucb":
        return ucb_init(spec.beta, mu_star, streams.env)
    streams.env.random(1)
    if spec.kind == "ts":
        return ts_init()
    return GenieState(mu_star)


def current_belief(state: LearnerState, n: int, streams: Streams) -> float:
    if isinstance(state, UcbState):
        return ucb_belief(state, n)
    if isinstance(state, TsState):
        return ts_belief(state, streams.learner)
    return genie_belief(state.mu_star)


def update_learner(state: LearnerState, batch: np.ndarray) -> LearnerState:
    if isinstance(state, UcbState):
        return ucb_update(state, batch)
    if isinstance(state, TsState):
        return ts_update(state, batch)
    return state


def run_frame(state: LearnerState, n: int, mu_star: float, params: SystemParams,
              arrivals: ArrivalDistribution, streams: Streams,
              transition_mode: str = "realized") -> tuple[FrameOutcome, LearnerState]:
    """Play one frame: the belief is fixed from past feedback, the frame's bits update it afterwards."""
    if n < 1:
        raise ValueError("frame index starts at 1")
    a = sample_arrival(arrivals, streams.env)
    belief = current_belief(state, n, streams)
    table = solve_policy(belief, params)
    X = a
    decisions, realizations = [], []
    delivered = 0
    revenue = 0.0
    for s in range(params.T, 0, -1):
        m, x = table.decision(s, X)
        bits = sample_channels(m, mu_star, streams.env)
        tau = x if m > 0 and int(bits.sum()) >= x else 0
        decisions.append(CodeDecision(m, x))
        realizations.append(bits)
        delivered += tau
        revenue += tau - params.d * m
        if transition_mode == "realized":
            X -= tau
        elif m >= x:
            X -= x
    revenue -= params.lam * X
    regret = pseudo_regret_increment(a, belief, mu_star, params)
    outcome = FrameOutcome(n, a, belief, decisions, realizations, delivered, revenue, regret)
    feedback = outcome.feedback
    return outcome, update_learner(state, feedback)


def run_replication(config: ExperimentConfig, r: int) -> list[FrameOutcome]:
    """Full per-frame trace of replication ``r`` (reference path, slow)."""
    if not 0 <= r < config.replications:
        raise ValueError(f"replication index {r} out of range")
    streams = replication_streams(config.base_seed, r)
    state = init_learner(config.learner, config.mu_star, streams)
    trace = []
    for n in range(1, config.horizon + 1):
        outcome, state = run_frame(state, n, config.mu_star, config.params, config.arrivals,
                                   streams, config.transition_mode)
        trace.append(outcome)
    return trace


class _UniformBuffers:
    """Per-replication uniform streams, read in blocks; values match successive ``Generator.random`` calls."""

    def __init__(self, gens: list, size: int = BUFFER_SIZE):
        self.gens = gens
        self.size = size
        self.buf = np.stack([g.random(size) for g in gens])
        self.pos = np.zeros(len(gens), dtype=np.int64)

    def take(self, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        width = int(counts.max(initial=0))
        if width > self.size:
            raise ValueError("block longer than the uniform buffer")
        for r in np.nonzero(self.pos + counts > self.size)[0]:
            keep = self.buf[r, self.pos[r]:]
            self.buf[r, : keep.size] = keep
            self.buf[r, keep.size:] = self.gens[r].random(self.size - keep.size)
            self.pos[r] = 0
        offsets = np.arange(width)
        idx = np.minimum(self.pos[:, None] + offsets[None, :], self.size - 1)
        vals = np.take_along_axis(self.buf, idx, axis=1)
        mask = offsets[None, :] < counts[:, None]
        self.pos += counts
        return vals, mask


@dataclass
class BatchTrace:
    """Per-replication, per-frame arrays from the lockstep engine."""

    indices: np.ndarray
    regret: np.ndarray  # (R, N) pseudo-regret increments
    delivered: np.ndarray  # (R, N)
    revenue: np.ndarray  # (R, N) realized revenue
    channel_uses: np.ndarray  # (R, N)
    beliefs: np.ndarray  # (R, N)


def simulate_batch(config: ExperimentConfig, indices) -> BatchTrace:
    """Run the replications in ``indices`` in lockstep, vectorized over replications."""
    indices = np.asarray(list(indices), dtype=np.int64)
    R = indices.size
    p = config.params
    mu_star = config.mu_star
    N, T, A, d = config.horizon, p.T, p.a_max, p.d
    streams = [replication_streams(config.base_seed, int(r)) for r in indices]
    env = _UniformBuffers([s.env for s in streams])
    cdf = config.arrivals.cdf
    rows = np.arange(R)

    g = genie_table(mu_star, p)
    j_star = evaluate_decisions(g.m[None], g.x[None], mu_star, p)[0]

    first, _ = env.take(np.ones(R, dtype=np.int64))
    kind = config.learner.kind
    if kind == "ucb":
        z = np.ones(R, dtype=np.int64)
        ones_total = (first[:, 0] < mu_star).astype(np.int64)
        beta = float(config.learner.beta)
    elif kind == "ts":
        theta0 = np.ones(R)
        theta1 = np.ones(R)

    out = BatchTrace(
        indices,
        np.zeros((R, N)),
        np.zeros((R, N), dtype=np.int64),
        np.zeros((R, N)),
        np.zeros((R, N), dtype=np.int64),
        np.zeros((R, N)),
    )
    one = np.ones(R, dtype=np.int64)
    for n in range(1, N + 1):
        u, _ = env.take(one)
        a = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), A)

        if kind == "ucb":
            bonus = np.sqrt(beta * math.log(n) / (2.0 * z))
            beliefs = np.minimum(1.0, np.maximum(0.0, ones_total / z + bonus))
        elif kind == "ts":
            beliefs = np.array(
                [min(1.0, max(0.0, s.learner.beta(t1, t0))) for s, t1, t0 in zip(streams, theta1, theta0)]
            )
        else:
            beliefs = np.full(R, mu_star)

        dm, dx, _ = solve_policies(beliefs, p)
        expected = evaluate_decisions(dm, dx, mu_star, p)
        out.regret[:, n - 1] = j_star[a] - expected[rows, a]
        out.beliefs[:, n - 1] = beliefs

        X = a.copy()
        uses = np.zeros(R, dtype=np.int64)
        acks = np.zeros(R, dtype=np.int64)
        delivered = np.zeros(R, dtype=np.int64)
        revenue = np.zeros(R)
        for s in range(T, 0, -1):
            m = dm[rows, s, X]
            x = dx[rows, s, X]
            vals, mask = env.take(m)
            S = ((vals < mu_star) & mask).sum(axis=1)
            tau = np.where((m > 0) & (S >= x), x, 0)
            uses += m
            acks += S
            delivered += tau
            revenue += tau - d * m
            if config.transition_mode == "realized":
                X = X - tau
            else:
                X = np.where(m >= x, X - x, X)
        revenue -= p.lam * X
        out.delivered[:, n - 1] = delivered
        out.revenue[:, n - 1] = revenue
        out.channel_uses[:, n - 1] = uses

        if kind == "ucb":
            z = z + uses
            ones_total = ones_total + acks
        elif kind == "ts":
            theta0 = theta0 + (uses - acks)
            theta1 = theta1 + acks
    return out


def _run_chunk(args):
    config, indices = args
    trace = simulate_batch(config, indices)
    return trace.regret, trace.delivered


def default_workers() -> int:
    return max(1, int(os.environ.get("DEADLINE_CODING_WORKERS", "1")))


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> RegretCurve:
    """Monte Carlo regret and throughput curves over ``config.replications`` replications."""
    workers = default_workers() if workers is None else max(1, int(workers))
    R = config.replications
    chunks = [c for c in np.array_split(np.arange(R), min(workers, R)) if c.size]
    if len(chunks) == 1:
        parts = [_run_chunk((config, chunks[0]))]
    else:
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(_run_chunk, [(config, c) for c in chunks]))
    regret = np.concatenate([pt[0] for pt in parts], axis=0)
    delivered = np.concatenate([pt[1] for pt in parts], axis=0)
    return aggregate(regret, delivered)


def aggregate(regret: np.ndarray, delivered: np.ndarray) -> RegretCurve:
    """Reduce per-replication traces in replication-index order."""
    R, N = regret.shape
    cum = np.cumsum(regret, axis=1)
    mean = cum.mean(axis=0)
    se = cum.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.zeros(N)
    return RegretCurve(
        n=np.arange(1, N + 1),
        mean_cum_regret=mean,
        se_cum_regret=se,
        mean_throughput=delivered.mean(axis=0),
        final_regret=cum[:, -1].copy(),
    )


def bound_overlay(config: ExperimentConfig, ns=None, **kwargs) -> np.ndarray:
    """UCB regret upper bound evaluated at each frame index."""
    if config.learner.kind != "ucb":
        raise ValueError("the regret bound applies to the UCB learner only")
    setup = analysis.bound_setup(config.mu_star, config.params, config.arrivals,
                                 config.learner.beta, **kwargs)
    if ns is None:
        ns = range(1, config.horizon + 1)
    return analysis.bound_curve(setup, ns)
