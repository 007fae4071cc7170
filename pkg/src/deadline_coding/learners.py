"""Belief engines: UCB index, Beta-posterior sampling, and the genie.

All channels are iid, so every learner pools the ACK/NACK bits of all
activated channels into one statistic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .model import clamp_belief


@dataclass(frozen=True)
class UcbState:
    z: int  # channel uses observed, including the free initial sample
    sum: int  # ACKs among them
    beta: float


@dataclass(frozen=True)
class TsState:
    theta0: float  # failure pseudo-count
    theta1: float  # success pseudo-count


def ucb_init(beta: float, mu_star: float, rng) -> UcbState:
    """Start from one free channel observation, drawn as the stream's next uniform."""
    if beta < 3.0:
        raise ValueError(f"UCB needs beta >= 3, got {beta}")
    if beta < 4.0:
        warnings.warn("regret bounds for UCB assume beta >= 4", stacklevel=2)
    first = int(rng.random(1)[0] < mu_star)
    return UcbState(z=1, sum=first, beta=float(beta))


def ucb_index(state: UcbState, n: int) -> float:
    """Unclamped index: pooled mean plus sqrt(beta ln n / (2 z))."""
    if n < 1:
        raise ValueError("frame index starts at 1")
    return state.sum / state.z + math.sqrt(state.beta * math.log(n) / (2.0 * state.z))


def ucb_belief(state: UcbState, n: int) -> float:
    return clamp_belief(ucb_index(state, n))


def ucb_update(state: UcbState, batch: Sequence[int]) -> UcbState:
    if len(batch) == 0:
        return state
    ones = int(np.sum(batch))
    return replace(state, z=state.z + len(batch), sum=state.sum + ones)


def ts_init() -> TsState:
    return TsState(1.0, 1.0)


def ts_belief(state: TsState, rng: np.random.Generator) -> float:
    # density ∝ (1-x)^(theta0-1) x^(theta1-1): successes drive the first numpy shape
    return clamp_belief(rng.beta(state.theta1, state.theta0))


def ts_update(state: TsState, batch: Sequence[int]) -> TsState:
    if len(batch) == 0:
        return state
    ones = int(np.sum(batch))
    return TsState(state.theta0 + (len(batch) - ones), state.theta1 + ones)


def genie_belief(mu_star: float) -> float:
    return clamp_belief(mu_star)
