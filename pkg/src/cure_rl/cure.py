"""Curiosity layer: intrinsic reward from the SRL error and action mixing.

The curious policy is a second SAC agent rewarded by the current
representation error instead of the task reward. During collection each step
draws uniform epsilon and acts with the curious policy when epsilon < p_c.
"""

from __future__ import annotations

from enum import Enum

import numpy as np


class ActionSource(Enum):
    TASK = "task"
    CURIOUS = "curious"
    RANDOM = "random"


def intrinsic_reward(errors: np.ndarray, beta: float) -> np.ndarray:
    """r = beta * per-sample SRL error, recomputed fresh at every update."""
    errors = np.asarray(errors, dtype=np.float32)
    if np.any(errors < 0):
        raise ValueError("SRL errors must be nonnegative")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return beta * errors


def choose_source(mix_rng: np.random.Generator, p_c: float, seeding: bool,
                  curious_available: bool) -> ActionSource:
    """Per-step policy selection; seeding phase always acts at random."""
    if seeding:
        return ActionSource.RANDOM
    if not curious_available:
        return ActionSource.TASK
    eps = mix_rng.random()
    return ActionSource.CURIOUS if eps < p_c else ActionSource.TASK


def update_curious_agent(agent, encoder, obs, actions, intrinsic_rewards, dones,
                         next_obs, rng) -> float | None:
    """One curious-critic step using intrinsic rewards in place of task reward."""
    if len(intrinsic_rewards) != obs.shape[0]:
        raise ValueError(
            f"{len(intrinsic_rewards)} intrinsic rewards for batch of {obs.shape[0]}")
    return agent.update_critic(encoder, obs, actions,
                               np.asarray(intrinsic_rewards, dtype=np.float32),
                               dones, next_obs, rng)
