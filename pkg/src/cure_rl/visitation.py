"""Representation-error visitation experiment.

Rolls out three policies (random, task-trained, curiosity-trained) in the
same task, scores every visited observation with a frozen reference SRL
model, and reports min/mean/max error per step for each policy as CSV.
"""

from __future__ import annotations

import numpy as np

from . import checkpoint as ckpt
from .config import ExperimentConfig
from .envs import make_task
from .layers import load_param_data
from .replay import center_crop, random_crop
from .sac import GaussianActor
from .srl import Encoder, SrlModel
from .autodiff import Tensor, no_grad

_VISIT_KEY_BASE = 2000


def _load_arrays(path: str) -> dict:
    arrays, _, _ = ckpt.load(path, expected_hash=None)
    return arrays


def build_reference_srl(cfg: ExperimentConfig, checkpoint_path: str) -> SrlModel:
    """Frozen SRL model (encoder + head) restored from a finished run."""
    rng = np.random.default_rng(0)
    model = SrlModel(rng, cfg.frames, cfg.crop, cfg.srl.z_dim, head=cfg.srl.head,
                     lambda_z=cfg.srl.lambda_z, lambda_theta=cfg.srl.lambda_theta)
    arrays = _load_arrays(checkpoint_path)
    load_param_data(model.all_param_tensors(), arrays, prefix="param/")
    return model


class CheckpointPolicy:
    """Deterministic policy (encoder + tanh-mean actor) from a checkpoint."""

    def __init__(self, cfg: ExperimentConfig, checkpoint_path: str, agent: str,
                 action_dim: int):
        if agent not in ("task", "cure"):
            raise ValueError(f"agent must be task or cure, got {agent!r}")
        rng = np.random.default_rng(0)
        self.crop = cfg.crop
        self.encoder = Encoder(rng, cfg.frames, cfg.crop, cfg.srl.z_dim)
        self.actor = GaussianActor(rng, cfg.srl.z_dim, action_dim, cfg.hidden_dim,
                                   cfg.actor.log_std[0], cfg.actor.log_std[1],
                                   f"{agent}.actor")
        arrays = _load_arrays(checkpoint_path)
        load_param_data(self.encoder.params(), arrays, prefix="param/")
        load_param_data(self.actor.params(), arrays, prefix="param/")

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        with no_grad():
            z = self.encoder(Tensor(center_crop(obs, self.crop)[None]))
        # same protocol as training-time evaluation: tanh-mean action
        return self.actor.act(z, deterministic=True)[0]


class RandomPolicy:
    def __init__(self, action_dim: int):
        self.action_dim = action_dim

    def act(self, obs, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=self.action_dim)


def score_trajectories(cfg: ExperimentConfig, ref_srl: SrlModel, policy,
                       episodes: int, policy_index: int) -> np.ndarray:
    """Per-step SRL errors over rollouts of one policy under the frozen model."""
    rng = np.random.default_rng(
        np.random.SeedSequence(cfg.seed, spawn_key=(_VISIT_KEY_BASE + policy_index,)))
    env = make_task(cfg.task, rng, render_size=cfg.render_size, frames=cfg.frames,
                    action_repeat=cfg.action_repeat, horizon=cfg.horizon)
    crop_rng = np.random.default_rng(
        np.random.SeedSequence(cfg.seed, spawn_key=(_VISIT_KEY_BASE + 100 + policy_index,)))
    errors = []
    for _ in range(episodes):
        obs = env.reset()
        done = False
        while not done:
            if ref_srl.head == "rae":
                e = ref_srl.srl_error(obs=center_crop(obs, cfg.crop)[None])
            else:
                a = random_crop(obs, cfg.crop, crop_rng)[None]
                p = random_crop(obs, cfg.crop, crop_rng)[None]
                # a batch of one has no negatives; score against itself + one shifted copy
                e = ref_srl.srl_error(anchor=np.concatenate([a, p]),
                                      positive=np.concatenate([p, a]))[:1]
            errors.append(float(e[0]))
            obs, _, done = env.step(policy.act(obs, rng))
    return np.asarray(errors)


def visitation_experiment(cfg: ExperimentConfig, srl_checkpoint: str,
                          task_checkpoint: str, cure_checkpoint: str,
                          episodes: int, out_csv: str) -> dict:
    """Score {random, task, cure} policies against one frozen SRL model."""
    ref = build_reference_srl(cfg, srl_checkpoint)
    probe_rng = np.random.default_rng(0)
    env = make_task(cfg.task, probe_rng, render_size=cfg.render_size, frames=cfg.frames)
    action_dim = env.spec.action_dim
    policies = {
        "random": RandomPolicy(action_dim),
        "task": CheckpointPolicy(cfg, task_checkpoint, "task", action_dim),
        "cure": CheckpointPolicy(cfg, cure_checkpoint, "cure", action_dim),
    }
    results = {}
    for i, (name, policy) in enumerate(policies.items()):
        errs = score_trajectories(cfg, ref, policy, episodes, i)
        results[name] = {"min": float(errs.min()), "mean": float(errs.mean()),
                         "max": float(errs.max())}
    with open(out_csv, "w") as f:
        f.write("policy,min,mean,max\n")
        for name in ("random", "task", "cure"):
            r = results[name]
            f.write(f"{name},{r['min']:.9g},{r['mean']:.9g},{r['max']:.9g}\n")
    return results
