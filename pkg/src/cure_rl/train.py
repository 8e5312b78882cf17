"""Training orchestration: the per-step collect/update loop, pretraining
modes, evaluation protocol, and checkpoint resume.

Per collected step the loop runs, in order: select action, environment step,
buffer push, batch sample, SRL update (returning the intrinsic reward), task
agent update, curious agent update. Every random draw comes from a named
substream of the run seed, so (config, seed) fully determines all outputs and
disabling the curious policy leaves the remaining streams untouched.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from . import checkpoint as ckpt
from . import cure
from .autodiff import no_grad
from .config import ExperimentConfig, config_hash
from .cure import ActionSource
from .envs import make_task
from .metrics import LossAggregator, MetricsWriter
from .replay import ReplayBuffer, augmented_views, center_crop
from .sac import SacAgent, SacHyperparams
from .srl import SrlModel

log = logging.getLogger(__name__)

# Stable spawn-key indices for the named RNG substreams.
_STREAMS = ("init", "env", "explore", "task_actor", "task_update",
            "curious_actor", "curious_update", "mix", "replay", "crop")
_EVAL_KEY_BASE = 1000

PHASES = ("select", "env", "push", "sample", "srl", "task_ac", "curious_ac")


class RngStreams:
    def __init__(self, seed: int):
        self.seed = seed
        self.gen = {
            name: np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
            for i, name in enumerate(_STREAMS)
        }

    def __getitem__(self, name: str) -> np.random.Generator:
        return self.gen[name]

    def eval_rng(self, eval_index: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=(_EVAL_KEY_BASE + eval_index,)))

    def export_state(self) -> dict:
        return {name: g.bit_generator.state for name, g in self.gen.items()}

    def import_state(self, state: dict):
        for name, g in self.gen.items():
            g.bit_generator.state = state[name]


class Trainer:
    """Owns every mutable piece of one training run."""

    def __init__(self, cfg: ExperimentConfig, out_dir: str | None = None,
                 phase_hook=None):
        cfg.validate()
        self.cfg = cfg
        self.out_dir = out_dir or cfg.out
        os.makedirs(self.out_dir, exist_ok=True)
        self.phase_hook = phase_hook
        self.hash = config_hash(cfg)

        self.streams = RngStreams(cfg.seed)
        self.env = make_task(cfg.task, self.streams["env"], render_size=cfg.render_size,
                             frames=cfg.frames, action_repeat=cfg.action_repeat,
                             horizon=cfg.horizon)
        self.action_dim = self.env.spec.action_dim
        self.crop = cfg.crop

        init_rng = self.streams["init"]
        self.srl = SrlModel(init_rng, cfg.frames, self.crop, cfg.srl.z_dim,
                            head=cfg.srl.head, lr=cfg.srl.lr,
                            lambda_z=cfg.srl.lambda_z, lambda_theta=cfg.srl.lambda_theta,
                            key_tau=cfg.srl.key_tau, decoder_freq=cfg.srl.decoder_freq)
        task_hp = self._hyperparams(cfg.gamma)
        enc_params = self.srl.encoder.params()
        self.task_agent = SacAgent(init_rng, cfg.srl.z_dim, self.action_dim, task_hp,
                                   "task", encoder_params=enc_params)
        self.curious_agent = None
        if cfg.cure.enabled and not cfg.cure.single_policy:
            cure_hp = self._hyperparams(cfg.cure.gamma)
            self.curious_agent = SacAgent(init_rng, cfg.srl.z_dim, self.action_dim,
                                          cure_hp, "cure", encoder_params=enc_params,
                                          update_encoder=cfg.cure.encoder_update)

        self.buffer = ReplayBuffer(cfg.replay.capacity)
        self.agg = LossAggregator()
        self.phase = "main"
        self.phase_t = 0
        self.episode = 0
        self.episode_reward = 0.0
        self.eval_count = 0
        self.obs = None

    def _hyperparams(self, gamma: float) -> SacHyperparams:
        c = self.cfg
        return SacHyperparams(
            hidden_dim=c.hidden_dim, gamma=gamma,
            critic_lr=c.critic.lr, critic_tau=c.critic.tau,
            critic_target_freq=c.critic.target_freq,
            actor_lr=c.actor.lr, actor_freq=c.actor.freq,
            log_std_min=c.actor.log_std[0], log_std_max=c.actor.log_std[1],
            alpha_lr=c.alpha.lr, init_alpha=c.alpha.init)

    # -- action selection ---------------------------------------------------
    def _select_action(self, t: int, action_mode: str):
        cfg = self.cfg
        seeding = t < cfg.init_steps and action_mode != "random"
        if action_mode == "random" or seeding:
            a = self.streams["explore"].uniform(-1.0, 1.0, size=self.action_dim)
            return a, ActionSource.RANDOM
        if action_mode == "curious_only":
            source = ActionSource.CURIOUS
        elif action_mode == "task_only":
            source = ActionSource.TASK
        else:
            source = cure.choose_source(
                self.streams["mix"], cfg.cure.p_c, seeding=False,
                curious_available=self.curious_agent is not None)
        obs_c = center_crop(self.obs, self.crop)
        if source is ActionSource.CURIOUS:
            a = self.curious_agent.act(self.srl.encoder, obs_c,
                                       rng=self.streams["curious_actor"])
        else:
            a = self.task_agent.act(self.srl.encoder, obs_c,
                                    rng=self.streams["task_actor"])
        return a, source

    # -- one collected step ----------------------------------------------------
    def _step_once(self, t: int, action_mode: str, update_task: bool,
                   update_curious: bool, writer: MetricsWriter, eval_enabled: bool):
        cfg = self.cfg
        hook = self.phase_hook

        action, source = self._select_action(t, action_mode)
        if hook:
            hook(t, "select")
        next_obs, reward, done = self.env.step(action)
        if hook:
            hook(t, "env")
        self.buffer.push(self.obs, action, reward, next_obs, done)
        if hook:
            hook(t, "push")
        self.obs = next_obs
        self.episode_reward += reward
        self.agg.add("action_count", 1.0)
        self.agg.add("curious_count", 1.0 if source is ActionSource.CURIOUS else 0.0)

        if t >= cfg.init_steps and len(self.buffer) >= cfg.batch_size:
            batch = self.buffer.sample(cfg.batch_size, self.streams["replay"])
            if hook:
                hook(t, "sample")
            obs_c = center_crop(batch.obs, self.crop)
            next_c = center_crop(batch.next_obs, self.crop)

            if cfg.srl.head == "contrastive":
                anchor, positive = augmented_views(batch.obs, self.crop, self.streams["crop"])
                errors = self.srl.update(anchor=anchor, positive=positive)
            else:
                errors = self.srl.update(obs=obs_c)
            if hook:
                hook(t, "srl")
            self.agg.add("srl", float(np.mean(errors)))
            r_int = None
            if cfg.cure.enabled:
                # reward the state an action leads to: score next_obs so the
                # curious critic sees a direct action -> novelty link
                if cfg.srl.head == "contrastive":
                    na, np_ = augmented_views(batch.next_obs, self.crop,
                                              self.streams["crop"])
                    next_errors = self.srl.srl_error(anchor=na, positive=np_)
                else:
                    next_errors = self.srl.srl_error(obs=next_c)
                r_int = cure.intrinsic_reward(next_errors, cfg.cure.beta)
                self.agg.add("intrinsic", float(np.mean(r_int)))

            if update_task:
                rewards = batch.rewards
                if cfg.cure.enabled and cfg.cure.single_policy:
                    rewards = rewards + r_int
                closs = self.task_agent.update_critic(
                    self.srl.encoder, obs_c, batch.actions, rewards,
                    batch.dones, next_c, self.streams["task_update"])
                self.agg.add("critic_task", closs)
                if t % cfg.actor.freq == 0:
                    with no_grad():
                        z = self.srl.encode(obs_c).data
                    aloss, alloss = self.task_agent.update_actor_and_alpha(
                        z, self.streams["task_update"])
                    self.agg.add("actor_task", aloss)
                    self.agg.add("alpha_task", alloss)
                if t % cfg.critic.target_freq == 0:
                    self.task_agent.polyak()
            if hook:
                hook(t, "task_ac")

            if update_curious and self.curious_agent is not None:
                closs = cure.update_curious_agent(
                    self.curious_agent, self.srl.encoder, obs_c, batch.actions,
                    r_int, batch.dones, next_c, self.streams["curious_update"])
                self.agg.add("critic_cure", closs)
                if t % cfg.actor.freq == 0:
                    with no_grad():
                        z = self.srl.encode(obs_c).data
                    aloss, alloss = self.curious_agent.update_actor_and_alpha(
                        z, self.streams["curious_update"])
                    self.agg.add("actor_cure", aloss)
                    self.agg.add("alpha_cure", alloss)
                if t % cfg.critic.target_freq == 0:
                    self.curious_agent.polyak()
                if hook:
                    hook(t, "curious_ac")

        if done:
            writer.write_row("train", t + 1, self.episode, self.episode_reward,
                             self.agg.flush())
            self.episode += 1
            self.episode_reward = 0.0
            self.obs = self.env.reset()

        if eval_enabled and (t + 1) % cfg.eval.interval == 0:
            mean_reward = self.evaluate()
            writer.write_row("eval", t + 1, self.episode, mean_reward, {})

    # -- phases ----------------------------------------------------------------
    def _loop(self, n_steps: int, *, action_mode: str, update_task: bool,
              update_curious: bool, writer: MetricsWriter, eval_enabled: bool,
              start_t: int = 0):
        if start_t == 0:
            self.obs = self.env.reset()
            self.episode = 0
            self.episode_reward = 0.0
        for t in range(start_t, n_steps):
            try:
                self._step_once(t, action_mode, update_task, update_curious,
                                writer, eval_enabled)
            except Exception as e:
                raise RuntimeError(
                    f"training aborted at {self.phase} step {t}: {e}") from e
            self.phase_t = t + 1

    def run_pretrain(self) -> None:
        cfg = self.cfg
        mode = cfg.pretrain.mode
        if mode == "none":
            return
        self.phase = "pretrain"
        self.phase_t = 0
        path = os.path.join(self.out_dir, "pretrain_metrics.csv")
        with MetricsWriter(path) as writer:
            if mode == "random":
                self._loop(cfg.pretrain.steps, action_mode="random",
                           update_task=False, update_curious=False,
                           writer=writer, eval_enabled=False)
            else:  # cure
                self._loop(cfg.pretrain.steps, action_mode="curious_only",
                           update_task=False, update_curious=True,
                           writer=writer, eval_enabled=False)
        # main phase starts from the pretrained encoder/SRL with a fresh buffer
        self.buffer = ReplayBuffer(cfg.replay.capacity)
        self.phase = "main"
        self.phase_t = 0

    def run_main(self, *, resume: bool = False, cure_only: bool = False) -> str:
        cfg = self.cfg
        self.phase = "main"
        path = os.path.join(self.out_dir, "metrics.csv")
        writer = MetricsWriter(path, append=resume)
        try:
            if cure_only:
                self._loop(cfg.steps, action_mode="curious_only", update_task=False,
                           update_curious=True, writer=writer, eval_enabled=False,
                           start_t=self.phase_t if resume else 0)
            else:
                self._loop(cfg.steps, action_mode="mixed", update_task=True,
                           update_curious=cfg.cure.enabled and not cfg.cure.single_policy,
                           writer=writer, eval_enabled=True,
                           start_t=self.phase_t if resume else 0)
        finally:
            writer.close()
        return path

    # -- evaluation: isolated env and RNG, deterministic task policy -------------
    def evaluate(self, episodes: int | None = None) -> float:
        cfg = self.cfg
        episodes = episodes or cfg.eval.episodes
        rng = self.streams.eval_rng(self.eval_count)
        self.eval_count += 1
        env = make_task(cfg.task, rng, render_size=cfg.render_size, frames=cfg.frames,
                        action_repeat=cfg.action_repeat, horizon=cfg.horizon)
        total = 0.0
        for _ in range(episodes):
            obs = env.reset()
            done = False
            while not done:
                a = self.task_agent.act(self.srl.encoder, center_crop(obs, self.crop),
                                        deterministic=True)
                obs, r, done = env.step(a)
                total += r
        return total / episodes

    # -- checkpointing -----------------------------------------------------------
    def _all_params(self) -> dict:
        out = dict(self.srl.all_param_tensors())
        out.update(self.task_agent.all_param_tensors())
        if self.curious_agent is not None:
            out.update(self.curious_agent.all_param_tensors())
        return out

    def _optimizers(self) -> dict:
        opts = {"opt/srl": self.srl.opt,
                "opt/task.critic": self.task_agent.critic_opt,
                "opt/task.actor": self.task_agent.actor_opt,
                "opt/task.alpha": self.task_agent.alpha_opt}
        if self.curious_agent is not None:
            opts.update({"opt/cure.critic": self.curious_agent.critic_opt,
                         "opt/cure.actor": self.curious_agent.actor_opt,
                         "opt/cure.alpha": self.curious_agent.alpha_opt})
        return opts

    def save_checkpoint(self, path: str | None = None) -> str:
        path = path or os.path.join(self.out_dir, "checkpoint.ckpt")
        arrays = {f"param/{k}": p.data for k, p in self._all_params().items()}
        for prefix, opt in self._optimizers().items():
            arrays.update(opt.export_arrays(prefix))
        arrays.update(self.buffer.export_arrays())
        env_snap = self.env.snapshot()
        arrays["env/stack"] = env_snap["stack"]
        meta = {
            "phase": self.phase,
            "phase_t": self.phase_t,
            "episode": self.episode,
            "episode_reward": self.episode_reward,
            "eval_count": self.eval_count,
            "agg": self.agg.export_state(),
            "buffer_cursor": self.buffer.cursor,
            "buffer_count": self.buffer.count,
            "rng": self.streams.export_state(),
            "opt_t": {name: opt.t for name, opt in self._optimizers().items()},
            "env_inner_step": env_snap["inner_step"],
            "env_state": {k: np.asarray(v).tolist() for k, v in env_snap["state"].items()},
            "env_rng_state": env_snap["rng_state"],
        }
        ckpt.save(path, self.hash, arrays, meta)
        return path

    def load_checkpoint(self, path: str):
        arrays, meta, _ = ckpt.load(path, expected_hash=self.hash)
        for k, p in self._all_params().items():
            p.data = arrays[f"param/{k}"].astype(p.data.dtype).copy()
        for prefix, opt in self._optimizers().items():
            opt.import_arrays(prefix, arrays, meta["opt_t"][prefix])
        self.buffer.import_arrays(arrays, meta["buffer_cursor"], meta["buffer_count"])
        self.streams.import_state(meta["rng"])
        self.phase = meta["phase"]
        self.phase_t = int(meta["phase_t"])
        self.episode = int(meta["episode"])
        self.episode_reward = float(meta["episode_reward"])
        self.eval_count = int(meta["eval_count"])
        self.agg.import_state(meta["agg"])
        env_state = {k: (np.asarray(v) if isinstance(v, list) else float(v))
                     for k, v in meta["env_state"].items()}
        self.env.restore({"inner_step": meta["env_inner_step"],
                          "stack": arrays["env/stack"],
                          "state": env_state,
                          "rng_state": meta["env_rng_state"]})
        self.obs = self.env.stack.copy()


def train(cfg: ExperimentConfig, out_dir: str | None = None,
          resume: str | None = None, phase_hook=None) -> Trainer:
    """Full protocol: optional pretraining phase, then the main loop."""
    trainer = Trainer(cfg, out_dir, phase_hook=phase_hook)
    if resume:
        trainer.load_checkpoint(resume)
        if trainer.phase != "main":
            raise ckpt.CheckpointError(
                f"can only resume a main-phase checkpoint, found {trainer.phase!r}")
        trainer.run_main(resume=True)
    else:
        trainer.run_pretrain()
        trainer.run_main()
    trainer.save_checkpoint()
    return trainer


def run_cure_only(cfg: ExperimentConfig, out_dir: str | None = None) -> Trainer:
    """Train only the curious agent and SRL; no task reward is consumed."""
    if not cfg.cure.enabled or cfg.cure.single_policy:
        raise ValueError("cure-only training requires cure.enabled and a separate policy")
    trainer = Trainer(cfg, out_dir)
    trainer.run_main(cure_only=True)
    trainer.save_checkpoint()
    return trainer
