"""DDPG resource manager: actor/critic, replay, OU exploration, soft targets."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..env import StreamingEnv, map_tanh
from .memory import Batch, ReplayMemory
from .nets import DenseNet, make_optimizer, soft_update
from .noise import OuNoise

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("episode", "mean_reward", "critic_loss", "actor_grad_norm", "noise_sigma")


class TrainingAborted(RuntimeError):
    pass


@dataclass
class AgentConfig:
    discount: float = 0.95
    tau: float = 0.005
    actor_lr: float = 1e-6
    critic_lr: float = 1e-4
    batch_size: int = 128
    memory_capacity: int = 6000
    hidden: tuple = (512, 256, 128)
    optimizer: str = "sgd"
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_sigma_final: float = 0.02
    ou_dt: float = 1.0
    warmup_batches: int = 5
    final_init: float = 3e-3

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1 or self.memory_capacity < self.batch_size:
            raise ValueError("memory must hold at least one batch")
        self.hidden = tuple(int(h) for h in self.hidden)


class DdpgAgent:
    def __init__(self, state_dim: int, action_dim: int, config: AgentConfig, seed: int = 0):
        self.cfg = config
        self.state_dim, self.action_dim = state_dim, action_dim
        ss = np.random.SeedSequence(seed)
        init_rng, noise_rng, sample_rng = (np.random.default_rng(s) for s in ss.spawn(3))
        self.actor = DenseNet((state_dim, *config.hidden, action_dim), "tanh", init_rng,
                              config.final_init)
        self.critic = DenseNet((state_dim + action_dim, *config.hidden, 1), "identity", init_rng,
                               config.final_init)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = make_optimizer(config.optimizer, self.actor.params(), config.actor_lr)
        self.critic_opt = make_optimizer(config.optimizer, self.critic.params(), config.critic_lr)
        self.memory = ReplayMemory(config.memory_capacity, state_dim, action_dim)
        self.noise = OuNoise(action_dim, config.ou_theta, config.ou_sigma, config.ou_dt, noise_rng)
        self.rng = sample_rng
        self.clamp_counter: dict = {}

    def policy(self, state, net: DenseNet | None = None) -> np.ndarray:
        """Deterministic action in [0, 1]."""
        return map_tanh((net or self.actor).forward(state))

    def select_action(self, state, explore: bool = True) -> np.ndarray:
        a = self.policy(state)
        if explore:
            a = a + self.noise.sample()
        return np.clip(a, 0.0, 1.0)

    def critic_update(self, batch: Batch) -> float:
        cfg = self.cfg
        n = len(batch.reward)
        next_a = self.policy(batch.next_state, self.actor_target)
        q_next = self.critic_target.forward(np.hstack([batch.next_state, next_a]))[:, 0]
        y = batch.reward + cfg.discount * q_next
        q = self.critic.forward(np.hstack([batch.state, batch.action]))[:, 0]
        err = y - q
        loss = float(np.mean(err**2))
        if not np.isfinite(loss):
            raise TrainingAborted(f"non-finite critic loss {loss}")
        grads, _ = self.critic.backward((-2.0 / n * err)[:, None])
        self.critic_opt.step(grads)
        return loss

    def actor_gradients(self, batch: Batch):
        """Gradients of -mean Q(s, pi(s)) w.r.t. actor params."""
        n = len(batch.reward)
        raw = self.actor.forward(batch.state)
        a = (raw + 1.0) / 2.0
        self.critic.forward(np.hstack([batch.state, a]))
        _, g_in = self.critic.backward(np.full((n, 1), -1.0 / n))
        g_a = g_in[:, self.state_dim:] * 0.5
        grads, _ = self.actor.backward(g_a)
        return grads

    def actor_update(self, batch: Batch) -> float:
        grads = self.actor_gradients(batch)
        norm = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
        if not np.isfinite(norm):
            raise TrainingAborted("non-finite actor gradient")
        self.actor_opt.step(grads)
        return norm

    def soft_update(self) -> None:
        soft_update(self.actor, self.actor_target, self.cfg.tau)
        soft_update(self.critic, self.critic_target, self.cfg.tau)

    def learn(self):
        """One critic/actor/target update; None during warm-up."""
        cfg = self.cfg
        if len(self.memory) < cfg.warmup_batches * cfg.batch_size:
            return None
        batch = self.memory.sample(cfg.batch_size, self.rng)
        loss = self.critic_update(batch)
        norm = self.actor_update(batch)
        self.soft_update()
        return loss, norm

    def state_dict(self) -> dict:
        out = {}
        for name, net in (("actor", self.actor), ("critic", self.critic),
                          ("actor_target", self.actor_target),
                          ("critic_target", self.critic_target)):
            for i, p in enumerate(net.params()):
                out[f"{name}.{i}"] = p
        return out

    def save(self, path) -> None:
        np.savez(path, format_version=np.array(1), **self.state_dict())

    def load(self, path) -> None:
        data = np.load(path)
        if int(data["format_version"]) != 1:
            raise ValueError("unsupported checkpoint version")
        for key, arr in self.state_dict().items():
            if data[key].shape != arr.shape:
                raise ValueError(f"shape mismatch for {key}")
            arr[...] = data[key]


def episode_seed(seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([seed, episode]).generate_state(1)[0])


def noise_sigma(cfg: AgentConfig, episode: int, episodes: int) -> float:
    if episodes <= 1:
        return cfg.ou_sigma
    frac = episode / (episodes - 1)
    return cfg.ou_sigma + (cfg.ou_sigma_final - cfg.ou_sigma) * frac


def run_episode(env: StreamingEnv, act, seed: int, on_step=None, decide=None) -> dict:
    """Roll one episode with ``act(state) -> [0,1]^(4U)``; returns summary stats.

    ``decide() -> decisions`` replaces ``act`` for policies that pick
    deliveries directly (the recorded action is then ``None``).
    """
    state = env.reset(seed)
    rewards, rebuf, psnr, var = [], 0.0, [], []
    per_user = np.zeros(env.cfg.n_users)
    while True:
        if decide is not None:
            action, decisions = None, decide()
        else:
            action = act(state)
            decisions = env.decode(action)
        out = env.step(decisions)
        if on_step is not None:
            on_step(state, action, out)
        rewards.append(out.reward)
        per_user += out.scores
        for f, d in zip(out.factors, decisions):
            rebuf += f.rebuffer
            if d.delivers:
                psnr.append(f.quality)
                var.append(f.variation)
        state = out.state
        if out.done:
            break
    return {"mean_reward": float(np.mean(rewards)), "total_rebuffer": rebuf,
            "mean_psnr": float(np.mean(psnr)) if psnr else 0.0,
            "mean_variation": float(np.mean(var)) if var else 0.0,
            "per_user": per_user}


def train(env: StreamingEnv, agent: DdpgAgent, episodes: int, seed: int,
          on_episode=None, on_step=None) -> list[dict]:
    """Algorithm loop; returns one learning-curve row per episode."""
    curve = []
    for ep in range(episodes):
        sigma = noise_sigma(agent.cfg, ep, episodes)
        agent.noise.sigma = sigma
        agent.noise.reset()
        losses, norms = [], []

        def step_hook(state, action, out):
            agent.memory.store(state, action, out.reward, out.state)
            res = agent.learn()
            if res is not None:
                losses.append(res[0])
                norms.append(res[1])
            if on_step is not None:
                on_step(state, action, out)

        stats = run_episode(env, lambda s: agent.select_action(s, explore=True),
                            episode_seed(seed, ep), step_hook)
        row = {"episode": ep, "mean_reward": stats["mean_reward"],
               "critic_loss": float(np.mean(losses)) if losses else float("nan"),
               "actor_grad_norm": float(np.mean(norms)) if norms else float("nan"),
               "noise_sigma": sigma}
        curve.append(row)
        if on_episode is not None:
            on_episode(ep, row, stats)
        log.debug("episode %d reward %.4f", ep, row["mean_reward"])
    return curve
