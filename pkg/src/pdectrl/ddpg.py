"""Deterministic policy gradient training with action descriptors.

Replay buffer, target networks, Gaussian exploration noise with a
1/episode variance schedule, critic and actor updates, and the episode
loop, parameterized over three actor variants:

  vector      one network mapping the state to all k action scalars
  separate    a shared feature trunk with k per-component heads
  descriptor  one network mapping (state, descriptor) to a single scalar,
              evaluated once per descriptor

The buffer stores the k action scalars u, never the executable action
field the adapter produces from them.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import nn
from .adapters import DescriptorSet
from .errors import ConfigurationError, ShapeMismatchError, SimulationBlowUpError
from .nn import Network, NetworkSpec, clone_network, init_network

RUNLOG_CSV_HEADER = "run,episode,mean_reward_per_step,noise_variance,aborts"


@dataclass(eq=False)
class TransitionSample:
    """One interaction (x, u, x', r); u is the k-vector of action scalars."""

    x: np.ndarray
    u: np.ndarray
    x_next: np.ndarray
    r: float


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform sampling (with replacement)."""

    def __init__(self, capacity: int = 20000, seed=0):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.rng = np.random.default_rng(seed)
        self._storage: list = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._storage)

    def add(self, sample: TransitionSample) -> None:
        if len(self._storage) < self.capacity:
            self._storage.append(sample)
        else:
            self._storage[self._next] = sample
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int) -> list:
        if not self._storage:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, len(self._storage), size=batch_size)
        return [self._storage[i] for i in idx]

    def items(self) -> tuple:
        """Snapshot of the current contents (for tests and diagnostics)."""
        return tuple(self._storage)


def soft_update(target_params, source_params, tau: float) -> None:
    """Blend every target parameter toward its source: t <- t + tau (s - t).

    This is the convex combination (1 - tau) t + tau s, written in the form
    that is an exact no-op at tau = 0, an exact copy at tau = 1, and exactly
    preserves already-equal parameters for any tau.
    """
    if len(target_params) != len(source_params):
        raise ShapeMismatchError("parameter lists differ in length")
    if tau == 0.0:
        return
    for t, s in zip(target_params, source_params):
        if t.shape != s.shape:
            raise ShapeMismatchError(f"parameter shapes differ: {t.shape} vs {s.shape}")
        if tau == 1.0:
            t[...] = s
        else:
            t += tau * (s - t)


def _soft_update_networks(target_nets, source_nets, tau: float) -> None:
    for tn, sn in zip(target_nets, source_nets):
        soft_update(tn.parameters(), sn.parameters(), tau)
        tn.version += 1


# ---------------------------------------------------------------------------
# actor variants

def _range_map(activation: str, lo: float, hi: float, out: np.ndarray) -> np.ndarray:
    """Map the final activation's natural range onto [lo, hi]."""
    if activation == "sigmoid":
        return lo + (hi - lo) * out
    if activation == "tanh":
        return 0.5 * (lo + hi) + 0.5 * (hi - lo) * out
    return out


def _range_scale(activation: str, lo: float, hi: float) -> float:
    if activation == "sigmoid":
        return hi - lo
    if activation == "tanh":
        return 0.5 * (hi - lo)
    return 1.0


class VectorActor:
    """Plain DDPG actor: state in, k action scalars out."""

    name = "vector"

    def __init__(self, net: Network, lo: float, hi: float):
        self.net = net
        self.lo = float(lo)
        self.hi = float(hi)
        self._scale = _range_scale(net.layers[-1].activation, lo, hi)

    @property
    def k(self) -> int:
        return self.net.out_dim

    def act(self, x) -> np.ndarray:
        return self.forward_batch(np.asarray(x)[None])[0][0]

    def forward_batch(self, states):
        out, cache = nn.forward(self.net, states)
        return _range_map(self.net.layers[-1].activation, self.lo, self.hi, out), cache

    def backward_batch(self, ctx, d_u):
        return nn.backward(self.net, ctx, np.asarray(d_u) * self._scale)

    def ascend(self, grads, lr: float) -> None:
        nn.apply_update(self.net, grads, -lr)

    def networks(self):
        return [self.net]

    def parameters(self):
        return self.net.parameters()

    def clone(self) -> "VectorActor":
        return VectorActor(clone_network(self.net), self.lo, self.hi)


class SeparateActor:
    """One head per action component over a shared feature trunk.

    With convolution layers the trunk is the shared conv/flatten stage; in
    the dense-only configuration the trunk is the first dense layer.
    """

    name = "separate"

    def __init__(self, trunk: Network, heads: list, lo: float, hi: float):
        self.trunk = trunk
        self.heads = list(heads)
        self.lo = float(lo)
        self.hi = float(hi)
        self._act = self.heads[0].layers[-1].activation
        self._scale = _range_scale(self._act, lo, hi)

    @property
    def k(self) -> int:
        return len(self.heads)

    def act(self, x) -> np.ndarray:
        return self.forward_batch(np.asarray(x)[None])[0][0]

    def forward_batch(self, states):
        feat, trunk_cache = nn.forward(self.trunk, states)
        outs = []
        head_caches = []
        for head in self.heads:
            o, c = nn.forward(head, feat)
            outs.append(o)
            head_caches.append(c)
        u = _range_map(self._act, self.lo, self.hi, np.concatenate(outs, axis=1))
        return u, (trunk_cache, head_caches)

    def backward_batch(self, ctx, d_u):
        trunk_cache, head_caches = ctx
        d_u = np.asarray(d_u) * self._scale
        head_grads = []
        d_feat = None
        for h, (head, cache) in enumerate(zip(self.heads, head_caches)):
            g = nn.backward(head, cache, d_u[:, h : h + 1])
            head_grads.append(g)
            d_feat = g.main_input_grad if d_feat is None else d_feat + g.main_input_grad
        trunk_grads = nn.backward(self.trunk, trunk_cache, d_feat)
        return (trunk_grads, head_grads)

    def ascend(self, grads, lr: float) -> None:
        trunk_grads, head_grads = grads
        nn.apply_update(self.trunk, trunk_grads, -lr)
        for head, g in zip(self.heads, head_grads):
            nn.apply_update(head, g, -lr)

    def networks(self):
        return [self.trunk, *self.heads]

    def parameters(self):
        out = []
        for net in self.networks():
            out.extend(net.parameters())
        return out

    def clone(self) -> "SeparateActor":
        return SeparateActor(
            clone_network(self.trunk), [clone_network(h) for h in self.heads], self.lo, self.hi
        )


class DescriptorActor:
    """Descriptor-conditioned actor: (state, c_i) -> one scalar, evaluated
    once per descriptor to assemble the k-vector u."""

    name = "descriptor"

    def __init__(self, net: Network, descriptors: DescriptorSet, lo: float, hi: float):
        if net.aux_width != descriptors.dim:
            raise ShapeMismatchError(
                f"network aux width {net.aux_width} != descriptor dimension {descriptors.dim}"
            )
        self.net = net
        self.descriptors = descriptors
        self.lo = float(lo)
        self.hi = float(hi)
        self._scale = _range_scale(net.layers[-1].activation, lo, hi)

    @property
    def k(self) -> int:
        return self.descriptors.k

    def act(self, x) -> np.ndarray:
        return self.forward_batch(np.asarray(x)[None])[0][0]

    def forward_batch(self, states):
        states = np.asarray(states)
        batch = states.shape[0]
        k = self.k
        rep = np.repeat(states, k, axis=0)
        aux = np.tile(self.descriptors.coords, (batch, 1))
        out, cache = nn.forward(self.net, rep, aux)
        u = _range_map(self.net.layers[-1].activation, self.lo, self.hi, out.reshape(batch, k))
        return u, cache

    def backward_batch(self, ctx, d_u):
        d_u = np.asarray(d_u) * self._scale
        # gradients accumulate across the k per-descriptor evaluations
        return nn.backward(self.net, ctx, d_u.reshape(-1, 1))

    def ascend(self, grads, lr: float) -> None:
        nn.apply_update(self.net, grads, -lr)

    def networks(self):
        return [self.net]

    def parameters(self):
        return self.net.parameters()

    def clone(self) -> "DescriptorActor":
        return DescriptorActor(clone_network(self.net), self.descriptors, self.lo, self.hi)


ACTOR_VARIANTS = ("vector", "separate", "descriptor")


@dataclass
class ArchConfig:
    """Shared network architecture knobs (desk scale defaults to dense-only)."""

    conv: tuple[tuple[int, int], ...] = ()
    hidden: tuple[int, ...] = (32, 32)
    hidden_activation: str = "relu"


def make_actor(variant: str, grid_side: int, descriptors: DescriptorSet, arch: ArchConfig,
               out_activation: str, lo: float, hi: float, rng) -> object:
    """Construct one of the three actor variants for a grid_side x grid_side
    observation and the given descriptor set."""
    gs = (grid_side, grid_side)
    k = descriptors.k
    if variant == "vector":
        spec = NetworkSpec(grid_shape=gs, conv=arch.conv, hidden=arch.hidden,
                           hidden_activation=arch.hidden_activation,
                           out_dim=k, out_activation=out_activation)
        return VectorActor(init_network(spec, rng), lo, hi)
    if variant == "separate":
        if arch.conv:
            trunk_spec = NetworkSpec(grid_shape=gs, conv=arch.conv, hidden=(),
                                     hidden_activation=arch.hidden_activation, trunk_only=True)
            head_hidden = arch.hidden
        else:
            if not arch.hidden:
                raise ConfigurationError("separate variant needs at least one hidden layer")
            trunk_spec = NetworkSpec(grid_shape=gs, hidden=(), out_dim=arch.hidden[0],
                                     out_activation=arch.hidden_activation, final_init="xavier")
            head_hidden = arch.hidden[1:]
        trunk = init_network(trunk_spec, rng)
        heads = []
        for _ in range(k):
            head_spec = NetworkSpec(vec_width=trunk.out_dim, hidden=head_hidden,
                                    hidden_activation=arch.hidden_activation,
                                    out_dim=1, out_activation=out_activation)
            heads.append(init_network(head_spec, rng))
        return SeparateActor(trunk, heads, lo, hi)
    if variant == "descriptor":
        spec = NetworkSpec(grid_shape=gs, aux_width=descriptors.dim, conv=arch.conv,
                           hidden=arch.hidden, hidden_activation=arch.hidden_activation,
                           out_dim=1, out_activation=out_activation)
        return DescriptorActor(init_network(spec, rng), descriptors, lo, hi)
    raise ConfigurationError(f"unknown actor variant {variant!r}")


def make_critic(grid_side: int, k: int, arch: ArchConfig, rng) -> Network:
    """Q network taking the observation grid and the k action scalars."""
    spec = NetworkSpec(grid_shape=(grid_side, grid_side), aux_width=k, conv=arch.conv,
                       hidden=arch.hidden, hidden_activation=arch.hidden_activation,
                       out_dim=1, out_activation="linear")
    return init_network(spec, rng)


# ---------------------------------------------------------------------------
# training configuration and logs

@dataclass
class TrainConfig:
    gamma: float = 0.99
    tau: float = 0.001
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 16
    episodes: int = 200
    steps_per_episode: int = 40
    buffer_capacity: int = 20000
    l2_decay: float = 0.001
    noise_mode: str = "decaying"  # "decaying": var = 1/episode; "constant": var = 1/episodes
    seed: int = 0

    def validate(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigurationError(f"tau must be in (0, 1], got {self.tau}")
        if self.critic_lr < self.actor_lr:
            raise ConfigurationError("critic_lr must be >= actor_lr")
        if self.batch_size < 1 or self.episodes < 1 or self.steps_per_episode < 1:
            raise ConfigurationError("batch_size, episodes and steps_per_episode must be >= 1")
        if self.noise_mode not in ("decaying", "constant"):
            raise ConfigurationError(f"unknown noise_mode {self.noise_mode!r}")


@dataclass
class EpisodeRecord:
    episode: int
    mean_reward_per_step: float
    noise_variance: float
    aborts: int


@dataclass
class RunLog:
    run: int
    records: list = field(default_factory=list)

    def episode_means(self) -> np.ndarray:
        return np.array([r.mean_reward_per_step for r in self.records])

    def csv_rows(self):
        for r in self.records:
            yield f"{self.run},{r.episode},{r.mean_reward_per_step!r},{r.noise_variance!r},{r.aborts}"


def noise_variance(episode: int, mode: str, episodes_total: int) -> float:
    """Per-component exploration noise variance for a 1-based episode index."""
    if mode == "decaying":
        return 1.0 / episode
    return 1.0 / episodes_total


def select_action(actor, x, episode: int, rng, noise_mode: str = "decaying",
                  episodes_total: int = 200):
    """Deterministic actor output plus Gaussian exploration noise, clipped to
    the actor's action range. Returns (u, u_clean); u is what is executed
    and stored."""
    if episode < 1:
        raise ValueError(f"episode index is 1-based, got {episode}")
    u_clean = actor.act(x)
    var = noise_variance(episode, noise_mode, episodes_total)
    u = u_clean + rng.normal(0.0, math.sqrt(var), size=u_clean.shape)
    return np.clip(u, actor.lo, actor.hi), u_clean


def bellman_targets(critic_target: Network, actor_target, batch, gamma: float) -> np.ndarray:
    """y_i = r_i + gamma Q'(x_{i+1}, pi'(x_{i+1})). Episodes end on a fixed
    time limit, not an absorbing state, so the bootstrap is unconditional."""
    x_next = np.stack([s.x_next for s in batch])
    r = np.array([s.r for s in batch])
    u_next, _ = actor_target.forward_batch(x_next)
    q_next, _ = nn.forward(critic_target, x_next, u_next)
    return r + gamma * q_next[:, 0]


def critic_update(critic: Network, critic_target: Network, actor_target, batch,
                  gamma: float, lr: float, l2_decay: float = 0.0) -> float:
    """One SGD step on the mean squared Bellman error; returns the
    pre-update loss. Targets stay frozen."""
    y = bellman_targets(critic_target, actor_target, batch, gamma)
    x = np.stack([s.x for s in batch])
    u = np.stack([s.u for s in batch])
    q, cache = nn.forward(critic, x, u)
    err = y - q[:, 0]
    loss = float(np.mean(err * err))
    upstream = (-2.0 / len(batch)) * err[:, None]
    grads = nn.backward(critic, cache, upstream)
    nn.apply_update(critic, grads, lr, l2_decay)
    return loss


def actor_update(actor, critic: Network, states, lr: float) -> None:
    """Gradient ascent on (1/N) sum_i Q(x_i, f_theta(x_i)): forward the
    actor, pull dQ/du out of the critic, push it back through the actor."""
    states = np.asarray(states)
    n = states.shape[0]
    u, ctx = actor.forward_batch(states)
    _, critic_cache = nn.forward(critic, states, u)
    critic_grads = nn.backward(critic, critic_cache, np.ones((n, 1)))
    d_u = critic_grads.aux_input_grad / n
    actor.ascend(actor.backward_batch(ctx, d_u), lr)


def train_run(env, actor, critic: Network, adapter, config: TrainConfig,
              run_id: int = 0, obs_fn=None) -> RunLog:
    """Run the full episode loop of descriptor DDPG against an environment.

    adapter maps the k-vector u to the environment's executable action.
    obs_fn (optional) preprocesses raw state grids into the network
    observation (e.g. downsampling); the buffer stores the processed
    observation together with u.

    A simulation blow-up aborts the episode, is recorded in the log, and
    training continues with the next episode.
    """
    config.validate()
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    env.rng = np.random.default_rng(seeds[0])
    noise_rng = np.random.default_rng(seeds[1])
    buffer = ReplayBuffer(config.buffer_capacity, seed=seeds[2])
    if obs_fn is None:
        obs_fn = lambda values: values

    actor_t = actor.clone()
    critic_t = clone_network(critic)

    log = RunLog(run=run_id)
    # single-threaded BLAS: the matrices here are tiny, and runs parallelize
    # across processes, not threads
    with threadpool_limits(limits=1):
        _episode_loop(env, actor, critic, adapter, config, obs_fn,
                      noise_rng, buffer, actor_t, critic_t, log)
    return log


def _episode_loop(env, actor, critic, adapter, config, obs_fn,
                  noise_rng, buffer, actor_t, critic_t, log):
    for episode in range(1, config.episodes + 1):
        state = env.reset()
        obs = obs_fn(state.values)
        rewards = []
        aborted = 0
        for _ in range(config.steps_per_episode):
            u, _ = select_action(actor, obs, episode, noise_rng,
                                 config.noise_mode, config.episodes)
            try:
                result = env.step(adapter(u))
            except SimulationBlowUpError:
                aborted = 1
                break
            obs_next = obs_fn(result.next_state.values)
            buffer.add(TransitionSample(obs, u, obs_next, result.reward))
            rewards.append(result.reward)
            if len(buffer) >= config.batch_size:
                batch = buffer.sample(config.batch_size)
                critic_update(critic, critic_t, actor_t, batch,
                              config.gamma, config.critic_lr, config.l2_decay)
                actor_update(actor, critic, np.stack([s.x for s in batch]), config.actor_lr)
                _soft_update_networks(actor_t.networks(), actor.networks(), config.tau)
                _soft_update_networks([critic_t], [critic], config.tau)
            obs = obs_next
            if result.done:
                break
        mean_r = float(np.mean(rewards)) if rewards else 0.0
        log.records.append(EpisodeRecord(
            episode=episode,
            mean_reward_per_step=mean_r,
            noise_variance=noise_variance(episode, config.noise_mode, config.episodes),
            aborts=aborted,
        ))
