"""Asynchronous advantage actor-critic with hand-written backpropagation.

Both networks share one architecture: five 1-D convolution units over the
sequence inputs (h, sigma, p, q, l), three linear units over the vector inputs
(w, alpha with the deciding class, buffer), a rectified hidden layer and an
output head. The actor head is a softmax over ladder levels; the critic head
is a scalar.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tilestream.checkpoint import load_checkpoint, save_checkpoint
from tilestream.errors import ConfigError, InvalidInput, TrainingError
from tilestream.priority import Priority

SEQ_INPUTS = ("h", "sigma", "p", "q", "l")
VEC_INPUTS = ("w", "alpha", "b")
CHECKPOINT_KIND = "a3c-policy"


@dataclass(frozen=True)
class NetSpec:
    seq_lengths: tuple  # lengths of h, sigma, p, q, l
    vec_sizes: tuple = (4, 8, 1)  # w, alpha + deciding one-hot, b
    n_actions: int = 6
    filters: int = 16
    kernel: int = 4
    linear_units: int = 16
    hidden: int = 128

    def __post_init__(self):
        if len(self.seq_lengths) != 5 or len(self.vec_sizes) != 3:
            raise ConfigError("network needs five sequence inputs and three vector inputs")
        if min(self.seq_lengths) < self.kernel:
            raise ConfigError(f"sequence inputs must be at least {self.kernel} long")
        if min(self.filters, self.kernel, self.linear_units, self.hidden, self.n_actions) < 1:
            raise ConfigError("network widths must be >= 1")

    @classmethod
    def for_state(cls, state, n_actions: int = 6, **widths) -> NetSpec:
        lengths = tuple(len(getattr(state, k)) for k in SEQ_INPUTS)
        return cls(lengths, (len(state.w), len(state.alpha) + 4, 1), n_actions, **widths)

    def feature_size(self) -> int:
        conv = sum((n - self.kernel + 1) * self.filters for n in self.seq_lengths)
        return conv + 3 * self.linear_units

    def shapes(self, outputs: int) -> dict:
        s = {}
        for i in range(5):
            s[f"conv{i}_W"] = (self.filters, self.kernel)
            s[f"conv{i}_b"] = (self.filters,)
        for j, d in enumerate(self.vec_sizes):
            s[f"lin{j}_W"] = (self.linear_units, d)
            s[f"lin{j}_b"] = (self.linear_units,)
        s["hid_W"] = (self.hidden, self.feature_size())
        s["hid_b"] = (self.hidden,)
        s["out_W"] = (outputs, self.hidden)
        s["out_b"] = (outputs,)
        return s

    def as_array(self) -> np.ndarray:
        return np.array(
            [*self.seq_lengths, *self.vec_sizes, self.n_actions, self.filters, self.kernel, self.linear_units, self.hidden],
            dtype=float,
        )

    @classmethod
    def from_array(cls, a) -> NetSpec:
        v = [int(x) for x in a]
        return cls(tuple(v[:5]), tuple(v[5:8]), v[8], v[9], v[10], v[11], v[12])


def init_params(spec: NetSpec, outputs: int, rng: np.random.Generator, scale: float = 0.05) -> dict:
    return {k: rng.uniform(-scale, scale, shape) for k, shape in spec.shapes(outputs).items()}


@dataclass
class PolicyParameters:
    spec: NetSpec
    actor: dict
    critic: dict
    buffer_scale: float = 5.0

    @classmethod
    def initialize(cls, spec: NetSpec, seed: int = 0, scale: float = 0.05, buffer_scale: float = 5.0):
        rng = np.random.default_rng(seed)
        actor = init_params(spec, spec.n_actions, rng, scale)
        critic = init_params(spec, 1, rng, scale)
        return cls(spec, actor, critic, buffer_scale)

    def copy(self) -> PolicyParameters:
        return PolicyParameters(
            self.spec, {k: v.copy() for k, v in self.actor.items()}, {k: v.copy() for k, v in self.critic.items()}, self.buffer_scale
        )

    def arrays(self) -> dict:
        out = {"spec": self.spec.as_array(), "buffer_scale": np.array([self.buffer_scale])}
        out.update({f"actor/{k}": v for k, v in self.actor.items()})
        out.update({f"critic/{k}": v for k, v in self.critic.items()})
        return out

    def save(self, path) -> None:
        save_checkpoint(path, CHECKPOINT_KIND, self.arrays())

    @classmethod
    def load(cls, path) -> PolicyParameters:
        arrays = load_checkpoint(path, CHECKPOINT_KIND)
        try:
            spec = NetSpec.from_array(arrays["spec"])
            actor = {k[6:]: v for k, v in arrays.items() if k.startswith("actor/")}
            critic = {k[7:]: v for k, v in arrays.items() if k.startswith("critic/")}
            params = cls(spec, actor, critic, float(arrays["buffer_scale"][0]))
        except (KeyError, IndexError, ValueError) as exc:
            raise InvalidInput(f"{path}: malformed policy checkpoint ({exc})") from exc
        for net, outputs in ((params.actor, spec.n_actions), (params.critic, 1)):
            expected = spec.shapes(outputs)
            if {k: v.shape for k, v in net.items()} != expected:
                raise InvalidInput(f"{path}: parameter shapes do not match the stored network spec")
        return params


# ---- state encoding ---------------------------------------------------------

def encode_states(states, buffer_scale: float = 5.0) -> tuple[list, list]:
    """Scale a batch of session states into network inputs.

    Rates are divided by the ladder top, levels by the highest index, tile
    counts by the grid size and the buffer by ``buffer_scale``.
    """
    seqs = [[] for _ in SEQ_INPUTS]
    vecs = [[] for _ in VEC_INPUTS]
    for s in states:
        q = np.asarray(s.q, dtype=float)
        top = float(q.max()) or 1.0
        n = float(len(s.p))
        onehot = np.zeros(4)
        onehot[Priority(s.deciding).slot] = 1.0
        rows = (
            np.asarray(s.h, float) / top,
            np.asarray(s.sigma, float),
            np.asarray(s.p, float),
            q / top,
            np.asarray(s.l, float) / max(len(q) - 1, 1),
        )
        for acc, r in zip(seqs, rows):
            acc.append(r)
        vecs[0].append(np.asarray(s.w, float) / n)
        vecs[1].append(np.concatenate([np.asarray(s.alpha, float) / n, onehot]))
        vecs[2].append(np.array([float(s.b) / buffer_scale]))
    seqs = [np.array(a) for a in seqs]
    vecs = [np.array(a) for a in vecs]
    if not all(np.all(np.isfinite(a)) for a in seqs + vecs):
        raise InvalidInput("state contains non-finite values")
    return seqs, vecs


# ---- forward / backward -----------------------------------------------------

def forward(params: dict, spec: NetSpec, seqs: list, vecs: list):
    """Batched network output ``(batch, outputs)`` and the cache for :func:`backward`."""
    feats = []
    cache = {"conv": [], "lin": []}
    for i, s in enumerate(seqs):
        windows = sliding_window_view(s, spec.kernel, axis=1)  # (B, T, K)
        z = windows @ params[f"conv{i}_W"].T + params[f"conv{i}_b"]
        feats.append(np.maximum(z, 0.0).reshape(len(s), -1))
        cache["conv"].append((windows, z))
    for j, v in enumerate(vecs):
        z = v @ params[f"lin{j}_W"].T + params[f"lin{j}_b"]
        feats.append(np.maximum(z, 0.0))
        cache["lin"].append((v, z))
    x = np.concatenate(feats, axis=1)
    zh = x @ params["hid_W"].T + params["hid_b"]
    hh = np.maximum(zh, 0.0)
    out = hh @ params["out_W"].T + params["out_b"]
    cache.update(x=x, zh=zh, hh=hh)
    return out, cache


def backward(params: dict, spec: NetSpec, cache, d_out: np.ndarray) -> dict:
    g = {"out_W": d_out.T @ cache["hh"], "out_b": d_out.sum(axis=0)}
    dzh = (d_out @ params["out_W"]) * (cache["zh"] > 0)
    g["hid_W"] = dzh.T @ cache["x"]
    g["hid_b"] = dzh.sum(axis=0)
    dx = dzh @ params["hid_W"]
    pos = 0
    for i, (windows, z) in enumerate(cache["conv"]):
        width = z.shape[1] * z.shape[2]
        dz = dx[:, pos : pos + width].reshape(z.shape) * (z > 0)
        pos += width
        g[f"conv{i}_W"] = np.einsum("btf,btk->fk", dz, windows)
        g[f"conv{i}_b"] = dz.sum(axis=(0, 1))
    for j, (v, z) in enumerate(cache["lin"]):
        width = z.shape[1]
        dz = dx[:, pos : pos + width] * (z > 0)
        pos += width
        g[f"lin{j}_W"] = dz.T @ v
        g[f"lin{j}_b"] = dz.sum(axis=0)
    return g


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def entropy(probs: np.ndarray) -> np.ndarray:
    return -(probs * np.log(np.clip(probs, 1e-300, None))).sum(axis=-1)


def policy_forward(params: PolicyParameters, state) -> np.ndarray:
    seqs, vecs = encode_states([state], params.buffer_scale)
    logits, _ = forward(params.actor, params.spec, seqs, vecs)
    return softmax(logits)[0]


def value_forward(params: PolicyParameters, state) -> float:
    seqs, vecs = encode_states([state], params.buffer_scale)
    v, _ = forward(params.critic, params.spec, seqs, vecs)
    return float(v[0, 0])


def values(params: PolicyParameters, states) -> np.ndarray:
    seqs, vecs = encode_states(states, params.buffer_scale)
    v, _ = forward(params.critic, params.spec, seqs, vecs)
    return v[:, 0]


def act(params: PolicyParameters, state, mode: str = "sample", rng: np.random.Generator | None = None) -> int:
    probs = policy_forward(params, state)
    if mode == "greedy":
        return int(np.argmax(probs))  # first maximum wins
    if mode != "sample":
        raise InvalidInput(f"unknown action mode {mode!r}")
    if rng is None:
        raise InvalidInput("sample mode needs the run's random generator")
    return sample_action(probs, rng)


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from a probability vector."""
    k = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
    return min(k, len(probs) - 1)


# ---- advantage and gradients ------------------------------------------------

@dataclass(frozen=True)
class Transition:
    s: object
    a: int
    r: float
    s_next: object
    done: bool


def td_targets(params: PolicyParameters, batch, gamma: float) -> np.ndarray:
    """``r + gamma * V(s')`` with ``V = 0`` after a terminal transition."""
    r = np.array([t.r for t in batch], dtype=float)
    live = [k for k, t in enumerate(batch) if not t.done]
    nxt = np.zeros(len(batch))
    if live:
        nxt[live] = values(params, [batch[k].s_next for k in live])
    return r + gamma * nxt


def advantage(tr: Transition, params: PolicyParameters, gamma: float = 0.99) -> float:
    """One-step TD estimate of A(s, a)."""
    return float(td_targets(params, [tr], gamma)[0] - value_forward(params, tr.s))


def actor_objective(params: PolicyParameters, batch, advantages, beta: float) -> float:
    seqs, vecs = encode_states([t.s for t in batch], params.buffer_scale)
    logits, _ = forward(params.actor, params.spec, seqs, vecs)
    probs = softmax(logits)
    a = np.array([t.a for t in batch])
    logp = np.log(probs[np.arange(len(batch)), a])
    return float((logp * np.asarray(advantages)).sum() + beta * entropy(probs).sum())


def actor_gradient(params: PolicyParameters, batch, advantages, beta: float) -> dict:
    """Gradient of ``sum(log pi(a|s) * A) + beta * sum(H(pi(.|s)))``: an ascent direction."""
    if not batch:
        raise InvalidInput("actor gradient needs a non-empty batch")
    seqs, vecs = encode_states([t.s for t in batch], params.buffer_scale)
    logits, cache = forward(params.actor, params.spec, seqs, vecs)
    probs = softmax(logits)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(batch)), [t.a for t in batch]] = 1.0
    adv = np.asarray(advantages, dtype=float)[:, None]
    logp = np.log(np.clip(probs, 1e-300, None))
    h = -(probs * logp).sum(axis=1, keepdims=True)
    d_logits = adv * (onehot - probs) - beta * probs * (logp + h)
    return backward(params.actor, params.spec, cache, d_logits)


def critic_loss(params: PolicyParameters, batch, targets) -> float:
    v = values(params, [t.s for t in batch])
    return float(((np.asarray(targets) - v) ** 2).sum())


def critic_gradient(params: PolicyParameters, batch, gamma: float = 0.99, targets=None) -> dict:
    """Gradient of ``sum((y - V(s))**2)`` with the TD target ``y`` held fixed: a descent direction."""
    if not batch:
        raise InvalidInput("critic gradient needs a non-empty batch")
    y = td_targets(params, batch, gamma) if targets is None else np.asarray(targets, dtype=float)
    seqs, vecs = encode_states([t.s for t in batch], params.buffer_scale)
    v, cache = forward(params.critic, params.spec, seqs, vecs)
    d_v = -2.0 * (y - v[:, 0])
    return backward(params.critic, params.spec, cache, d_v[:, None])


def clip_gradients(grads: dict, max_norm: float) -> tuple[dict, bool]:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if not math.isfinite(norm):
        raise TrainingError("gradient is not finite")
    if norm <= max_norm:
        return grads, False
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, True


# ---- training ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainingConfig:
    gamma: float = 0.99
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    entropy_start: float = 1.0
    entropy_end: float = 0.1
    workers: int = 1
    episodes: int = 100
    seed: int = 0
    clip_norm: float = 40.0
    init_scale: float = 0.05
    filters: int = 16
    kernel: int = 4
    linear_units: int = 16
    hidden: int = 128
    buffer_scale: float = 5.0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if not (self.actor_lr > 0 and self.critic_lr > 0):
            raise ConfigError("learning rates must be > 0")
        if self.entropy_end > self.entropy_start or self.entropy_end < 0:
            raise ConfigError("entropy weight must be non-increasing and >= 0")
        if self.workers < 1 or self.episodes < 0:
            raise ConfigError("need >= 1 worker and >= 0 episodes")

    def entropy_weight(self, episode: int) -> float:
        """Linear schedule from ``entropy_start`` (first episode) to ``entropy_end`` (last)."""
        if self.episodes <= 1:
            return self.entropy_start
        frac = episode / (self.episodes - 1)
        return self.entropy_start + (self.entropy_end - self.entropy_start) * frac

    def net_widths(self) -> dict:
        return dict(filters=self.filters, kernel=self.kernel, linear_units=self.linear_units, hidden=self.hidden)


@dataclass(frozen=True)
class EpisodeLog:
    episode: int
    ret: float
    entropy_weight: float
    mean_td_error: float


@dataclass
class TrainResult:
    params: PolicyParameters
    log: list = field(default_factory=list)
    clip_events: int = 0

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("episode,return,entropy_weight,mean_td_error\n")
            for row in self.log:
                fh.write(f"{row.episode},{row.ret!r},{row.entropy_weight!r},{row.mean_td_error!r}\n")


def run_episode(env, params: PolicyParameters, rng: np.random.Generator, seed: int) -> list:
    state = env.reset(seed)
    batch = []
    while True:
        a = act(params, state, "sample", rng)
        out = env.step(a)
        batch.append(Transition(state, a, float(out.reward), out.state, bool(out.done)))
        if out.done:
            return batch
        state = out.state


class ParameterStore:
    """Shared parameters; each submission is applied atomically under a lock."""

    def __init__(self, params: PolicyParameters, config: TrainingConfig):
        self.params = params
        self.config = config
        self.lock = threading.Lock()
        self.next_episode = 0
        self.log: list = []
        self.clip_events = 0

    def claim(self):
        """Reserve the next episode index and return it with a parameter snapshot."""
        with self.lock:
            if self.next_episode >= self.config.episodes:
                return None, None
            k = self.next_episode
            self.next_episode += 1
            return k, self.params.copy()

    def submit(self, actor_grads: dict, critic_grads: dict, entry: EpisodeLog) -> None:
        cfg = self.config
        actor_grads, c1 = clip_gradients(actor_grads, cfg.clip_norm)
        critic_grads, c2 = clip_gradients(critic_grads, cfg.clip_norm)
        with self.lock:
            for k, g in actor_grads.items():
                self.params.actor[k] += cfg.actor_lr * g
            for k, g in critic_grads.items():
                self.params.critic[k] -= cfg.critic_lr * g
            self.clip_events += int(c1) + int(c2)
            self.log.append(entry)


def _worker(store: ParameterStore, env, worker: int, errors: list) -> None:
    cfg = store.config
    rng = np.random.default_rng([cfg.seed, worker])
    try:
        while not errors:
            k, snap = store.claim()
            if k is None:
                return
            beta = cfg.entropy_weight(k)
            batch = run_episode(env, snap, rng, cfg.seed + k)
            y = td_targets(snap, batch, cfg.gamma)
            v = values(snap, [t.s for t in batch])
            adv = y - v
            if not np.all(np.isfinite(adv)):
                raise TrainingError(f"worker {worker}: non-finite TD error in episode {k}")
            ga = actor_gradient(snap, batch, adv, beta)
            gc = critic_gradient(snap, batch, cfg.gamma, targets=y)
            ret = float(sum(t.r for t in batch))
            store.submit(ga, gc, EpisodeLog(k, ret, beta, float(np.mean(np.abs(adv)))))
    except Exception as exc:  # surfaced by train()
        errors.append(exc)


def train(config: TrainingConfig, env_factory, init: PolicyParameters | None = None) -> TrainResult:
    """Train actor and critic with ``config.workers`` asynchronous workers.

    ``env_factory(worker_index)`` returns a private environment per worker.
    One worker runs in the calling thread and is fully deterministic.
    """
    envs = [env_factory(w) for w in range(config.workers)]
    if init is None:
        probe = envs[0].reset(config.seed)
        spec = NetSpec.for_state(probe, envs[0].n_actions, **config.net_widths())
        init = PolicyParameters.initialize(spec, config.seed, config.init_scale, config.buffer_scale)
    store = ParameterStore(init.copy(), config)
    errors: list = []
    if config.workers == 1:
        _worker(store, envs[0], 0, errors)
    else:
        threads = [threading.Thread(target=_worker, args=(store, envs[w], w, errors)) for w in range(config.workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if errors:
        err = errors[0]
        if isinstance(err, (TrainingError, InvalidInput, ConfigError)):
            raise err
        raise TrainingError(f"worker failed: {err!r}") from err
    store.log.sort(key=lambda e: e.episode)
    return TrainResult(store.params, store.log, store.clip_events)


# ---- a two-armed bandit for sanity checks -----------------------------------

@dataclass(frozen=True)
class BanditOutcome:
    state: object
    reward: float
    done: bool = True


class BanditEnv:
    """One decision per episode: action 0 pays 1, anything else pays 0."""

    def __init__(self, n_actions: int = 2):
        from tilestream.env import SessionState

        self.n_actions = n_actions
        self._state = SessionState(
            h=np.zeros(4),
            sigma=np.zeros(4),
            p=np.zeros(4),
            q=np.arange(4, dtype=float),
            l=np.zeros(4),
            w=np.array([4, 0, 0, 0]),
            alpha=np.array([4, 0, 0, 0]),
            b=0.0,
            deciding=Priority.TOP,
            chunk=0,
        )

    def reset(self, seed: int = 0):
        return self._state

    def step(self, action: int) -> BanditOutcome:
        return BanditOutcome(self._state, 1.0 if action == 0 else 0.0, True)
