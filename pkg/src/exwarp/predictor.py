"""Q-network mapping a 44-element state to two action rewards, with the
training apparatus around it: replay buffer, target network, TD loss and
its analytic gradients, epsilon-greedy selection, and the reward function.

Everything is plain numpy; training is a pure function of (data, config,
seed).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .errors import PoisonedNetworkError, ValidationError
from .features import STATE_LEN, StateVector

LAYER_SIZES = (STATE_LEN, 128, 256, 128, 2)
ACTION_WARP = 0
ACTION_EXTRAPOLATE = 1

CHECKPOINT_MAGIC = b"EXWQ"
CHECKPOINT_VERSION = 1

# 20*log10(255): PSNR of an MSE=1 pair; dividing PSNR deltas by this puts
# them on the same unit scale as SSIM deltas.
PSNR_DELTA_SCALE = 48.13
DROP_PENALTY = -0.1


class QNetwork:
    """Fully connected 44-128-256-128-2 net, ReLU after all but the last layer."""

    def __init__(self, weights, biases):
        shapes = tuple(w.shape for w in weights)
        expected = tuple((LAYER_SIZES[i], LAYER_SIZES[i + 1]) for i in range(len(LAYER_SIZES) - 1))
        if shapes != expected:
            raise ValidationError(f"layer shapes {shapes} != required {expected}")
        self.weights = list(weights)
        self.biases = list(biases)

    @classmethod
    def initialize(cls, rng: np.random.Generator, dtype=np.float32) -> "QNetwork":
        """Glorot-uniform weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(LAYER_SIZES, LAYER_SIZES[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
            biases.append(np.zeros(fan_out, dtype=dtype))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, dtype=np.float32) -> "QNetwork":
        return cls([np.zeros((i, o), dtype=dtype) for i, o in zip(LAYER_SIZES, LAYER_SIZES[1:])],
                   [np.zeros(o, dtype=dtype) for o in LAYER_SIZES[1:]])

    def copy(self) -> "QNetwork":
        return QNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def copy_from(self, other: "QNetwork") -> None:
        for mine, theirs in zip(self.weights, other.weights):
            mine[...] = theirs
        for mine, theirs in zip(self.biases, other.biases):
            mine[...] = theirs

    def astype(self, dtype) -> "QNetwork":
        return QNetwork([w.astype(dtype) for w in self.weights],
                        [b.astype(dtype) for b in self.biases])

    def check_finite(self) -> None:
        for arr in (*self.weights, *self.biases):
            if not np.isfinite(arr).all():
                raise PoisonedNetworkError("network contains NaN or infinite parameters")


def _as_input(state) -> np.ndarray:
    if isinstance(state, StateVector):
        return state.decode()
    return np.asarray(state, dtype=np.float64)


def _forward_cached(net: QNetwork, x: np.ndarray):
    """Forward pass keeping pre-activations for backprop. x is (B, 44)."""
    pre = []
    act = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = act @ w + b
        pre.append(z)
        act = z if i == last else np.maximum(z, 0.0)
    return act, pre


def forward(net: QNetwork, state) -> np.ndarray:
    """Q-values (reward_warp, reward_extrapolate) for one state or a batch."""
    net.check_finite()
    x = _as_input(state)
    single = x.ndim == 1
    out, _ = _forward_cached(net, x[None, :] if single else x)
    return out[0] if single else out


def select_action(net: QNetwork, state, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties break toward warping."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValidationError(f"epsilon={epsilon} outside [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(0, 2))
    q = forward(net, state)
    return ACTION_WARP if q[ACTION_WARP] >= q[ACTION_EXTRAPOLATE] else ACTION_EXTRAPOLATE


@dataclass(frozen=True)
class Experience:
    state: StateVector
    action: int
    reward: float
    next_state: StateVector
    terminal: bool

    def __post_init__(self):
        if self.action not in (ACTION_WARP, ACTION_EXTRAPOLATE):
            raise ValidationError(f"action={self.action} must be 0 or 1")


class ReplayBuffer:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self._items: list[Experience] = []
        self._next = 0

    def push(self, exp: Experience) -> None:
        if len(self._items) < self.capacity:
            self._items.append(exp)
        else:
            self._items[self._next] = exp
            self._next = (self._next + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._items)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Experience]:
        if len(self._items) < batch_size:
            raise ValidationError(
                f"replay holds {len(self._items)} experiences, need {batch_size}")
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in idx]


@dataclass(frozen=True)
class TrainConfig:
    """Q-learning hyperparameters.

    The optimizer settings (rate, momentum, decay, updates per data point,
    exploration floor) are calibrated for desk-scale scenes, where reward
    margins between the two actions are a few hundredths; they are all
    config-overridable.
    """

    gamma: float = 0.95
    learning_rate: float = 3e-3
    momentum: float = 0.9
    lr_final_frac: float = 0.1     # linear decay to this fraction of the rate
    updates_per_point: int = 4     # gradient steps per collected experience
    batch_size: int = 64
    replay_capacity: int = 10000
    target_sync_every: int = 200   # in gradient updates
    epsilon_start: float = 1.0
    epsilon_end: float = 0.2
    epsilon_anneal_frac: float = 0.5  # fraction of total steps spent annealing
    train_points: int = 3000
    test_points: int = 1000
    rng_seed: int = 0

    def __post_init__(self):
        bad = []
        if not 0.0 <= self.gamma < 1.0:
            bad.append(f"gamma={self.gamma} outside [0, 1)")
        for name in ("epsilon_start", "epsilon_end"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                bad.append(f"{name}={v} outside [0, 1]")
        if not 0.0 <= self.momentum < 1.0:
            bad.append(f"momentum={self.momentum} outside [0, 1)")
        if bad:
            raise ValidationError(bad)


def epsilon_at(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear anneal from epsilon_start to epsilon_end over the first
    epsilon_anneal_frac of training, constant afterwards."""
    anneal_steps = max(1, int(total_steps * config.epsilon_anneal_frac))
    if step >= anneal_steps:
        return config.epsilon_end
    frac = step / anneal_steps
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


def _batch_arrays(batch, dtype):
    states = np.stack([_as_input(e.state) for e in batch]).astype(dtype)
    next_states = np.stack([_as_input(e.next_state) for e in batch]).astype(dtype)
    actions = np.array([e.action for e in batch], dtype=np.int64)
    rewards = np.array([e.reward for e in batch], dtype=np.float64)
    terminal = np.array([e.terminal for e in batch], dtype=bool)
    return states, actions, rewards, next_states, terminal


def _td_targets(target_net, rewards, next_states, terminal, gamma):
    boot, _ = _forward_cached(target_net, next_states)
    return rewards + gamma * boot.max(axis=1) * ~terminal


def td_loss(net: QNetwork, target_net: QNetwork, batch, gamma: float) -> float:
    """Mean squared TD error; terminal transitions drop the bootstrap term."""
    if not batch:
        raise ValidationError("td_loss needs a non-empty batch")
    dtype = net.weights[0].dtype
    states, actions, rewards, next_states, terminal = _batch_arrays(batch, dtype)
    targets = _td_targets(target_net, rewards, next_states, terminal, gamma)
    out, _ = _forward_cached(net, states)
    q = out[np.arange(len(batch)), actions]
    err = targets - q
    return float(np.mean(err * err))


def td_loss_gradients(net: QNetwork, target_net: QNetwork, batch, gamma: float):
    """Loss, its analytic gradients w.r.t. every weight and bias, and the
    batch Q-value matrix (for logging)."""
    dtype = net.weights[0].dtype
    states, actions, rewards, next_states, terminal = _batch_arrays(batch, dtype)
    targets = _td_targets(target_net, rewards, next_states, terminal, gamma)

    out, pre = _forward_cached(net, states)
    n = len(batch)
    q = out[np.arange(n), actions]
    err = targets - q
    loss = float(np.mean(err * err))

    # dL/d(output logits): only the chosen action's entry is nonzero.
    delta = np.zeros_like(out)
    delta[np.arange(n), actions] = -2.0 * err / n

    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    activations = [states]
    for z in pre[:-1]:
        activations.append(np.maximum(z, 0.0))
    for i in range(len(net.weights) - 1, -1, -1):
        grads_w[i] = activations[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (pre[i - 1] > 0)
    return loss, grads_w, grads_b, out


@dataclass(frozen=True)
class TrainStepResult:
    loss: float
    mean_q_warp: float
    mean_q_extrapolate: float


class MomentumState:
    """Velocity buffers for momentum SGD, matched to one network's shapes."""

    def __init__(self, net: QNetwork):
        self.vel_w = [np.zeros_like(w) for w in net.weights]
        self.vel_b = [np.zeros_like(b) for b in net.biases]


def train_step(net: QNetwork, target_net: QNetwork, replay: ReplayBuffer,
               config: TrainConfig, rng: np.random.Generator, step: int,
               opt_state: MomentumState | None = None,
               learning_rate: float | None = None) -> TrainStepResult:
    """One (momentum-)SGD step on a sampled batch; syncs the target net every
    target_sync_every update steps.

    The network is updated in place. Without `opt_state` (or with momentum 0)
    this is a plain SGD step. `learning_rate` overrides the configured rate
    so callers can apply a decay schedule. Returns the batch loss and mean
    Q-values for the training log.
    """
    lr = config.learning_rate if learning_rate is None else learning_rate
    batch = replay.sample(config.batch_size, rng)
    loss, grads_w, grads_b, q_all = td_loss_gradients(net, target_net, batch, config.gamma)
    if opt_state is not None and config.momentum > 0.0:
        for w, v, g in zip(net.weights, opt_state.vel_w, grads_w):
            v *= config.momentum
            v += g
            w -= (lr * v).astype(w.dtype)
        for b, v, g in zip(net.biases, opt_state.vel_b, grads_b):
            v *= config.momentum
            v += g
            b -= (lr * v).astype(b.dtype)
    else:
        for w, g in zip(net.weights, grads_w):
            w -= (lr * g).astype(w.dtype)
        for b, g in zip(net.biases, grads_b):
            b -= (lr * g).astype(b.dtype)
    if (step + 1) % config.target_sync_every == 0:
        target_net.copy_from(net)
    return TrainStepResult(loss=loss,
                           mean_q_warp=float(q_all[:, ACTION_WARP].mean()),
                           mean_q_extrapolate=float(q_all[:, ACTION_EXTRAPOLATE].mean()))


def compute_reward(chosen_frame, alternative_frame, ground_truth, dropped: bool,
                   psnr_scale: float = PSNR_DELTA_SCALE,
                   drop_penalty: float = DROP_PENALTY) -> float:
    """Quality gain of the chosen action over the one not taken.

    Delta-PSNR (rescaled to SSIM's unit range) plus delta-SSIM, with a flat
    penalty when the chosen action repeats a frame instead of showing a new
    one.
    """
    d_psnr = metrics.psnr(chosen_frame, ground_truth) - metrics.psnr(alternative_frame, ground_truth)
    d_ssim = metrics.ssim(chosen_frame, ground_truth) - metrics.ssim(alternative_frame, ground_truth)
    reward = d_psnr / psnr_scale + d_ssim
    if dropped:
        reward += drop_penalty
    return float(reward)


def save_checkpoint(path, net: QNetwork) -> None:
    """Little-endian binary: magic, version, layer count, then per layer
    (rows, cols, row-major f32 weights, f32 biases)."""
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(net.weights)))
        for w, b in zip(net.weights, net.biases):
            f.write(struct.pack("<II", w.shape[0], w.shape[1]))
            f.write(w.astype("<f4").tobytes())
            f.write(b.astype("<f4").tobytes())


def load_checkpoint(path) -> QNetwork:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != CHECKPOINT_MAGIC:
        raise ValidationError(f"{path}: not a checkpoint (bad magic)")
    version, n_layers = struct.unpack("<II", raw[4:12])
    if version != CHECKPOINT_VERSION:
        raise ValidationError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    offset = 12
    weights, biases = [], []
    for _ in range(n_layers):
        rows, cols = struct.unpack("<II", raw[offset:offset + 8])
        offset += 8
        w = np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=offset).reshape(rows, cols)
        offset += 4 * rows * cols
        b = np.frombuffer(raw, dtype="<f4", count=cols, offset=offset)
        offset += 4 * cols
        weights.append(w.copy())
        biases.append(b.copy())
    return QNetwork(weights, biases)
