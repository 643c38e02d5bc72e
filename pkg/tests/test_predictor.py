import struct

import numpy as np
import pytest

from exwarp.errors import PoisonedNetworkError, ValidationError
from exwarp.features import STATE_LEN, StateVector
from exwarp.predictor import (ACTION_EXTRAPOLATE, ACTION_WARP, LAYER_SIZES,
                              Experience, MomentumState, QNetwork, ReplayBuffer,
                              TrainConfig, compute_reward, epsilon_at, forward,
                              load_checkpoint, save_checkpoint, select_action,
                              td_loss, td_loss_gradients, train_step)


def _random_net(seed, dtype=np.float64):
    return QNetwork.initialize(np.random.default_rng(seed), dtype=dtype)


def _random_state(rng):
    return StateVector.encode(rng.uniform(0, 4, STATE_LEN))


def _random_batch(rng, n=5):
    batch = []
    for _ in range(n):
        batch.append(Experience(
            state=_random_state(rng),
            action=int(rng.integers(0, 2)),
            reward=float(rng.uniform(-1, 1)),
            next_state=_random_state(rng),
            terminal=bool(rng.integers(0, 2)),
        ))
    return batch


# ---------------------------------------------------------------------------
# Forward pass

def test_zero_network_outputs_zero():
    net = QNetwork.zeros()
    rng = np.random.default_rng(0)
    q = forward(net, _random_state(rng))
    assert q.shape == (2,)
    assert np.all(q == 0.0)


def test_hand_wired_network_propagates_first_input():
    net = QNetwork.zeros(dtype=np.float64)
    for w in net.weights:
        w[0, 0] = 1.0
    s = np.zeros(STATE_LEN)
    s[0] = 3.25
    q = forward(net, StateVector.encode(s))
    assert q[0] == pytest.approx(3.25, abs=1e-4)
    assert q[1] == 0.0


def forward_oracle(net, x):
    """Straight-line per-neuron evaluation."""
    act = [float(v) for v in x]
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        nxt = []
        for j in range(w.shape[1]):
            total = float(b[j])
            for i in range(w.shape[0]):
                total += act[i] * float(w[i, j])
            if layer < len(net.weights) - 1:
                total = max(total, 0.0)
            nxt.append(total)
        act = nxt
    return np.array(act)


def test_forward_matches_dense_oracle():
    rng = np.random.default_rng(1)
    # Narrow nets exercised through the real layer stack would change shapes,
    # so the oracle runs on the full net with a handful of inputs.
    net = _random_net(2)
    for _ in range(3):
        x = rng.uniform(0, 4, STATE_LEN)
        assert np.abs(forward(net, x) - forward_oracle(net, x)).max() <= 1e-5


def test_network_shape_is_enforced():
    with pytest.raises(ValidationError):
        QNetwork([np.zeros((44, 64))], [np.zeros(64)])
    assert tuple(w.shape for w in QNetwork.zeros().weights) == \
        tuple((LAYER_SIZES[i], LAYER_SIZES[i + 1]) for i in range(4))


def test_poisoned_network_detected():
    net = QNetwork.zeros()
    net.weights[2][10, 10] = np.nan
    with pytest.raises(PoisonedNetworkError):
        forward(net, np.zeros(STATE_LEN))


def test_batched_forward_matches_single():
    net = _random_net(3)
    rng = np.random.default_rng(4)
    xs = rng.uniform(0, 4, size=(6, STATE_LEN))
    batched = forward(net, xs)
    for i in range(6):
        assert np.allclose(batched[i], forward(net, xs[i]))


# ---------------------------------------------------------------------------
# Action selection

def test_greedy_argmax_and_warp_tiebreak():
    net = QNetwork.zeros()
    net.biases[-1][:] = (2.0, 1.0)
    rng = np.random.default_rng(5)
    s = np.zeros(STATE_LEN)
    assert select_action(net, s, 0.0, rng) == ACTION_WARP
    net.biases[-1][:] = (1.0, 1.0)
    assert select_action(net, s, 0.0, rng) == ACTION_WARP
    net.biases[-1][:] = (1.0, 1.5)
    assert select_action(net, s, 0.0, rng) == ACTION_EXTRAPOLATE


def test_exploration_is_seed_reproducible():
    net = QNetwork.zeros()
    s = np.zeros(STATE_LEN)
    seq1 = [select_action(net, s, 1.0, np.random.default_rng(7)) for _ in range(1)]
    draws = lambda: [select_action(net, s, 1.0, rng) for rng in [np.random.default_rng(7)] * 1]
    a = np.random.default_rng(7)
    b = np.random.default_rng(7)
    seq_a = [select_action(net, s, 1.0, a) for _ in range(20)]
    seq_b = [select_action(net, s, 1.0, b) for _ in range(20)]
    assert seq_a == seq_b
    assert set(seq_a) == {0, 1}


def test_epsilon_validated():
    with pytest.raises(ValidationError):
        select_action(QNetwork.zeros(), np.zeros(STATE_LEN), 1.5, np.random.default_rng(0))


def test_argmax_invariant_to_shared_bias_shift():
    net = _random_net(8)
    rng = np.random.default_rng(9)
    s = rng.uniform(0, 4, STATE_LEN)
    before = select_action(net, s, 0.0, rng)
    net.biases[-1] += 17.5
    assert select_action(net, s, 0.0, rng) == before


# ---------------------------------------------------------------------------
# TD loss

def test_td_loss_single_experience_closed_form():
    rng = np.random.default_rng(10)
    net = _random_net(11)
    target = _random_net(12)
    exp = _random_batch(rng, 1)[0]
    gamma = 0.95
    q = forward(net, exp.state)[exp.action]
    m = forward(target, exp.next_state).max()
    expected = exp.reward + gamma * m * (not exp.terminal) - q
    assert td_loss(net, target, [exp], gamma) == pytest.approx(expected ** 2, rel=1e-9)


def test_td_loss_matches_scalar_oracle():
    rng = np.random.default_rng(13)
    net = _random_net(14)
    target = _random_net(15)
    for _ in range(3):
        batch = _random_batch(rng, 7)
        total = 0.0
        for e in batch:
            q = forward(net, e.state)[e.action]
            boot = 0.0 if e.terminal else 0.95 * forward(target, e.next_state).max()
            total += (e.reward + boot - q) ** 2
        assert td_loss(net, target, batch, 0.95) == pytest.approx(total / len(batch), abs=1e-6)


def test_td_loss_myopic_zero_on_exact_fit():
    # gamma=0 and a network predicting exactly r for every (s, a).
    net = QNetwork.zeros()
    batch = [Experience(StateVector.encode(np.zeros(STATE_LEN)), a, 0.0,
                        StateVector.encode(np.zeros(STATE_LEN)), False)
             for a in (0, 1)]
    assert td_loss(net, net.copy(), batch, 0.0) == 0.0


def test_td_loss_empty_batch_rejected():
    with pytest.raises(ValidationError):
        td_loss(QNetwork.zeros(), QNetwork.zeros(), [], 0.95)


def test_gradients_match_finite_differences_spot_check():
    """Central differences on a random subset of parameters of the full net."""
    rng = np.random.default_rng(16)
    net = _random_net(17)
    target = _random_net(18)
    batch = _random_batch(rng, 5)
    gamma = 0.95
    _, grads_w, grads_b, _ = td_loss_gradients(net, target, batch, gamma)

    h = 1e-4
    checked = 0
    for li in range(len(net.weights)):
        w = net.weights[li]
        idx = [(int(rng.integers(w.shape[0])), int(rng.integers(w.shape[1])))
               for _ in range(10)]
        for i, j in idx:
            orig = w[i, j]
            w[i, j] = orig + h
            up = td_loss(net, target, batch, gamma)
            w[i, j] = orig - h
            down = td_loss(net, target, batch, gamma)
            w[i, j] = orig
            fd = (up - down) / (2 * h)
            an = grads_w[li][i, j]
            assert abs(an - fd) <= 1e-3 * max(abs(an), abs(fd), 1e-4)
            checked += 1
    assert checked == 40


# ---------------------------------------------------------------------------
# Training step mechanics

def _full_replay(rng, config):
    replay = ReplayBuffer(config.replay_capacity)
    for e in _random_batch(rng, config.batch_size):
        replay.push(e)
    return replay


def test_overfit_smoke_loss_strictly_decreases():
    # Frozen batch, plain SGD, learnable myopic target.
    config = TrainConfig(gamma=0.0, learning_rate=1e-3, momentum=0.0,
                         batch_size=16, rng_seed=0)
    rng = np.random.default_rng(19)
    net = _random_net(20, dtype=np.float64)
    target = net.copy()
    replay = ReplayBuffer(100)
    for e in _random_batch(rng, 16):
        replay.push(e)
    losses = []
    for step in range(100):
        losses.append(train_step(net, target, replay, config,
                                 np.random.default_rng(21), step).loss)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_train_step_is_deterministic():
    config = TrainConfig(batch_size=8, rng_seed=0)
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(22)
        net = _random_net(23, dtype=np.float32)
        target = net.copy()
        opt = MomentumState(net)
        replay = ReplayBuffer(100)
        for e in _random_batch(np.random.default_rng(24), 8):
            replay.push(e)
        for step in range(20):
            train_step(net, target, replay, config, rng, step, opt)
        runs.append([w.copy() for w in net.weights])
    for a, b in zip(*runs):
        assert np.array_equal(a, b)


def test_target_sync_schedule():
    config = TrainConfig(batch_size=4, target_sync_every=3, momentum=0.0)
    rng = np.random.default_rng(25)
    net = _random_net(26, dtype=np.float32)
    target = net.copy()
    replay = _full_replay(np.random.default_rng(27), config)
    train_step(net, target, replay, config, rng, 0)
    assert not np.array_equal(target.weights[0], net.weights[0])
    train_step(net, target, replay, config, rng, 1)
    train_step(net, target, replay, config, rng, 2)   # step 2 -> (2+1) % 3 == 0
    assert np.array_equal(target.weights[0], net.weights[0])


def test_replay_underfull_rejected():
    config = TrainConfig(batch_size=64)
    replay = ReplayBuffer(100)
    with pytest.raises(ValidationError):
        replay.sample(config.batch_size, np.random.default_rng(0))


def test_replay_capacity_wraps():
    replay = ReplayBuffer(4)
    rng = np.random.default_rng(28)
    for e in _random_batch(rng, 10):
        replay.push(e)
    assert len(replay) == 4


def test_epsilon_schedule_endpoints():
    config = TrainConfig(epsilon_start=1.0, epsilon_end=0.2, epsilon_anneal_frac=0.5)
    assert epsilon_at(0, 1000, config) == 1.0
    assert epsilon_at(250, 1000, config) == pytest.approx(0.6)
    assert epsilon_at(500, 1000, config) == 0.2
    assert epsilon_at(999, 1000, config) == 0.2


# ---------------------------------------------------------------------------
# Reward

def _frames_for_reward(rng):
    gt = rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8)
    near = np.clip(gt.astype(int) + rng.integers(-4, 5, gt.shape), 0, 255).astype(np.uint8)
    far = np.clip(gt.astype(int) + rng.integers(-60, 61, gt.shape), 0, 255).astype(np.uint8)
    return gt, near, far


def test_reward_zero_for_identical_candidates():
    rng = np.random.default_rng(29)
    gt, near, _ = _frames_for_reward(rng)
    assert compute_reward(near, near, gt, dropped=False) == 0.0


def test_reward_drop_penalty():
    rng = np.random.default_rng(30)
    gt, near, _ = _frames_for_reward(rng)
    assert compute_reward(near, near, gt, dropped=True) == pytest.approx(-0.1)


def test_reward_perfect_choice_positive():
    rng = np.random.default_rng(31)
    gt, _, far = _frames_for_reward(rng)
    assert compute_reward(gt, far, gt, dropped=False) > 0.0


def test_reward_antisymmetric():
    rng = np.random.default_rng(32)
    gt, near, far = _frames_for_reward(rng)
    assert compute_reward(near, far, gt, False) == pytest.approx(
        -compute_reward(far, near, gt, False), abs=1e-12)


# ---------------------------------------------------------------------------
# Checkpoints

def test_checkpoint_round_trip(tmp_path):
    net = _random_net(33, dtype=np.float32)
    path = tmp_path / "net.exwq"
    save_checkpoint(path, net)
    loaded = load_checkpoint(path)
    for a, b in zip(net.weights, loaded.weights):
        assert np.array_equal(a, b)
    for a, b in zip(net.biases, loaded.biases):
        assert np.array_equal(a, b)


def test_checkpoint_binary_layout(tmp_path):
    net = QNetwork.zeros()
    path = tmp_path / "net.exwq"
    save_checkpoint(path, net)
    raw = path.read_bytes()
    magic, version, layers = struct.unpack("<4sII", raw[:12])
    assert magic == b"EXWQ"
    assert version == 1
    assert layers == 4
    rows, cols = struct.unpack("<II", raw[12:20])
    assert (rows, cols) == (44, 128)


def test_checkpoint_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.exwq"
    path.write_bytes(b"NOPE" + b"\x00" * 100)
    with pytest.raises(ValidationError):
        load_checkpoint(path)
