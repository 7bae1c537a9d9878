import math

import numpy as np
import pytest

from tilestream.a3c import (
    BanditEnv,
    NetSpec,
    PolicyParameters,
    TrainingConfig,
    Transition,
    act,
    actor_gradient,
    advantage,
    clip_gradients,
    critic_gradient,
    entropy,
    forward,
    policy_forward,
    sample_action,
    train,
    value_forward,
)
from tilestream.env import SessionState
from tilestream.errors import ConfigError, InvalidInput, TrainingError
from tilestream.priority import Priority

from tests.grad_check import random_batch, tiny_params


def state(b=0.0, deciding=Priority.TOP, rng=None, x=8, n=64, levels=6):
    rng = rng or np.random.default_rng(0)
    w = rng.multinomial(n, np.ones(4) / 4)
    return SessionState(
        h=rng.uniform(0, 20, x),
        sigma=rng.uniform(0, 1, x),
        p=rng.choice([0, 0.25, 0.5, 1.0], n),
        q=np.array([0, 1, 5, 8, 16, 35][:levels], float),
        l=rng.integers(0, levels, 4).astype(float),
        w=w,
        alpha=w,
        b=b,
        deciding=deciding,
        chunk=0,
    )


def default_params(seed=0):
    return PolicyParameters.initialize(NetSpec.for_state(state()), seed)


class TestForward:
    def test_zero_params(self):
        p = default_params()
        z = PolicyParameters(p.spec, {k: np.zeros_like(v) for k, v in p.actor.items()}, {k: np.zeros_like(v) for k, v in p.critic.items()})
        assert np.array_equal(policy_forward(z, state()), np.full(6, 1 / 6))
        assert value_forward(z, state()) == 0.0

    def test_deterministic_and_normalized(self):
        p = default_params(3)
        s = state(rng=np.random.default_rng(5))
        a, b = policy_forward(p, s), policy_forward(p, s)
        assert np.array_equal(a, b)
        assert abs(a.sum() - 1) <= 1e-9 and np.all(a > 0)
        assert value_forward(p, s) == value_forward(p, s)

    def test_hand_sized_net(self):
        spec = NetSpec((1,) * 5, (1, 1, 1), n_actions=2, filters=1, kernel=1, linear_units=1, hidden=1)
        rng = np.random.default_rng(2)
        params = {k: rng.uniform(-1, 1, s) for k, s in spec.shapes(2).items()}
        params["hid_b"] = np.array([2.0])  # keep the hidden unit active
        seqs = [np.array([[v]]) for v in (0.3, -0.5, 0.8, 1.0, 0.2)]
        vecs = [np.array([[v]]) for v in (0.25, 0.5, 0.9)]
        relu = lambda v: max(v, 0.0)
        feats = [relu(params[f"conv{i}_W"][0, 0] * s[0, 0] + params[f"conv{i}_b"][0]) for i, s in enumerate(seqs)]
        feats += [relu(params[f"lin{j}_W"][0, 0] * v[0, 0] + params[f"lin{j}_b"][0]) for j, v in enumerate(vecs)]
        hid = relu(sum(wk * f for wk, f in zip(params["hid_W"][0], feats)) + params["hid_b"][0])
        expected = [params["out_W"][k, 0] * hid + params["out_b"][k] for k in range(2)]
        out, _ = forward(params, spec, seqs, vecs)
        assert out[0] == pytest.approx(expected, abs=1e-14)

    def test_nan_state_rejected(self):
        s = state()
        bad = SessionState(**{**s.__dict__, "b": math.nan})
        with pytest.raises(InvalidInput):
            policy_forward(default_params(), bad)

    def test_softmax_shift_invariance(self):
        p = default_params(1)
        s = state(rng=np.random.default_rng(9))
        before = policy_forward(p, s)
        shifted = p.copy()
        shifted.actor["out_b"] += 123.0
        after = policy_forward(shifted, s)
        assert np.max(np.abs(before - after)) <= 1e-12
        assert act(p, s, "greedy") == act(shifted, s, "greedy")

    def test_entropy_bounds(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            p = PolicyParameters.initialize(NetSpec.for_state(state()), int(rng.integers(1 << 30)), scale=rng.uniform(0.01, 2))
            h = entropy(policy_forward(p, state(b=rng.uniform(0, 5), rng=rng)))
            assert 0 <= h <= math.log(6) + 1e-12


class TestAct:
    def test_uniform_greedy_picks_zero(self):
        p = default_params()
        p.actor = {k: np.zeros_like(v) for k, v in p.actor.items()}
        assert act(p, state(), "greedy") == 0

    def test_one_hot(self):
        p = default_params()
        p.actor = {k: np.zeros_like(v) for k, v in p.actor.items()}
        p.actor["out_b"][3] = 800.0
        rng = np.random.default_rng(0)
        assert act(p, state(), "greedy") == 3
        assert all(act(p, state(), "sample", rng) == 3 for _ in range(20))

    def test_sampling_frequencies(self):
        probs = np.array([0.05, 0.1, 0.15, 0.2, 0.2, 0.3])
        rng = np.random.default_rng(11)
        n = 100_000
        counts = np.bincount([sample_action(probs, rng) for _ in range(n)], minlength=6)
        sigma = np.sqrt(n * probs * (1 - probs))
        assert np.all(np.abs(counts - n * probs) <= 3 * sigma)

    def test_bad_mode(self):
        with pytest.raises(InvalidInput):
            act(default_params(), state(), "best")


class TestAdvantage:
    def linear_critic(self):
        """V(s) equals the buffer occupancy (buffer scale 1)."""
        spec = NetSpec((4,) * 5, (4, 8, 1), n_actions=6, filters=1, kernel=4, linear_units=1, hidden=1)
        p = PolicyParameters.initialize(spec, 0, buffer_scale=1.0)
        p.critic = {k: np.zeros_like(v) for k, v in p.critic.items()}
        p.critic["lin2_W"][0, 0] = 1.0
        p.critic["hid_W"][0, -1] = 1.0
        p.critic["out_W"][0, 0] = 1.0
        return p

    def test_reward_only(self):
        p = self.linear_critic()
        s = state(b=0.0, x=4, n=4, levels=4)
        assert advantage(Transition(s, 0, 1.0, s, False), p) == 1.0

    def test_worked_value(self):
        p = self.linear_critic()
        s, s2 = state(b=1.0, x=4, n=4, levels=4), state(b=2.0, x=4, n=4, levels=4)
        assert advantage(Transition(s, 0, 0.0, s2, False), p, 0.99) == pytest.approx(0.98, abs=1e-12)
        assert advantage(Transition(s, 0, 0.0, s2, True), p, 0.99) == pytest.approx(-1.0, abs=1e-12)

    def test_critic_hand_gradient(self):
        p = self.linear_critic()
        s, s2 = state(b=1.0, x=4, n=4, levels=4), state(b=2.0, x=4, n=4, levels=4)
        tr = Transition(s, 0, 0.5, s2, False)
        delta = 0.5 + 0.99 * 2.0 - 1.0
        g = critic_gradient(p, [tr], 0.99)
        # dV/d out_b = 1 and dV/d out_W = hidden activation = b
        assert g["out_b"][0] == pytest.approx(-2 * delta, abs=1e-12)
        assert g["out_W"][0, 0] == pytest.approx(-2 * delta * 1.0, abs=1e-12)

    def test_zero_td_zero_gradient(self):
        p = self.linear_critic()
        s = state(b=0.0, x=4, n=4, levels=4)
        g = critic_gradient(p, [Transition(s, 0, 0.0, s, True)], 0.99)
        assert all(not v.any() for v in g.values())


class TestActorGradient:
    def test_zero_advantage_zero_beta(self):
        p = default_params(2)
        batch = [Transition(state(rng=np.random.default_rng(k)), k % 6, 0.0, None, True) for k in range(5)]
        g = actor_gradient(p, batch, np.zeros(5), 0.0)
        assert all(not v.any() for v in g.values())

    def test_entropy_pushes_toward_uniform(self):
        p = default_params(2)
        p.actor["out_b"][:] = [3.0, 0, 0, 0, 0, 0]
        s = state()
        g = actor_gradient(p, [Transition(s, 0, 0.0, None, True)], [0.0], 1.0)
        assert np.argmax(policy_forward(p, s)) == 0
        assert g["out_b"][0] < 0 and np.all(g["out_b"][1:] > 0)

    def test_empty_batch(self):
        with pytest.raises(InvalidInput):
            actor_gradient(default_params(), [], [], 0.1)
        with pytest.raises(InvalidInput):
            critic_gradient(default_params(), [])

    def test_finite_differences_small(self):
        from tests.grad_check import check_actor, check_critic

        rng = np.random.default_rng(0)
        for _ in range(5):
            params = tiny_params(rng)
            batch, adv, beta = random_batch(rng, params)
            assert check_actor(params, batch, adv, beta) < 1e-4
            assert check_critic(params, batch, 0.9) < 1e-4


def test_clip():
    g = {"a": np.array([30.0, 40.0])}
    clipped, hit = clip_gradients(g, 40.0)
    assert hit and np.linalg.norm(clipped["a"]) == pytest.approx(40.0)
    same, hit = clip_gradients(g, 50.0)
    assert not hit and same is g
    with pytest.raises(TrainingError):
        clip_gradients({"a": np.array([np.nan])}, 40.0)


class TestTrain:
    def test_zero_episodes(self):
        init = PolicyParameters.initialize(NetSpec.for_state(BanditEnv().reset(), 2), 7)
        r = train(TrainingConfig(episodes=0), lambda w: BanditEnv(), init)
        assert r.log == []
        for k in init.actor:
            assert np.array_equal(init.actor[k], r.params.actor[k])

    def test_single_worker_reproducible(self):
        cfg = TrainingConfig(episodes=30, actor_lr=0.01, critic_lr=0.01, seed=4, hidden=16)
        a, b = train(cfg, lambda w: BanditEnv()), train(cfg, lambda w: BanditEnv())
        assert a.log == b.log
        for k in a.params.actor:
            assert np.array_equal(a.params.actor[k], b.params.actor[k])

    def test_bandit_learns(self):
        cfg = TrainingConfig(episodes=500, actor_lr=0.05, critic_lr=0.01, seed=1)
        r = train(cfg, lambda w: BanditEnv())
        assert policy_forward(r.params, BanditEnv().reset())[0] > 0.9
        assert r.log[0].entropy_weight == 1.0 and r.log[-1].entropy_weight == pytest.approx(0.1)

    def test_multi_worker(self):
        cfg = TrainingConfig(episodes=300, workers=3, actor_lr=0.05, critic_lr=0.01, hidden=16)
        r = train(cfg, lambda w: BanditEnv())
        assert [e.episode for e in r.log] == list(range(300))
        assert policy_forward(r.params, BanditEnv().reset())[0] > 0.5

    def test_nan_reward_aborts(self):
        class Broken(BanditEnv):
            def step(self, action):
                out = super().step(action)
                return type(out)(out.state, math.nan, True)

        with pytest.raises(TrainingError):
            train(TrainingConfig(episodes=3), lambda w: Broken())
        with pytest.raises(TrainingError):
            train(TrainingConfig(episodes=6, workers=2), lambda w: Broken())

    def test_config_validation(self):
        for kw in ({"gamma": 0}, {"actor_lr": 0}, {"entropy_start": 0.1, "entropy_end": 1.0}, {"workers": 0}):
            with pytest.raises(ConfigError):
                TrainingConfig(**kw)

    def test_log_csv(self, tmp_path):
        r = train(TrainingConfig(episodes=3), lambda w: BanditEnv())
        r.write_log(tmp_path / "log.csv")
        lines = (tmp_path / "log.csv").read_text().splitlines()
        assert lines[0] == "episode,return,entropy_weight,mean_td_error" and len(lines) == 4


def test_checkpoint_round_trip(tmp_path):
    p = default_params(5)
    p.save(tmp_path / "a.ckpt")
    q = PolicyParameters.load(tmp_path / "a.ckpt")
    assert q.spec == p.spec and q.buffer_scale == p.buffer_scale
    s = state()
    assert np.array_equal(policy_forward(p, s), policy_forward(q, s))
    with pytest.raises(InvalidInput):
        from tilestream.checkpoint import save_checkpoint

        save_checkpoint(tmp_path / "b.ckpt", "predictor", {"x": np.zeros(2)})
        PolicyParameters.load(tmp_path / "b.ckpt")
