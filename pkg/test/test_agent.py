"""
정책 학습기 / shaping 전략 테스트
"""

import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.agent import (ActorCritic, AdditiveLagrangian, FixedPenalty, RiskPreventive, TabularQ,
                       Unshaped, apply_baseline, load_learner)
from src.core import ContinuousBox, Transition
from src.envs import CliffGrid, LineHopper
from src.errors import CheckpointError, DomainError
from src.shaping import LambdaState, ShapingConfig, lambda_lower_bound


def _q_learner(**kwargs):
    env = CliffGrid()
    return env, TabularQ(env.n_states, 4, env.state_index, 0.9,
                         rng=np.random.default_rng(0), **kwargs)


def _shaped(state, action, shaped, next_state, terminal=False, cost=0):
    return Transition(state, action, shaped, cost, next_state, terminal).with_shaped_reward(shaped)


class TestTabularQ(unittest.TestCase):

    def test_01_tie_break(self):
        """Q 가 모두 0 이면 가장 작은 행동 번호"""
        env, learner = _q_learner()
        self.assertEqual(learner.act(env.reset(0), explore=False), 0)

    def test_02_uniform_exploration(self):
        """ε=1 → 시드 고정 균등 무작위"""
        env, a = _q_learner(epsilon=1.0)
        _, b = _q_learner(epsilon=1.0)
        state = env.reset(0)
        draws_a = [a.act(state) for _ in range(400)]
        draws_b = [b.act(state) for _ in range(400)]
        self.assertEqual(draws_a, draws_b)
        self.assertEqual(set(draws_a), {0, 1, 2, 3})

    def test_03_td_update(self):
        """Q ← Q + α (r̂ + γ max Q' - Q)"""
        env, learner = _q_learner(alpha=0.5)
        s, s_next = env.encode((0, 1)), env.encode((1, 1))
        learner.q_table[env.state_index(s_next)] = [0.0, 2.0, 0.0, 0.0]
        learner.update([_shaped(s, 1, -1.0, s_next)])
        self.assertAlmostEqual(learner.q_table[env.state_index(s), 1], 0.5 * (-1.0 + 0.9 * 2.0))

    def test_04_terminal_masking(self):
        env, learner = _q_learner(alpha=0.5)
        s, s_next = env.encode((0, 0)), env.encode((1, 0))
        learner.q_table[env.state_index(s_next)] = [5.0, 5.0, 5.0, 5.0]
        learner.update([_shaped(s, 1, -100.0, s_next, terminal=True, cost=1)])
        self.assertAlmostEqual(learner.q_table[env.state_index(s), 1], -50.0)

    def test_05_zero_learning_rate(self):
        env, learner = _q_learner(alpha=0.0)
        learner.update([_shaped(env.encode((0, 1)), 1, -1.0, env.encode((1, 1)))])
        self.assertFalse(np.any(learner.q_table))

    def test_06_epsilon_decay(self):
        _, learner = _q_learner(epsilon=0.1, epsilon_min=0.05, epsilon_decay=0.5)
        learner.end_episode()
        self.assertAlmostEqual(learner.epsilon, 0.05)
        learner.end_episode()
        self.assertAlmostEqual(learner.epsilon, 0.05)

    def test_07_invalid_batches(self):
        env, learner = _q_learner()
        with self.assertRaises(DomainError):
            learner.update([])
        raw = Transition(env.encode((0, 1)), 1, -1.0, 0, env.encode((1, 1)), False)
        with self.assertRaises(DomainError):
            learner.update([raw])

    def test_08_checkpoint_reload(self):
        env, learner = _q_learner()
        learner.q_table[:] = np.random.default_rng(1).normal(size=learner.q_table.shape)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "learner.tensor"
            learner.save(path)
            loaded = load_learner(path, env)
            np.testing.assert_array_equal(loaded.q_table, learner.q_table)
            with self.assertRaises(CheckpointError):
                load_learner(path, CliffGrid(width=6))


class TestActorCritic(unittest.TestCase):

    def _learner(self, **kwargs):
        space = ContinuousBox((-1.0,), (1.0,))
        return ActorCritic(2, space, 0.9, rng=np.random.default_rng(3), hidden_dim=8, **kwargs)

    def test_01_deterministic_mean_action(self):
        learner = self._learner()
        state = np.array([0.3, -0.2])
        np.testing.assert_array_equal(learner.act(state, explore=False),
                                      learner.act(state, explore=False))

    def test_02_actions_inside_box(self):
        learner = self._learner(initial_log_std=1.5)
        state = np.array([0.3, -0.2])
        for _ in range(100):
            action = learner.act(state)
            self.assertTrue(learner.action_space.contains(action))

    def test_03_zero_learning_rate(self):
        learner = self._learner(actor_lr=0.0, critic_lr=0.0)
        before = {k: v.copy() for k, v in {**learner.actor, **learner.critic}.items()}
        state = np.array([0.3, -0.2])
        learner.update([_shaped(state, learner.act(state), 1.0, state, terminal=True)])
        for name, value in {**learner.actor, **learner.critic}.items():
            np.testing.assert_array_equal(value, before[name])

    def test_04_critic_converges(self):
        """terminal 보상 1 을 반복하면 V(s) → 1"""
        learner = self._learner(critic_lr=1e-2)
        state = np.array([0.5, 0.5])
        batch = [_shaped(state, np.array([0.0]), 1.0, state, terminal=True)] * 8
        for _ in range(2000):
            learner.update(batch)
        self.assertAlmostEqual(learner.value(state), 1.0, delta=0.05)

    def test_05_bandit_mean_moves_to_best_action(self):
        """보상 -(a - 0.5)^2 인 한 스텝 문제에서 평균 행동 → 0.5"""
        learner = self._learner(actor_lr=1e-2, critic_lr=1e-2)
        state = np.array([0.5, -0.5])
        for _ in range(400):
            batch = []
            for _ in range(64):
                action = learner.act(state)
                reward = -float((action[0] - 0.5) ** 2)
                batch.append(_shaped(state, action, reward, state, terminal=True))
            learner.update(batch)
        self.assertAlmostEqual(float(learner.mean_action(state)[0]), 0.5, delta=0.1)

    def test_06_checkpoint_reload(self):
        env = LineHopper()
        learner = ActorCritic(env.spec.state_dim, env.spec.action_space, env.gamma,
                              rng=np.random.default_rng(0), hidden_dim=4)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "learner.tensor"
            learner.save(path)
            loaded = load_learner(path, env)
        state = env.reset(0)
        np.testing.assert_array_equal(loaded.act(state, explore=False),
                                      learner.act(state, explore=False))
        self.assertEqual(loaded.value(state), learner.value(state))


class TestStrategies(unittest.TestCase):

    def test_01_unshaped_identity(self):
        strategy = Unshaped()
        self.assertEqual(strategy.shape(-1.25, 0.9), -1.25)
        self.assertEqual(strategy.lam, 0.0)
        self.assertFalse(strategy.truncates)

    def test_02_fixed_penalty(self):
        self.assertAlmostEqual(FixedPenalty(5.0).shape(1.0, 0.2), 0.0)
        with self.assertRaises(DomainError):
            FixedPenalty(-1.0)

    def test_03_additive_lagrangian(self):
        """Ĵ_c = 0 이면 λ 유지, 양수면 증가, 0 아래로는 내려가지 않음"""
        strategy = AdditiveLagrangian(learning_rate=0.01)
        strategy.on_episode_end(0.0)
        self.assertEqual(strategy.lam, 0.0)
        strategy.on_episode_end(2.0)
        self.assertAlmostEqual(strategy.lam, 0.02)
        strategy = AdditiveLagrangian(learning_rate=0.01, cost_threshold=5.0)
        strategy.on_episode_end(0.0)
        self.assertEqual(strategy.lam, 0.0)

    def test_04_risk_preventive_bumps_lambda(self):
        cfg = ShapingConfig(eta=0.9, gamma=0.99, reward_min=-100.0, reward_max=10.0)
        strategy = RiskPreventive(cfg, LambdaState())
        self.assertTrue(strategy.truncates)
        strategy.on_violation(1, p0=0.0)
        self.assertAlmostEqual(strategy.lam, 1.05 * 110.0 / 0.9)
        self.assertEqual(strategy.state.unsafe_lengths, (1,))

    def test_05_frozen_lambda(self):
        cfg = ShapingConfig(eta=0.9, gamma=0.99, reward_min=0.0, reward_max=1.0)
        strategy = RiskPreventive(cfg, LambdaState(lam=2.0), freeze_lambda=True)
        strategy.on_violation(10, p0=0.0)
        self.assertEqual(strategy.lam, 2.0)
        self.assertEqual(strategy.state.unsafe_lengths, (10,))
        self.assertLess(strategy.lam, lambda_lower_bound(0.99, 10, 0.9, 0.0, 0.0, 1.0))

    def test_06_apply_baseline(self):
        tr = Transition(np.zeros(2), 0, 1.0, 0, np.zeros(2), False)
        shaped = apply_baseline(FixedPenalty(10.0), tr, 0.5)
        self.assertEqual(shaped.shaped_reward, -4.0)
        self.assertIsNone(tr.shaped_reward)


if __name__ == '__main__':
    unittest.main(verbosity=2)
