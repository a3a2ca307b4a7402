"""
정책 학습기와 보상 shaping 전략
- TabularQ: 이산 환경용 ε-greedy Q-learning
- ActorCritic: 연속 환경용 가우시안 actor + 가치 critic (numpy, Adam)
- 전략: Unshaped / FixedPenalty / AdditiveLagrangian / RiskPreventive
"""

import abc
from dataclasses import replace
from typing import Callable, Optional, Sequence

import numpy as np
from loguru import logger

from src.checkpoint import load_tensors, require_tensors, save_tensors
from src.core import ContinuousBox, Discrete, Transition
from src.errors import CheckpointError, DomainError, TrainingError
from src.riskmodel import OptimizerState, adam_step
from src.shaping import LambdaState, ShapingConfig, shape_reward, update_lambda

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0


class PolicyLearner(abc.ABC):
    """act(state, explore) / update(batch) 계약"""

    kind = "policy-learner"

    @abc.abstractmethod
    def act(self, state: np.ndarray, explore: bool = True):
        ...

    @abc.abstractmethod
    def update(self, batch: Sequence[Transition]) -> "PolicyLearner":
        ...

    def end_episode(self):
        """에피소드 경계에서 탐험 스케줄 진행"""

    @abc.abstractmethod
    def save(self, path):
        ...


def _check_batch(batch: Sequence[Transition]):
    if not batch:
        raise DomainError("빈 배치로 update 할 수 없습니다")
    for tr in batch:
        if tr.shaped_reward is None:
            raise DomainError("shaped_reward 가 없는 전이로 update 할 수 없습니다")


class TabularQ(PolicyLearner):
    """Q(s, a) 표 - 동점이면 가장 작은 행동 번호"""

    kind = "tabular-q"

    def __init__(self, n_states: int, n_actions: int, state_index: Callable[[np.ndarray], int],
                 gamma: float, rng: Optional[np.random.Generator] = None,
                 alpha: float = 0.5, epsilon: float = 1.0, epsilon_min: float = 0.05,
                 epsilon_decay: float = 0.995):
        if not 0.0 <= epsilon <= 1.0 or not 0.0 <= epsilon_min <= 1.0:
            raise DomainError("epsilon 은 [0, 1] 안에 있어야 합니다")
        self.n_states = n_states
        self.n_actions = n_actions
        self.state_index = state_index
        self.gamma = gamma
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.alpha = alpha
        self.epsilon = epsilon
        self.epsilon_min = epsilon_min
        self.epsilon_decay = epsilon_decay
        self.q_table = np.zeros((n_states, n_actions))

    def greedy(self, state: np.ndarray) -> int:
        return int(np.argmax(self.q_table[self.state_index(state)]))

    def act(self, state: np.ndarray, explore: bool = True) -> int:
        if explore and self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.n_actions))
        return self.greedy(state)

    def update(self, batch: Sequence[Transition]) -> "TabularQ":
        _check_batch(batch)
        for tr in batch:
            s = self.state_index(tr.state)
            a = int(tr.action)
            target = tr.shaped_reward
            if not tr.terminal:
                target += self.gamma * float(np.max(self.q_table[self.state_index(tr.next_state)]))
            self.q_table[s, a] += self.alpha * (target - self.q_table[s, a])
            if not np.isfinite(self.q_table[s, a]):
                raise TrainingError(f"Q({s}, {a}) 가 유한하지 않습니다", parameter="q_table")
        return self

    def end_episode(self):
        self.epsilon = max(self.epsilon_min, self.epsilon * self.epsilon_decay)

    def save(self, path):
        save_tensors(path, self.kind, {
            "n_states": self.n_states, "n_actions": self.n_actions, "gamma": float(self.gamma),
            "alpha": float(self.alpha), "epsilon": float(self.epsilon),
            "epsilon_min": float(self.epsilon_min), "epsilon_decay": float(self.epsilon_decay),
        }, {"q_table": self.q_table})


class ActorCritic(PolicyLearner):
    """
    actor: state → tanh 은닉층 → 행동 평균, 상태 무관 log-std 파라미터
    critic: state → tanh 은닉층 → V(s)
    """

    kind = "actor-critic"
    ACTOR_PARAMS = ("W1", "b1", "W_mu", "b_mu", "log_std")
    CRITIC_PARAMS = ("V1", "c1", "V2", "c2")

    def __init__(self, state_dim: int, action_space: ContinuousBox, gamma: float,
                 rng: Optional[np.random.Generator] = None, hidden_dim: int = 32,
                 actor_lr: float = 3e-4, critic_lr: float = 1e-3, entropy_coef: float = 1e-3,
                 initial_log_std: float = -0.5):
        self.state_dim = state_dim
        self.action_space = action_space
        self.gamma = gamma
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.hidden_dim = hidden_dim
        self.entropy_coef = entropy_coef

        k = action_space.dim
        lim_in = np.sqrt(6.0 / (state_dim + hidden_dim))
        lim_out = np.sqrt(6.0 / (hidden_dim + k))
        self.actor = {
            "W1": self.rng.uniform(-lim_in, lim_in, size=(hidden_dim, state_dim)),
            "b1": np.zeros(hidden_dim),
            "W_mu": self.rng.uniform(-lim_out, lim_out, size=(k, hidden_dim)) * 0.1,
            "b_mu": np.zeros(k),
            "log_std": np.full(k, float(initial_log_std)),
        }
        lim_v = np.sqrt(6.0 / (hidden_dim + 1))
        self.critic = {
            "V1": self.rng.uniform(-lim_in, lim_in, size=(hidden_dim, state_dim)),
            "c1": np.zeros(hidden_dim),
            "V2": self.rng.uniform(-lim_v, lim_v, size=(1, hidden_dim)),
            "c2": np.zeros(1),
        }
        self.actor_opt = OptimizerState(learning_rate=actor_lr)
        self.critic_opt = OptimizerState(learning_rate=critic_lr)

    # 순전파
    def _actor_forward(self, states: np.ndarray):
        hidden = np.tanh(states @ self.actor["W1"].T + self.actor["b1"])
        mean = hidden @ self.actor["W_mu"].T + self.actor["b_mu"]
        return hidden, mean

    def _critic_forward(self, states: np.ndarray):
        hidden = np.tanh(states @ self.critic["V1"].T + self.critic["c1"])
        value = hidden @ self.critic["V2"][0] + self.critic["c2"][0]
        return hidden, value

    def mean_action(self, state: np.ndarray) -> np.ndarray:
        _, mean = self._actor_forward(np.atleast_2d(np.asarray(state, dtype=float)))
        return mean[0]

    def value(self, state: np.ndarray) -> float:
        _, v = self._critic_forward(np.atleast_2d(np.asarray(state, dtype=float)))
        return float(v[0])

    def act(self, state: np.ndarray, explore: bool = True) -> np.ndarray:
        mean = self.mean_action(state)
        if explore:
            std = np.exp(self.actor["log_std"])
            mean = mean + std * self.rng.standard_normal(mean.shape)
        return self.action_space.clip(mean)

    def update(self, batch: Sequence[Transition]) -> "ActorCritic":
        """critic 회귀 한 스텝 + advantage 가중 정책 그래디언트 한 스텝"""
        _check_batch(batch)
        states = np.stack([np.asarray(tr.state, dtype=float) for tr in batch])
        next_states = np.stack([np.asarray(tr.next_state, dtype=float) for tr in batch])
        actions = np.stack([np.asarray(tr.action, dtype=float).reshape(-1) for tr in batch])
        rewards = np.array([tr.shaped_reward for tr in batch], dtype=float)
        not_done = np.array([0.0 if tr.terminal else 1.0 for tr in batch])
        n = len(batch)

        critic_hidden, values = self._critic_forward(states)
        _, next_values = self._critic_forward(next_states)
        targets = rewards + self.gamma * not_done * next_values
        advantages = targets - values

        # critic: 0.5 · mean (V - target)^2
        dv = (values - targets) / n
        d_hidden = np.outer(dv, self.critic["V2"][0]) * (1.0 - critic_hidden ** 2)
        critic_grads = {
            "V1": d_hidden.T @ states,
            "c1": d_hidden.sum(axis=0),
            "V2": (dv @ critic_hidden)[None, :],
            "c2": np.array([dv.sum()]),
        }

        # actor: -mean(A · log π(a|s)) - entropy_coef · H(π)
        actor_hidden, means = self._actor_forward(states)
        log_std = self.actor["log_std"]
        var = np.exp(2.0 * log_std)
        diff = actions - means
        d_mean = -(advantages[:, None] * diff / var) / n
        d_log_std = -np.mean(advantages[:, None] * (diff ** 2 / var - 1.0), axis=0) - self.entropy_coef
        d_actor_hidden = (d_mean @ self.actor["W_mu"]) * (1.0 - actor_hidden ** 2)
        actor_grads = {
            "W1": d_actor_hidden.T @ states,
            "b1": d_actor_hidden.sum(axis=0),
            "W_mu": d_mean.T @ actor_hidden,
            "b_mu": d_mean.sum(axis=0),
            "log_std": d_log_std,
        }

        self.critic, self.critic_opt = adam_step(self.critic, critic_grads, self.critic_opt)
        self.actor, self.actor_opt = adam_step(self.actor, actor_grads, self.actor_opt)
        self.actor["log_std"] = np.clip(self.actor["log_std"], LOG_STD_MIN, LOG_STD_MAX)
        return self

    def save(self, path):
        tensors = {name: self.actor[name] for name in self.ACTOR_PARAMS}
        tensors.update({name: self.critic[name] for name in self.CRITIC_PARAMS})
        save_tensors(path, self.kind, {
            "state_dim": self.state_dim, "action_dim": self.action_space.dim,
            "hidden_dim": self.hidden_dim, "gamma": float(self.gamma),
            "entropy_coef": float(self.entropy_coef),
        }, tensors)


def load_learner(path, env, rng: Optional[np.random.Generator] = None) -> PolicyLearner:
    """환경의 행동 공간으로 학습기 종류를 정하고 체크포인트를 읽음"""
    space = env.spec.action_space
    if isinstance(space, Discrete):
        meta, tensors = load_tensors(path, TabularQ.kind)
        try:
            n_states, n_actions = int(meta["n_states"]), int(meta["n_actions"])
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError("n_states/n_actions 메타가 없습니다", path=str(path)) from e
        if n_states != env.n_states or n_actions != space.n:
            raise CheckpointError("환경과 Q 표 크기가 맞지 않습니다", path=str(path))
        require_tensors(tensors, {"q_table": (n_states, n_actions)}, str(path))
        learner = TabularQ(n_states, n_actions, env.state_index, float(meta.get("gamma", env.gamma)),
                           rng=rng, alpha=float(meta.get("alpha", 0.5)),
                           epsilon=float(meta.get("epsilon", 0.0)),
                           epsilon_min=float(meta.get("epsilon_min", 0.0)),
                           epsilon_decay=float(meta.get("epsilon_decay", 1.0)))
        learner.q_table = tensors["q_table"]
        return learner

    meta, tensors = load_tensors(path, ActorCritic.kind)
    try:
        d, k, h = int(meta["state_dim"]), int(meta["action_dim"]), int(meta["hidden_dim"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError("state_dim/action_dim/hidden_dim 메타가 없습니다", path=str(path)) from e
    if d != env.spec.state_dim or k != space.dim:
        raise CheckpointError("환경과 actor-critic 차원이 맞지 않습니다", path=str(path))
    require_tensors(tensors, {
        "W1": (h, d), "b1": (h,), "W_mu": (k, h), "b_mu": (k,), "log_std": (k,),
        "V1": (h, d), "c1": (h,), "V2": (1, h), "c2": (1,),
    }, str(path))
    learner = ActorCritic(d, space, float(meta.get("gamma", env.gamma)), rng=rng, hidden_dim=h,
                          entropy_coef=float(meta.get("entropy_coef", 1e-3)))
    learner.actor = {name: tensors[name] for name in ActorCritic.ACTOR_PARAMS}
    learner.critic = {name: tensors[name] for name in ActorCritic.CRITIC_PARAMS}
    return learner


# ---------------------------------------------------------------------------
# shaping 전략
# ---------------------------------------------------------------------------

class ShapingStrategy(abc.ABC):
    """보상 shaping 방식과 λ 갱신 규칙"""

    name = "strategy"
    truncates = False
    uses_risk = True

    @property
    @abc.abstractmethod
    def lam(self) -> float:
        ...

    def shape(self, reward: float, p: float) -> float:
        return shape_reward(reward, p, self.lam)

    def on_violation(self, H: int, p0: float):
        """위험 궤적(길이 H) 관측"""

    def on_episode_end(self, risk_cost: float):
        """에피소드 종료 (추정 위험 비용 Ĵ_c)"""


class Unshaped(ShapingStrategy):
    name = "unshaped"
    uses_risk = False

    @property
    def lam(self) -> float:
        return 0.0

    def shape(self, reward: float, p: float) -> float:
        return reward


class FixedPenalty(ShapingStrategy):
    name = "fixed-penalty"

    def __init__(self, lam: float = 10.0):
        if lam < 0.0:
            raise DomainError(f"fixed lambda 는 0 이상이어야 합니다: {lam}")
        self._lam = float(lam)

    @property
    def lam(self) -> float:
        return self._lam


class AdditiveLagrangian(ShapingStrategy):
    """λ ← max(0, λ + α_λ · (Ĵ_c - d)), d = 0"""

    name = "additive-lagrangian"

    def __init__(self, learning_rate: float = 0.01, initial_lambda: float = 0.0,
                 cost_threshold: float = 0.0):
        self.learning_rate = learning_rate
        self.cost_threshold = cost_threshold
        self._lam = float(initial_lambda)

    @property
    def lam(self) -> float:
        return self._lam

    def on_episode_end(self, risk_cost: float):
        self._lam = max(0.0, self._lam + self.learning_rate * (risk_cost - self.cost_threshold))


class RiskPreventive(ShapingStrategy):
    """위험 절단 + 이론 하한으로 올리는 λ"""

    name = "rpt"
    truncates = True

    def __init__(self, shaping: ShapingConfig, state: LambdaState, freeze_lambda: bool = False):
        self.shaping = shaping
        self.state = state
        self.freeze_lambda = freeze_lambda

    @property
    def lam(self) -> float:
        return self.state.lam

    def on_violation(self, H: int, p0: float):
        if self.freeze_lambda:
            self.state = replace(self.state, unsafe_lengths=self.state.unsafe_lengths + (int(H),))
            return
        before = self.state.lam
        self.state = update_lambda(self.state, H, self.shaping, p0=p0)
        if self.state.lam > before:
            logger.info(f"📈 λ 갱신 {before:.6g} → {self.state.lam:.6g} (H={H})")


STRATEGIES = ("rpt", "unshaped", "fixed-penalty", "additive-lagrangian")


def apply_baseline(strategy: ShapingStrategy, transition: Transition, risk_p: float) -> Transition:
    """전략의 현재 λ 로 shaped_reward 를 채운 전이"""
    return transition.with_shaped_reward(strategy.shape(transition.reward, risk_p))
