"""
CMDP 공통 타입
- CmdpSpec, Transition, Trajectory
- ReplayBuffer (FIFO), UnsafePairSet (S_U)
- 궤적 단위 지표: 할인/비할인 수익, 위험 비용
"""

from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Deque, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import DomainError


@dataclass(frozen=True)
class Discrete:
    """이산 행동 공간 {0, ..., n-1}"""
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"Discrete 행동 수는 양수여야 합니다: {self.n}")

    def contains(self, action) -> bool:
        if isinstance(action, (bool, np.bool_)):
            return False
        if isinstance(action, (int, np.integer)):
            return 0 <= int(action) < self.n
        return False

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.n))


@dataclass(frozen=True)
class ContinuousBox:
    """차원별 [lower, upper] 연속 행동 공간"""
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or not self.lower:
            raise DomainError("ContinuousBox 하한/상한 차원이 맞지 않습니다")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise DomainError("ContinuousBox 하한이 상한보다 큽니다")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, action) -> bool:
        a = np.asarray(action, dtype=float)
        if a.shape != (self.dim,) or not np.all(np.isfinite(a)):
            return False
        return bool(np.all(a >= np.asarray(self.lower)) and np.all(a <= np.asarray(self.upper)))

    def clip(self, action) -> np.ndarray:
        return np.clip(np.asarray(action, dtype=float), self.lower, self.upper)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)


ActionSpace = Union[Discrete, ContinuousBox]


@dataclass(frozen=True)
class CmdpSpec:
    """CMDP 튜플 (S, A, γ, r_min, r_max, d) - d 는 항상 0"""
    state_dim: int
    action_space: ActionSpace
    gamma: float
    reward_min: float
    reward_max: float
    cost_threshold: float = 0.0

    def __post_init__(self):
        if self.state_dim < 1:
            raise DomainError(f"state_dim 은 양수여야 합니다: {self.state_dim}")
        if not 0.0 < self.gamma < 1.0:
            raise DomainError(f"gamma 는 (0, 1) 안에 있어야 합니다: {self.gamma}")
        if self.reward_min > self.reward_max:
            raise DomainError("reward_min 이 reward_max 보다 큽니다")
        if self.cost_threshold != 0:
            raise DomainError("cost_threshold must be 0")


class Outcome(str, Enum):
    """궤적 종료 사유"""
    REACHED_UNSAFE = "reached_unsafe"
    RISK_TRUNCATED = "risk_truncated"
    HORIZON_END = "horizon_end"
    GOAL_TERMINAL = "goal_terminal"


@dataclass(frozen=True, eq=False)
class Transition:
    """환경 한 스텝 (s_t, a_t, r_t, c_t, s_{t+1})"""
    state: np.ndarray
    action: Union[int, np.ndarray]
    reward: float
    cost: int
    next_state: np.ndarray
    terminal: bool
    truncated_by_risk: bool = False
    shaped_reward: Optional[float] = None

    def __post_init__(self):
        if self.cost not in (0, 1):
            raise DomainError(f"cost 는 0 또는 1 이어야 합니다: {self.cost}")
        if self.cost == 1 and not self.terminal:
            raise DomainError("cost=1 전이는 terminal 이어야 합니다")
        if self.cost == 1 and self.truncated_by_risk:
            raise DomainError("위험 절단과 cost=1 은 동시에 일어날 수 없습니다")

    def with_shaped_reward(self, shaped_reward: float) -> "Transition":
        return replace(self, shaped_reward=float(shaped_reward))

    def mark_truncated(self) -> "Transition":
        return replace(self, truncated_by_risk=True)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """완료된 궤적 τ"""
    transitions: Tuple[Transition, ...]
    outcome: Outcome

    def __post_init__(self):
        if not self.transitions:
            raise DomainError("empty trajectory")
        if any(tr.terminal for tr in self.transitions[:-1]):
            raise DomainError("마지막 전이만 terminal 일 수 있습니다")
        last = self.transitions[-1]
        if (self.outcome == Outcome.REACHED_UNSAFE) != (last.cost == 1):
            raise DomainError("ReachedUnsafe 는 마지막 전이의 cost=1 과 일치해야 합니다")
        if self.outcome == Outcome.GOAL_TERMINAL and not last.terminal:
            raise DomainError("GoalTerminal 궤적의 마지막 전이는 terminal 이어야 합니다")
        if self.outcome == Outcome.RISK_TRUNCATED and not last.truncated_by_risk:
            raise DomainError("RiskTruncated 궤적의 마지막 전이는 절단 표시가 있어야 합니다")

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def rewards(self) -> List[float]:
        return [tr.reward for tr in self.transitions]


def _rewards(trajectory: Trajectory, shaped: bool) -> np.ndarray:
    if not trajectory.transitions:
        raise DomainError("empty trajectory")
    if shaped:
        values = []
        for tr in trajectory.transitions:
            if tr.shaped_reward is None:
                raise DomainError("shaped_reward 가 없는 전이가 있습니다")
            values.append(tr.shaped_reward)
        return np.asarray(values, dtype=float)
    return np.asarray(trajectory.rewards, dtype=float)


def _discount_weights(gamma: float, length: int) -> np.ndarray:
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma 는 (0, 1) 안에 있어야 합니다: {gamma}")
    return gamma ** np.arange(length, dtype=float)


def discounted_return(trajectory: Trajectory, gamma: float, shaped: bool = False) -> float:
    """Σ γ^t r_t (shaped=True 이면 shaped_reward 사용)"""
    rewards = _rewards(trajectory, shaped)
    return float(np.dot(_discount_weights(gamma, len(rewards)), rewards))


def undiscounted_return(trajectory: Trajectory) -> float:
    return float(np.sum(_rewards(trajectory, shaped=False)))


def discounted_risk_cost(trajectory: Trajectory, risks: Sequence[float], gamma: float) -> float:
    """궤적 하나의 J_c 추정치 Σ γ^t p_t"""
    if len(risks) != len(trajectory.transitions):
        raise DomainError(
            f"risks 길이({len(risks)})가 궤적 길이({len(trajectory.transitions)})와 다릅니다"
        )
    p = np.asarray(risks, dtype=float)
    if np.any((p < 0.0) | (p > 1.0)):
        raise DomainError("risk 값은 [0, 1] 안에 있어야 합니다")
    return float(np.dot(_discount_weights(gamma, len(p)), p))


def cumulative_cost(trajectory: Trajectory) -> int:
    """비할인 누적 비용 Σ c_t (제약식의 J_c)"""
    if not trajectory.transitions:
        raise DomainError("empty trajectory")
    return int(sum(tr.cost for tr in trajectory.transitions))


class ReplayBuffer:
    """shaped 전이를 담는 FIFO 버퍼 (궤적 집합 D)"""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise DomainError(f"capacity 는 양수여야 합니다: {capacity}")
        self.capacity = capacity
        self._entries: Deque[Transition] = deque(maxlen=capacity)

    def add(self, transition: Transition):
        if transition.shaped_reward is None:
            raise DomainError("ReplayBuffer 에는 shaped 전이만 저장합니다")
        self._entries.append(transition)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Transition]:
        return iter(self._entries)

    def sample(self, batch_size: int, rng: np.random.Generator,
               where=None) -> List[Transition]:
        """복원 추출 - 같은 시드면 같은 결과"""
        if batch_size < 1:
            raise DomainError("batch_size 는 양수여야 합니다")
        pool = self._entries if where is None else [tr for tr in self._entries if where(tr)]
        if not pool:
            raise DomainError("빈 버퍼에서 샘플링할 수 없습니다")
        idxs = rng.integers(0, len(pool), size=batch_size)
        return [pool[i] for i in idxs]


@dataclass(frozen=True, eq=False)
class UnsafePair:
    """S_U 에 저장되는 (state, action) 레코드와 분류기 특징"""
    state: np.ndarray
    action: Union[int, np.ndarray]
    features: np.ndarray


@dataclass
class UnsafePairSet:
    """cost=1 을 일으킨 상태-행동 쌍의 다중집합 S_U"""
    max_size: Optional[int] = None
    pairs: Deque[UnsafePair] = field(default_factory=deque)

    def __post_init__(self):
        if self.max_size is not None and self.max_size < 1:
            raise DomainError(f"max_size 는 양수여야 합니다: {self.max_size}")
        self.pairs = deque(self.pairs, maxlen=self.max_size)

    def add(self, pair: UnsafePair):
        # maxlen 이 있으면 가장 오래된 쌍이 밀려남
        self.pairs.append(pair)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[UnsafePair]:
        return iter(self.pairs)

    def sample_features(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if not self.pairs:
            raise DomainError("빈 S_U 에서 샘플링할 수 없습니다")
        idxs = rng.integers(0, len(self.pairs), size=batch_size)
        return np.stack([self.pairs[i].features for i in idxs])
