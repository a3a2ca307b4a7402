"""
데스크 규모 결정론적 환경 (이진 안전 비용)
- CliffGrid: 12x4 절벽 격자 (이산 상태/행동)
- PuddlePoint: 2차원 점 질량 + 위험 원판 (연속 상태/행동)
- LineHopper: 1차원 추력 호퍼, 낙하 시 위반 (연속 상태/행동)
위험 상태 진입 → cost=1 → 에피소드 종료
"""

import abc
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.core import CmdpSpec, ContinuousBox, Discrete
from src.errors import ConfigError, DomainError, UsageError


@dataclass(frozen=True)
class StepResult:
    next_state: np.ndarray
    reward: float
    cost: int
    terminal: bool


class Environment(abc.ABC):
    """환경 계약: reset(seed) / step(action) / feature_vector(state, action)"""

    name = "environment"
    DEFAULTS: Dict[str, Any] = {}

    def __init__(self, gamma: float = 0.99, max_episode_steps: Optional[int] = None,
                 **geometry):
        unknown = sorted(set(geometry) - set(self.DEFAULTS))
        if unknown:
            raise ConfigError(
                f"{self.name} 에 없는 geometry 키: {unknown[0]}",
                key=f"environment.geometry.{unknown[0]}",
            )
        self.geometry = {**self.DEFAULTS, **geometry}
        self.gamma = gamma
        self._validate_geometry()
        self.spec = self._build_spec(gamma)
        self.max_episode_steps = max_episode_steps or self.default_max_steps
        if self.max_episode_steps < 1:
            raise ConfigError("max_episode_steps 는 양수여야 합니다",
                              key="environment.max_episode_steps")
        self._terminal = True

    default_max_steps = 100

    @abc.abstractmethod
    def _validate_geometry(self):
        ...

    @abc.abstractmethod
    def _build_spec(self, gamma: float) -> CmdpSpec:
        ...

    @abc.abstractmethod
    def _reset(self, rng: np.random.Generator) -> np.ndarray:
        ...

    @abc.abstractmethod
    def _step(self, action) -> StepResult:
        ...

    @abc.abstractmethod
    def feature_vector(self, state: np.ndarray, action) -> np.ndarray:
        """분류기 입력 - 성분은 [-1, 1]"""

    def reset(self, seed: int) -> np.ndarray:
        self._terminal = False
        return self._reset(np.random.default_rng(seed))

    def step(self, action) -> StepResult:
        if self._terminal:
            raise UsageError(f"{self.name}: 종료된 에피소드에서 step 을 호출했습니다 (reset 필요)")
        if not self.spec.action_space.contains(action):
            raise DomainError(f"{self.name}: 행동이 행동 공간을 벗어났습니다: {action!r}")
        result = self._step(action)
        self._terminal = result.terminal
        return result

    # 표 기반 학습기를 위한 상태 색인 (이산 상태 환경만)
    n_states: Optional[int] = None

    def state_index(self, state: np.ndarray) -> int:
        raise UsageError(f"{self.name} 은 이산 상태 색인을 제공하지 않습니다")


class CliffGrid(Environment):
    """
    절벽 격자 (좌표 (x, y), y=0 이 맨 아래 줄)

    y=3: . . . . . . . . . . . .
    y=2: . . . . . . . . . . . .
    y=1: . . . . . . . . . . . .
    y=0: S C C C C C C C C C C G
    """

    name = "cliff-grid"
    DEFAULTS = {
        'width': 12,
        'height': 4,
        'start': (0, 0),
        'goal': None,        # None → (width-1, 0)
        'cliff': None,       # None → 아래 줄 시작/목표 사이 전체
        'step_reward': -1.0,
        'goal_reward': 10.0,
        'cliff_reward': -100.0,
    }
    # 0=up, 1=right, 2=down, 3=left
    ACTION_DELTAS = ((0, 1), (1, 0), (0, -1), (-1, 0))
    ACTION_NAMES = ('up', 'right', 'down', 'left')

    def _validate_geometry(self):
        g = self.geometry
        self.width, self.height = int(g['width']), int(g['height'])
        if self.width < 2 or self.height < 1:
            raise ConfigError("격자 크기가 너무 작습니다", key="environment.geometry.width")
        self.start = tuple(int(v) for v in g['start'])
        self.goal = tuple(int(v) for v in (g['goal'] or (self.width - 1, 0)))
        if g['cliff'] is None:
            cliff = {(x, 0) for x in range(1, self.width - 1)}
        else:
            cliff = {tuple(int(v) for v in cell) for cell in g['cliff']}
        self.cliff = frozenset(cliff)
        for name, cell in (('start', self.start), ('goal', self.goal)):
            if not self._inside(cell):
                raise ConfigError(f"{name} 가 격자 밖입니다", key=f"environment.geometry.{name}")
            if cell in self.cliff:
                raise ConfigError(f"{name} 가 절벽 칸입니다", key=f"environment.geometry.{name}")
        if self.start == self.goal:
            raise ConfigError("start 와 goal 이 같습니다", key="environment.geometry.goal")
        self.step_reward = float(g['step_reward'])
        self.goal_reward = float(g['goal_reward'])
        self.cliff_reward = float(g['cliff_reward'])
        self.n_states = self.width * self.height
        self._cell = self.start

    def _inside(self, cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def _build_spec(self, gamma: float) -> CmdpSpec:
        rewards = (self.step_reward, self.goal_reward, self.cliff_reward)
        return CmdpSpec(state_dim=2, action_space=Discrete(4), gamma=gamma,
                        reward_min=min(rewards), reward_max=max(rewards))

    def encode(self, cell) -> np.ndarray:
        x, y = cell
        sx = 2.0 * x / (self.width - 1) - 1.0
        sy = 2.0 * y / (self.height - 1) - 1.0 if self.height > 1 else 0.0
        return np.array([sx, sy])

    def decode(self, state: np.ndarray) -> Tuple[int, int]:
        x = int(round((state[0] + 1.0) * (self.width - 1) / 2.0))
        y = int(round((state[1] + 1.0) * (self.height - 1) / 2.0)) if self.height > 1 else 0
        return x, y

    def state_index(self, state: np.ndarray) -> int:
        x, y = self.decode(state)
        return y * self.width + x

    def move(self, cell, action: int) -> Tuple[int, int]:
        """벽에서는 제자리"""
        dx, dy = self.ACTION_DELTAS[action]
        nxt = (cell[0] + dx, cell[1] + dy)
        return nxt if self._inside(nxt) else cell

    def _reset(self, rng: np.random.Generator) -> np.ndarray:
        self._cell = self.start
        return self.encode(self._cell)

    def _step(self, action) -> StepResult:
        self._cell = self.move(self._cell, int(action))
        state = self.encode(self._cell)
        if self._cell in self.cliff:
            return StepResult(state, self.cliff_reward, 1, True)
        if self._cell == self.goal:
            return StepResult(state, self.goal_reward, 0, True)
        return StepResult(state, self.step_reward, 0, False)

    def feature_vector(self, state: np.ndarray, action) -> np.ndarray:
        one_hot = np.zeros(4)
        one_hot[int(action)] = 1.0
        return np.concatenate([np.asarray(state, dtype=float), one_hot])


class PuddlePoint(Environment):
    """[0,1]^2 위 점 질량 - 위험 원판(puddle) 진입 시 위반"""

    name = "puddle-point"
    default_max_steps = 200
    DEFAULTS = {
        'dt': 0.1,
        'max_speed': 1.0,
        'unsafe_center': (0.5, 0.5),
        'unsafe_radius': 0.15,
        'goal_center': (0.9, 0.9),
        'goal_radius': 0.1,
        'start_center': (0.1, 0.1),
        'start_spread': 0.05,
        'distance_penalty': 0.1,
        'goal_reward': 1.0,
    }

    def _validate_geometry(self):
        g = self.geometry
        self.dt = float(g['dt'])
        self.max_speed = float(g['max_speed'])
        self.unsafe_center = np.asarray(g['unsafe_center'], dtype=float)
        self.unsafe_radius = float(g['unsafe_radius'])
        self.goal_center = np.asarray(g['goal_center'], dtype=float)
        self.goal_radius = float(g['goal_radius'])
        self.start_center = np.asarray(g['start_center'], dtype=float)
        self.start_spread = float(g['start_spread'])
        self.distance_penalty = float(g['distance_penalty'])
        self.goal_reward = float(g['goal_reward'])
        if self.dt <= 0 or self.max_speed <= 0:
            raise ConfigError("dt, max_speed 는 양수여야 합니다", key="environment.geometry.dt")
        gap = np.linalg.norm(self.goal_center - self.unsafe_center)
        if gap <= self.goal_radius + self.unsafe_radius:
            raise ConfigError("목표 원판과 위험 원판이 겹칩니다",
                              key="environment.geometry.goal_center")
        # 시작 영역 전체가 위험 원판 밖이어야 함
        worst = np.linalg.norm(self.start_center - self.unsafe_center) - self.start_spread * np.sqrt(2)
        if worst <= self.unsafe_radius:
            raise ConfigError("시작 영역이 위험 원판과 겹칩니다",
                              key="environment.geometry.start_center")
        self.position = self.start_center.copy()
        self.velocity = np.zeros(2)

    def _build_spec(self, gamma: float) -> CmdpSpec:
        return CmdpSpec(state_dim=4, action_space=ContinuousBox((-1.0, -1.0), (1.0, 1.0)),
                        gamma=gamma, reward_min=-self.distance_penalty,
                        reward_max=max(self.goal_reward, 0.0))

    def _state(self) -> np.ndarray:
        return np.concatenate([2.0 * self.position - 1.0, self.velocity / self.max_speed])

    def _reset(self, rng: np.random.Generator) -> np.ndarray:
        offset = rng.uniform(-self.start_spread, self.start_spread, size=2)
        self.position = np.clip(self.start_center + offset, 0.0, 1.0)
        self.velocity = np.zeros(2)
        return self._state()

    def _step(self, action) -> StepResult:
        accel = np.asarray(action, dtype=float)
        self.position = self.position + self.velocity * self.dt
        self.velocity = np.clip(self.velocity + accel * self.dt, -self.max_speed, self.max_speed)
        # 경계에서는 해당 축 속도를 0 으로
        hit = (self.position < 0.0) | (self.position > 1.0)
        self.position = np.clip(self.position, 0.0, 1.0)
        self.velocity = np.where(hit, 0.0, self.velocity)
        state = self._state()
        if np.linalg.norm(self.position - self.unsafe_center) < self.unsafe_radius:
            return StepResult(state, -self.distance_penalty, 1, True)
        distance = np.linalg.norm(self.position - self.goal_center)
        if distance < self.goal_radius:
            return StepResult(state, self.goal_reward, 0, True)
        reward = -self.distance_penalty * min(distance / np.sqrt(2.0), 1.0)
        return StepResult(state, float(reward), 0, False)

    def feature_vector(self, state: np.ndarray, action) -> np.ndarray:
        return np.concatenate([np.asarray(state, dtype=float),
                               np.clip(np.asarray(action, dtype=float), -1.0, 1.0)])


class LineHopper(Environment):
    """수직 1차원 호퍼 - 추력이 적을수록 전진 효율 보상이 큼, h < h_min 이면 낙하 위반"""

    name = "line-hopper"
    default_max_steps = 200
    DEFAULTS = {
        'gravity': 9.8,
        'thrust_gain': 19.6,
        'dt': 0.05,
        'h_min': 0.5,
        'h_max': 2.0,
        'start_low': 1.0,
        'start_high': 1.5,
        'max_speed': 5.0,
        'progress_gain': 1.0,
    }

    def _validate_geometry(self):
        g = self.geometry
        for key in self.DEFAULTS:
            setattr(self, key, float(g[key]))
        if not self.h_min < self.start_low <= self.start_high <= self.h_max:
            raise ConfigError("h_min < start_low <= start_high <= h_max 이어야 합니다",
                              key="environment.geometry.start_low")
        if self.dt <= 0 or self.max_speed <= 0 or self.progress_gain < 0:
            raise ConfigError("dt, max_speed 는 양수, progress_gain 은 음이 아니어야 합니다",
                              key="environment.geometry.dt")
        self.height = self.start_low
        self.vertical_velocity = 0.0

    def _build_spec(self, gamma: float) -> CmdpSpec:
        return CmdpSpec(state_dim=2, action_space=ContinuousBox((0.0,), (1.0,)), gamma=gamma,
                        reward_min=0.0, reward_max=self.progress_gain)

    def _state(self) -> np.ndarray:
        span = self.h_max - self.h_min
        h = 2.0 * (self.height - self.h_min) / span - 1.0
        return np.clip(np.array([h, self.vertical_velocity / self.max_speed]), -1.0, 1.0)

    def _reset(self, rng: np.random.Generator) -> np.ndarray:
        self.height = float(rng.uniform(self.start_low, self.start_high))
        self.vertical_velocity = 0.0
        return self._state()

    def _step(self, action) -> StepResult:
        thrust = float(np.asarray(action, dtype=float).reshape(-1)[0])
        accel = self.thrust_gain * thrust - self.gravity
        self.vertical_velocity = float(np.clip(self.vertical_velocity + accel * self.dt,
                                               -self.max_speed, self.max_speed))
        self.height += self.vertical_velocity * self.dt
        if self.height > self.h_max:
            self.height, self.vertical_velocity = self.h_max, 0.0
        reward = self.progress_gain * (1.0 - thrust)
        if self.height < self.h_min:
            return StepResult(self._state(), reward, 1, True)
        return StepResult(self._state(), reward, 0, False)

    def feature_vector(self, state: np.ndarray, action) -> np.ndarray:
        return np.concatenate([np.asarray(state, dtype=float),
                               2.0 * np.asarray(action, dtype=float).reshape(-1) - 1.0])


ENVIRONMENTS = {
    CliffGrid.name: CliffGrid,
    PuddlePoint.name: PuddlePoint,
    LineHopper.name: LineHopper,
}


def make_env(env_id: str, gamma: float = 0.99, max_episode_steps: Optional[int] = None,
             geometry: Optional[Dict[str, Any]] = None) -> Environment:
    """환경 id 로 인스턴스 생성"""
    if env_id not in ENVIRONMENTS:
        raise ConfigError(f"알 수 없는 환경: {env_id} (가능: {', '.join(ENVIRONMENTS)})",
                          key="environment.id")
    try:
        return ENVIRONMENTS[env_id](gamma=gamma, max_episode_steps=max_episode_steps,
                                    **(geometry or {}))
    except DomainError as e:
        raise ConfigError(str(e), key="environment.gamma") from e


def reset(env: Environment, seed: int) -> np.ndarray:
    return env.reset(seed)


def step(env: Environment, action) -> StepResult:
    return env.step(action)


def feature_vector(env: Environment, state: np.ndarray, action) -> np.ndarray:
    return env.feature_vector(state, action)
