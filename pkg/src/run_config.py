"""
실행 설정 (YAML)

environment / classifier / shaping / agent / training / output 섹션.
모르는 키는 점 표기 키 이름과 함께 거부한다 (예: shaping.eta).
"""

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union, get_args, get_origin, get_type_hints

import yaml
from loguru import logger

from src.agent import STRATEGIES
from src.core import ContinuousBox, Discrete
from src.envs import make_env
from src.errors import ConfigError
from src.shaping import LAMBDA_H_POLICIES, P0_POLICIES

LEARNER_IDS = ("auto", "tabular-q", "actor-critic")
POSITIVE_POLICIES = ("terminal-only", "last-k")


@dataclass(frozen=True)
class EnvironmentSection:
    id: str = "cliff-grid"
    gamma: float = 0.99
    cost_threshold: float = 0.0
    max_episode_steps: Optional[int] = None
    geometry: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ClassifierSection:
    hidden_dim: int = 64
    learning_rate: float = 1e-3
    batch_size: int = 64
    updates_per_episode: int = 16
    update_every: int = 1
    positives: str = "terminal-only"
    last_k: int = 5
    unsafe_capacity: Optional[int] = None
    exclude_positives_from_negatives: bool = False


@dataclass(frozen=True)
class ShapingSection:
    eta: float = 0.9
    margin: float = 1.05
    initial_lambda: float = 0.0
    p0_policy: str = "conservative-zero"
    lambda_h_policy: str = "max-observed"
    fixed_lambda: float = 10.0
    lagrangian_lr: float = 0.01
    freeze_lambda: bool = False


@dataclass(frozen=True)
class AgentSection:
    learner: str = "auto"
    alpha: float = 0.5
    epsilon: float = 1.0
    epsilon_min: float = 0.05
    epsilon_decay: float = 0.995
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    hidden_dim: int = 32
    entropy_coef: float = 1e-3
    batch_size: int = 32
    updates_per_episode: int = 4
    update_every: int = 1


@dataclass(frozen=True)
class TrainingSection:
    episodes: int = 500
    max_steps: int = 100
    seed: int = 0
    strategy: str = "rpt"
    replay_capacity: int = 50000
    screen_initial_action: bool = True
    progress_every: int = 100


@dataclass(frozen=True)
class OutputSection:
    trace_steps: bool = False
    max_return: Optional[float] = None
    min_return: float = 0.0


@dataclass(frozen=True)
class TrainingConfig:
    environment: EnvironmentSection = field(default_factory=EnvironmentSection)
    classifier: ClassifierSection = field(default_factory=ClassifierSection)
    shaping: ShapingSection = field(default_factory=ShapingSection)
    agent: AgentSection = field(default_factory=AgentSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    output: OutputSection = field(default_factory=OutputSection)


SECTIONS = {f.name: f.type for f in fields(TrainingConfig)}


def _coerce(value: Any, typ: Any, key: str) -> Any:
    if get_origin(typ) is Union:
        args = [a for a in get_args(typ) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], key)
    if value is None:
        raise ConfigError(f"{key} 에 값이 필요합니다", key=key)
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} 는 true/false 여야 합니다: {value!r}", key=key)
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} 는 정수여야 합니다: {value!r}", key=key)
        return value
    if typ is float:
        if isinstance(value, bool):
            raise ConfigError(f"{key} 는 실수여야 합니다: {value!r}", key=key)
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            # YAML 1.1 은 '1e-3' 을 문자열로 읽음
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigError(f"{key} 는 실수여야 합니다: {value!r}", key=key)
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} 는 문자열이어야 합니다: {value!r}", key=key)
        return value
    if get_origin(typ) is dict or typ is dict:
        if not isinstance(value, Mapping):
            raise ConfigError(f"{key} 는 매핑이어야 합니다", key=key)
        return {str(k): v for k, v in value.items()}
    raise ConfigError(f"{key} 의 형식을 처리할 수 없습니다", key=key)


def _parse_section(name: str, cls, raw: Any):
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"[{name}] 섹션은 매핑이어야 합니다", key=name)
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"알 수 없는 설정 키: {name}.{key}", key=f"{name}.{key}")
    values = {k: _coerce(v, hints[k], f"{name}.{k}") for k, v in raw.items()}
    return cls(**values)


def _require(condition: bool, key: str, message: str):
    if not condition:
        raise ConfigError(f"{key}: {message}", key=key)


def validate(cfg: TrainingConfig) -> TrainingConfig:
    """섹션 사이 제약 확인 - 환경을 실제로 만들어 geometry 도 검사"""
    env_cfg, clf, sh, ag, tr, out = (cfg.environment, cfg.classifier, cfg.shaping,
                                     cfg.agent, cfg.training, cfg.output)

    if env_cfg.cost_threshold != 0:
        raise ConfigError("cost_threshold must be 0", key="environment.cost_threshold")
    _require(0.0 < env_cfg.gamma < 1.0, "environment.gamma", "(0, 1) 안이어야 합니다")
    _require(env_cfg.max_episode_steps is None or env_cfg.max_episode_steps >= 1,
             "environment.max_episode_steps", "1 이상이어야 합니다")

    _require(clf.hidden_dim >= 1, "classifier.hidden_dim", "1 이상이어야 합니다")
    _require(clf.learning_rate >= 0.0, "classifier.learning_rate", "0 이상이어야 합니다")
    _require(clf.batch_size >= 1, "classifier.batch_size", "1 이상이어야 합니다")
    _require(clf.updates_per_episode >= 1, "classifier.updates_per_episode", "1 이상이어야 합니다")
    _require(clf.update_every >= 1, "classifier.update_every", "1 이상이어야 합니다")
    _require(clf.positives in POSITIVE_POLICIES, "classifier.positives",
             f"{POSITIVE_POLICIES} 중 하나여야 합니다")
    _require(clf.last_k >= 1, "classifier.last_k", "1 이상이어야 합니다")
    _require(clf.unsafe_capacity is None or clf.unsafe_capacity >= 1,
             "classifier.unsafe_capacity", "1 이상이어야 합니다")

    _require(0.0 < sh.eta < 1.0, "shaping.eta", "(0, 1) 안이어야 합니다")
    _require(sh.margin > 1.0, "shaping.margin", "1 보다 커야 합니다")
    _require(sh.initial_lambda >= 0.0, "shaping.initial_lambda", "0 이상이어야 합니다")
    _require(sh.p0_policy in P0_POLICIES, "shaping.p0_policy", f"{P0_POLICIES} 중 하나여야 합니다")
    _require(sh.lambda_h_policy in LAMBDA_H_POLICIES, "shaping.lambda_h_policy",
             f"{LAMBDA_H_POLICIES} 중 하나여야 합니다")
    _require(sh.fixed_lambda >= 0.0, "shaping.fixed_lambda", "0 이상이어야 합니다")
    _require(sh.lagrangian_lr >= 0.0, "shaping.lagrangian_lr", "0 이상이어야 합니다")

    _require(ag.learner in LEARNER_IDS, "agent.learner", f"{LEARNER_IDS} 중 하나여야 합니다")
    _require(0.0 <= ag.epsilon <= 1.0, "agent.epsilon", "[0, 1] 안이어야 합니다")
    _require(0.0 <= ag.epsilon_min <= 1.0, "agent.epsilon_min", "[0, 1] 안이어야 합니다")
    _require(0.0 < ag.epsilon_decay <= 1.0, "agent.epsilon_decay", "(0, 1] 안이어야 합니다")
    _require(ag.alpha >= 0.0, "agent.alpha", "0 이상이어야 합니다")
    _require(ag.hidden_dim >= 1, "agent.hidden_dim", "1 이상이어야 합니다")
    _require(ag.batch_size >= 1, "agent.batch_size", "1 이상이어야 합니다")
    _require(ag.updates_per_episode >= 1, "agent.updates_per_episode", "1 이상이어야 합니다")
    _require(ag.update_every >= 1, "agent.update_every", "1 이상이어야 합니다")

    _require(tr.episodes >= 0, "training.episodes", "0 이상이어야 합니다")
    _require(tr.max_steps >= 1, "training.max_steps", "1 이상이어야 합니다")
    _require(tr.seed >= 0, "training.seed", "0 이상이어야 합니다")
    _require(tr.strategy in STRATEGIES, "training.strategy", f"{STRATEGIES} 중 하나여야 합니다")
    _require(tr.replay_capacity >= 1, "training.replay_capacity", "1 이상이어야 합니다")
    _require(tr.progress_every >= 1, "training.progress_every", "1 이상이어야 합니다")

    if out.max_return is not None:
        _require(out.max_return > out.min_return, "output.max_return",
                 "output.min_return 보다 커야 합니다")

    env = build_environment(cfg)
    resolve_learner_id(cfg, env)
    return cfg


def build_environment(cfg: TrainingConfig):
    return make_env(cfg.environment.id, gamma=cfg.environment.gamma,
                    max_episode_steps=cfg.environment.max_episode_steps,
                    geometry=cfg.environment.geometry)


def resolve_learner_id(cfg: TrainingConfig, env) -> str:
    """auto 를 환경에 맞는 학습기로 풀고 호환성 확인"""
    space = env.spec.action_space
    learner = cfg.agent.learner
    if learner == "auto":
        learner = "tabular-q" if isinstance(space, Discrete) else "actor-critic"
    if learner == "tabular-q" and (not isinstance(space, Discrete) or env.n_states is None):
        raise ConfigError(f"tabular-q 는 {env.name} 환경과 맞지 않습니다", key="agent.learner")
    if learner == "actor-critic" and not isinstance(space, ContinuousBox):
        raise ConfigError(f"actor-critic 은 {env.name} 환경과 맞지 않습니다", key="agent.learner")
    return learner


def parse_config(raw: Any) -> TrainingConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise ConfigError("설정 문서의 최상위는 매핑이어야 합니다", key="<root>")
    for name in raw:
        if name not in SECTIONS:
            raise ConfigError(f"알 수 없는 설정 섹션: {name}", key=str(name))
    sections = {name: _parse_section(name, cls, raw.get(name)) for name, cls in SECTIONS.items()}
    return validate(TrainingConfig(**sections))


def load_config(path: Union[str, Path]) -> TrainingConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"설정 파일을 읽을 수 없습니다: {p} ({e})", key="<file>") from e
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"YAML 구문 오류: {p} ({e})", key="<file>") from e
    cfg = parse_config(raw)
    logger.debug(f"설정 로드: {p}")
    return cfg


def config_to_dict(cfg: TrainingConfig) -> Dict[str, Any]:
    return asdict(cfg)


def dump_config(cfg: TrainingConfig) -> str:
    """다시 parse 하면 같은 설정이 되는 YAML"""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=False,
                          allow_unicode=True)


def with_overrides(cfg: TrainingConfig, overrides: Mapping[str, Any]) -> TrainingConfig:
    """{'training.seed': 3} 형태의 점 표기 덮어쓰기"""
    data = config_to_dict(cfg)
    for dotted, value in overrides.items():
        section, _, key = dotted.partition(".")
        if section not in data or not key:
            raise ConfigError(f"알 수 없는 설정 키: {dotted}", key=dotted)
        data[section][key] = value
    return parse_config(data)
