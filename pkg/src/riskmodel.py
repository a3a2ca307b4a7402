"""
대조 위험 분류기 F_θ
- 출력 F = 0.5 · logistic(net(x)) ∈ (0, 0.5)
- 베이즈 변환 p = F / (1 - F) ∈ (0, 1)
- 최대우도 목적식의 손실/그래디언트 (수동 역전파) 와 Adam 업데이트
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Tuple

import numpy as np
from loguru import logger

from src.checkpoint import load_tensors, require_tensors, save_tensors
from src.core import UnsafePair, UnsafePairSet
from src.errors import CheckpointError, DomainError, TrainingError

PARAM_NAMES = ("W1", "b1", "W2", "b2")
CHECKPOINT_KIND = "risk-classifier"

Params = Dict[str, np.ndarray]


@dataclass(frozen=True, eq=False)
class RiskClassifier:
    """input_dim → hidden_dim(tanh) → 1, 불변 파라미터 스냅샷"""
    params: Params

    @property
    def input_dim(self) -> int:
        return self.params["W1"].shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.params["W1"].shape[0]

    @classmethod
    def initialize(cls, input_dim: int, hidden_dim: int,
                   rng: np.random.Generator) -> "RiskClassifier":
        """Xavier 균등 초기화, 편향 0"""
        lim1 = np.sqrt(6.0 / (input_dim + hidden_dim))
        lim2 = np.sqrt(6.0 / (hidden_dim + 1))
        return cls({
            "W1": rng.uniform(-lim1, lim1, size=(hidden_dim, input_dim)),
            "b1": np.zeros(hidden_dim),
            "W2": rng.uniform(-lim2, lim2, size=(1, hidden_dim)),
            "b2": np.zeros(1),
        })

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "RiskClassifier":
        return cls({
            "W1": np.zeros((hidden_dim, input_dim)),
            "b1": np.zeros(hidden_dim),
            "W2": np.zeros((1, hidden_dim)),
            "b2": np.zeros(1),
        })

    def with_params(self, params: Params) -> "RiskClassifier":
        return replace(self, params={k: np.array(v, dtype=float) for k, v in params.items()})


@dataclass(frozen=True, eq=False)
class ClassifierBatch:
    """양성(S_U 표본) / 음성(전체 분포 표본) 특징 행렬"""
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positives, dtype=float))
        neg = np.atleast_2d(np.asarray(self.negatives, dtype=float))
        if pos.size == 0 or neg.size == 0:
            raise DomainError("ClassifierBatch 의 양성/음성 모두 비어 있으면 안 됩니다")
        object.__setattr__(self, "positives", pos)
        object.__setattr__(self, "negatives", neg)


@dataclass(frozen=True, eq=False)
class OptimizerState:
    """Adam 상태 (모멘트 누적값, 스텝 수)"""
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    first_moment: Params = field(default_factory=dict)
    second_moment: Params = field(default_factory=dict)
    step: int = 0


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _check_features(clf: RiskClassifier, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != clf.input_dim:
        raise DomainError(f"특징 차원 {x.shape[-1]} != input_dim {clf.input_dim}")
    if not np.all(np.isfinite(x)):
        raise DomainError("특징 벡터에 비유한 값이 있습니다")
    return x


def _net(clf: RiskClassifier, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(은닉 활성, 로짓 z)"""
    p = clf.params
    hidden = np.tanh(x @ p["W1"].T + p["b1"])
    z = hidden @ p["W2"][0] + p["b2"][0]
    return hidden, z


def classifier_forward_batch(clf: RiskClassifier, features: np.ndarray) -> np.ndarray:
    x = _check_features(clf, np.atleast_2d(features))
    _, z = _net(clf, x)
    return 0.5 * _sigmoid(z)


def classifier_forward(clf: RiskClassifier, features: np.ndarray) -> float:
    """F_θ(s, a) ∈ (0, 0.5)"""
    x = np.asarray(features, dtype=float)
    if x.ndim != 1:
        raise DomainError("classifier_forward 는 1차원 특징 벡터를 받습니다")
    return float(classifier_forward_batch(clf, x)[0])


def risk_probability(F: float) -> float:
    """p(y=1|s,a) = F / (1 - F)"""
    if not 0.0 <= F <= 0.5:
        raise DomainError(f"F 는 [0, 0.5] 안에 있어야 합니다: {F}")
    return F / (1.0 - F)


def _log_terms(z_pos: np.ndarray, z_neg: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # log F = log σ(z) - log 2,  log(1 - F) = log1p(σ(-z)) - log 2
    log_f = -np.logaddexp(0.0, -z_pos) - np.log(2.0)
    log_one_minus_f = np.log1p(_sigmoid(-z_neg)) - np.log(2.0)
    return log_f, log_one_minus_f


def contrastive_loss(clf: RiskClassifier, batch: ClassifierBatch) -> float:
    """-L(θ) = -[E_pos log F + E_neg log(1 - F)]"""
    _, z_pos = _net(clf, _check_features(clf, batch.positives))
    _, z_neg = _net(clf, _check_features(clf, batch.negatives))
    log_f, log_one_minus_f = _log_terms(z_pos, z_neg)
    return float(-(np.mean(log_f) + np.mean(log_one_minus_f)))


def loss_gradient(clf: RiskClassifier, batch: ClassifierBatch) -> Params:
    """contrastive_loss 의 파라미터별 그래디언트"""
    pos = _check_features(clf, batch.positives)
    neg = _check_features(clf, batch.negatives)
    x = np.vstack([pos, neg])
    hidden, z = _net(clf, x)
    n_pos, n_neg = len(pos), len(neg)

    s = _sigmoid(z)
    s_neg = _sigmoid(-z)
    dz = np.empty_like(z)
    dz[:n_pos] = -s_neg[:n_pos] / n_pos
    dz[n_pos:] = 0.5 * s[n_pos:] * s_neg[n_pos:] / ((1.0 - 0.5 * s[n_pos:]) * n_neg)

    W2 = clf.params["W2"][0]
    d_hidden = np.outer(dz, W2) * (1.0 - hidden ** 2)
    return {
        "W1": d_hidden.T @ x,
        "b1": d_hidden.sum(axis=0),
        "W2": (dz @ hidden)[None, :],
        "b2": np.array([dz.sum()]),
    }


def adam_step(params: Params, grads: Params, opt: OptimizerState) -> Tuple[Params, OptimizerState]:
    """새 파라미터/상태를 반환 (입력은 건드리지 않음)"""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"비유한 그래디언트: {name}", parameter=name)

    t = opt.step + 1
    new_params, m_new, v_new = {}, {}, {}
    for name, value in params.items():
        g = grads[name]
        m = opt.beta1 * opt.first_moment.get(name, np.zeros_like(value)) + (1.0 - opt.beta1) * g
        v = opt.beta2 * opt.second_moment.get(name, np.zeros_like(value)) + (1.0 - opt.beta2) * g * g
        m_hat = m / (1.0 - opt.beta1 ** t)
        v_hat = v / (1.0 - opt.beta2 ** t)
        new_params[name] = value - opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps)
        m_new[name], v_new[name] = m, v
    return new_params, replace(opt, first_moment=m_new, second_moment=v_new, step=t)


def train_step(clf: RiskClassifier, opt: OptimizerState,
               batch: ClassifierBatch) -> Tuple[RiskClassifier, OptimizerState]:
    """목적식 L(θ) 최대화 방향으로 한 스텝"""
    grads = loss_gradient(clf, batch)
    new_params, new_opt = adam_step(clf.params, grads, opt)
    return clf.with_params(new_params), new_opt


def add_unsafe_pair(unsafe_set: UnsafePairSet, state, action,
                    features: np.ndarray) -> UnsafePairSet:
    """S_U 에 위험 쌍 추가 (중복 허용, 상한이 있으면 가장 오래된 것 제거)"""
    unsafe_set.add(UnsafePair(np.asarray(state, dtype=float).copy(), action,
                              np.asarray(features, dtype=float).copy()))
    return unsafe_set


def sample_classifier_batch(unsafe_set: UnsafePairSet, negatives: np.ndarray, batch_size: int,
                            rng: np.random.Generator) -> ClassifierBatch:
    """양성/음성 같은 개수 - p(y=1) 은 균형 표본으로 흡수"""
    positives = unsafe_set.sample_features(batch_size, rng)
    return ClassifierBatch(positives=positives, negatives=negatives)


class ClassifierRisk:
    """에피소드 시작 시점 분류기 스냅샷으로 위험도를 계산하는 호출 객체"""

    def __init__(self, clf: RiskClassifier, ready: bool):
        self.clf = clf
        self.ready = ready

    def __call__(self, features: np.ndarray) -> float:
        return risk_probability(classifier_forward(self.clf, features))


RiskFn = Callable[[np.ndarray], float]


def save_classifier(path, clf: RiskClassifier, updates: int = 0):
    save_tensors(path, CHECKPOINT_KIND,
                 {"input_dim": clf.input_dim, "hidden_dim": clf.hidden_dim, "updates": updates},
                 {name: clf.params[name] for name in PARAM_NAMES})
    logger.debug(f"분류기 저장: {path}")


def load_classifier(path) -> Tuple[RiskClassifier, int]:
    meta, tensors = load_tensors(path, CHECKPOINT_KIND)
    try:
        d, h = int(meta["input_dim"]), int(meta["hidden_dim"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError("input_dim/hidden_dim 메타가 없습니다", path=str(path)) from e
    require_tensors(tensors, {"W1": (h, d), "b1": (h,), "W2": (1, h), "b2": (1,)}, str(path))
    return RiskClassifier({name: tensors[name] for name in PARAM_NAMES}), int(meta.get("updates", 0))
