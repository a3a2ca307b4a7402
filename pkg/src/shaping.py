"""
위험 영역 판정, 안전 스텝 수 추정, λ 하한과 보상 shaping

λ 하한:
    T = floor((η - p0) / (1 - p0) · H)
    λ > (1 - γ^H)(r_max - r_min) / (η · γ^T · (1 - γ^(H-T)))
"""

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Optional, Tuple

from loguru import logger

from src.core import CmdpSpec
from src.errors import BoundOverflowError, DomainError, InternalError

P0_POLICIES = ("conservative-zero", "classifier-initial")
LAMBDA_H_POLICIES = ("max-observed", "latest")


def _check_probability(name: str, value: float):
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise DomainError(f"{name} 는 [0, 1] 안에 있어야 합니다: {value}")


def _check_eta(eta: float):
    if not 0.0 < eta < 1.0:
        raise DomainError(f"eta 는 (0, 1) 안에 있어야 합니다: {eta}")


def _as_fraction(x: float) -> Fraction:
    # 10진 표기 그대로의 유리수 (0.7 → 7/10)
    return Fraction(repr(float(x)))


def in_unsafe_region(p: float, eta: float) -> bool:
    """p > η 이면 위험 영역"""
    _check_probability("p", p)
    _check_eta(eta)
    return p > eta


def estimate_safe_steps(eta: float, p0: float, H: int) -> int:
    """위험도가 선형 증가한다고 볼 때 위험 영역 진입 전 스텝 수 T"""
    _check_eta(eta)
    if H < 1:
        raise DomainError(f"H 는 1 이상이어야 합니다: {H}")
    if p0 < 0.0:
        raise DomainError(f"p0 는 0 이상이어야 합니다: {p0}")
    if p0 > eta:
        raise DomainError(f"p0({p0}) 가 eta({eta}) 보다 큽니다")
    try:
        e, q = _as_fraction(eta), _as_fraction(p0)
        return math.floor((e - q) / (1 - q) * H)
    except (ValueError, ZeroDivisionError):
        ratio = (eta - p0) / (1.0 - p0) * H
        return math.floor(ratio - 1e-12)


def lambda_lower_bound(gamma: float, H: int, eta: float, p0: float,
                       r_min: float, r_max: float) -> float:
    """위험 궤적의 벌점 수익이 안전 궤적보다 작아지게 하는 λ 의 하한"""
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma 는 (0, 1) 안에 있어야 합니다: {gamma}")
    if r_min > r_max:
        raise DomainError(f"r_min({r_min}) 이 r_max({r_max}) 보다 큽니다")
    T = estimate_safe_steps(eta, p0, H)
    if T >= H:
        raise InternalError(f"T({T}) >= H({H}) - eta={eta}, p0={p0}")
    if r_max == r_min:
        return 0.0

    gamma_T = gamma ** T
    tail = 1.0 - gamma ** (H - T)
    denominator = eta * gamma_T * tail
    if gamma_T == 0.0 or denominator == 0.0:
        raise BoundOverflowError(
            f"γ^T 언더플로: gamma={gamma}, H={H}, T={T}, eta={eta}, p0={p0}"
        )
    bound = (1.0 - gamma ** H) * (r_max - r_min) / denominator
    if not math.isfinite(bound):
        raise BoundOverflowError(
            f"λ 하한이 유한하지 않습니다: gamma={gamma}, H={H}, T={T}, eta={eta}, p0={p0}"
        )
    return bound


def shape_reward(r: float, p: float, lam: float) -> float:
    """r̂ = r - λ·p"""
    _check_probability("p", p)
    if lam < 0.0:
        raise DomainError(f"lambda 는 0 이상이어야 합니다: {lam}")
    return r - lam * p


def geometric_sum(gamma: float, start: int, stop: int) -> float:
    """Σ_{t=start}^{stop-1} γ^t 를 항별로 더한 값"""
    total = 0.0
    for t in range(start, stop):
        total += gamma ** t
    return total


def verify_separation(gamma: float, H: int, eta: float, p0: float,
                      r_min: float, r_max: float, lam: float) -> bool:
    """
    극단 궤적 비교 오라클 (테스트용)
    - 위험 궤적: 보상 r_max, 위험도는 t < T 에서 0, t >= T 에서 η
    - 안전 궤적: 보상 r_min
    벌점 받은 위험 궤적 수익 < 안전 궤적 수익 이면 True
    """
    T = estimate_safe_steps(eta, p0, H)
    unsafe_return = 0.0
    safe_return = 0.0
    for t in range(H):
        risk = eta if t >= T else 0.0
        unsafe_return += gamma ** t * (r_max - lam * risk)
        safe_return += gamma ** t * r_min
    return unsafe_return < safe_return


@dataclass(frozen=True)
class ShapingConfig:
    eta: float = 0.9
    gamma: float = 0.99
    reward_min: float = 0.0
    reward_max: float = 1.0
    initial_lambda: float = 0.0

    def __post_init__(self):
        _check_eta(self.eta)
        if self.initial_lambda < 0.0:
            raise DomainError(f"initial_lambda 는 0 이상이어야 합니다: {self.initial_lambda}")

    @classmethod
    def from_spec(cls, spec: CmdpSpec, eta: float = 0.9,
                  initial_lambda: float = 0.0) -> "ShapingConfig":
        return cls(eta=eta, gamma=spec.gamma, reward_min=spec.reward_min,
                   reward_max=spec.reward_max, initial_lambda=initial_lambda)


@dataclass(frozen=True)
class LambdaState:
    """전역 벌점 계수 λ 와 관측된 위험 궤적 길이 ℋ"""
    lam: float = 0.0
    margin: float = 1.05
    unsafe_lengths: Tuple[int, ...] = ()
    p0_policy: str = "conservative-zero"
    lambda_h_policy: str = "max-observed"

    def __post_init__(self):
        if self.lam < 0.0:
            raise DomainError(f"lambda 는 0 이상이어야 합니다: {self.lam}")
        if self.margin <= 1.0:
            raise DomainError(f"margin 은 1 보다 커야 합니다: {self.margin}")
        if self.p0_policy not in P0_POLICIES:
            raise DomainError(f"알 수 없는 p0_policy: {self.p0_policy}")
        if self.lambda_h_policy not in LAMBDA_H_POLICIES:
            raise DomainError(f"알 수 없는 lambda_h_policy: {self.lambda_h_policy}")


def resolve_p0(policy: str, eta: float, observed: Optional[float]) -> float:
    if policy == "conservative-zero" or observed is None:
        return 0.0
    clamped = min(max(float(observed), 0.0), eta)
    if clamped != observed:
        logger.warning(f"⚠️ 초기 위험도 p0={observed:.4f} 를 [0, {eta}] 로 잘라 사용합니다")
    return clamped


def _bound_for(H: int, cfg: ShapingConfig, p0: float) -> float:
    try:
        return lambda_lower_bound(cfg.gamma, H, cfg.eta, p0, cfg.reward_min, cfg.reward_max)
    except BoundOverflowError as e:
        raise BoundOverflowError(f"H={H} 에서 λ 하한 계산 실패: {e}") from e


def update_lambda(ls: LambdaState, new_H: int, cfg: ShapingConfig,
                  p0: Optional[float] = None) -> LambdaState:
    """새 위험 궤적 길이를 ℋ 에 넣고 하한이 커졌으면 λ 를 올림 (감소하지 않음)"""
    if new_H < 1:
        raise DomainError(f"new_H 는 1 이상이어야 합니다: {new_H}")
    lengths = ls.unsafe_lengths + (int(new_H),)
    p0_used = resolve_p0(ls.p0_policy, cfg.eta, p0)

    if ls.lambda_h_policy == "max-observed":
        candidates: Iterable[int] = sorted(set(lengths))
    else:
        candidates = (int(new_H),)
    bound = max(_bound_for(H, cfg, p0_used) for H in candidates)

    new_lam = max(ls.lam, ls.margin * bound)
    if new_lam > ls.lam:
        logger.debug(f"λ 증가: {ls.lam:.6g} → {new_lam:.6g} (H={new_H})")
    return replace(ls, lam=new_lam, unsafe_lengths=lengths)
