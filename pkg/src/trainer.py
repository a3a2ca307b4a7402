"""
Risk Preventive Training 학습 루프
- collect_trajectory: 궤적 수집 + 위험 절단 + S_U/λ 갱신
- run_training: 에피소드 반복, 분류기/정책 업데이트, 메트릭 기록
- evaluate_policy: shaping/절단 없는 greedy 평가
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from src.agent import (AdditiveLagrangian, ActorCritic, FixedPenalty, PolicyLearner,
                       RiskPreventive, ShapingStrategy, TabularQ, Unshaped)
from src.core import (Discrete, Outcome, ReplayBuffer, Trajectory, Transition, UnsafePairSet,
                      cumulative_cost, discounted_risk_cost, undiscounted_return)
from src.envs import Environment
from src.errors import DomainError, TrainingError
from src.monitoring import EpisodeRecord, RunMetrics, StepTrace, TrainingMonitor
from src.report_manager import normalized_ratio
from src.riskmodel import (ClassifierRisk, OptimizerState, RiskClassifier, RiskFn,
                           add_unsafe_pair, sample_classifier_batch, train_step)
from src.run_config import TrainingConfig, build_environment, resolve_learner_id
from src.shaping import LambdaState, ShapingConfig, in_unsafe_region

MAX_INITIAL_DRAWS = 16
SEED_LIMIT = 2 ** 32


@dataclass
class CollectionContext:
    """한 에피소드 수집에 필요한 설정과 공유 버퍼"""
    eta: float
    max_steps: int
    seed: int
    replay: ReplayBuffer
    unsafe_set: UnsafePairSet
    positives: str = "terminal-only"
    last_k: int = 5
    truncation_active: bool = True
    screen_initial_action: bool = True
    episode: int = 0
    trace: Optional[List[StepTrace]] = None


@dataclass
class EpisodeEvents:
    violation: bool = False
    unsafe_length: Optional[int] = None
    truncated: bool = False
    positives_added: int = 0
    initial_risk: float = 0.0
    initial_redraws: int = 0


@dataclass
class TrainingRun:
    """run_training 결과 묶음"""
    config: TrainingConfig
    metrics: RunMetrics
    learner: PolicyLearner
    classifier: RiskClassifier
    classifier_updates: int = 0
    unsafe_lengths: Tuple[int, ...] = ()
    unsafe_pairs: int = 0
    monitor: Optional[TrainingMonitor] = field(default=None, repr=False)


def _query_risk(risk: Optional[RiskFn], env: Environment, state, action, ctx: CollectionContext,
                step: int) -> float:
    if risk is None:
        return 0.0
    try:
        return float(risk(env.feature_vector(state, action)))
    except DomainError as e:
        raise TrainingError(
            f"위험도 계산 실패 (episode={ctx.episode}, step={step}): {e}", parameter="risk"
        ) from e


def _screen_initial_action(env: Environment, learner: PolicyLearner, risk: Optional[RiskFn],
                           state, action, p: float,
                           ctx: CollectionContext) -> Tuple[object, float, int]:
    """초기 행동 a_0 의 위험도가 η 를 넘으면 다시 뽑음"""
    if not in_unsafe_region(p, ctx.eta):
        return action, p, 0
    tried = [(p, action)]
    for redraw in range(1, MAX_INITIAL_DRAWS):
        action = learner.act(state, explore=True)
        p = _query_risk(risk, env, state, action, ctx, 0)
        if not in_unsafe_region(p, ctx.eta):
            return action, p, redraw
        tried.append((p, action))

    space = env.spec.action_space
    if isinstance(space, Discrete):
        candidates = [(_query_risk(risk, env, state, a, ctx, 0), a) for a in range(space.n)]
    else:
        candidates = tried
    best_p, best_action = min(candidates, key=lambda c: c[0])
    return best_action, best_p, MAX_INITIAL_DRAWS


def collect_trajectory(env: Environment, learner: PolicyLearner, risk: Optional[RiskFn],
                       strategy: ShapingStrategy,
                       ctx: CollectionContext) -> Tuple[Trajectory, List[float], EpisodeEvents]:
    """
    궤적 하나 수집
    - cost=1: S_U 에 추가, H 기록, λ 갱신 트리거, 종료 (ReachedUnsafe)
    - 그 외: r̂_t = r_t - λ·p_t 로 replay 에 저장, p_{t+1} > η 이면 절단 (RiskTruncated)
    """
    if not strategy.uses_risk:
        risk = None
    events = EpisodeEvents()
    state = env.reset(ctx.seed)
    limit = min(ctx.max_steps, env.max_episode_steps)

    action = learner.act(state, explore=True)
    p = _query_risk(risk, env, state, action, ctx, 0)
    if ctx.truncation_active and strategy.truncates and ctx.screen_initial_action:
        action, p, events.initial_redraws = _screen_initial_action(env, learner, risk, state,
                                                                   action, p, ctx)
    events.initial_risk = p

    transitions: List[Transition] = []
    risks: List[float] = []
    history = []
    outcome = Outcome.HORIZON_END

    for t in range(limit):
        features = env.feature_vector(state, action)
        history.append((state, action, features))
        result = env.step(action)

        if result.cost > 0:
            pairs = history[-1:] if ctx.positives == "terminal-only" else history[-ctx.last_k:]
            for s, a, f in pairs:
                add_unsafe_pair(ctx.unsafe_set, s, a, f)
            events.positives_added = len(pairs)
            events.violation = True
            events.unsafe_length = t + 1
            strategy.on_violation(t + 1, events.initial_risk)
            tr = Transition(state, action, result.reward, 1, result.next_state, terminal=True)
            tr = tr.with_shaped_reward(strategy.shape(result.reward, p))
            ctx.replay.add(tr)
            transitions.append(tr)
            risks.append(p)
            outcome = Outcome.REACHED_UNSAFE
            _trace(ctx, t, p, tr, strategy)
            break

        tr = Transition(state, action, result.reward, 0, result.next_state,
                        terminal=result.terminal)
        tr = tr.with_shaped_reward(strategy.shape(result.reward, p))
        if result.terminal:
            ctx.replay.add(tr)
            transitions.append(tr)
            risks.append(p)
            outcome = Outcome.GOAL_TERMINAL
            _trace(ctx, t, p, tr, strategy)
            break

        next_state = result.next_state
        next_action = learner.act(next_state, explore=True)
        p_next = _query_risk(risk, env, next_state, next_action, ctx, t + 1)
        truncate = (ctx.truncation_active and strategy.truncates
                    and in_unsafe_region(p_next, ctx.eta))
        if truncate:
            tr = tr.mark_truncated()
        ctx.replay.add(tr)
        transitions.append(tr)
        risks.append(p)
        _trace(ctx, t, p, tr, strategy)
        if truncate:
            events.truncated = True
            outcome = Outcome.RISK_TRUNCATED
            break
        state, action, p = next_state, next_action, p_next

    return Trajectory(tuple(transitions), outcome), risks, events


def _trace(ctx: CollectionContext, t: int, p: float, tr: Transition, strategy: ShapingStrategy):
    if ctx.trace is not None:
        ctx.trace.append(StepTrace(ctx.episode, t, p, tr.reward, tr.shaped_reward, strategy.lam))


def feature_dim(env: Environment) -> int:
    space = env.spec.action_space
    action = 0 if isinstance(space, Discrete) else np.asarray(space.lower, dtype=float)
    return len(env.feature_vector(np.zeros(env.spec.state_dim), action))


def build_learner(cfg: TrainingConfig, env: Environment,
                  rng: np.random.Generator) -> PolicyLearner:
    ag = cfg.agent
    if resolve_learner_id(cfg, env) == "tabular-q":
        return TabularQ(env.n_states, env.spec.action_space.n, env.state_index, env.gamma,
                        rng=rng, alpha=ag.alpha, epsilon=ag.epsilon,
                        epsilon_min=ag.epsilon_min, epsilon_decay=ag.epsilon_decay)
    return ActorCritic(env.spec.state_dim, env.spec.action_space, env.gamma, rng=rng,
                       hidden_dim=ag.hidden_dim, actor_lr=ag.actor_lr, critic_lr=ag.critic_lr,
                       entropy_coef=ag.entropy_coef)


def build_strategy(cfg: TrainingConfig, env: Environment) -> ShapingStrategy:
    sh = cfg.shaping
    strategy = cfg.training.strategy
    if strategy == "unshaped":
        return Unshaped()
    if strategy == "fixed-penalty":
        return FixedPenalty(sh.fixed_lambda)
    if strategy == "additive-lagrangian":
        return AdditiveLagrangian(sh.lagrangian_lr, sh.initial_lambda,
                                  cfg.environment.cost_threshold)
    shaping = ShapingConfig.from_spec(env.spec, eta=sh.eta, initial_lambda=sh.initial_lambda)
    state = LambdaState(lam=sh.initial_lambda, margin=sh.margin, p0_policy=sh.p0_policy,
                        lambda_h_policy=sh.lambda_h_policy)
    return RiskPreventive(shaping, state, freeze_lambda=sh.freeze_lambda)


def _sample_negatives(env: Environment, replay: ReplayBuffer, batch_size: int,
                      rng: np.random.Generator, exclude_positives: bool) -> Optional[np.ndarray]:
    where = (lambda tr: tr.cost == 0) if exclude_positives else None
    try:
        sample = replay.sample(batch_size, rng, where=where)
    except DomainError:
        return None
    return np.stack([env.feature_vector(tr.state, tr.action) for tr in sample])


def run_training(cfg: TrainingConfig, risk_model: Optional[RiskFn] = None,
                 monitor: Optional[TrainingMonitor] = None) -> TrainingRun:
    """
    K 에피소드 학습. 같은 설정/시드면 같은 결과.
    risk_model 을 주면 학습된 분류기 대신 그 함수를 위험도로 사용 (분류기 학습 없음).
    """
    tr_cfg, clf_cfg, ag_cfg = cfg.training, cfg.classifier, cfg.agent
    env = build_environment(cfg)
    monitor = monitor or TrainingMonitor(f"{tr_cfg.strategy}/seed{tr_cfg.seed}")

    # 용도별 독립 난수 스트림
    env_ss, learner_ss, init_ss, clf_sample_ss, policy_ss = np.random.SeedSequence(tr_cfg.seed).spawn(5)
    env_rng = np.random.default_rng(env_ss)
    clf_rng = np.random.default_rng(clf_sample_ss)
    policy_rng = np.random.default_rng(policy_ss)

    learner = build_learner(cfg, env, np.random.default_rng(learner_ss))
    strategy = build_strategy(cfg, env)
    classifier = RiskClassifier.initialize(feature_dim(env), clf_cfg.hidden_dim,
                                           np.random.default_rng(init_ss))
    optimizer = OptimizerState(learning_rate=clf_cfg.learning_rate)
    replay = ReplayBuffer(tr_cfg.replay_capacity)
    unsafe_set = UnsafePairSet(max_size=clf_cfg.unsafe_capacity)
    metrics = RunMetrics(seed=tr_cfg.seed, strategy=tr_cfg.strategy)

    classifier_updates = 0
    env_steps = violations = truncations = 0
    logger.info(f"🚀 학습 시작: env={env.name} strategy={tr_cfg.strategy} "
                f"episodes={tr_cfg.episodes} seed={tr_cfg.seed}")

    for episode in range(tr_cfg.episodes):
        if risk_model is not None:
            risk, ready = risk_model, getattr(risk_model, "ready", True)
        else:
            # 에피소드 시작 시점 스냅샷, 첫 업데이트 전에는 절단하지 않음
            snapshot = ClassifierRisk(classifier, ready=classifier_updates > 0)
            risk, ready = snapshot, snapshot.ready
        ctx = CollectionContext(
            eta=cfg.shaping.eta, max_steps=tr_cfg.max_steps,
            seed=int(env_rng.integers(SEED_LIMIT)), replay=replay, unsafe_set=unsafe_set,
            positives=clf_cfg.positives, last_k=clf_cfg.last_k, truncation_active=ready,
            screen_initial_action=tr_cfg.screen_initial_action, episode=episode,
            trace=metrics.trace if cfg.output.trace_steps else None,
        )
        trajectory, risks, events = collect_trajectory(env, learner, risk, strategy, ctx)

        env_steps += len(trajectory)
        violations += cumulative_cost(trajectory)
        truncations += int(events.truncated)
        strategy.on_episode_end(discounted_risk_cost(trajectory, risks, env.gamma))

        if (risk_model is None and strategy.uses_risk and len(unsafe_set) > 0
                and (episode + 1) % clf_cfg.update_every == 0):
            for _ in range(clf_cfg.updates_per_episode):
                negatives = _sample_negatives(env, replay, clf_cfg.batch_size, clf_rng,
                                              clf_cfg.exclude_positives_from_negatives)
                if negatives is None:
                    logger.debug("음성 표본이 없어 분류기 업데이트를 건너뜁니다")
                    break
                batch = sample_classifier_batch(unsafe_set, negatives, clf_cfg.batch_size, clf_rng)
                classifier, optimizer = train_step(classifier, optimizer, batch)
                classifier_updates += 1

        if len(replay) > 0 and (episode + 1) % ag_cfg.update_every == 0:
            for _ in range(ag_cfg.updates_per_episode):
                learner.update(replay.sample(ag_cfg.batch_size, policy_rng))
        learner.end_episode()

        record = EpisodeRecord(
            episode=episode, env_steps=env_steps,
            episode_return=undiscounted_return(trajectory), outcome=trajectory.outcome.value,
            lam=strategy.lam, cumulative_violations=violations, risk_truncations=truncations,
        )
        metrics.append(record)
        monitor.log_episode(record, tr_cfg.progress_every)

    unsafe_lengths = strategy.state.unsafe_lengths if isinstance(strategy, RiskPreventive) else ()
    logger.success(f"✅ 학습 완료: 위반 {violations}회, 절단 {truncations}회, "
                   f"분류기 업데이트 {classifier_updates}회")
    return TrainingRun(config=cfg, metrics=metrics, learner=learner, classifier=classifier,
                       classifier_updates=classifier_updates, unsafe_lengths=unsafe_lengths,
                       unsafe_pairs=len(unsafe_set), monitor=monitor)


def evaluate_policy(env: Environment, learner: PolicyLearner, episodes: int,
                    seed: int) -> Tuple[float, int]:
    """greedy 평가 (shaping, 절단, 학습 없음) → (평균 비할인 수익, 위반 수)"""
    if episodes < 1:
        raise DomainError("episodes must be positive")
    rng = np.random.default_rng(seed)
    total_return = 0.0
    violations = 0
    for _ in range(episodes):
        state = env.reset(int(rng.integers(SEED_LIMIT)))
        for _ in range(env.max_episode_steps):
            result = env.step(learner.act(state, explore=False))
            total_return += result.reward
            violations += result.cost
            if result.terminal:
                break
            state = result.next_state
    return total_return / episodes, violations


def normalized_ratio_series(metrics: RunMetrics, max_return: float,
                            min_return: float = 0.0) -> pd.Series:
    """
    에피소드별 (정규화 수익) / max(1, 누적 위반), env_steps 색인
    정규화 수익 = (return - min_return) / (max_return - min_return)
    """
    values = normalized_ratio([r.episode_return for r in metrics.records],
                              [r.cumulative_violations for r in metrics.records],
                              max_return, min_return)
    steps = [r.env_steps for r in metrics.records]
    return pd.Series(values, index=pd.Index(steps, name="env_steps"), name="ratio", dtype=float)
