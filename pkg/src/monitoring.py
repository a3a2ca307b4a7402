"""
RPT 학습 모니터링 및 로깅 (메모리 기반)
- 에피소드 기록(RunMetrics) 수집
- 진행 상황/에러 로깅 (loguru, 표준 에러)
- 실행 리포트와 성능 메트릭
"""

import functools
import sys
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Deque, Dict, List, Optional

from loguru import logger

from config.settings import LOGGING_CONFIG
from src.errors import DomainError


def setup_logging(level: Optional[str] = None) -> int:
    """loguru 싱크를 표준 에러 하나로 재설정"""
    level = (level or LOGGING_CONFIG['LEVEL']).upper()
    if level not in LOGGING_CONFIG['VALID_LEVELS']:
        level = 'INFO'
    logger.remove()
    return logger.add(sys.stderr, level=level, format=LOGGING_CONFIG['FORMAT'])


@dataclass(frozen=True)
class EpisodeRecord:
    """에피소드 하나의 결과 (메트릭 CSV 한 줄)"""
    episode: int
    env_steps: int
    episode_return: float
    outcome: str
    lam: float
    cumulative_violations: int
    risk_truncations: int


@dataclass(frozen=True)
class StepTrace:
    """스텝 단위 기록 (output.trace_steps 가 켜졌을 때만)"""
    episode: int
    step: int
    risk: float
    reward: float
    shaped_reward: float
    lam: float


@dataclass
class RunMetrics:
    seed: int = 0
    strategy: str = "rpt"
    records: List[EpisodeRecord] = field(default_factory=list)
    trace: List[StepTrace] = field(default_factory=list)

    def append(self, record: EpisodeRecord):
        if self.records:
            last = self.records[-1]
            if record.cumulative_violations < last.cumulative_violations:
                raise DomainError("누적 위반 수는 감소할 수 없습니다")
            if record.episode != last.episode + 1:
                raise DomainError("에피소드 번호가 연속되지 않습니다")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def lambdas(self) -> List[float]:
        return [r.lam for r in self.records]

    @property
    def violations(self) -> int:
        return self.records[-1].cumulative_violations if self.records else 0


class TrainingMonitor:
    def __init__(self, name: str = "train"):
        self.name = name
        # 최근 기록만 메모리에 유지
        self.episodes: Deque[EpisodeRecord] = deque(maxlen=1000)
        self.errors: Deque[Dict[str, Any]] = deque(maxlen=500)

        self.outcome_stats = defaultdict(int)
        self.command_stats = defaultdict(int)
        self.total_env_steps = 0
        self.start_time = time.time()

    def log_episode(self, record: EpisodeRecord, progress_every: int = 100):
        """에피소드 기록 + progress_every 마다 진행 로그"""
        self.episodes.append(record)
        self.outcome_stats[record.outcome] += 1
        self.total_env_steps = record.env_steps

        if (record.episode + 1) % progress_every == 0:
            logger.info(
                f"[{self.name}] EP:{record.episode + 1} STEPS:{record.env_steps} "
                f"RET:{record.episode_return:.3f} λ:{record.lam:.4g} "
                f"VIOL:{record.cumulative_violations} TRUNC:{record.risk_truncations}"
            )

    def log_error(self, error_type: str, error_msg: str, context: str = ""):
        self.errors.append({
            'timestamp': datetime.now().isoformat(),
            'error_type': error_type,
            'error_msg': error_msg,
            'context': context,
        })
        logger.error(f"ERROR:{error_type} MSG:{error_msg} CTX:{context}")

    def get_performance_metrics(self) -> Dict[str, Any]:
        """최근 에피소드 기준 성능 메트릭"""
        if not self.episodes:
            return {"error": "기록된 에피소드 없음"}

        total = sum(self.outcome_stats.values())
        recent = list(self.episodes)[-100:]
        elapsed = max(time.time() - self.start_time, 1e-9)
        return {
            "episodes": total,
            "violation_rate": self.outcome_stats["reached_unsafe"] / total,
            "truncation_rate": self.outcome_stats["risk_truncated"] / total,
            "mean_recent_return": sum(r.episode_return for r in recent) / len(recent),
            "steps_per_sec": round(self.total_env_steps / elapsed, 2),
        }

    def get_run_report(self) -> str:
        total = sum(self.outcome_stats.values())
        last = self.episodes[-1] if self.episodes else None
        report = f"""📊 [{self.name}] 학습 리포트

📈 에피소드 결과:
• 총 에피소드: {total}회
• 위험 상태 도달: {self.outcome_stats['reached_unsafe']}회
• 위험 절단: {self.outcome_stats['risk_truncated']}회
• 목표 도달: {self.outcome_stats['goal_terminal']}회
• 시간 제한: {self.outcome_stats['horizon_end']}회"""
        if last is not None:
            report += f"""

🎯 마지막 상태:
• 환경 스텝: {last.env_steps}
• λ: {last.lam:.6g}
• 누적 위반: {last.cumulative_violations}"""
        if self.command_stats:
            commands = ", ".join(f"{name} {count}회"
                                 for name, count in sorted(self.command_stats.items()))
            report += f"\n\n🛠 실행 명령: {commands}"
        if self.errors:
            report += f"\n\n❌ 에러: {len(self.errors)}건"
        return report


# 전역 모니터 인스턴스
training_monitor = TrainingMonitor()


def track_command(func):
    """CLI 명령 실행 추적 데코레이터 (소요 시간, 성공/실패)"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        command = func.__name__.replace('_command', '')
        training_monitor.command_stats[command] += 1
        start_time = time.time()
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            training_monitor.log_error(type(e).__name__, str(e), command)
            raise
        elapsed = time.time() - start_time
        status = "SUCCESS" if result == 0 else "FAILED"
        logger.info(f"CMD:{command} STATUS:{status} TIME:{elapsed:.2f}s")
        return result
    return wrapper
