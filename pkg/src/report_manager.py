"""
Report Manager - 메트릭 CSV 입출력, 시드 집계, 플롯용 데이터 내보내기
- 메트릭 CSV: episode,env_steps,return,outcome,lambda,cumulative_violations,risk_truncations
- 집계: 누적 위반 수(또는 env 스텝)에 LOCF 정렬 후 평균/표준편차 (ddof=0)
"""

from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from config.settings import CSV_CONFIG
from src.errors import DomainError
from src.monitoring import RunMetrics

PathLike = Union[str, Path]
LabeledRun = Tuple[str, pd.DataFrame]

TRACE_HEADER = ['episode', 'step', 'risk', 'reward', 'shaped_reward', 'lambda']
AGGREGATE_HEADER = ['curve', 'strategy', 'x', 'mean', 'std', 'n_runs']
PLOT_HEADER = ['series', 'x', 'y']
X_AXES = {'violations': 'cumulative_violations', 'steps': 'env_steps'}
Y_AXES = ('return', 'ratio')


def _to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=CSV_CONFIG['FLOAT_FORMAT'],
                        lineterminator=CSV_CONFIG['LINE_TERMINATOR'])


def metrics_to_frame(metrics: RunMetrics) -> pd.DataFrame:
    rows = [
        (r.episode, r.env_steps, float(r.episode_return), r.outcome, float(r.lam),
         r.cumulative_violations, r.risk_truncations)
        for r in metrics.records
    ]
    frame = pd.DataFrame(rows, columns=CSV_CONFIG['HEADER'])
    return frame.astype({
        'episode': 'int64', 'env_steps': 'int64', 'return': 'float64', 'outcome': 'object',
        'lambda': 'float64', 'cumulative_violations': 'int64', 'risk_truncations': 'int64',
    })


def metrics_to_csv_text(metrics: RunMetrics) -> str:
    """헤더는 항상 포함, 실수는 유효숫자 9자리"""
    return _to_csv(metrics_to_frame(metrics))


def write_metrics_csv(metrics: RunMetrics, path: PathLike) -> Path:
    p = Path(path)
    write_text(p, metrics_to_csv_text(metrics))
    logger.debug(f"메트릭 CSV 저장: {p} ({len(metrics)}행)")
    return p


def write_text(path: PathLike, text: str) -> Path:
    """줄바꿈 변환 없이 그대로 저장"""
    p = Path(path)
    with open(p, 'w', encoding='utf-8', newline='') as f:
        f.write(text)
    return p


def trace_to_csv_text(metrics: RunMetrics) -> str:
    frame = pd.DataFrame(
        [(t.episode, t.step, t.risk, t.reward, t.shaped_reward, t.lam) for t in metrics.trace],
        columns=TRACE_HEADER,
    )
    return _to_csv(frame)


def read_metrics_csv(path: PathLike) -> pd.DataFrame:
    """메트릭 CSV 읽기 - 헤더/행 형식/숫자 열이 틀리면 DomainError"""
    p = Path(path)
    try:
        frame = pd.read_csv(p)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DomainError(f"메트릭 CSV 를 해석할 수 없습니다: {p} ({e})") from e
    if list(frame.columns) != CSV_CONFIG['HEADER']:
        raise DomainError(f"메트릭 CSV 헤더가 아닙니다: {p}")
    numeric = [column for column in CSV_CONFIG['HEADER'] if column != 'outcome']
    try:
        frame[numeric] = frame[numeric].apply(pd.to_numeric)
    except (ValueError, TypeError) as e:
        raise DomainError(f"메트릭 CSV 에 숫자가 아닌 값이 있습니다: {p} ({e})") from e
    return frame


def is_metrics_file(path: PathLike) -> bool:
    try:
        with open(path, encoding='utf-8') as f:
            first = f.readline().rstrip('\r\n')
    except (OSError, UnicodeDecodeError):
        return False
    return first == ','.join(CSV_CONFIG['HEADER'])


def collect_metrics_files(directory: PathLike) -> List[Path]:
    """디렉토리 안에서 메트릭 헤더를 가진 CSV 모두 (이름순)"""
    d = Path(directory)
    if not d.is_dir():
        return []
    return [p for p in sorted(d.glob('*.csv')) if is_metrics_file(p)]


def normalized_ratio(returns: Sequence[float], violations: Sequence[int], max_return: float,
                     min_return: float = 0.0) -> np.ndarray:
    """((return - min) / (max - min)) / max(1, 누적 위반)"""
    if min_return == 0.0 and max_return <= 0.0:
        raise DomainError(f"max_return must be positive: {max_return}")
    if max_return <= min_return:
        raise DomainError(f"max_return({max_return}) 이 min_return({min_return}) 보다 커야 합니다")
    r = np.asarray(returns, dtype=float)
    v = np.maximum(1, np.asarray(violations, dtype=np.int64))
    return ((r - min_return) / (max_return - min_return)) / v


def _aligned_stats(curves: List[pd.Series]) -> pd.DataFrame:
    """각 곡선을 x 합집합에 LOCF 로 맞추고 평균/표준편차"""
    grid = sorted(set().union(*(c.index for c in curves)))
    aligned = pd.concat([c.reindex(grid, method='ffill') for c in curves], axis=1)
    return pd.DataFrame({
        'x': grid,
        'mean': aligned.mean(axis=1, skipna=True).to_numpy(),
        'std': aligned.std(axis=1, ddof=0, skipna=True).to_numpy(),
        'n_runs': aligned.count(axis=1).to_numpy(),
    })


def _curve(frame: pd.DataFrame, x_col: str, values: Sequence[float]) -> pd.Series:
    # 같은 x 에서는 마지막 관측값
    s = pd.Series(np.asarray(values, dtype=float), index=frame[x_col].to_numpy())
    return s.groupby(level=0).last().sort_index()


def aggregate_runs(runs: Sequence[LabeledRun], max_return: Optional[float] = None,
                   min_return: float = 0.0) -> pd.DataFrame:
    """
    전략별 집계 (tidy)
    - return_vs_violations: 누적 위반 수 기준 수익
    - ratio_vs_steps: env 스텝 기준 정규화 비율 (max_return 이 있을 때만)
    """
    if not runs:
        raise DomainError("집계할 실행이 없습니다")
    parts = []
    for strategy in sorted({label for label, _ in runs}):
        frames = [f for label, f in runs if label == strategy and len(f)]
        if not frames:
            continue
        stats = _aligned_stats([_curve(f, 'cumulative_violations', f['return']) for f in frames])
        stats.insert(0, 'strategy', strategy)
        stats.insert(0, 'curve', 'return_vs_violations')
        parts.append(stats)
        if max_return is not None:
            ratio_curves = [
                _curve(f, 'env_steps',
                       normalized_ratio(f['return'], f['cumulative_violations'],
                                        max_return, min_return))
                for f in frames
            ]
            stats = _aligned_stats(ratio_curves)
            stats.insert(0, 'strategy', strategy)
            stats.insert(0, 'curve', 'ratio_vs_steps')
            parts.append(stats)
    if not parts:
        return pd.DataFrame(columns=AGGREGATE_HEADER)
    result = pd.concat(parts, ignore_index=True)[AGGREGATE_HEADER]
    return result.astype({'x': 'int64', 'n_runs': 'int64'})


def aggregate_to_csv_text(frame: pd.DataFrame) -> str:
    return _to_csv(frame)


def export_plot_frame(runs: Sequence[LabeledRun], x: str = 'violations', y: str = 'return',
                      max_return: Optional[float] = None,
                      min_return: float = 0.0) -> pd.DataFrame:
    """series,x,y 형식 - 입력 실행의 에피소드마다 한 행"""
    if x not in X_AXES:
        raise DomainError(f"x 는 {tuple(X_AXES)} 중 하나여야 합니다: {x}")
    if y not in Y_AXES:
        raise DomainError(f"y 는 {Y_AXES} 중 하나여야 합니다: {y}")
    if y == 'ratio' and max_return is None:
        raise DomainError("ratio 에는 output.max_return 이 필요합니다")

    parts = []
    for label, frame in runs:
        if y == 'return':
            values = frame['return'].to_numpy(dtype=float)
        else:
            values = normalized_ratio(frame['return'], frame['cumulative_violations'],
                                      max_return, min_return)
        parts.append(pd.DataFrame({
            'series': label,
            'x': frame[X_AXES[x]].to_numpy(),
            'y': values,
        }))
    if not parts:
        return pd.DataFrame(columns=PLOT_HEADER)
    return pd.concat(parts, ignore_index=True)[PLOT_HEADER]


def plot_frame_to_csv_text(frame: pd.DataFrame) -> str:
    return _to_csv(frame)
