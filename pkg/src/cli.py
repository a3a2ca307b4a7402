"""
RPT 명령줄 인터페이스
    train        설정 파일로 학습, 메트릭/체크포인트/해석된 설정 저장
    eval         체크포인트 디렉토리의 정책을 greedy 평가
    sweep        전략 × 시드 격자 실행 + 집계
    export-plot  메트릭 CSV 들을 series,x,y 형식으로 내보내기

종료 코드: 0 성공, 2 사용법/설정/체크포인트 오류, 3 실행 중 오류
"""

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from config.settings import CHECKPOINT_CONFIG, CSV_CONFIG, EXIT_CODES, PATHS
from src.agent import STRATEGIES, load_learner
from src.errors import CheckpointError, ConfigError, DomainError, RptError
from src.monitoring import setup_logging, track_command, training_monitor
from src.report_manager import (aggregate_runs, aggregate_to_csv_text, collect_metrics_files,
                                export_plot_frame, metrics_to_csv_text, plot_frame_to_csv_text,
                                read_metrics_csv, trace_to_csv_text, write_metrics_csv,
                                write_text)
from src.riskmodel import load_classifier, save_classifier
from src.run_config import (TrainingConfig, build_environment, dump_config, load_config,
                            with_overrides)
from src.trainer import evaluate_policy, run_training


class UsageProblem(RptError):
    """명령줄 인자 문제 (종료 코드 2)"""


def _fail(code: str, message: str) -> int:
    print(f"❌ {message}", file=sys.stderr)
    return EXIT_CODES[code]


def _guarded(func, args: argparse.Namespace) -> int:
    """예외를 종료 코드로 변환"""
    try:
        return func(args)
    except ConfigError as e:
        key = f" [{e.key}]" if e.key else ""
        return _fail('USAGE', f"설정 오류{key}: {e}")
    except (CheckpointError, UsageProblem, pd.errors.ParserError) as e:
        return _fail('USAGE', str(e))
    except (RptError, OSError) as e:
        return _fail('RUNTIME', f"실행 실패 ({type(e).__name__}): {e}")


def _parse_list(text: str, name: str) -> List[str]:
    items = [item.strip() for item in text.split(",") if item.strip()]
    if not items:
        raise UsageProblem(f"--{name} 목록이 비어 있습니다")
    return items


def _parse_seeds(text: str) -> List[int]:
    try:
        seeds = [int(s) for s in _parse_list(text, "seeds")]
    except ValueError as e:
        raise UsageProblem(f"--seeds 는 정수 목록이어야 합니다: {text}") from e
    if any(s < 0 for s in seeds):
        raise UsageProblem("--seeds 는 0 이상이어야 합니다")
    return seeds


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def write_run_outputs(run, out_dir: Path):
    """metrics.csv, learner.ckpt, classifier.ckpt, config.resolved.yaml (+ trace.csv)"""
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(run.metrics, out_dir / CSV_CONFIG['METRICS_FILE'])
    run.learner.save(out_dir / CHECKPOINT_CONFIG['LEARNER_FILE'])
    save_classifier(out_dir / CHECKPOINT_CONFIG['CLASSIFIER_FILE'], run.classifier,
                    updates=run.classifier_updates)
    write_text(out_dir / CHECKPOINT_CONFIG['RESOLVED_CONFIG_FILE'], dump_config(run.config))
    if run.config.output.trace_steps:
        write_text(out_dir / CSV_CONFIG['TRACE_FILE'], trace_to_csv_text(run.metrics))


def _train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = with_overrides(cfg, {"training.seed": args.seed})
    out_dir = Path(args.out) if args.out else PATHS['OUTPUT_DIR'] / f"{cfg.training.strategy}_seed{cfg.training.seed}"
    # 학습 전에 출력 디렉토리부터 확인
    out_dir.mkdir(parents=True, exist_ok=True)

    run = run_training(cfg, monitor=training_monitor)
    write_run_outputs(run, out_dir)
    logger.info(training_monitor.get_run_report())
    print(f"✅ 학습 결과 저장: {out_dir}", file=sys.stderr)
    return EXIT_CODES['OK']


@track_command
def train_command(args: argparse.Namespace) -> int:
    return _guarded(_train, args)


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _eval(args: argparse.Namespace) -> int:
    if args.episodes <= 0:
        raise UsageProblem("episodes must be positive")
    ckpt_dir = Path(args.checkpoint_dir)
    config_path = ckpt_dir / CHECKPOINT_CONFIG['RESOLVED_CONFIG_FILE']
    if not config_path.is_file():
        raise CheckpointError("해석된 설정 파일이 없습니다", path=str(config_path))
    cfg = load_config(config_path)
    env = build_environment(cfg)
    learner = load_learner(ckpt_dir / CHECKPOINT_CONFIG['LEARNER_FILE'], env,
                           rng=np.random.default_rng(args.seed))
    load_classifier(ckpt_dir / CHECKPOINT_CONFIG['CLASSIFIER_FILE'])

    mean_return, violations = evaluate_policy(env, learner, args.episodes, args.seed)
    print(f"{mean_return:.9g},{violations}")
    return EXIT_CODES['OK']


@track_command
def eval_command(args: argparse.Namespace) -> int:
    return _guarded(_eval, args)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def run_sweep_cell(cfg: TrainingConfig, strategy: str, seed: int
                   ) -> Tuple[str, int, Optional[str], Optional[str]]:
    """(strategy, seed, 메트릭 CSV 텍스트, 오류 메시지) - 프로세스 풀에서도 호출"""
    try:
        cell_cfg = with_overrides(cfg, {"training.strategy": strategy, "training.seed": seed})
        run = run_training(cell_cfg)
        return strategy, seed, metrics_to_csv_text(run.metrics), None
    except (RptError, ArithmeticError, ValueError) as e:
        return strategy, seed, None, f"{type(e).__name__}: {e}"


def _sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    strategies = _parse_list(args.strategies, "strategies")
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown:
        raise UsageProblem(f"알 수 없는 전략: {', '.join(unknown)} (가능: {', '.join(STRATEGIES)})")
    seeds = _parse_seeds(args.seeds)
    if args.workers < 1:
        raise UsageProblem("--workers 는 1 이상이어야 합니다")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    cells = [(strategy, seed) for strategy in strategies for seed in seeds]
    if args.workers == 1:
        results = [run_sweep_cell(cfg, strategy, seed) for strategy, seed in cells]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(run_sweep_cell, cfg, strategy, seed) for strategy, seed in cells]
            results = [f.result() for f in futures]

    runs = []
    failed = 0
    for strategy, seed, csv_text, error in results:
        if error is not None:
            failed += 1
            training_monitor.log_error("SweepCellFailed", error, f"{strategy}/seed{seed}")
            continue
        path = write_text(out_dir / f"{strategy}_seed{seed}.csv", csv_text)
        runs.append((strategy, read_metrics_csv(path)))

    if runs:
        aggregate = aggregate_runs(runs, cfg.output.max_return, cfg.output.min_return)
        write_text(out_dir / CSV_CONFIG['AGGREGATE_FILE'], aggregate_to_csv_text(aggregate))
    write_text(out_dir / CHECKPOINT_CONFIG['RESOLVED_CONFIG_FILE'], dump_config(cfg))

    print(f"{'✅' if not failed else '⚠️'} sweep 완료: {len(runs)}/{len(cells)} 셀 성공",
          file=sys.stderr)
    return EXIT_CODES['OK'] if not failed else EXIT_CODES['RUNTIME']


@track_command
def sweep_command(args: argparse.Namespace) -> int:
    return _guarded(_sweep, args)


# ---------------------------------------------------------------------------
# export-plot
# ---------------------------------------------------------------------------

def _export_plot(args: argparse.Namespace) -> int:
    metrics_dir = Path(args.metrics_dir)
    files = collect_metrics_files(metrics_dir)
    if not files:
        raise UsageProblem(f"메트릭 CSV 가 없습니다: {metrics_dir}")

    max_return, min_return = None, 0.0
    if args.y == "ratio":
        config_path = Path(args.config) if args.config else metrics_dir / CHECKPOINT_CONFIG['RESOLVED_CONFIG_FILE']
        if not config_path.is_file():
            raise ConfigError("ratio 에는 output.max_return 이 필요합니다 (설정 파일 없음)",
                              key="output.max_return")
        cfg = load_config(config_path)
        if cfg.output.max_return is None:
            raise ConfigError("ratio 에는 output.max_return 이 필요합니다", key="output.max_return")
        max_return, min_return = cfg.output.max_return, cfg.output.min_return

    try:
        runs = [(path.stem, read_metrics_csv(path)) for path in files]
        frame = export_plot_frame(runs, x=args.x, y=args.y, max_return=max_return,
                                  min_return=min_return)
    except DomainError as e:
        raise UsageProblem(str(e)) from e
    text = plot_frame_to_csv_text(frame)
    if args.out:
        write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_CODES['OK']


@track_command
def export_plot_command(args: argparse.Namespace) -> int:
    return _guarded(_export_plot, args)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rpt", description="Risk Preventive Training")
    parser.add_argument("--log-level", default=None, help="loguru 레벨 (기본: RPT_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="설정 파일로 학습")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=train_command)

    p = sub.add_parser("eval", help="체크포인트 greedy 평가")
    p.add_argument("checkpoint_dir")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=eval_command)

    p = sub.add_parser("sweep", help="전략 × 시드 격자 실행")
    p.add_argument("config")
    p.add_argument("--strategies", default=",".join(STRATEGIES))
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=sweep_command)

    p = sub.add_parser("export-plot", help="플롯용 series,x,y CSV 내보내기")
    p.add_argument("metrics_dir")
    p.add_argument("--x", choices=("violations", "steps"), default="violations")
    p.add_argument("--y", choices=("return", "ratio"), default="return")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=export_plot_command)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CODES['OK'] if e.code in (0, None) else EXIT_CODES['USAGE']
    setup_logging(args.log_level)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
