#!/usr/bin/env python3
"""
RPT 실행 스크립트
설정을 확인하고 명령줄 인터페이스(src/cli.py)를 실행합니다.

    python run_rpt.py train config/example.yaml --out runs/demo
    python run_rpt.py eval runs/demo --episodes 20
"""

import os
import sys
from datetime import datetime
from pathlib import Path

# 프로젝트 루트를 Python 경로에 추가
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from loguru import logger

from config.settings import EXIT_CODES, validate_config
from src.cli import main as cli_main
from src.monitoring import setup_logging


def check_environment() -> bool:
    """설정 확인 (로그 레벨, 예제 설정 파일)"""
    errors = validate_config()
    for error in errors:
        logger.warning(f"⚠️ {error}")
    return not any("RPT_LOG_LEVEL" in e for e in errors)


def main() -> int:
    setup_logging()
    logger.debug(f"📅 시작 시간: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    logger.debug(f"🐍 Python 버전: {sys.version.split()[0]}")
    logger.debug(f"📁 작업 디렉토리: {os.getcwd()}")

    if not check_environment():
        return EXIT_CODES['USAGE']

    try:
        return cli_main(sys.argv[1:])
    except KeyboardInterrupt:
        logger.info("🛑 사용자에 의해 중지되었습니다.")
        return EXIT_CODES['RUNTIME']


if __name__ == "__main__":
    sys.exit(main())
