"""
RPT 프로젝트 설정
로깅, CSV, 체크포인트, 종료 코드 등 코드 전반에서 쓰는 고정값을 한 곳에서 관리
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# 프로젝트 루트 디렉토리
PROJECT_ROOT = Path(__file__).parent.parent

# .env 파일 로드 (여러 위치에서 찾기)
env_files = [
    PROJECT_ROOT / "config" / ".env",
    PROJECT_ROOT / ".env",
]

for env_file in env_files:
    if env_file.exists():
        load_dotenv(env_file)
        break

# 파일 경로 설정
PATHS = {
    'EXAMPLE_CONFIG': PROJECT_ROOT / 'config' / 'example.yaml',
    'OUTPUT_DIR': Path(os.getenv('RPT_OUTPUT_DIR', str(PROJECT_ROOT / 'runs'))),
}

# 로깅 설정 (loguru, 표준 에러 출력)
LOGGING_CONFIG = {
    'LEVEL': os.getenv('RPT_LOG_LEVEL', 'INFO').upper(),
    'FORMAT': '{time:YYYY-MM-DD HH:mm:ss} - {name} - {level} - {message}',
    'VALID_LEVELS': ('TRACE', 'DEBUG', 'INFO', 'SUCCESS', 'WARNING', 'ERROR', 'CRITICAL'),
}

# 메트릭 CSV 형식
CSV_CONFIG = {
    'HEADER': [
        'episode', 'env_steps', 'return', 'outcome',
        'lambda', 'cumulative_violations', 'risk_truncations',
    ],
    'FLOAT_FORMAT': '%.9g',
    'LINE_TERMINATOR': '\n',
    'METRICS_FILE': 'metrics.csv',
    'AGGREGATE_FILE': 'aggregate.csv',
    'TRACE_FILE': 'trace.csv',
}

# 텐서 체크포인트 형식
CHECKPOINT_CONFIG = {
    'MAGIC': 'RPT-TENSOR',
    'VERSION': 1,
    'LEARNER_FILE': 'learner.ckpt',
    'CLASSIFIER_FILE': 'classifier.ckpt',
    'RESOLVED_CONFIG_FILE': 'config.resolved.yaml',
}

# CLI 종료 코드
EXIT_CODES = {
    'OK': 0,
    'USAGE': 2,
    'RUNTIME': 3,
}


def validate_config():
    """설정 유효성 검사"""
    errors = []

    if LOGGING_CONFIG['LEVEL'] not in LOGGING_CONFIG['VALID_LEVELS']:
        errors.append(f"RPT_LOG_LEVEL 값이 올바르지 않습니다: {LOGGING_CONFIG['LEVEL']}")

    if not PATHS['EXAMPLE_CONFIG'].exists():
        errors.append(f"예제 설정 파일이 없습니다: {PATHS['EXAMPLE_CONFIG']}")

    return errors


if __name__ == "__main__":
    errors = validate_config()
    if errors:
        print("❌ 설정 오류:")
        for error in errors:
            print(f"  - {error}")
    else:
        print("✅ 모든 설정이 올바릅니다!")
