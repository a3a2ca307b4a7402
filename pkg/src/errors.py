"""
RPT 예외 계층
CLI 종료 코드 매핑: ConfigError / CheckpointError → 2, 그 외 RptError → 3
"""

from typing import Optional


class RptError(Exception):
    """모든 RPT 오류의 기반 클래스"""


class DomainError(RptError, ValueError):
    """순수 연산의 사전조건 위반"""


class UsageError(RptError, RuntimeError):
    """API 오용 (예: 종료된 에피소드에서 step 호출)"""


class InternalError(RptError, RuntimeError):
    """도달할 수 없어야 하는 상태"""


class BoundOverflowError(DomainError, ArithmeticError):
    """λ 하한 계산 중 γ^T 언더플로"""


class TrainingError(RptError):
    """비유한 그래디언트/업데이트"""

    def __init__(self, message: str, parameter: Optional[str] = None):
        super().__init__(message)
        self.parameter = parameter


class ConfigError(RptError):
    """설정 파일 오류 - key 는 점 표기 (예: shaping.eta)"""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class CheckpointError(RptError):
    """체크포인트 파일 누락/손상"""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
