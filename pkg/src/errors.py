# src/errors.py

from __future__ import annotations

from pathlib import Path
from typing import Optional


class AppError(Exception):
    """프로젝트 공통 예외. CLI는 이 계열을 exit code 1로 처리한다."""


class ConfigError(AppError, ValueError):
    pass


class CorpusError(AppError, ValueError):
    """레코드 파일 파싱 실패. 파일 경로와 줄 번호를 같이 들고 다닌다."""

    def __init__(
        self, message: str, path: Optional[Path] = None, line_no: Optional[int] = None
    ):
        self.path = path
        self.line_no = line_no
        where = ""
        if path is not None:
            where = f"{path}"
            if line_no is not None:
                where += f":{line_no}"
            where += ": "
        super().__init__(f"{where}{message}")


class ReferentialIntegrityError(CorpusError):
    pass


class EmptyRepositoryError(CorpusError):
    pass


class SplitError(AppError, ValueError):
    pass


class TokenizerError(AppError, ValueError):
    pass


class EncoderError(AppError, ValueError):
    pass


class CheckpointError(AppError):
    pass


class CompatibilityError(AppError):
    """체크포인트 label 크기와 코퍼스가 맞지 않을 때."""


class QueryError(AppError, ValueError):
    pass


class TrainingDivergedError(AppError):
    pass


class MetricsError(AppError, ValueError):
    pass
