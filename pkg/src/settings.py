# src/settings.py

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values

from src.db.connection import load_env
from src.errors import ConfigError
from src.pipeline.recommender import (
    DEFAULT_CANDIDATES,
    DEFAULT_FUSION_WEIGHT,
    DEFAULT_MAX_LEN,
    DEFAULT_TOP_N,
    HIERARCHICAL,
    PipelineConfig,
)

BASE_DIR = Path(__file__).resolve().parents[1]  # 프로젝트 루트
LOG_FORMAT = "[%(levelname)s] %(message)s"

# TrainConfig 필드 ← 설정 키
_TRAIN_KEYS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    "TRAIN_EPOCHS": ("epochs", int),
    "TRAIN_PHASE_BOUNDARY": ("phase_boundary", int),
    "TRAIN_BATCH_SIZE": ("batch_size", int),
    "TRAIN_NEGATIVES": ("negatives", int),
    "TRAIN_PATIENCE": ("patience", int),
    "TRAIN_LR_HIGH": ("lr_high", float),
    "TRAIN_LR_LOW": ("lr_low", float),
    "ENCODER_LAYERS": ("num_layers", int),
    "ENCODER_HIDDEN": ("hidden_size", int),
    "ENCODER_HEADS": ("num_heads", int),
    "ENCODER_INTERMEDIATE": ("intermediate_size", int),
    "PRETRAINED_PATH": ("pretrained_path", str),
}


def setup_logging(level: str = "INFO") -> None:
    """[INFO] / [WARN] / [ERROR] 태그 한 줄 로그."""
    logging.addLevelName(logging.WARNING, "WARN")
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, force=True)


def _parse(key: str, raw: str, cast: Callable[[str], Any]) -> Any:
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"설정 {key} 값을 해석할 수 없습니다: {raw!r}") from None


@dataclass(frozen=True)
class AppConfig:
    data_dir: Path = BASE_DIR / "data" / "fixture"
    vocab_path: Optional[Path] = None
    abbrev_path: Optional[Path] = None
    lemma_path: Optional[Path] = None
    run_id: str = "default"
    work_dir: Optional[Path] = None
    filter_checkpoint: Optional[Path] = None
    category_checkpoint: Optional[Path] = None
    matcher_checkpoint: Optional[Path] = None
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    max_len: int = DEFAULT_MAX_LEN
    seed: int = 17
    split_ratios: Tuple[int, int, int] = (3, 1, 1)
    serve_host: str = "127.0.0.1"
    serve_port: int = 8000
    db_url: Optional[str] = None
    train_overrides: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        # 비워 둔 경로는 data_dir / work_dir 기준 기본값으로
        work = self.work_dir or BASE_DIR / "data" / "processed" / self.run_id
        object.__setattr__(self, "work_dir", Path(work))
        defaults = {
            "vocab_path": Path(self.data_dir) / "vocab.txt",
            "filter_checkpoint": Path(work) / "filter.ckpt",
            "category_checkpoint": Path(work) / "category.ckpt",
            "matcher_checkpoint": Path(work) / "matcher.ckpt",
        }
        for name, default in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
        if self.max_len < 5:
            raise ConfigError(f"MAX_LEN 은 5 이상이어야 합니다: {self.max_len}")
        if not 0 < self.serve_port < 65536:
            raise ConfigError(f"포트 범위 오류: {self.serve_port}")

    @property
    def split_manifest(self) -> Path:
        return Path(self.work_dir) / "split_manifest.json"

    def require(self, *names: str) -> None:
        """명령 시작 시점에 필요한 파일들이 있는지 확인."""
        missing = [f"{n}={getattr(self, n)}" for n in names if not Path(getattr(self, n)).exists()]
        if missing:
            raise ConfigError(f"필요한 파일이 없습니다: {', '.join(missing)}")

    def with_overrides(
        self,
        seed: Optional[int] = None,
        run_id: Optional[str] = None,
        **pipeline_changes: Any,
    ) -> "AppConfig":
        changes: Dict[str, Any] = {"pipeline": self.pipeline.with_overrides(**pipeline_changes)}
        if seed is not None:
            changes["seed"] = seed
        if run_id is not None and run_id != self.run_id:
            # run 디렉터리와 그 아래 체크포인트 기본값을 새 run_id 로
            changes.update(
                run_id=run_id,
                work_dir=BASE_DIR / "data" / "processed" / run_id,
                filter_checkpoint=None,
                category_checkpoint=None,
                matcher_checkpoint=None,
            )
        return replace(self, **changes)


def load_app_config(path: Optional[Path] = None, env: Optional[Mapping[str, str]] = None) -> AppConfig:
    """
    KEY=VALUE 설정 파일(dotenv 형식) → AppConfig.
    경로: 인자 > APP_CONFIG 환경변수. 둘 다 없으면 기본값.
    APP_PORT 환경변수는 파일 값보다 우선.
    """
    load_env()
    env = os.environ if env is None else env

    path = path or env.get("APP_CONFIG")
    values: Dict[str, Optional[str]] = {}
    if path:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"설정 파일을 찾을 수 없습니다: {path}")
        values = dict(dotenv_values(path))
    if env.get("APP_PORT"):
        values["APP_PORT"] = env["APP_PORT"]

    def get(key: str) -> Optional[str]:
        raw = values.get(key)
        return raw.strip() if raw and raw.strip() else None

    def path_of(key: str) -> Optional[Path]:
        raw = get(key)
        return Path(raw) if raw else None

    kwargs: Dict[str, Any] = {}
    if get("DATA_DIR"):
        kwargs["data_dir"] = Path(get("DATA_DIR"))
    for key, name in (
        ("VOCAB_PATH", "vocab_path"),
        ("ABBREV_PATH", "abbrev_path"),
        ("LEMMA_PATH", "lemma_path"),
        ("WORK_DIR", "work_dir"),
        ("FILTER_CHECKPOINT", "filter_checkpoint"),
        ("CATEGORY_CHECKPOINT", "category_checkpoint"),
        ("MATCHER_CHECKPOINT", "matcher_checkpoint"),
    ):
        if path_of(key):
            kwargs[name] = path_of(key)
    if get("RUN_ID"):
        kwargs["run_id"] = get("RUN_ID")
    if get("SERVE_HOST"):
        kwargs["serve_host"] = get("SERVE_HOST")
    if get("DB_URL"):
        kwargs["db_url"] = get("DB_URL")
    for key, name, cast in (
        ("MAX_LEN", "max_len", int),
        ("SEED", "seed", int),
        ("APP_PORT", "serve_port", int),
    ):
        if get(key):
            kwargs[name] = _parse(key, get(key), cast)
    if get("SPLIT_RATIOS"):
        parts = [p for p in get("SPLIT_RATIOS").split(",") if p.strip()]
        ratios = tuple(_parse("SPLIT_RATIOS", p.strip(), int) for p in parts)
        if len(ratios) != 3:
            raise ConfigError(f"SPLIT_RATIOS 는 정수 3개여야 합니다: {get('SPLIT_RATIOS')}")
        kwargs["split_ratios"] = ratios

    kwargs["pipeline"] = PipelineConfig(
        candidate_count=_parse("CANDIDATE_COUNT", get("CANDIDATE_COUNT") or str(DEFAULT_CANDIDATES), int),
        fusion_weight=_parse("FUSION_WEIGHT", get("FUSION_WEIGHT") or str(DEFAULT_FUSION_WEIGHT), float),
        top_n=_parse("TOP_N", get("TOP_N") or str(DEFAULT_TOP_N), int),
        mode=get("PIPELINE_MODE") or HIERARCHICAL,
    )
    kwargs["train_overrides"] = {
        name: _parse(key, get(key), cast) for key, (name, cast) in _TRAIN_KEYS.items() if get(key)
    }
    return AppConfig(**kwargs)
