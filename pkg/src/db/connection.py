# src/db/connection.py
import os
from pathlib import Path

from dotenv import load_dotenv
from sqlalchemy import create_engine
from sqlalchemy.engine import Engine


def load_env():
    """
    프로젝트 루트에 있는 .env를 로드한다.
    (src/ 안에서 실행해도 잘 찾도록 상대 경로 처리)
    """
    # 현재 파일: .../src/db/connection.py
    current_file = Path(__file__).resolve()
    project_root = current_file.parents[2]
    env_path = project_root / ".env"

    if env_path.exists():
        # 이미 셸에서 지정한 값(APP_CONFIG, APP_PORT 등)이 우선
        load_dotenv(env_path, override=False)


def default_db_url() -> str:
    project_root = Path(__file__).resolve().parents[2]
    return f"sqlite:///{project_root / 'data' / 'results.db'}"


def get_engine(echo: bool = False, url: str | None = None) -> Engine:
    """
    SQLAlchemy Engine 생성.
    평가/스윕 결과 저장용. DB_URL이 없으면 data/results.db (SQLite)를 쓴다.
    """
    load_env()

    url = url or os.getenv("DB_URL") or default_db_url()

    engine = create_engine(
        url,
        echo=echo,       # True로 두면 실행되는 SQL 출력
        future=True,     # SQLAlchemy 2.x 스타일
    )
    return engine
