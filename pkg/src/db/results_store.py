# src/db/results_store.py

from __future__ import annotations

import logging
from typing import Dict, List, Optional

import pandas as pd
from sqlalchemy import text
from sqlalchemy.engine import Engine

from src.db.connection import get_engine

logger = logging.getLogger(__name__)

# 표 모양이 evaluate / sweep 마다 달라서 (행 라벨, 지표, 값) 세로형으로 저장
DDL = """
CREATE TABLE IF NOT EXISTS eval_result (
    run_id   VARCHAR(64)  NOT NULL,
    kind     VARCHAR(16)  NOT NULL,
    row_key  VARCHAR(128) NOT NULL,
    metric   VARCHAR(64)  NOT NULL,
    value    DOUBLE PRECISION NOT NULL,
    PRIMARY KEY (run_id, kind, row_key, metric)
)
"""

KEY_COLUMNS = ("model", "H", "lambda")


def ensure_schema(engine: Engine) -> None:
    with engine.begin() as conn:
        conn.execute(text(DDL))


def _row_key(row: Dict[str, object], index: int) -> str:
    parts = [f"{c}={row[c]}" for c in KEY_COLUMNS if c in row]
    return ",".join(parts) or str(index)


def to_records(df: pd.DataFrame, run_id: str, kind: str) -> List[Dict[str, object]]:
    records: List[Dict[str, object]] = []
    # iterrows 는 int 열을 float 로 올려서 H=5.0 같은 키가 생긴다
    for index, row in enumerate(df.to_dict(orient="records")):
        key = _row_key(row, index)
        for col in df.columns:
            if col in KEY_COLUMNS:
                continue
            records.append(
                {
                    "run_id": run_id,
                    "kind": kind,
                    "row_key": key,
                    "metric": str(col),
                    "value": float(row[col]),
                }
            )
    return records


def upsert_results(
    df: pd.DataFrame, run_id: str, kind: str, engine: Optional[Engine] = None
) -> int:
    """
    같은 (run_id, kind) 는 지우고 다시 넣는다.
    반환값은 넣은 행 수.
    """
    engine = engine or get_engine(echo=False)
    ensure_schema(engine)
    records = to_records(df, run_id, kind)

    with engine.begin() as conn:
        conn.execute(
            text("DELETE FROM eval_result WHERE run_id = :run_id AND kind = :kind"),
            {"run_id": run_id, "kind": kind},
        )
        if records:
            conn.execute(
                text(
                    """
                    INSERT INTO eval_result (run_id, kind, row_key, metric, value)
                    VALUES (:run_id, :kind, :row_key, :metric, :value)
                    """
                ),
                records,
            )

    logger.info(f"eval_result 적재: run_id={run_id}, kind={kind}, rows={len(records)}")
    return len(records)


def fetch_results(run_id: str, kind: str, engine: Optional[Engine] = None) -> pd.DataFrame:
    engine = engine or get_engine(echo=False)
    ensure_schema(engine)
    with engine.connect() as conn:
        return pd.read_sql(
            text(
                """
                SELECT row_key, metric, value
                FROM eval_result
                WHERE run_id = :run_id AND kind = :kind
                ORDER BY row_key, metric
                """
            ),
            conn,
            params={"run_id": run_id, "kind": kind},
        )
