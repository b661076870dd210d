# src/metrics/report.py

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import pandas as pd

from src.errors import MetricsError
from src.metrics.rank_metrics import QueryJudgment, ap_at, ndcg_at, precision_at, recall_at

logger = logging.getLogger(__name__)

DEFAULT_NS: Tuple[int, ...] = (1, 5, 10)
METRIC_NAMES: Tuple[str, ...] = ("precision", "recall", "ndcg", "map")
# 표 컬럼 머리말
COLUMN_LABELS: Dict[str, str] = {
    "precision": "Prec",
    "recall": "Rec",
    "ndcg": "NDCG",
    "map": "MAP",
}
FLOAT_FORMAT = "%.6f"


@dataclass(frozen=True)
class MetricsReport:
    values: Mapping[int, Mapping[str, float]]  # N → {metric: 평균값}
    query_count: int
    ns: Tuple[int, ...] = field(default=DEFAULT_NS)

    def get(self, metric: str, n: int) -> float:
        return float(self.values[n][metric])

    def as_row(self) -> Dict[str, float]:
        """{'Prec@1': .., 'Rec@1': .., 'NDCG@1': .., 'MAP@1': .., 'Prec@5': ..}"""
        row: Dict[str, float] = {}
        for n in self.ns:
            for metric in METRIC_NAMES:
                row[f"{COLUMN_LABELS[metric]}@{n}"] = self.get(metric, n)
        return row


def evaluate(
    judgments: Sequence[QueryJudgment],
    ns: Iterable[int] = DEFAULT_NS,
    strict_idcg: bool = False,
) -> MetricsReport:
    """질의별 지표의 산술 평균."""
    if not judgments:
        raise MetricsError("평가할 질의가 없습니다.")
    ns = tuple(int(n) for n in ns)
    if not ns or any(n < 1 for n in ns):
        raise MetricsError(f"N 목록이 잘못됐습니다: {ns}")

    count = len(judgments)
    values: Dict[int, Dict[str, float]] = {}
    for n in ns:
        sums = {m: 0.0 for m in METRIC_NAMES}
        for j in judgments:
            sums["precision"] += precision_at(j, n)
            sums["recall"] += recall_at(j, n)
            sums["ndcg"] += ndcg_at(j, n, strict_idcg=strict_idcg)
            sums["map"] += ap_at(j, n)
        values[n] = {m: s / count for m, s in sums.items()}

    return MetricsReport(values=values, query_count=count, ns=ns)


def report_table(reports: Mapping[str, MetricsReport]) -> pd.DataFrame:
    """모델(모드)별 한 행: model, queries, Prec@N, Rec@N, NDCG@N, MAP@N ..."""
    rows: List[Dict[str, object]] = []
    for name, report in reports.items():
        row: Dict[str, object] = {"model": name, "queries": report.query_count}
        row.update(report.as_row())
        rows.append(row)
    return pd.DataFrame(rows)


def write_table(df: pd.DataFrame, path: Path) -> Path:
    """탭 구분 텍스트로 저장 (소수점 6자리 고정 → 재실행 시 같은 바이트)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, sep="\t", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"표 저장: {path} (rows={len(df)})")
    return path
