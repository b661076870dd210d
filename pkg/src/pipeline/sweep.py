# src/pipeline/sweep.py

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")  # 파일로만 저장

import matplotlib.pyplot as plt
import pandas as pd

from src.errors import ConfigError, MetricsError
from src.etl.corpus.corpus_loader import Mashup
from src.metrics.rank_metrics import QueryJudgment
from src.metrics.report import DEFAULT_NS, evaluate
from src.pipeline.recommender import ModelBundle, rank_fused, score_query

logger = logging.getLogger(__name__)

DEFAULT_HS = (20, 30, 45, 100, 200, 500)
DEFAULT_LAMBDAS = tuple(round(0.1 * i, 1) for i in range(11))


def run_sweep(
    bundle: ModelBundle,
    mashups: Sequence[Mashup],
    hs: Sequence[int] = DEFAULT_HS,
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    ns: Sequence[int] = DEFAULT_NS,
) -> pd.DataFrame:
    """
    (H, λ) 격자 평가. 한 H 안에서는 v_r/v_m 을 한 번만 계산하고 λ 만 바꿔 다시 줄 세운다.
    H > L 이거나 H < max(N) 인 칸은 경고 후 건너뛴다.
    """
    if not mashups:
        raise MetricsError("평가할 매시업이 없습니다.")
    for lam in lambdas:
        if not 0.0 <= lam <= 1.0:
            raise ConfigError(f"λ는 [0, 1] 범위여야 합니다: {lam}")

    num_apis = bundle.corpus.num_apis
    top_n = max(ns)
    rows: List[Dict[str, object]] = []

    for h in hs:
        if h > num_apis:
            logger.warning(f"H={h} > L={num_apis} → 건너뜀")
            continue
        if h < top_n:
            logger.warning(f"H={h} < N={top_n} → 건너뜀")
            continue

        scored = [score_query(m.description, h, bundle) for m in mashups]
        matcher_seconds = sum(s.matcher_seconds for s in scored)

        for lam in lambdas:
            judgments = [
                QueryJudgment(
                    ranked=tuple(item.api_id for item in rank_fused(s, lam, top_n, bundle.corpus)),
                    real=m.called_apis,
                )
                for s, m in zip(scored, mashups)
            ]
            report = evaluate(judgments, ns)
            row: Dict[str, object] = {"H": h, "lambda": lam, "queries": report.query_count}
            row.update(report.as_row())
            row["matcher_seconds"] = matcher_seconds
            row["matcher_ms_per_query"] = 1000.0 * matcher_seconds / len(mashups)
            rows.append(row)

        logger.info(f"H={h} 완료 (matcher {matcher_seconds:.3f}s, queries={len(mashups)})")

    return pd.DataFrame(rows)


def plot_sweep(df: pd.DataFrame, out_dir: Path, metric: str = "NDCG@5") -> List[Path]:
    """metric-vs-λ (H별 선) 그림과 H별 matcher 시간 그림."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if df.empty:
        logger.warning("sweep 결과가 비어 그림을 만들지 않습니다.")
        return []
    if metric not in df.columns:
        raise ConfigError(f"sweep 표에 없는 지표: {metric}")

    paths: List[Path] = []

    plt.figure(figsize=(7, 4.5))
    for h, group in df.groupby("H"):
        group = group.sort_values("lambda")
        plt.plot(group["lambda"], group[metric], marker="o", label=f"H={h}")
    plt.xlabel("lambda")
    plt.ylabel(metric)
    plt.legend()
    plt.tight_layout()
    metric_path = out_dir / f"sweep_{metric.replace('@', '_at_')}.png"
    plt.savefig(metric_path)
    plt.close()
    paths.append(metric_path)

    timing = df.groupby("H", as_index=False)["matcher_ms_per_query"].first()
    plt.figure(figsize=(7, 4.5))
    plt.plot(timing["H"], timing["matcher_ms_per_query"], marker="s")
    plt.xlabel("H (candidates)")
    plt.ylabel("matcher ms / query")
    plt.tight_layout()
    timing_path = out_dir / "sweep_matcher_time.png"
    plt.savefig(timing_path)
    plt.close()
    paths.append(timing_path)

    logger.info(f"sweep 그림 저장: {[str(p) for p in paths]}")
    return paths
