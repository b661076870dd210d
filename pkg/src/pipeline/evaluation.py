# src/pipeline/evaluation.py

from __future__ import annotations

import logging
from typing import Callable, Dict, FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np
import torch

from src.errors import ConfigError, MetricsError
from src.etl.corpus.corpus_loader import Mashup
from src.metrics.rank_metrics import QueryJudgment
from src.metrics.report import DEFAULT_NS, MetricsReport, evaluate
from src.model.filter_head import FilterModel
from src.model.tokenizer import Vocab, encode_single, to_tensors
from src.pipeline.recommender import (
    FILTER_ONLY,
    HIERARCHICAL,
    MATCHER_ON_CANDIDATES,
    ModelBundle,
    PipelineConfig,
    recommend,
)

logger = logging.getLogger(__name__)

# 성능 비교표의 세 행
DEFAULT_MODES: Tuple[str, ...] = (FILTER_ONLY, MATCHER_ON_CANDIDATES, HIERARCHICAL)
SCORE_BATCH = 64


def pipeline_judgments(
    bundle: ModelBundle, mashups: Sequence[Mashup], config: PipelineConfig
) -> List[QueryJudgment]:
    judgments = []
    for m in mashups:
        rec = recommend(m.description, config, bundle)
        judgments.append(QueryJudgment(ranked=rec.api_ids, real=m.called_apis))
    return judgments


def evaluate_modes(
    bundle: ModelBundle,
    mashups: Sequence[Mashup],
    config: PipelineConfig,
    modes: Iterable[str] = DEFAULT_MODES,
    ns: Sequence[int] = DEFAULT_NS,
    strict_idcg: bool = False,
) -> Dict[str, MetricsReport]:
    """모드별로 매시업 설명을 질의로 넣고 호출 API 와 비교."""
    if not mashups:
        raise MetricsError("평가할 매시업이 없습니다 (split 이 비어 있음).")
    top_n = max(ns)
    if top_n > config.candidate_count:
        raise ConfigError(f"최대 N({top_n})이 H({config.candidate_count})보다 큽니다.")

    reports: Dict[str, MetricsReport] = {}
    for mode in modes:
        run_config = config.with_overrides(mode=mode, top_n=top_n)
        judgments = pipeline_judgments(bundle, mashups, run_config)
        reports[mode] = evaluate(judgments, ns, strict_idcg=strict_idcg)
        logger.info(
            f"[{mode}] queries={len(judgments)} "
            + " ".join(f"{k}={v:.4f}" for k, v in reports[mode].as_row().items())
        )
    return reports


def filter_rankings(
    model: FilterModel,
    mashups: Sequence[Mashup],
    vocab: Vocab,
    max_len: int,
    top_n: int,
) -> List[Tuple[int, ...]]:
    """filter head 점수로 라벨 전체를 줄 세운 상위 top_n (동점은 id 오름차순)."""
    was_training = model.training
    model.eval()
    rankings: List[Tuple[int, ...]] = []
    try:
        with torch.no_grad():
            for start in range(0, len(mashups), SCORE_BATCH):
                chunk = mashups[start : start + SCORE_BATCH]
                ids, seg, mask = to_tensors([encode_single(m.description, vocab, max_len) for m in chunk])
                scores = torch.sigmoid(model(ids, seg, mask)).double().numpy()
                label_ids = np.arange(scores.shape[1])
                for row in scores:
                    order = np.lexsort((label_ids, -row))[:top_n]
                    rankings.append(tuple(int(i) for i in order))
    finally:
        model.train(was_training)
    return rankings


def filter_judgments(
    model: FilterModel,
    mashups: Sequence[Mashup],
    vocab: Vocab,
    max_len: int,
    top_n: int,
    labels: Callable[[Mashup], FrozenSet[int]],
) -> List[QueryJudgment]:
    # 라벨이 빈 매시업(카테고리 없음 등)은 건너뛴다
    kept = [m for m in mashups if labels(m)]
    rankings = filter_rankings(model, kept, vocab, max_len, top_n)
    return [QueryJudgment(ranked=r, real=labels(m)) for r, m in zip(rankings, kept)]


def evaluate_categories(
    bundle: ModelBundle,
    mashups: Sequence[Mashup],
    ns: Sequence[int] = DEFAULT_NS,
    strict_idcg: bool = False,
) -> MetricsReport:
    """매시업 카테고리 판정: category head 순위를 실제 카테고리와 비교."""
    if bundle.category_model is None:
        raise ConfigError("category 체크포인트가 필요합니다.")
    judgments = filter_judgments(
        bundle.category_model,
        mashups,
        bundle.vocab,
        bundle.filter_max_len,
        max(ns),
        labels=lambda m: m.categories,
    )
    if not judgments:
        raise MetricsError("카테고리가 있는 매시업이 없습니다.")
    return evaluate(judgments, ns, strict_idcg=strict_idcg)
