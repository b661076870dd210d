# src/pipeline/recommender.py

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.errors import CompatibilityError, ConfigError, QueryError
from src.etl.corpus.corpus_loader import Corpus
from src.model.checkpoint import load_checkpoint
from src.model.filter_head import (
    CandidateSet,
    FilterModel,
    ScoreVector,
    score_sequence,
    select_candidates,
)
from src.model.matcher_head import MatcherModel, score_candidates, score_ids
from src.model.tokenizer import Vocab, encode_single

logger = logging.getLogger(__name__)

HIERARCHICAL = "hierarchical"
FILTER_ONLY = "filter-only"
MATCHER_ON_CANDIDATES = "matcher-on-candidates"
MATCHER_FULL = "matcher-full"
PIPELINE_MODES: Tuple[str, ...] = (HIERARCHICAL, FILTER_ONLY, MATCHER_ON_CANDIDATES, MATCHER_FULL)

DEFAULT_CANDIDATES = 45
DEFAULT_FUSION_WEIGHT = 0.6
DEFAULT_TOP_N = 10
DEFAULT_MAX_LEN = 256


@dataclass(frozen=True)
class PipelineConfig:
    candidate_count: int = DEFAULT_CANDIDATES  # H
    fusion_weight: float = DEFAULT_FUSION_WEIGHT  # λ
    top_n: int = DEFAULT_TOP_N  # N
    mode: str = HIERARCHICAL

    def __post_init__(self):
        if self.mode not in PIPELINE_MODES:
            raise ConfigError(f"알 수 없는 pipeline mode: {self.mode} (가능: {PIPELINE_MODES})")
        if not 0.0 <= self.fusion_weight <= 1.0:
            raise ConfigError(f"λ는 [0, 1] 범위여야 합니다: {self.fusion_weight}")
        if self.top_n < 1:
            raise ConfigError(f"N은 1 이상이어야 합니다: {self.top_n}")
        if self.top_n > self.candidate_count:
            raise ConfigError(f"N({self.top_n})이 H({self.candidate_count})보다 큽니다.")

    def validate_for(self, num_apis: int) -> "PipelineConfig":
        if self.candidate_count > num_apis:
            raise ConfigError(f"H({self.candidate_count})가 저장소 크기 L({num_apis})보다 큽니다.")
        return self

    def with_overrides(self, **changes: Any) -> "PipelineConfig":
        clean = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **clean)


@dataclass(frozen=True)
class RecommendedApi:
    api_id: int
    api_name: str
    score: float  # 최종(fused) 점수 v
    filter_score: float  # v_r
    matcher_score: Optional[float]  # v_m (filter-only 모드에서는 None)


@dataclass(frozen=True)
class Recommendation:
    query: str
    mode: str
    items: Tuple[RecommendedApi, ...]
    candidates: Optional[CandidateSet] = None
    matcher_seconds: float = 0.0

    @property
    def api_ids(self) -> Tuple[int, ...]:
        return tuple(item.api_id for item in self.items)


@dataclass(frozen=True)
class ModelBundle:
    """추론에 필요한 것들 한 묶음. 만든 뒤에는 읽기만 한다."""

    corpus: Corpus
    vocab: Vocab
    filter_model: FilterModel
    matcher_model: Optional[MatcherModel] = None
    category_model: Optional[FilterModel] = None
    filter_max_len: int = DEFAULT_MAX_LEN
    matcher_max_len: int = DEFAULT_MAX_LEN
    info: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        check_compatibility(
            self.corpus, self.vocab, self.filter_model, self.matcher_model, self.category_model
        )


def check_compatibility(
    corpus: Corpus,
    vocab: Vocab,
    filter_model: FilterModel,
    matcher_model: Optional[MatcherModel] = None,
    category_model: Optional[FilterModel] = None,
) -> None:
    if filter_model.task != "filter-api":
        raise CompatibilityError(f"filter 자리에 {filter_model.task} 체크포인트가 왔습니다.")
    if filter_model.num_labels != corpus.num_apis:
        raise CompatibilityError(
            f"filter 라벨 수({filter_model.num_labels})와 API 저장소 크기({corpus.num_apis})가 다릅니다."
        )
    if category_model is not None:
        if category_model.task != "filter-category":
            raise CompatibilityError(f"category 자리에 {category_model.task} 체크포인트가 왔습니다.")
        if category_model.num_labels != corpus.num_categories:
            raise CompatibilityError(
                f"category 라벨 수({category_model.num_labels})와 코퍼스 카테고리 수"
                f"({corpus.num_categories})가 다릅니다."
            )
    for name, model in (("filter", filter_model), ("matcher", matcher_model), ("category", category_model)):
        if model is not None and model.config.vocab_size != len(vocab):
            raise CompatibilityError(
                f"{name} 인코더 vocab 크기({model.config.vocab_size})와 vocab({len(vocab)})가 다릅니다."
            )


def _max_len_from(meta: Dict[str, Any], max_positions: int) -> int:
    return int(meta.get("max_len", min(DEFAULT_MAX_LEN, max_positions)))


def load_bundle(
    corpus: Corpus,
    vocab: Vocab,
    filter_path: Path,
    matcher_path: Optional[Path] = None,
    category_path: Optional[Path] = None,
) -> ModelBundle:
    filter_ckpt = load_checkpoint(filter_path)
    filter_model = FilterModel.from_checkpoint(filter_ckpt)

    matcher_model = None
    matcher_meta: Dict[str, Any] = {}
    if matcher_path is not None:
        matcher_ckpt = load_checkpoint(matcher_path)
        matcher_model = MatcherModel.from_checkpoint(matcher_ckpt)
        matcher_meta = matcher_ckpt.metadata

    category_model = None
    if category_path is not None:
        category_model = FilterModel.from_checkpoint(load_checkpoint(category_path))

    info = {
        "filter_checkpoint": str(filter_path),
        "matcher_checkpoint": str(matcher_path) if matcher_path else None,
        "category_checkpoint": str(category_path) if category_path else None,
        "num_apis": corpus.num_apis,
        "num_categories": corpus.num_categories,
        "vocab_size": len(vocab),
    }
    logger.info(f"모델 로딩 완료: {info}")
    return ModelBundle(
        corpus=corpus,
        vocab=vocab,
        filter_model=filter_model,
        matcher_model=matcher_model,
        category_model=category_model,
        filter_max_len=_max_len_from(filter_ckpt.metadata, filter_model.config.max_positions),
        matcher_max_len=(
            _max_len_from(matcher_meta, matcher_model.config.max_positions)
            if matcher_model is not None
            else DEFAULT_MAX_LEN
        ),
        info=info,
    )


def fuse(v_r_restricted: ScoreVector, v_m: ScoreVector, fusion_weight: float) -> ScoreVector:
    """v = λ·v_m + (1−λ)·v_r, 후보 위치끼리."""
    if not 0.0 <= fusion_weight <= 1.0:
        raise ConfigError(f"λ는 [0, 1] 범위여야 합니다: {fusion_weight}")
    if len(v_r_restricted) != len(v_m):
        raise ValueError(f"v_r({len(v_r_restricted)})와 v_m({len(v_m)}) 길이가 다릅니다.")
    if v_r_restricted.space != "candidates" or v_m.space != "candidates":
        raise ValueError("fuse 입력은 둘 다 후보 공간이어야 합니다.")
    fused = fusion_weight * v_m.scores + (1.0 - fusion_weight) * v_r_restricted.scores
    return ScoreVector(np.clip(fused, 0.0, 1.0), "candidates")


def restrict(v_r: ScoreVector, cands: CandidateSet) -> ScoreVector:
    """v_r 를 후보 순서대로 잘라낸다. 재보정 없음."""
    return ScoreVector(v_r.scores[list(cands.api_ids)], "candidates")


def _top_positions(scores: np.ndarray, ids: np.ndarray, n: int) -> np.ndarray:
    # 점수 내림차순, 동점은 api id 오름차순
    return np.lexsort((ids, -scores))[:n]


def _normalize_query(query: str, corpus: Corpus) -> str:
    text = corpus.normalizer(query or "")
    if not text:
        raise QueryError("요구사항 설명이 비어 있습니다.")
    return text


def recommend(query: str, config: PipelineConfig, bundle: ModelBundle) -> Recommendation:
    """
    preprocess → encode_single → v_r → top-H 후보 → v_m → fuse(λ) → top-N.
    """
    corpus = bundle.corpus
    config.validate_for(corpus.num_apis)
    text = _normalize_query(query, corpus)

    seq = encode_single(text, bundle.vocab, bundle.filter_max_len)
    v_r = score_sequence(bundle.filter_model, seq)
    all_ids = np.arange(corpus.num_apis)

    if config.mode == FILTER_ONLY:
        # λ=0 을 저장소 전체에
        top = _top_positions(v_r.scores, all_ids, config.top_n)
        items = tuple(
            RecommendedApi(
                api_id=int(i),
                api_name=corpus.api_name(int(i)),
                score=float(v_r.scores[i]),
                filter_score=float(v_r.scores[i]),
                matcher_score=None,
            )
            for i in top
        )
        return Recommendation(query=query, mode=config.mode, items=items)

    if bundle.matcher_model is None:
        raise ConfigError(f"{config.mode} 모드에는 matcher 체크포인트가 필요합니다.")

    if config.mode == MATCHER_FULL:
        started = time.perf_counter()
        v_m_full = np.asarray(
            score_ids(text, all_ids.tolist(), corpus, bundle.vocab, bundle.matcher_model, bundle.matcher_max_len)
        )
        elapsed = time.perf_counter() - started
        top = _top_positions(v_m_full, all_ids, config.top_n)
        items = tuple(
            RecommendedApi(
                api_id=int(i),
                api_name=corpus.api_name(int(i)),
                score=float(v_m_full[i]),
                filter_score=float(v_r.scores[i]),
                matcher_score=float(v_m_full[i]),
            )
            for i in top
        )
        return Recommendation(query=query, mode=config.mode, items=items, matcher_seconds=elapsed)

    scored = match_candidates(text, v_r, config.candidate_count, bundle)
    weight = 1.0 if config.mode == MATCHER_ON_CANDIDATES else config.fusion_weight
    return Recommendation(
        query=query,
        mode=config.mode,
        items=rank_fused(scored, weight, config.top_n, corpus),
        candidates=scored.candidates,
        matcher_seconds=scored.matcher_seconds,
    )


@dataclass(frozen=True)
class ScoredCandidates:
    """한 질의의 후보와 두 점수 벡터. λ만 바꿔 가며 다시 순위를 낼 때 재사용."""

    candidates: CandidateSet
    v_r: ScoreVector  # 후보 공간으로 자른 filter 점수
    v_m: ScoreVector
    matcher_seconds: float


def match_candidates(text: str, v_r: ScoreVector, h: int, bundle: ModelBundle) -> ScoredCandidates:
    if bundle.matcher_model is None:
        raise ConfigError("matcher 체크포인트가 필요합니다.")
    cands = select_candidates(v_r, h)
    started = time.perf_counter()
    v_m = score_candidates(
        text, cands, bundle.corpus, bundle.vocab, bundle.matcher_model, bundle.matcher_max_len
    )
    elapsed = time.perf_counter() - started
    return ScoredCandidates(cands, restrict(v_r, cands), v_m, elapsed)


def score_query(query: str, h: int, bundle: ModelBundle) -> ScoredCandidates:
    """질의 → v_r → 후보 H개 → v_m (fusion 전 단계까지)."""
    text = _normalize_query(query, bundle.corpus)
    seq = encode_single(text, bundle.vocab, bundle.filter_max_len)
    v_r = score_sequence(bundle.filter_model, seq)
    return match_candidates(text, v_r, h, bundle)


def rank_fused(
    scored: ScoredCandidates, fusion_weight: float, top_n: int, corpus: Corpus
) -> Tuple[RecommendedApi, ...]:
    fused = fuse(scored.v_r, scored.v_m, fusion_weight)
    cand_ids = np.asarray(scored.candidates.api_ids)
    top = _top_positions(fused.scores, cand_ids, top_n)
    return tuple(
        RecommendedApi(
            api_id=int(cand_ids[j]),
            api_name=corpus.api_name(int(cand_ids[j])),
            score=float(fused.scores[j]),
            filter_score=float(scored.v_r.scores[j]),
            matcher_score=float(scored.v_m.scores[j]),
        )
        for j in top
    )


def predict_categories(query: str, bundle: ModelBundle, top_n: int) -> Tuple[Tuple[int, float], ...]:
    """category head 상위 top_n (category id, 점수)."""
    if bundle.category_model is None:
        raise ConfigError("category 체크포인트가 로딩되지 않았습니다.")
    text = _normalize_query(query, bundle.corpus)
    seq = encode_single(text, bundle.vocab, bundle.filter_max_len)
    scores = score_sequence(bundle.category_model, seq).scores
    ids = np.arange(scores.size)
    top = _top_positions(scores, ids, min(top_n, scores.size))
    return tuple((int(i), float(scores[i])) for i in top)


@dataclass(frozen=True)
class AblationVariant:
    name: str
    mode: str
    use_pooler: bool = True
    use_mean: bool = True
    matcher_mode: str = "cross"


# variant 이름 → (pipeline mode, filter branch 토글, matcher 모드)
ABLATION_VARIANTS: Dict[str, AblationVariant] = {
    v.name: v
    for v in (
        AblationVariant("full", HIERARCHICAL),
        AblationVariant("R", FILTER_ONLY),
        AblationVariant("M", MATCHER_ON_CANDIDATES),
        AblationVariant("RNP", FILTER_ONLY, use_pooler=False),
        AblationVariant("RNM", FILTER_ONLY, use_mean=False),
        AblationVariant("NP", HIERARCHICAL, use_pooler=False),
        AblationVariant("NM", HIERARCHICAL, use_mean=False),
        AblationVariant("MNA", MATCHER_ON_CANDIDATES, matcher_mode="concat"),
        AblationVariant("NA", HIERARCHICAL, matcher_mode="concat"),
    )
}


def get_variant(name: str) -> AblationVariant:
    try:
        return ABLATION_VARIANTS[name]
    except KeyError:
        raise ConfigError(
            f"알 수 없는 ablation variant: {name} (가능: {sorted(ABLATION_VARIANTS)})"
        ) from None
