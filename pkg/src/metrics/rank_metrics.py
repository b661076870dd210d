# src/metrics/rank_metrics.py

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import FrozenSet, List, Sequence, Tuple

from src.errors import MetricsError


@dataclass(frozen=True)
class QueryJudgment:
    ranked: Tuple[int, ...]  # 추천 결과 (상위부터)
    real: FrozenSet[int]  # 실제 호출된 API

    def __post_init__(self):
        object.__setattr__(self, "ranked", tuple(int(i) for i in self.ranked))
        object.__setattr__(self, "real", frozenset(int(i) for i in self.real))
        if len(set(self.ranked)) != len(self.ranked):
            raise MetricsError(f"ranked 에 중복 id가 있습니다: {self.ranked}")
        if not self.real:
            raise MetricsError("real API 집합이 비어 있습니다.")

    @classmethod
    def of(cls, ranked: Sequence[int], real: Sequence[int]) -> "QueryJudgment":
        return cls(ranked=tuple(ranked), real=frozenset(real))


def _check_n(n: int) -> None:
    if n < 1:
        raise MetricsError(f"N은 1 이상이어야 합니다: {n}")


def relevance(j: QueryJudgment, n: int) -> List[int]:
    """상위 N개 각 위치의 rel_i (1/0). 결과가 N개보다 짧으면 그만큼만."""
    _check_n(n)
    return [1 if a in j.real else 0 for a in j.ranked[:n]]


def precision_at(j: QueryJudgment, n: int) -> float:
    # 결과가 N개보다 적어도 분모는 N
    return sum(relevance(j, n)) / n


def recall_at(j: QueryJudgment, n: int) -> float:
    return sum(relevance(j, n)) / len(j.real)


def dcg(rels: Sequence[int]) -> float:
    return sum(rel / math.log2(i + 2) for i, rel in enumerate(rels))


def ndcg_at(j: QueryJudgment, n: int, strict_idcg: bool = False) -> float:
    """
    IDCG 상한은 기본 min(|real|, N).
    strict_idcg=True 이면 |real| 전체까지 더한다 (N=1 에서 NDCG ≠ Prec 가 될 수 있음).
    """
    rels = relevance(j, n)
    bound = len(j.real) if strict_idcg else min(len(j.real), n)
    idcg = dcg([1] * bound)
    return dcg(rels) / idcg


def ap_at(j: QueryJudgment, n: int) -> float:
    """적중 위치마다 Precision@i 를 더해 적중 수로 나눈다. 적중 0 이면 0."""
    rels = relevance(j, n)
    hits = 0
    total = 0.0
    for i, rel in enumerate(rels, start=1):
        if rel:
            hits += 1
            total += hits / i
    return total / hits if hits else 0.0
