# src/train/pair_sampler.py

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.errors import ConfigError
from src.etl.corpus.corpus_loader import Mashup

logger = logging.getLogger(__name__)

Pair = Tuple[int, int, int]  # (mashup id, api id, label)


@dataclass(frozen=True)
class PairBatch:
    pairs: Tuple[Pair, ...]

    def __post_init__(self):
        keys = [(m, a) for m, a, _ in self.pairs]
        if len(set(keys)) != len(keys):
            raise ValueError("배치 안에 같은 (mashup, api) 쌍이 두 번 들어 있습니다.")
        if any(label not in (0, 1) for _, _, label in self.pairs):
            raise ValueError("label 은 0 또는 1 이어야 합니다.")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def labels(self) -> List[int]:
        return [label for _, _, label in self.pairs]


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    """(seed, epoch) 로 고정된 난수열. 같은 seed 면 재실행해도 같은 스트림."""
    return np.random.default_rng([seed, epoch])


def _negatives_for(
    mashup: Mashup, num_apis: int, count: int, rng: np.random.Generator
) -> List[int]:
    pool = np.array([a for a in range(num_apis) if a not in mashup.called_apis], dtype=np.int64)
    if pool.size == 0:
        logger.warning(f"매시업 {mashup.id}: 호출하지 않은 API 가 없어 negative 를 뽑지 못합니다.")
        return []
    if pool.size >= count:
        return [int(a) for a in rng.choice(pool, size=count, replace=False)]

    logger.warning(
        f"매시업 {mashup.id}: negative 후보 {pool.size}개 < 필요 {count}개 → 복원 추출 후 중복 제거"
    )
    drawn = rng.choice(pool, size=count, replace=True)
    return sorted({int(a) for a in drawn})


def sample_pairs(
    mashups: Sequence[Mashup],
    num_apis: int,
    negatives: int,
    seed: int,
    epoch: int,
    batch_size: int = 32,
) -> List[PairBatch]:
    """
    한 epoch 분량의 (mashup, api, label) 배치들.
    positive 쌍은 한 번씩, positive 하나당 호출하지 않은 API 에서 negative k개를 균등 추출.
    단, 호출하지 않은 API 가 k·|positive| 개보다 적으면 복원 추출 후 중복을 없애므로
    그 매시업의 negative 는 positive 하나당 k개보다 적어진다 (한 배치 안에 같은 쌍은 없다).
    negative 는 epoch 마다 새로 뽑고, 전체 쌍을 섞은 뒤 batch_size 로 자른다.
    """
    if negatives < 1:
        raise ConfigError(f"negatives(k)는 1 이상이어야 합니다: {negatives}")
    if batch_size < 1:
        raise ConfigError(f"batch_size 는 1 이상이어야 합니다: {batch_size}")

    rng = epoch_rng(seed, epoch)
    pairs: List[Pair] = []
    for m in mashups:
        positives = sorted(m.called_apis)
        pairs.extend((m.id, a, 1) for a in positives)
        negs = _negatives_for(m, num_apis, negatives * len(positives), rng)
        pairs.extend((m.id, a, 0) for a in negs)

    order = rng.permutation(len(pairs))
    shuffled = [pairs[i] for i in order]
    return [
        PairBatch(tuple(shuffled[i : i + batch_size]))
        for i in range(0, len(shuffled), batch_size)
    ]
