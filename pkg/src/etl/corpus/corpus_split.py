# src/etl/corpus/corpus_split.py

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.errors import SplitError
from src.etl.corpus.corpus_loader import Corpus, Mashup, WebApi

logger = logging.getLogger(__name__)

DEFAULT_RATIOS: Tuple[int, int, int] = (3, 1, 1)
SPLIT_NAMES = ("train", "validation", "test")


@dataclass(frozen=True)
class SplitCorpus:
    train: Tuple[Mashup, ...]
    validation: Tuple[Mashup, ...]
    test: Tuple[Mashup, ...]
    repository: Tuple[WebApi, ...]  # 모든 split이 같은 API 저장소를 공유

    def part(self, name: str) -> Tuple[Mashup, ...]:
        if name not in SPLIT_NAMES:
            raise SplitError(f"알 수 없는 split 이름: {name}")
        return getattr(self, name)


def split(
    corpus: Corpus, ratios: Sequence[int] = DEFAULT_RATIOS, seed: int = 17
) -> SplitCorpus:
    """
    매시업만 나눈다. API는 전부 저장소로 사용.
    seed 고정 셔플 후 validation/test = floor(total * r / sum(r)), 나머지는 train.
    """
    ratios = tuple(int(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise SplitError(f"ratios는 합이 양수인 정수 3개여야 합니다: {ratios}")

    mashups = corpus.mashups
    total = len(mashups)
    if total == 0:
        raise SplitError("나눌 매시업이 없습니다.")

    r_sum = sum(ratios)
    n_val = total * ratios[1] // r_sum
    n_test = total * ratios[2] // r_sum
    n_train = total - n_val - n_test

    if total >= r_sum:
        for name, r, n in zip(SPLIT_NAMES, ratios, (n_train, n_val, n_test)):
            if r > 0 and n == 0:
                raise SplitError(f"{name} split에 매시업이 하나도 배정되지 않았습니다.")

    rng = np.random.default_rng(seed)
    order = rng.permutation(total)

    train = tuple(mashups[i] for i in order[:n_train])
    validation = tuple(mashups[i] for i in order[n_train : n_train + n_val])
    test = tuple(mashups[i] for i in order[n_train + n_val :])

    logger.info(
        f"split 완료 (seed={seed}, ratios={ratios}): "
        f"train={len(train)}, validation={len(validation)}, test={len(test)}"
    )
    return SplitCorpus(
        train=train, validation=validation, test=test, repository=corpus.apis
    )


def write_split_manifest(
    split_corpus: SplitCorpus, path: Path, seed: int, ratios: Sequence[int]
) -> Path:
    """split별 매시업 id 목록을 JSON으로 남긴다 (재현용)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload: Dict[str, object] = {
        "seed": seed,
        "ratios": list(ratios),
        "num_apis": len(split_corpus.repository),
    }
    for name in SPLIT_NAMES:
        payload[name] = [m.id for m in split_corpus.part(name)]

    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)
    return path


def load_split_manifest(corpus: Corpus, path: Path) -> SplitCorpus:
    path = Path(path)
    if not path.exists():
        raise SplitError(f"split manifest를 찾을 수 없습니다: {path}")

    with path.open("r", encoding="utf-8") as f:
        payload = json.load(f)

    if payload.get("num_apis") != corpus.num_apis:
        raise SplitError(
            f"manifest의 API 수({payload.get('num_apis')})와 코퍼스({corpus.num_apis})가 다릅니다."
        )

    parts: Dict[str, Tuple[Mashup, ...]] = {}
    seen: set = set()
    for name in SPLIT_NAMES:
        ids: List[int] = payload.get(name, [])
        for mid in ids:
            if not 0 <= mid < len(corpus.mashups) or mid in seen:
                raise SplitError(f"manifest의 매시업 id가 잘못됐습니다: {name}/{mid}")
            seen.add(mid)
        parts[name] = tuple(corpus.mashups[i] for i in ids)

    return SplitCorpus(repository=corpus.apis, **parts)
