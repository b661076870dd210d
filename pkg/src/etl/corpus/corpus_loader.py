# src/etl/corpus/corpus_loader.py

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterator, List, Optional, Tuple

from src.errors import CorpusError, EmptyRepositoryError, ReferentialIntegrityError
from src.etl.corpus.text_normalizer import TextNormalizer

logger = logging.getLogger(__name__)

APIS_FILE = "apis.jsonl"
MASHUPS_FILE = "mashups.jsonl"
ABBREV_FILE = "abbrev.tsv"
LEMMA_FILE = "lemma.tsv"


@dataclass(frozen=True)
class WebApi:
    id: int
    name: str
    description: str  # 정규화된 설명
    categories: FrozenSet[int]


@dataclass(frozen=True)
class Mashup:
    id: int
    name: str
    description: str  # 질의 시점에는 요구사항 설명으로 쓰인다
    categories: FrozenSet[int]
    called_apis: FrozenSet[int]


@dataclass(frozen=True)
class Corpus:
    apis: Tuple[WebApi, ...]
    mashups: Tuple[Mashup, ...]
    categories: Tuple[str, ...]  # index = category id
    normalizer: TextNormalizer = field(default_factory=TextNormalizer)

    def __post_init__(self):
        if not self.apis:
            raise EmptyRepositoryError("API 저장소가 비어 있습니다.")

    @property
    def num_apis(self) -> int:
        return len(self.apis)

    @property
    def num_categories(self) -> int:
        return len(self.categories)

    def api_name(self, api_id: int) -> str:
        return self.apis[api_id].name

    def api_description(self, api_id: int) -> str:
        if not 0 <= api_id < len(self.apis):
            raise CorpusError(f"존재하지 않는 API id: {api_id}")
        return self.apis[api_id].description


def _iter_records(path: Path) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """
    한 줄에 JSON 레코드 하나. 빈 줄은 건너뛴다.
    형식이 깨진 줄은 줄 번호와 함께 CorpusError.
    """
    with path.open("r", encoding="utf-8-sig") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"JSON 파싱 실패 ({e.msg})", path, line_no) from e
            if not isinstance(record, dict):
                raise CorpusError("레코드가 object가 아닙니다.", path, line_no)
            yield line_no, record


def _require_text(record: Dict[str, Any], key: str, path: Path, line_no: int) -> str:
    value = record.get(key)
    if not isinstance(value, str) or not value.strip():
        raise CorpusError(f"'{key}' 필드가 없거나 비어 있습니다.", path, line_no)
    return value.strip()


def _require_text_list(
    record: Dict[str, Any], key: str, path: Path, line_no: int
) -> List[str]:
    value = record.get(key, [])
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise CorpusError(f"'{key}' 필드는 문자열 리스트여야 합니다.", path, line_no)
    return [v.strip() for v in value if v.strip()]


class _CategoryTable:
    """등장 순서대로 category id를 부여한다 (API 파일 → 매시업 파일)."""

    def __init__(self):
        self.ids: Dict[str, int] = {}

    def lookup(self, names: List[str]) -> FrozenSet[int]:
        out = set()
        for name in names:
            if name not in self.ids:
                self.ids[name] = len(self.ids)
            out.add(self.ids[name])
        return frozenset(out)

    def names(self) -> Tuple[str, ...]:
        return tuple(sorted(self.ids, key=self.ids.__getitem__))


def load_corpus(path: Path, normalizer: Optional[TextNormalizer] = None) -> Corpus:
    """
    <path>/apis.jsonl, <path>/mashups.jsonl 을 읽어 Corpus를 만든다.
    - id는 파일 순서대로 0부터 부여
    - 매시업은 API를 이름으로 참조 → 로딩 시 id로 변환
    - 검증 실패 레코드는 스킵하지 않고 바로 에러 (라벨 공간이 틀어지면 안 됨)

    normalizer가 없으면 <path>/abbrev.tsv, <path>/lemma.tsv 가 있을 때 사용한다.
    """
    path = Path(path)
    apis_path = path / APIS_FILE
    mashups_path = path / MASHUPS_FILE

    for p in (apis_path, mashups_path):
        if not p.exists():
            raise CorpusError(f"레코드 파일을 찾을 수 없습니다: {p}", p)

    if normalizer is None:
        normalizer = TextNormalizer.from_files(
            abbrev_path=path / ABBREV_FILE if (path / ABBREV_FILE).exists() else None,
            lemma_path=path / LEMMA_FILE if (path / LEMMA_FILE).exists() else None,
        )

    logger.info(f"코퍼스 로딩: {path}")

    categories = _CategoryTable()
    apis: List[WebApi] = []
    api_ids: Dict[str, int] = {}

    for line_no, record in _iter_records(apis_path):
        name = _require_text(record, "name", apis_path, line_no)
        raw_desc = _require_text(record, "description", apis_path, line_no)
        description = normalizer(raw_desc)
        if not description:
            raise CorpusError("정규화 후 description이 비었습니다.", apis_path, line_no)
        if name in api_ids:
            raise CorpusError(f"API 이름 중복: {name}", apis_path, line_no)

        cat_ids = categories.lookup(
            _require_text_list(record, "categories", apis_path, line_no)
        )
        api_ids[name] = len(apis)
        apis.append(
            WebApi(
                id=len(apis),
                name=name,
                description=description,
                categories=cat_ids,
            )
        )

    if not apis:
        raise EmptyRepositoryError("API 저장소가 비어 있습니다.", apis_path)

    mashups: List[Mashup] = []
    for line_no, record in _iter_records(mashups_path):
        name = _require_text(record, "name", mashups_path, line_no)
        raw_desc = _require_text(record, "description", mashups_path, line_no)
        description = normalizer(raw_desc)
        if not description:
            raise CorpusError(
                "정규화 후 description이 비었습니다.", mashups_path, line_no
            )

        called_names = _require_text_list(record, "called_apis", mashups_path, line_no)
        if not called_names:
            raise CorpusError("called_apis가 비어 있습니다.", mashups_path, line_no)

        called: set = set()
        for api_name in called_names:
            if api_name not in api_ids:
                raise ReferentialIntegrityError(
                    f"알 수 없는 API 참조: {api_name}", mashups_path, line_no
                )
            called.add(api_ids[api_name])

        cat_ids = categories.lookup(
            _require_text_list(record, "categories", mashups_path, line_no)
        )
        mashups.append(
            Mashup(
                id=len(mashups),
                name=name,
                description=description,
                categories=cat_ids,
                called_apis=frozenset(called),
            )
        )

    corpus = Corpus(
        apis=tuple(apis),
        mashups=tuple(mashups),
        categories=categories.names(),
        normalizer=normalizer,
    )
    logger.info(
        f"코퍼스 로딩 완료: apis={corpus.num_apis}, mashups={len(corpus.mashups)}, "
        f"categories={corpus.num_categories}"
    )
    return corpus


def corpus_statistics(corpus: Corpus) -> Dict[str, float]:
    """
    데이터셋 통계표 항목들.
    words_per_* 는 정규화된 설명의 공백 토큰 수 평균.
    """
    n_m = len(corpus.mashups)
    n_a = corpus.num_apis

    def _mean(values: List[int]) -> float:
        return sum(values) / len(values) if values else 0.0

    total_calls = sum(len(m.called_apis) for m in corpus.mashups)
    return {
        "apis": n_a,
        "mashups": n_m,
        "categories": corpus.num_categories,
        "apis_per_mashup": _mean([len(m.called_apis) for m in corpus.mashups]),
        "categories_per_mashup": _mean([len(m.categories) for m in corpus.mashups]),
        "categories_per_api": _mean([len(a.categories) for a in corpus.apis]),
        "words_per_mashup": _mean([len(m.description.split()) for m in corpus.mashups]),
        "words_per_api": _mean([len(a.description.split()) for a in corpus.apis]),
        "positive_pair_ratio": total_calls / (n_m * n_a) if n_m else 0.0,
    }
