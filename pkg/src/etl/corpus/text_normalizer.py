# src/etl/corpus/text_normalizer.py

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Set

from src.errors import ConfigError

logger = logging.getLogger(__name__)

# 단어 문자/공백이 아닌 글자 하나하나를 구두점으로 본다
PUNCT_RE = re.compile(r"([^\w\s])")
SPACE_RE = re.compile(r"\s+")


def load_token_table(path: Optional[Path]) -> Dict[str, str]:
    """
    'token<TAB>replacement' 형식 TSV를 dict로 읽는다.
    빈 줄, '#' 주석 줄은 건너뛴다. 파일이 없으면 빈 테이블.
    치환 결과에 자기 자신이 다시 나오거나 순환이 있으면 ConfigError.
    """
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        logger.warning(f"치환 테이블 파일 없음, 빈 테이블 사용: {path}")
        return {}

    table: Dict[str, str] = {}
    with path.open("r", encoding="utf-8-sig", newline="") as f:
        reader = csv.reader(f, delimiter="\t")
        for row in reader:
            if not row or not row[0].strip() or row[0].startswith("#"):
                continue
            if len(row) < 2:
                logger.warning(f"치환 테이블 형식 오류, 스킵: {path} {row}")
                continue
            table[row[0].strip().lower()] = row[1].strip()
    check_token_tables(table, source=str(path))
    return table


def _split_and_lower(raw: str) -> List[str]:
    s = raw.lower()
    s = PUNCT_RE.sub(r" \1 ", s)
    s = SPACE_RE.sub(" ", s).strip()
    return s.split(" ") if s else []


def check_token_tables(*tables: Mapping[str, str], source: str = "치환 테이블") -> None:
    """
    약어/표제어 테이블을 합친 치환 그래프(key → 치환 결과 안의 key)에
    자기 확장(img → 'img file')이나 순환(a → b, b → a)이 있으면 ConfigError.
    이런 테이블은 치환을 반복해도 고정점이 없어서 preprocess 멱등성이 깨진다.
    치환 결과가 key 자신과 같은 항목(a → 'A')은 아무것도 바꾸지 않으므로 허용한다.
    """
    edges: Dict[str, List[str]] = {}
    for table in tables:
        for key, rep in table.items():
            tokens = _split_and_lower(rep)
            if tokens == [key]:
                continue
            if key in tokens:
                raise ConfigError(f"{source}: '{key}' 의 치환 결과에 자기 자신이 포함됩니다: '{rep}'")
            edges.setdefault(key, []).extend(tokens)

    done: Set[str] = set()
    for start in edges:
        if start in done:
            continue
        # 반복 DFS. path 는 현재 경로 위의 key
        path: List[str] = [start]
        on_path: Set[str] = {start}
        stack = [iter(edges.get(start, ()))]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                node = path.pop()
                on_path.discard(node)
                done.add(node)
                continue
            if nxt not in edges or nxt in done:
                continue
            if nxt in on_path:
                cycle = " → ".join(path[path.index(nxt):] + [nxt])
                raise ConfigError(f"{source}: 치환 순환이 있습니다: {cycle}")
            path.append(nxt)
            on_path.add(nxt)
            stack.append(iter(edges[nxt]))


def _apply_table(tokens: List[str], table: Mapping[str, str]) -> List[str]:
    """
    토큰 단위 정확 일치 치환.
    치환 결과도 같은 규칙으로 다시 정규화하고, 더 바뀌지 않을 때까지 반복한다.
    (a→b, b→c 같은 체인도 한 번에 c로 수렴 → preprocess 멱등성 유지)
    """
    if not table:
        return tokens

    # 순환 없는 테이블에서 체인 길이는 테이블 크기를 넘지 않는다
    for _ in range(len(table) + 1):
        changed = False
        out: List[str] = []
        for tok in tokens:
            rep = table.get(tok)
            if rep is None or rep == tok:
                out.append(tok)
                continue
            out.extend(_split_and_lower(rep))
            changed = True
        tokens = out
        if not changed:
            break
    return tokens


def _normalize(raw: str, abbreviations: Mapping[str, str], lemmas: Mapping[str, str]) -> str:
    if not raw:
        return ""
    tokens = _split_and_lower(raw)
    # 표제어 결과가 다시 약어 키가 되는 경우까지 고정점으로 수렴시킨다
    for _ in range(len(abbreviations) + len(lemmas) + 1):
        before = tokens
        tokens = _apply_table(tokens, abbreviations)
        tokens = _apply_table(tokens, lemmas)
        if tokens == before:
            break
    return " ".join(tokens)


def preprocess(
    raw: str,
    abbreviations: Optional[Mapping[str, str]] = None,
    lemmas: Optional[Mapping[str, str]] = None,
) -> str:
    """
    설명 텍스트 정규화.
      - 소문자화
      - 구두점 앞뒤로 공백 하나
      - 연속 공백 정리
      - (옵션) 약어 치환 → (옵션) 표제어 치환

    예)
      'Maps   API!'             -> 'maps api !'
      'img' + {img: image}      -> 'image'
      ''                        -> ''

    테이블을 직접 넘기면 호출마다 순환 검사를 한다. 반복 호출은 TextNormalizer 를 쓴다.
    """
    abbreviations = abbreviations or {}
    lemmas = lemmas or {}
    check_token_tables(abbreviations, lemmas)
    return _normalize(raw, abbreviations, lemmas)


@dataclass(frozen=True)
class TextNormalizer:
    """코퍼스 로딩과 질의 처리에서 같은 테이블을 쓰도록 묶어 둔 것. 생성 시 한 번 검사한다."""

    abbreviations: Dict[str, str] = field(default_factory=dict)
    lemmas: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        check_token_tables(self.abbreviations, self.lemmas)

    @classmethod
    def from_files(
        cls, abbrev_path: Optional[Path] = None, lemma_path: Optional[Path] = None
    ) -> "TextNormalizer":
        return cls(
            abbreviations=load_token_table(abbrev_path),
            lemmas=load_token_table(lemma_path),
        )

    def __call__(self, raw: str) -> str:
        return _normalize(raw, self.abbreviations, self.lemmas)
