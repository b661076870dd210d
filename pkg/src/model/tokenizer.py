# src/model/tokenizer.py

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import torch

from src.errors import TokenizerError

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)

CONTINUATION_PREFIX = "##"
MAX_CHARS_PER_WORD = 100


@dataclass(frozen=True)
class Vocab:
    id_to_token: Tuple[str, ...]
    prefix: str = CONTINUATION_PREFIX

    def __post_init__(self):
        token_to_id: Dict[str, int] = {}
        for i, tok in enumerate(self.id_to_token):
            if tok in token_to_id:
                raise TokenizerError(f"vocab에 중복 토큰이 있습니다: {tok!r} (line {i + 1})")
            token_to_id[tok] = i
        missing = [t for t in SPECIAL_TOKENS if t not in token_to_id]
        if missing:
            raise TokenizerError(f"vocab에 특수 토큰이 없습니다: {missing}")
        # frozen 이라 캐시는 object.__setattr__ 로 둔다
        object.__setattr__(self, "_token_to_id", token_to_id)

    @classmethod
    def from_file(cls, path: Path) -> "Vocab":
        """vocab.txt: 한 줄에 토큰 하나, 줄 번호 = id."""
        path = Path(path)
        if not path.exists():
            raise TokenizerError(f"vocab 파일을 찾을 수 없습니다: {path}")
        with path.open("r", encoding="utf-8") as f:
            tokens = [line.rstrip("\n").rstrip("\r") for line in f]
        # 파일 끝 빈 줄 정리
        while tokens and tokens[-1] == "":
            tokens.pop()
        return cls(id_to_token=tuple(tokens))

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            for tok in self.id_to_token:
                f.write(tok + "\n")
        return path

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id  # type: ignore[attr-defined]

    def id_of(self, token: str) -> int:
        return self._token_to_id[token]  # type: ignore[attr-defined]

    def get(self, token: str, default: int | None = None) -> int | None:
        return self._token_to_id.get(token, default)  # type: ignore[attr-defined]

    @property
    def pad_id(self) -> int:
        return self.id_of(PAD_TOKEN)

    @property
    def unk_id(self) -> int:
        return self.id_of(UNK_TOKEN)

    @property
    def cls_id(self) -> int:
        return self.id_of(CLS_TOKEN)

    @property
    def sep_id(self) -> int:
        return self.id_of(SEP_TOKEN)


@dataclass(frozen=True)
class TokenizedSequence:
    ids: Tuple[int, ...]
    segment_ids: Tuple[int, ...]
    attention_mask: Tuple[int, ...]
    n_t: int

    def __post_init__(self):
        n = len(self.ids)
        if len(self.segment_ids) != n or len(self.attention_mask) != n:
            raise TokenizerError("ids/segment_ids/attention_mask 길이가 다릅니다.")
        if not 0 < self.n_t <= n:
            raise TokenizerError(f"n_t 범위 오류: {self.n_t}")
        if any(m != 1 for m in self.attention_mask[: self.n_t]) or any(
            m != 0 for m in self.attention_mask[self.n_t :]
        ):
            raise TokenizerError("attention_mask는 앞 n_t 위치에서만 1이어야 합니다.")

    def __len__(self) -> int:
        return len(self.ids)


def wordpiece(word: str, vocab: Vocab) -> List[int]:
    """
    greedy longest-match-first 서브워드 분할.
    어느 위치에서든 매칭되는 조각이 없으면 단어 전체를 [UNK] 하나로.
    """
    if len(word) > MAX_CHARS_PER_WORD:
        return [vocab.unk_id]

    pieces: List[int] = []
    start = 0
    while start < len(word):
        end = len(word)
        cur = None
        while start < end:
            sub = word[start:end]
            if start > 0:
                sub = vocab.prefix + sub
            idx = vocab.get(sub)
            if idx is not None:
                cur = idx
                break
            end -= 1
        if cur is None:
            return [vocab.unk_id]
        pieces.append(cur)
        start = end
    return pieces


def tokenize(text: str, vocab: Vocab) -> List[int]:
    """정규화된 텍스트(공백 구분)를 서브워드 id 리스트로."""
    ids: List[int] = []
    for word in text.split():
        ids.extend(wordpiece(word, vocab))
    return ids


def _frame(
    parts: Sequence[List[int]], vocab: Vocab, max_len: int
) -> TokenizedSequence:
    ids = [vocab.cls_id]
    segments = [0]
    for seg, part in enumerate(parts):
        ids.extend(part)
        ids.append(vocab.sep_id)
        segments.extend([seg] * (len(part) + 1))

    n_t = len(ids)
    pad = max_len - n_t
    return TokenizedSequence(
        ids=tuple(ids + [vocab.pad_id] * pad),
        segment_ids=tuple(segments + [0] * pad),
        attention_mask=tuple([1] * n_t + [0] * pad),
        n_t=n_t,
    )


def encode_single(text: str, vocab: Vocab, max_len: int) -> TokenizedSequence:
    """[CLS] D [SEP] [PAD]* , D는 앞에서부터 max_len-2 조각까지만."""
    if max_len < 3:
        raise TokenizerError(f"max_len은 3 이상이어야 합니다: {max_len}")
    pieces = tokenize(text, vocab)
    if not pieces:
        raise TokenizerError("토큰화 결과가 비었습니다.")
    return _frame([pieces[: max_len - 2]], vocab, max_len)


def truncate_longest_first(a: List[int], b: List[int], budget: int) -> None:
    """둘 중 긴 쪽에서 한 조각씩 잘라낸다. 길이가 같으면 b 쪽."""
    while len(a) + len(b) > budget:
        if len(a) > len(b):
            a.pop()
        else:
            b.pop()


def encode_pair(
    text_a: str, text_b: str, vocab: Vocab, max_len: int
) -> TokenizedSequence:
    """[CLS] A [SEP] B [SEP] [PAD]* , segment: A쪽 0, B쪽 1, pad 0."""
    if max_len < 5:
        raise TokenizerError(f"max_len은 5 이상이어야 합니다: {max_len}")
    a = tokenize(text_a, vocab)
    b = tokenize(text_b, vocab)
    if not a or not b:
        raise TokenizerError("쌍 입력의 한쪽 토큰화 결과가 비었습니다.")
    truncate_longest_first(a, b, max_len - 3)
    return _frame([a, b], vocab, max_len)


def to_tensors(
    seqs: Sequence[TokenizedSequence],
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(ids, segment_ids, attention_mask) LongTensor [B, T]."""
    if not seqs:
        raise TokenizerError("빈 배치입니다.")
    lengths = {len(s) for s in seqs}
    if len(lengths) != 1:
        raise TokenizerError(f"배치 안 시퀀스 길이가 다릅니다: {sorted(lengths)}")
    ids = torch.tensor([s.ids for s in seqs], dtype=torch.long)
    seg = torch.tensor([s.segment_ids for s in seqs], dtype=torch.long)
    mask = torch.tensor([s.attention_mask for s in seqs], dtype=torch.long)
    return ids, seg, mask


def build_vocab(
    texts: Iterable[str],
    min_count: int = 1,
    extra_tokens: Iterable[str] = (),
) -> Vocab:
    """
    공개 vocab 파일 없이 돌릴 때 쓰는 단어 단위 vocab.
    특수 토큰 → extra_tokens → 빈도 내림차순(동률은 사전순) 단어.
    """
    counts: Counter = Counter()
    for text in texts:
        counts.update(text.split())

    tokens: List[str] = list(SPECIAL_TOKENS)
    seen = set(tokens)
    for tok in extra_tokens:
        if tok not in seen:
            tokens.append(tok)
            seen.add(tok)
    for tok, cnt in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
        if cnt >= min_count and tok not in seen:
            tokens.append(tok)
            seen.add(tok)
    return Vocab(id_to_token=tuple(tokens))
