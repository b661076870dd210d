# src/model/matcher_head.py

from __future__ import annotations

import logging
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import torch
from torch import nn

from src.errors import CheckpointError, ConfigError, CorpusError, EncoderError
from src.etl.corpus.corpus_loader import Corpus
from src.model.checkpoint import Checkpoint
from src.model.encoder import BertEncoder, EncoderConfig
from src.model.filter_head import CandidateSet, ScoreVector
from src.model.tokenizer import Vocab, encode_pair, encode_single, to_tensors

logger = logging.getLogger(__name__)

MatchMode = Literal["cross", "concat"]
MATCH_MODES: Tuple[str, ...] = ("cross", "concat")


class MatchHead(nn.Module):
    """
    cross  : r = sigmoid(W_t·pooler(encode_pair(m, a)) + b_t)
    concat : r = sigmoid(W_c·[pooler(m); pooler(a)] + b_c)   (설명을 따로 인코딩)
    두 레이어는 모드와 상관없이 항상 들고 있다.
    """

    def __init__(self, hidden_size: int, mode: MatchMode = "cross"):
        super().__init__()
        if mode not in MATCH_MODES:
            raise ConfigError(f"알 수 없는 matcher mode: {mode}")
        self.mode = mode
        self.task = nn.Linear(hidden_size, 1)
        self.concat_task = nn.Linear(2 * hidden_size, 1)

    def forward(self, pooler: torch.Tensor, api_pooler: Optional[torch.Tensor] = None) -> torch.Tensor:
        if self.mode == "cross":
            if pooler.shape[-1] != self.task.in_features:
                raise EncoderError(f"head input dim {pooler.shape[-1]} != {self.task.in_features}")
            return self.task(pooler).squeeze(-1)
        if api_pooler is None:
            raise EncoderError("concat 모드에는 API 쪽 pooler 가 필요합니다.")
        return self.concat_task(torch.cat([pooler, api_pooler], dim=-1)).squeeze(-1)


class MatcherModel(nn.Module):
    """인코더 + MatchHead. 파라미터 이름은 'encoder.*', 'matcher.*'."""

    def __init__(self, config: EncoderConfig, mode: MatchMode = "cross"):
        super().__init__()
        self.encoder = BertEncoder(config)
        self.matcher = MatchHead(config.hidden_size, mode)

    @property
    def config(self) -> EncoderConfig:
        return self.encoder.config

    @property
    def mode(self) -> str:
        return self.matcher.mode

    def reset_parameters(self, seed: Optional[int] = None) -> None:
        self.encoder.reset_parameters(seed)
        # head 는 filter 와 같이 nn.Linear 기본 초기화
        for lin in (self.matcher.task, self.matcher.concat_task):
            lin.reset_parameters()

    def pair_logits(
        self,
        mashup_texts: Sequence[str],
        api_texts: Sequence[str],
        vocab: Vocab,
        max_len: int,
    ) -> torch.Tensor:
        """(매시업, API) 설명 쌍 배치 → logits [B]. grad 는 호출 측에서 관리."""
        if len(mashup_texts) != len(api_texts):
            raise EncoderError("mashup_texts / api_texts 길이가 다릅니다.")
        if self.mode == "cross":
            seqs = [encode_pair(m, a, vocab, max_len) for m, a in zip(mashup_texts, api_texts)]
            ids, seg, mask = to_tensors(seqs)
            return self.matcher(self.encoder(ids, seg, mask).pooler)

        m_ids, m_seg, m_mask = to_tensors([encode_single(m, vocab, max_len) for m in mashup_texts])
        a_ids, a_seg, a_mask = to_tensors([encode_single(a, vocab, max_len) for a in api_texts])
        return self.matcher(
            self.encoder(m_ids, m_seg, m_mask).pooler,
            self.encoder(a_ids, a_seg, a_mask).pooler,
        )

    def metadata(self) -> Dict[str, Any]:
        return {"kind": "matcher", "encoder": self.config.to_dict(), "matcher_mode": self.mode}

    def to_checkpoint(self, extra: Optional[Dict[str, Any]] = None) -> Checkpoint:
        meta = self.metadata()
        meta.update(extra or {})
        return Checkpoint.from_state_dict(self.state_dict(), meta)

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> "MatcherModel":
        meta = checkpoint.metadata
        if meta.get("kind") != "matcher":
            raise CheckpointError(f"matcher 체크포인트가 아닙니다: kind={meta.get('kind')}")
        model = cls(
            EncoderConfig.from_dict(meta["encoder"]),
            mode=meta.get("matcher_mode", "cross"),
        )
        try:
            model.load_state_dict(checkpoint.state_dict(), strict=True)
        except RuntimeError as e:
            raise CheckpointError(f"matcher 체크포인트 로딩 실패: {e}") from e
        model.eval()
        return model


def similarity(
    mashup_text: str, api_text: str, vocab: Vocab, model: MatcherModel, max_len: int
) -> float:
    """매시업 설명과 API 설명 하나의 유사도 r ∈ (0, 1)."""
    with torch.no_grad():
        logit = model.pair_logits([mashup_text], [api_text], vocab, max_len)
    return float(torch.sigmoid(logit)[0].double())


def score_ids(
    query_text: str,
    api_ids: Sequence[int],
    corpus: Corpus,
    vocab: Vocab,
    model: MatcherModel,
    max_len: int,
) -> List[float]:
    # 후보 하나당 forward 한 번: 결과가 similarity() 와 비트 단위로 같다
    texts = []
    for api_id in api_ids:
        try:
            texts.append(corpus.api_description(api_id))
        except CorpusError as e:
            raise CorpusError(f"후보 API 설명을 찾을 수 없습니다: {api_id}") from e
    return [similarity(query_text, text, vocab, model, max_len) for text in texts]


def score_candidates(
    query_text: str,
    cands: CandidateSet,
    corpus: Corpus,
    vocab: Vocab,
    model: MatcherModel,
    max_len: int,
) -> ScoreVector:
    """v_m: 후보 순서 그대로 v_m[j] = similarity(query, desc(cands.api_ids[j]))."""
    scores = score_ids(query_text, cands.api_ids, corpus, vocab, model, max_len)
    return ScoreVector(scores, "candidates")
