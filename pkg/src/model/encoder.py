# src/model/encoder.py

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional

import torch
import torch.nn.functional as F
from torch import nn

from src.errors import ConfigError, EncoderError


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    num_layers: int = 2
    hidden_size: int = 128
    num_heads: int = 2
    intermediate_size: int = 512
    max_positions: int = 256
    type_vocab_size: int = 2
    dropout: float = 0.1
    layer_norm_eps: float = 1e-12
    init_std: float = 0.02

    def __post_init__(self):
        if self.vocab_size <= 0:
            raise ConfigError(f"vocab_size must be positive: {self.vocab_size}")
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1: {self.num_layers}")
        if self.hidden_size % self.num_heads != 0:
            raise ConfigError(
                f"hidden_size({self.hidden_size}) must be divisible by num_heads({self.num_heads})"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout out of range: {self.dropout}")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EncoderConfig":
        return cls(**data)


@dataclass
class EncoderOutput:
    hidden: torch.Tensor  # [B, T, F], 마스크 위치는 0
    pooler: torch.Tensor  # [B, F]
    attentions: Optional[List[torch.Tensor]] = None  # layer별 [B, heads, T, T]


class BertEmbeddings(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.word_embeddings = nn.Embedding(config.vocab_size, config.hidden_size)
        self.position_embeddings = nn.Embedding(config.max_positions, config.hidden_size)
        self.token_type_embeddings = nn.Embedding(config.type_vocab_size, config.hidden_size)
        self.LayerNorm = nn.LayerNorm(config.hidden_size, eps=config.layer_norm_eps)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, ids: torch.Tensor, segment_ids: torch.Tensor) -> torch.Tensor:
        seq_len = ids.shape[-1]
        if seq_len > self.config.max_positions:
            raise EncoderError(
                f"sequence length {seq_len} exceeds max_positions {self.config.max_positions}"
            )
        if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= self.config.vocab_size):
            raise EncoderError(f"token id out of range [0, {self.config.vocab_size})")

        positions = torch.arange(seq_len, device=ids.device).unsqueeze(0)
        x = (
            self.word_embeddings(ids)
            + self.position_embeddings(positions)
            + self.token_type_embeddings(segment_ids)
        )
        return self.dropout(self.LayerNorm(x))


class BertSelfAttention(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.num_heads = config.num_heads
        self.head_dim = config.head_dim
        self.query = nn.Linear(config.hidden_size, config.hidden_size)
        self.key = nn.Linear(config.hidden_size, config.hidden_size)
        self.value = nn.Linear(config.hidden_size, config.hidden_size)
        self.dropout = nn.Dropout(config.dropout)

    def _split_heads(self, x: torch.Tensor) -> torch.Tensor:
        b, t, _ = x.shape
        return x.view(b, t, self.num_heads, self.head_dim).transpose(1, 2)

    def forward(self, hidden: torch.Tensor, mask: torch.Tensor):
        q = self._split_heads(self.query(hidden))
        k = self._split_heads(self.key(hidden))
        v = self._split_heads(self.value(hidden))

        logits = torch.matmul(q, k.transpose(-1, -2)) / math.sqrt(self.head_dim)
        # mask: [B, T] → key 축에 -inf. 마스크된 key의 확률은 정확히 0
        key_mask = (mask == 0)[:, None, None, :]
        logits = logits.masked_fill(key_mask, float("-inf"))
        probs = torch.softmax(logits, dim=-1)

        context = torch.matmul(self.dropout(probs), v)
        b, _, t, _ = context.shape
        context = context.transpose(1, 2).reshape(b, t, self.num_heads * self.head_dim)
        return context, probs


class BertSelfOutput(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.dense = nn.Linear(config.hidden_size, config.hidden_size)
        self.LayerNorm = nn.LayerNorm(config.hidden_size, eps=config.layer_norm_eps)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, context: torch.Tensor, residual: torch.Tensor) -> torch.Tensor:
        return self.LayerNorm(self.dropout(self.dense(context)) + residual)


class BertAttention(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.self = BertSelfAttention(config)
        self.output = BertSelfOutput(config)

    def forward(self, hidden: torch.Tensor, mask: torch.Tensor):
        context, probs = self.self(hidden, mask)
        return self.output(context, hidden), probs


class BertIntermediate(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.dense = nn.Linear(config.hidden_size, config.intermediate_size)

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        return F.gelu(self.dense(hidden))


class BertOutput(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.dense = nn.Linear(config.intermediate_size, config.hidden_size)
        self.LayerNorm = nn.LayerNorm(config.hidden_size, eps=config.layer_norm_eps)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, inter: torch.Tensor, residual: torch.Tensor) -> torch.Tensor:
        return self.LayerNorm(self.dropout(self.dense(inter)) + residual)


class BertLayer(nn.Module):
    """attention block: self-attention + residual/LN → GELU FFN + residual/LN."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.attention = BertAttention(config)
        self.intermediate = BertIntermediate(config)
        self.output = BertOutput(config)

    def forward(self, hidden: torch.Tensor, mask: torch.Tensor):
        if mask.shape != hidden.shape[:2]:
            raise EncoderError(
                f"mask shape {tuple(mask.shape)} does not match hidden {tuple(hidden.shape[:2])}"
            )
        attn_out, probs = self.attention(hidden, mask)
        return self.output(self.intermediate(attn_out), attn_out), probs


class BertStack(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.layer = nn.ModuleList([BertLayer(config) for _ in range(config.num_layers)])


class BertPooler(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.dense = nn.Linear(config.hidden_size, config.hidden_size)

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.dense(hidden[:, 0]))


class BertEncoder(nn.Module):
    """
    BERT-Tiny 모양의 인코더. 파라미터 이름은 공개 BERT 체크포인트와 같게 맞춰 둠
    (embeddings.*, encoder.layer.N.*, pooler.*) → 가중치 import가 prefix 치환으로 끝남.
    """

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.embeddings = BertEmbeddings(config)
        self.encoder = BertStack(config)
        self.pooler = BertPooler(config)

    def reset_parameters(self, seed: Optional[int] = None) -> None:
        """truncated normal(σ=init_std) 가중치, 0 bias, LayerNorm 1/0."""
        if seed is not None:
            torch.manual_seed(seed)
        std = self.config.init_std
        for module in self.modules():
            if isinstance(module, (nn.Linear, nn.Embedding)):
                nn.init.trunc_normal_(module.weight, std=std, a=-2 * std, b=2 * std)
                if isinstance(module, nn.Linear) and module.bias is not None:
                    nn.init.zeros_(module.bias)
            elif isinstance(module, nn.LayerNorm):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)

    def embed(self, ids: torch.Tensor, segment_ids: torch.Tensor) -> torch.Tensor:
        return self.embeddings(ids, segment_ids)

    def attention_block(
        self, layer_index: int, hidden: torch.Tensor, mask: torch.Tensor
    ):
        return self.encoder.layer[layer_index](hidden, mask)

    def forward(
        self,
        ids: torch.Tensor,
        segment_ids: torch.Tensor,
        mask: torch.Tensor,
        output_attentions: bool = False,
    ) -> EncoderOutput:
        if ids.dim() == 1:
            ids, segment_ids, mask = ids[None], segment_ids[None], mask[None]

        hidden = self.embed(ids, segment_ids)
        attentions: List[torch.Tensor] = []
        for i in range(len(self.encoder.layer)):
            hidden, probs = self.attention_block(i, hidden, mask)
            if output_attentions:
                attentions.append(probs)

        pooler = self.pooler(hidden)
        # pad 위치 행은 0으로 고정 → 마스크된 토큰 id가 출력에 전혀 새어 나오지 않음
        hidden = hidden.masked_fill((mask == 0).unsqueeze(-1), 0.0)
        return EncoderOutput(
            hidden=hidden,
            pooler=pooler,
            attentions=attentions if output_attentions else None,
        )


def mean_pool(hidden: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """
    mask=1 인 행들의 산술 평균. hidden [B, T, F] 또는 [T, F].
    """
    squeeze = hidden.dim() == 2
    if squeeze:
        hidden, mask = hidden[None], mask[None]

    keep = (mask != 0).unsqueeze(-1)
    counts = keep.sum(dim=1).to(hidden.dtype)
    if bool((counts == 0).any()):
        raise EncoderError("mean_pool: every position is masked")
    pooled = hidden.masked_fill(~keep, 0.0).sum(dim=1) / counts
    return pooled[0] if squeeze else pooled
