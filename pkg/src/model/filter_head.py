# src/model/filter_head.py

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Literal, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from src.errors import CheckpointError, ConfigError, EncoderError
from src.model.checkpoint import Checkpoint
from src.model.encoder import BertEncoder, EncoderConfig, EncoderOutput, mean_pool
from src.model.tokenizer import TokenizedSequence, to_tensors

Space = Literal["repository", "candidates", "categories"]
FilterTask = Literal["filter-api", "filter-category"]


@dataclass(frozen=True)
class ScoreVector:
    scores: np.ndarray  # float64, 전부 [0, 1]
    space: Space

    def __post_init__(self):
        arr = np.asarray(self.scores, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"ScoreVector는 1차원이어야 합니다: shape={arr.shape}")
        if arr.size and (np.isnan(arr).any() or arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("ScoreVector 값은 [0, 1] 범위여야 합니다.")
        arr.setflags(write=False)
        object.__setattr__(self, "scores", arr)

    def __len__(self) -> int:
        return int(self.scores.shape[0])


@dataclass(frozen=True)
class CandidateSet:
    api_ids: Tuple[int, ...]
    filter_scores: Tuple[float, ...]

    def __post_init__(self):
        if len(self.api_ids) != len(self.filter_scores):
            raise ValueError("api_ids와 filter_scores 길이가 다릅니다.")
        if len(set(self.api_ids)) != len(self.api_ids):
            raise ValueError("후보 API id가 중복됐습니다.")
        if any(a < b for a, b in zip(self.filter_scores, self.filter_scores[1:])):
            raise ValueError("filter_scores는 내림차순이어야 합니다.")

    def __len__(self) -> int:
        return len(self.api_ids)


class FusionHead(nn.Module):
    """
    dual-component feature fusion.
      U_p = W_p·pooler + b_p
      U_m = W_m·mean_pool(hidden) + b_m
      v   = sigmoid(W_f·[U_p; U_m] + b_f)
    ablation: 꺼진 branch 의 feature vector(U_p 또는 U_m)를 0으로 둔다.
    W_f 모양은 그대로라 체크포인트 레이아웃이 variant 와 무관하다.
    """

    def __init__(
        self,
        hidden_size: int,
        num_labels: int,
        use_pooler: bool = True,
        use_mean: bool = True,
    ):
        super().__init__()
        if not (use_pooler or use_mean):
            raise ConfigError("pooler/mean branch 중 하나는 켜져 있어야 합니다.")
        if num_labels <= 0:
            raise ConfigError(f"num_labels must be positive: {num_labels}")
        self.num_labels = num_labels
        self.use_pooler = use_pooler
        self.use_mean = use_mean
        self.pooler_proj = nn.Linear(hidden_size, num_labels)  # W_p, b_p
        self.mean_proj = nn.Linear(hidden_size, num_labels)  # W_m, b_m
        self.fusion = nn.Linear(2 * num_labels, num_labels)  # W_f, b_f

    def forward(self, pooler: torch.Tensor, mean: torch.Tensor) -> torch.Tensor:
        if pooler.shape[-1] != self.pooler_proj.in_features:
            raise EncoderError(
                f"head input dim {pooler.shape[-1]} != {self.pooler_proj.in_features}"
            )
        u_p = self.pooler_proj(pooler)
        u_m = self.mean_proj(mean)
        if not self.use_pooler:
            u_p = torch.zeros_like(u_p)
        if not self.use_mean:
            u_m = torch.zeros_like(u_m)
        return self.fusion(torch.cat([u_p, u_m], dim=-1))  # logits


class FilterModel(nn.Module):
    """인코더 + FusionHead. 파라미터 이름은 'encoder.*', 'filter.*'."""

    def __init__(
        self,
        config: EncoderConfig,
        num_labels: int,
        task: FilterTask = "filter-api",
        use_pooler: bool = True,
        use_mean: bool = True,
    ):
        super().__init__()
        self.task = task
        self.encoder = BertEncoder(config)
        self.filter = FusionHead(config.hidden_size, num_labels, use_pooler, use_mean)

    @property
    def config(self) -> EncoderConfig:
        return self.encoder.config

    @property
    def num_labels(self) -> int:
        return self.filter.num_labels

    def reset_parameters(self, seed: Optional[int] = None) -> None:
        # 인코더가 seed 로 전역 RNG 를 고정한 뒤 head 를 초기화하므로 seed 가 같으면 결과도 같다.
        # head 는 nn.Linear 기본 초기화(fan-in 기준). 인코더용 작은 σ 를 쓰면 W_p/W_m 과 W_f 가
        # 곱해지며 인코더 gradient 가 거의 0 이 된다.
        self.encoder.reset_parameters(seed)
        for lin in (self.filter.pooler_proj, self.filter.mean_proj, self.filter.fusion):
            lin.reset_parameters()

    def forward(
        self, ids: torch.Tensor, segment_ids: torch.Tensor, mask: torch.Tensor
    ) -> torch.Tensor:
        out = self.encoder(ids, segment_ids, mask)
        return self.filter(out.pooler, mean_pool(out.hidden, mask))

    def metadata(self) -> Dict[str, Any]:
        return {
            "kind": self.task,
            "encoder": self.config.to_dict(),
            "num_labels": self.num_labels,
            "use_pooler": self.filter.use_pooler,
            "use_mean": self.filter.use_mean,
        }

    def to_checkpoint(self, extra: Optional[Dict[str, Any]] = None) -> Checkpoint:
        meta = self.metadata()
        meta.update(extra or {})
        return Checkpoint.from_state_dict(self.state_dict(), meta)

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> "FilterModel":
        meta = checkpoint.metadata
        kind = meta.get("kind")
        if kind not in ("filter-api", "filter-category"):
            raise CheckpointError(f"filter 체크포인트가 아닙니다: kind={kind}")
        model = cls(
            EncoderConfig.from_dict(meta["encoder"]),
            num_labels=int(meta["num_labels"]),
            task=kind,
            use_pooler=bool(meta.get("use_pooler", True)),
            use_mean=bool(meta.get("use_mean", True)),
        )
        try:
            model.load_state_dict(checkpoint.state_dict(), strict=True)
        except RuntimeError as e:
            raise CheckpointError(f"filter 체크포인트 로딩 실패: {e}") from e
        model.eval()
        return model


def _head_scores(
    enc: EncoderOutput, mask: torch.Tensor, head: FusionHead, space: Space
) -> ScoreVector:
    if mask.dim() == 1:
        mask = mask[None]
    with torch.no_grad():
        logits = head(enc.pooler, mean_pool(enc.hidden, mask))
        scores = torch.sigmoid(logits)[0]
    return ScoreVector(scores.double().numpy(), space)


def relevance_scores(
    enc: EncoderOutput, mask: torch.Tensor, head: FusionHead
) -> ScoreVector:
    """저장소 전체(L개) API 관련도 v_r."""
    return _head_scores(enc, mask, head, "repository")


def category_scores(
    enc: EncoderOutput, mask: torch.Tensor, head: FusionHead
) -> ScoreVector:
    """같은 연산을 category 라벨 공간에서."""
    return _head_scores(enc, mask, head, "categories")


def score_sequence(model: FilterModel, seq: TokenizedSequence) -> ScoreVector:
    """encode_single 결과 하나 → v_r (또는 category 점수)."""
    ids, seg, mask = to_tensors([seq])
    with torch.no_grad():
        enc = model.encoder(ids, seg, mask)
    if model.task == "filter-category":
        return category_scores(enc, mask, model.filter)
    return relevance_scores(enc, mask, model.filter)


def rank_ids(scores: Sequence[float] | np.ndarray, ids: Sequence[int] | None = None) -> np.ndarray:
    """점수 내림차순, 동점이면 id 오름차순."""
    scores = np.asarray(scores, dtype=np.float64)
    ids_arr = np.arange(scores.size) if ids is None else np.asarray(ids)
    order = np.lexsort((ids_arr, -scores))
    return ids_arr[order]


def select_candidates(v_r: ScoreVector, h: int) -> CandidateSet:
    """v_r 상위 H개 API (내림차순, 동점은 id 오름차순)."""
    if v_r.space != "repository":
        raise ValueError(f"v_r은 repository 공간이어야 합니다: {v_r.space}")
    if not 1 <= h <= len(v_r):
        raise ConfigError(f"H({h})는 1 이상 L({len(v_r)}) 이하여야 합니다.")
    top = rank_ids(v_r.scores)[:h]
    return CandidateSet(
        api_ids=tuple(int(i) for i in top),
        filter_scores=tuple(float(v_r.scores[i]) for i in top),
    )
