# src/model/checkpoint.py

from __future__ import annotations

import json
import logging
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping

import numpy as np
import torch

from src.errors import CheckpointError

logger = logging.getLogger(__name__)

# 파일 구조:
#   [8 bytes] little-endian uint64 = header 길이 N
#   [N bytes] UTF-8 JSON header  {name: {"shape": [...], "offset": o, "nbytes": n}}
#   [...]     float32 little-endian row-major 텐서 데이터
# 메타데이터는 <path>.meta.json sidecar
HEADER_LEN = struct.Struct("<Q")
DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    tensors: "OrderedDict[str, np.ndarray]"
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_state_dict(
        cls, state: Mapping[str, torch.Tensor], metadata: Dict[str, Any]
    ) -> "Checkpoint":
        tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, tensor in state.items():
            tensors[name] = tensor.detach().cpu().to(torch.float32).numpy().copy()
        return cls(tensors=tensors, metadata=dict(metadata))

    def state_dict(self) -> "OrderedDict[str, torch.Tensor]":
        return OrderedDict(
            (name, torch.from_numpy(np.array(arr, dtype=np.float32)))
            for name, arr in self.tensors.items()
        )


def meta_path_for(path: Path) -> Path:
    return Path(str(path) + ".meta.json")


def _atomic_write_bytes(path: Path, chunks) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as f:
        for chunk in chunks:
            f.write(chunk)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> Path:
    """write-temp → rename. 같은 입력이면 바이트 단위로 같은 파일."""
    path = Path(path)

    header: Dict[str, Dict[str, Any]] = {}
    blobs = []
    offset = 0
    for name, arr in checkpoint.tensors.items():
        data = np.ascontiguousarray(arr, dtype=DTYPE).tobytes(order="C")
        header[name] = {"shape": list(arr.shape), "offset": offset, "nbytes": len(data)}
        blobs.append(data)
        offset += len(data)

    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    _atomic_write_bytes(path, [HEADER_LEN.pack(len(header_bytes)), header_bytes, *blobs])

    meta_bytes = (
        json.dumps(checkpoint.metadata, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    ).encode("utf-8")
    _atomic_write_bytes(meta_path_for(path), [meta_bytes])

    logger.info(f"체크포인트 저장: {path} (tensors={len(header)})")
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"체크포인트 파일을 찾을 수 없습니다: {path}")

    raw = path.read_bytes()
    if len(raw) < HEADER_LEN.size:
        raise CheckpointError(f"체크포인트가 잘렸습니다: {path}")
    (n,) = HEADER_LEN.unpack_from(raw, 0)
    body_start = HEADER_LEN.size + n
    try:
        header = json.loads(raw[HEADER_LEN.size : body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"체크포인트 header 파싱 실패: {path}") from e

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, info in header.items():
        start = body_start + int(info["offset"])
        end = start + int(info["nbytes"])
        if end > len(raw):
            raise CheckpointError(f"텐서 데이터 범위 초과: {name}")
        arr = np.frombuffer(raw[start:end], dtype=DTYPE)
        shape = tuple(info["shape"])
        if int(np.prod(shape, dtype=np.int64)) != arr.size:
            raise CheckpointError(f"텐서 shape 불일치: {name} {shape}")
        tensors[name] = arr.reshape(shape).astype(np.float32)

    metadata: Dict[str, Any] = {}
    mp = meta_path_for(path)
    if mp.exists():
        with mp.open("r", encoding="utf-8") as f:
            metadata = json.load(f)
    else:
        logger.warning(f"메타데이터 sidecar 없음: {mp}")

    return Checkpoint(tensors=tensors, metadata=metadata)


# 공개 BERT 체크포인트 이름 → 이 프로젝트 인코더 이름
_LEGACY_SUFFIX = {".gamma": ".weight", ".beta": ".bias"}
_SKIP_KEYS = ("position_ids",)


def import_bert_weights(
    source: Mapping[str, torch.Tensor], target_prefix: str = "encoder."
) -> "OrderedDict[str, torch.Tensor]":
    """
    HuggingFace 형식 BERT-Tiny state dict (bert.embeddings.*, bert.encoder.layer.N.*,
    bert.pooler.*)를 FilterModel/MatcherModel 의 'encoder.' 하위 이름으로 옮긴다.
    MLM/NSP 헤드(cls.*)는 버린다.
    """
    out: "OrderedDict[str, torch.Tensor]" = OrderedDict()
    for name, tensor in source.items():
        if name.startswith("cls.") or any(name.endswith(k) for k in _SKIP_KEYS):
            continue
        key = name[len("bert.") :] if name.startswith("bert.") else name
        if not key.startswith(("embeddings.", "encoder.", "pooler.")):
            continue
        for old, new in _LEGACY_SUFFIX.items():
            if key.endswith(old):
                key = key[: -len(old)] + new
        out[target_prefix + key] = tensor.detach().to(torch.float32).clone()

    if not out:
        raise CheckpointError("가져올 BERT 텐서가 없습니다 (이름 형식 확인).")
    return out


def load_pretrained_encoder(path: Path) -> "OrderedDict[str, torch.Tensor]":
    """pytorch_model.bin (torch.save state dict) 또는 이 프로젝트 체크포인트."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"사전학습 가중치를 찾을 수 없습니다: {path}")
    if path.suffix == ".ckpt":
        state = load_checkpoint(path).state_dict()
        return OrderedDict((k, v) for k, v in state.items() if k.startswith("encoder."))
    source = torch.load(path, map_location="cpu", weights_only=True)
    return import_bert_weights(source)


def apply_encoder_weights(
    model: torch.nn.Module, state: Mapping[str, torch.Tensor]
) -> None:
    """
    model 의 'encoder.*' 파라미터를 state 로 덮어쓴다.
    position table 은 모델의 max_positions 만큼 앞부분만 쓴다 (공개 가중치는 512).
    """
    own = model.state_dict()
    patch: Dict[str, torch.Tensor] = {}
    for name, tensor in state.items():
        if not name.startswith("encoder."):
            continue
        if name not in own:
            raise CheckpointError(f"모델에 없는 인코더 텐서: {name}")
        target_shape = own[name].shape
        if name.endswith("position_embeddings.weight") and tensor.shape[0] > target_shape[0]:
            tensor = tensor[: target_shape[0]]
        if tensor.shape != target_shape:
            raise CheckpointError(
                f"인코더 텐서 shape 불일치: {name} {tuple(tensor.shape)} != {tuple(target_shape)}"
            )
        patch[name] = tensor
    missing = [k for k in own if k.startswith("encoder.") and k not in patch]
    if missing:
        raise CheckpointError(f"인코더 텐서 누락: {missing[:5]} ...")
    model.load_state_dict(patch, strict=False)
    logger.info(f"인코더 가중치 적용: tensors={len(patch)}")
