# tests/test_checkpoint.py

from __future__ import annotations

from collections import OrderedDict

import numpy as np
import pytest
import torch

from src.errors import CheckpointError
from src.model.checkpoint import (
    Checkpoint,
    apply_encoder_weights,
    import_bert_weights,
    load_checkpoint,
    load_pretrained_encoder,
    meta_path_for,
    save_checkpoint,
)
from src.model.encoder import BertEncoder, EncoderConfig
from src.model.filter_head import FilterModel


def _sample() -> Checkpoint:
    tensors = OrderedDict(
        [
            ("a.weight", np.arange(6, dtype=np.float32).reshape(2, 3)),
            ("a.bias", np.array([0.5, -1.25], dtype=np.float32)),
            ("scalar", np.array(3.0, dtype=np.float32)),
        ]
    )
    return Checkpoint(tensors=tensors, metadata={"kind": "test", "seed": 17})


def test_round_trip(tmp_path):
    ckpt = _sample()
    path = save_checkpoint(ckpt, tmp_path / "x.ckpt")
    loaded = load_checkpoint(path)
    assert list(loaded.tensors) == list(ckpt.tensors)
    for name, arr in ckpt.tensors.items():
        assert loaded.tensors[name].shape == arr.shape
        assert np.array_equal(loaded.tensors[name], arr)
    assert loaded.metadata == {"kind": "test", "seed": 17}
    assert meta_path_for(path).exists()


def test_save_is_byte_stable(tmp_path):
    a = save_checkpoint(_sample(), tmp_path / "a.ckpt")
    b = save_checkpoint(_sample(), tmp_path / "b.ckpt")
    assert a.read_bytes() == b.read_bytes()
    assert meta_path_for(a).read_bytes() == meta_path_for(b).read_bytes()


def test_header_then_little_endian_float32(tmp_path):
    path = save_checkpoint(_sample(), tmp_path / "x.ckpt")
    raw = path.read_bytes()
    n = int.from_bytes(raw[:8], "little")
    body = raw[8 + n :]
    assert np.frombuffer(body[:24], dtype="<f4").tolist() == [0, 1, 2, 3, 4, 5]


def test_missing_and_truncated(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "none.ckpt")

    path = save_checkpoint(_sample(), tmp_path / "x.ckpt")
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_tensor_names_are_unique_and_cover_heads(tiny_config):
    model = FilterModel(tiny_config, num_labels=5)
    names = list(model.to_checkpoint().tensors)
    assert len(names) == len(set(names))
    for head in ("pooler_proj", "mean_proj", "fusion"):
        assert f"filter.{head}.weight" in names and f"filter.{head}.bias" in names
    assert "encoder.pooler.dense.weight" in names


def _hf_state(encoder: BertEncoder, positions: int) -> "OrderedDict[str, torch.Tensor]":
    """공개 BERT 형식 이름(bert.*, LayerNorm gamma/beta, cls.*)으로 바꾼 state dict."""
    out: "OrderedDict[str, torch.Tensor]" = OrderedDict()
    for name, t in encoder.state_dict().items():
        key = "bert." + name
        if "LayerNorm.weight" in key:
            key = key.replace("LayerNorm.weight", "LayerNorm.gamma")
        if "LayerNorm.bias" in key:
            key = key.replace("LayerNorm.bias", "LayerNorm.beta")
        if name == "embeddings.position_embeddings.weight":
            t = torch.cat([t, torch.randn(positions - t.shape[0], t.shape[1])])
        out[key] = t.clone()
    out["bert.embeddings.position_ids"] = torch.arange(positions)[None]
    out["cls.predictions.bias"] = torch.zeros(3)
    return out


def test_import_bert_weights_maps_names(tiny_config):
    enc = BertEncoder(tiny_config)
    enc.reset_parameters(seed=0)
    mapped = import_bert_weights(_hf_state(enc, positions=512))
    assert "encoder.embeddings.LayerNorm.weight" in mapped
    assert "encoder.encoder.layer.0.output.LayerNorm.bias" in mapped
    assert not any(k.startswith("cls") or k.endswith("position_ids") for k in mapped)

    with pytest.raises(CheckpointError):
        import_bert_weights({"cls.predictions.bias": torch.zeros(3)})


def test_apply_encoder_weights_trims_position_table(tiny_config, tmp_path):
    source = BertEncoder(tiny_config)
    source.reset_parameters(seed=9)
    path = tmp_path / "pytorch_model.bin"
    torch.save(_hf_state(source, positions=512), path)

    model = FilterModel(tiny_config, num_labels=3)
    model.reset_parameters(seed=1)
    apply_encoder_weights(model, load_pretrained_encoder(path))
    for name, t in source.state_dict().items():
        assert torch.equal(model.encoder.state_dict()[name], t)


def test_apply_encoder_weights_shape_mismatch(tiny_config):
    model = FilterModel(tiny_config, num_labels=3)
    bigger = BertEncoder(EncoderConfig(vocab_size=tiny_config.vocab_size, hidden_size=32, num_heads=2,
                                       num_layers=1, intermediate_size=32, max_positions=32))
    state = OrderedDict(("encoder." + k, v) for k, v in bigger.state_dict().items())
    with pytest.raises(CheckpointError):
        apply_encoder_weights(model, state)
