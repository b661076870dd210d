# tests/test_encoder.py

from __future__ import annotations

import numpy as np
import pytest
import torch

from src.errors import ConfigError, EncoderError
from src.model.encoder import BertEncoder, EncoderConfig, mean_pool
from src.model.filter_head import FilterModel
from src.model.tokenizer import encode_single, to_tensors
from src.train.trainer import bce_loss
from tests.conftest import perturb
from tests.reference_impl import encoder_forward, to_numpy


@pytest.fixture
def encoder(tiny_config) -> BertEncoder:
    enc = BertEncoder(tiny_config)
    enc.reset_parameters(seed=3)
    return perturb(enc, seed=3).eval()


def _random_batch(vocab_size: int, seq_len: int, n_t: int, gen: torch.Generator):
    ids = torch.randint(0, vocab_size, (1, seq_len), generator=gen)
    seg = torch.zeros(1, seq_len, dtype=torch.long)
    seg[0, n_t // 2 : n_t] = 1
    mask = torch.zeros(1, seq_len, dtype=torch.long)
    mask[0, :n_t] = 1
    return ids, seg, mask


def test_config_validation():
    with pytest.raises(ConfigError):
        EncoderConfig(vocab_size=10, hidden_size=10, num_heads=3)
    with pytest.raises(ConfigError):
        EncoderConfig(vocab_size=10, num_layers=0)
    cfg = EncoderConfig(vocab_size=10)
    assert EncoderConfig.from_dict(cfg.to_dict()) == cfg
    assert (cfg.num_layers, cfg.hidden_size, cfg.num_heads, cfg.intermediate_size) == (2, 128, 2, 512)


def test_default_shapes(vocab):
    enc = BertEncoder(EncoderConfig(vocab_size=len(vocab)))
    enc.reset_parameters(seed=0)
    enc.eval()
    ids, seg, mask = to_tensors([encode_single("interactive maps", vocab, 256)])
    with torch.no_grad():
        out = enc(ids, seg, mask)
    assert out.hidden.shape == (1, 256, 128)
    assert out.pooler.shape == (1, 128)


def test_embed_position_signal(encoder, vocab):
    tok = vocab.id_of("maps")
    ids = torch.tensor([[tok, tok]])
    seg = torch.zeros_like(ids)
    with torch.no_grad():
        rows = encoder.embed(ids, seg)[0]
    assert not torch.equal(rows[0], rows[1])


def test_embed_zero_tables_stay_finite(tiny_config):
    enc = BertEncoder(tiny_config)
    enc.reset_parameters(seed=0)
    with torch.no_grad():
        for emb in (
            enc.embeddings.word_embeddings,
            enc.embeddings.position_embeddings,
            enc.embeddings.token_type_embeddings,
        ):
            emb.weight.zero_()
        out = enc.embed(torch.tensor([[5, 6, 7]]), torch.zeros(1, 3, dtype=torch.long))
    assert torch.isfinite(out).all()


def test_embed_rejects_out_of_range_ids(encoder, tiny_config):
    with pytest.raises(EncoderError):
        encoder(
            torch.tensor([[tiny_config.vocab_size]]),
            torch.zeros(1, 1, dtype=torch.long),
            torch.ones(1, 1, dtype=torch.long),
        )
    with pytest.raises(EncoderError):
        n = tiny_config.max_positions + 1
        encoder(torch.zeros(1, n, dtype=torch.long), torch.zeros(1, n, dtype=torch.long), torch.ones(1, n, dtype=torch.long))


def test_single_unmasked_token_attends_to_itself(encoder):
    ids = torch.tensor([[2, 10, 11, 0]])
    seg = torch.zeros_like(ids)
    mask = torch.tensor([[1, 0, 0, 0]])
    with torch.no_grad():
        out = encoder(ids, seg, mask, output_attentions=True)
    probs = out.attentions[0][0, :, 0, :]  # heads × keys, query 0
    assert torch.all(probs[:, 0] == 1.0)
    assert torch.all(probs[:, 1:] == 0.0)


def test_attention_rows_sum_to_one(encoder, tiny_config):
    gen = torch.Generator().manual_seed(7)
    for n_t in (1, 5, 17, 32):
        ids, seg, mask = _random_batch(tiny_config.vocab_size, 32, n_t, gen)
        with torch.no_grad():
            out = encoder(ids, seg, mask, output_attentions=True)
        for probs in out.attentions:
            sums = probs[..., :n_t].sum(dim=-1)
            assert torch.allclose(sums, torch.ones_like(sums), atol=1e-5)
            assert torch.all(probs[..., n_t:] == 0.0)


def test_masking_inertness_is_exact(encoder, tiny_config):
    gen = torch.Generator().manual_seed(11)
    for _ in range(100):
        n_t = int(torch.randint(1, 32, (1,), generator=gen))
        ids, seg, mask = _random_batch(tiny_config.vocab_size, 32, n_t, gen)
        mutated = ids.clone()
        mutated[0, n_t:] = torch.randint(0, tiny_config.vocab_size, (32 - n_t,), generator=gen)
        with torch.no_grad():
            a = encoder(ids, seg, mask)
            b = encoder(mutated, seg, mask)
        assert torch.equal(a.hidden, b.hidden)
        assert torch.equal(a.pooler, b.pooler)


def test_padding_extension_keeps_real_rows(encoder, vocab):
    short = to_tensors([encode_single("stream music playlists", vocab, 8)])
    long = to_tensors([encode_single("stream music playlists", vocab, 32)])
    with torch.no_grad():
        a = encoder(*short)
        b = encoder(*long)
    n_t = int(short[2].sum())
    assert torch.allclose(a.hidden[0, :n_t], b.hidden[0, :n_t], atol=1e-6)
    assert torch.allclose(a.pooler, b.pooler, atol=1e-6)
    assert torch.all(b.hidden[0, n_t:] == 0.0)


def test_pooler_range(vocab, tiny_config):
    enc = BertEncoder(tiny_config)
    enc.reset_parameters(seed=5)
    enc.eval()
    ids, seg, mask = to_tensors([encode_single("post tweets and follow users", vocab, 32)])
    with torch.no_grad():
        pooler = enc(ids, seg, mask).pooler
    assert torch.all(pooler > -1.0) and torch.all(pooler < 1.0)


def test_inference_is_deterministic(encoder, vocab):
    batch = to_tensors([encode_single("search cooking recipes", vocab, 32)])
    with torch.no_grad():
        a = encoder(*batch)
        b = encoder(*batch)
    assert torch.equal(a.hidden, b.hidden)
    assert torch.equal(a.pooler, b.pooler)


def test_forward_matches_reference(encoder, vocab, tiny_config):
    seq = encode_single("upload and search photos in a community", vocab, 32)
    with torch.no_grad():
        out = encoder(*to_tensors([seq]))
    state = {"encoder." + k: v for k, v in to_numpy(encoder.state_dict()).items()}
    hidden, pooler = encoder_forward(
        state, seq.ids, seq.segment_ids, seq.attention_mask,
        num_layers=tiny_config.num_layers, num_heads=tiny_config.num_heads,
    )
    np.testing.assert_allclose(out.hidden[0].double().numpy(), hidden, atol=1e-4)
    np.testing.assert_allclose(out.pooler[0].double().numpy(), pooler, atol=1e-4)


def test_mean_pool_examples():
    h = torch.tensor([[1.0, 0.0], [0.0, 1.0], [7.0, -3.0]])
    mask = torch.tensor([1, 1, 0])
    assert torch.equal(mean_pool(h, mask), torch.tensor([0.5, 0.5]))

    same = torch.tensor([[0.25, -2.0]] * 4)
    assert torch.allclose(mean_pool(same, torch.ones(4, dtype=torch.long)), same[0])

    noisy = h.clone()
    noisy[2] = torch.tensor([1e6, 1e6])
    assert torch.equal(mean_pool(noisy, mask), mean_pool(h, mask))


def test_mean_pool_all_masked():
    with pytest.raises(EncoderError):
        mean_pool(torch.ones(3, 2), torch.zeros(3, dtype=torch.long))


def test_gradient_check():
    """float64 작은 설정에서 해석적 gradient ↔ 중앙 차분."""
    config = EncoderConfig(
        vocab_size=10, num_layers=1, hidden_size=8, num_heads=1,
        intermediate_size=16, max_positions=4, dropout=0.0,
    )
    model = FilterModel(config, num_labels=3)
    model.reset_parameters(seed=0)
    perturb(model, seed=0, std=0.5)
    model = model.double().eval()

    ids = torch.tensor([[2, 5, 7, 3]])
    seg = torch.tensor([[0, 0, 1, 1]])
    mask = torch.tensor([[1, 1, 1, 0]])
    target = torch.tensor([[1.0, 0.0, 1.0]], dtype=torch.float64)

    def loss_fn() -> torch.Tensor:
        return bce_loss(torch.sigmoid(model(ids, seg, mask)), target)

    model.zero_grad()
    loss_fn().backward()

    gen = torch.Generator().manual_seed(0)
    step = 1e-4
    checked = 0
    for name, param in model.named_parameters():
        flat = param.data.view(-1)
        grad = param.grad.view(-1)
        picks = torch.randperm(flat.numel(), generator=gen)[:3]
        for i in picks.tolist():
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + step
                plus = loss_fn().item()
                flat[i] = orig - step
                minus = loss_fn().item()
                flat[i] = orig
            numeric = (plus - minus) / (2 * step)
            analytic = grad[i].item()
            assert abs(analytic - numeric) <= 1e-3 * max(abs(analytic), abs(numeric)) + 1e-6, name
            checked += 1
    assert checked > 20
