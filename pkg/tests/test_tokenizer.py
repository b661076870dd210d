# tests/test_tokenizer.py

from __future__ import annotations

import random

import pytest
import torch

from src.errors import TokenizerError
from src.model.tokenizer import (
    SPECIAL_TOKENS,
    TokenizedSequence,
    Vocab,
    build_vocab,
    encode_pair,
    encode_single,
    to_tensors,
    tokenize,
    truncate_longest_first,
    wordpiece,
)


def _check_layout(seq: TokenizedSequence, vocab: Vocab) -> None:
    assert len(seq.ids) == len(seq.segment_ids) == len(seq.attention_mask)
    assert seq.ids[0] == vocab.cls_id
    assert list(seq.attention_mask) == [1] * seq.n_t + [0] * (len(seq) - seq.n_t)
    assert all(i == vocab.pad_id for i in seq.ids[seq.n_t :])
    assert all(s == 0 for s in seq.segment_ids[seq.n_t :])
    assert seq.ids[seq.n_t - 1] == vocab.sep_id


def test_vocab_specials(vocab):
    assert len(vocab) == 149
    assert [vocab.id_of(t) for t in SPECIAL_TOKENS] == [0, 1, 2, 3]
    assert "mapping" not in vocab


def test_vocab_rejects_missing_specials():
    with pytest.raises(TokenizerError):
        Vocab(id_to_token=("[PAD]", "[UNK]", "hello"))


def test_vocab_rejects_duplicates():
    with pytest.raises(TokenizerError):
        Vocab(id_to_token=SPECIAL_TOKENS + ("a", "a"))


def test_vocab_save_round_trip(vocab, tmp_path):
    out = vocab.save(tmp_path / "vocab.txt")
    assert Vocab.from_file(out) == vocab


def test_wordpiece_examples(vocab):
    assert wordpiece("map", vocab) == [vocab.id_of("map")]
    assert wordpiece("mapping", vocab) == [vocab.id_of("map"), vocab.id_of("##ping")]
    assert wordpiece("maps", vocab) == [vocab.id_of("maps")]
    assert wordpiece("maping", vocab) == [vocab.id_of("map"), vocab.id_of("##ing")]
    assert wordpiece("zzzz", vocab) == [vocab.unk_id]


def test_wordpiece_unmatched_tail_is_unknown(vocab):
    # 앞부분은 맞아도 나머지 조각이 없으면 단어 전체가 [UNK]
    assert wordpiece("mapq", vocab) == [vocab.unk_id]


def test_encode_single_default_length(vocab):
    seq = encode_single("interactive maps with directions", vocab, 256)
    assert len(seq) == 256
    assert seq.ids.count(vocab.sep_id) == 1
    _check_layout(seq, vocab)


def test_encode_single_exact_fit(vocab):
    seq = encode_single(" ".join(["a"] * 14), vocab, 16)
    assert seq.n_t == 16
    assert vocab.pad_id not in seq.ids


def test_encode_single_head_truncation(vocab):
    words = ["a", "an", "and"] * 100
    seq = encode_single(" ".join(words), vocab, 256)
    content = seq.ids[1:-1]
    assert len(content) == 254
    assert list(content) == [vocab.id_of(w) for w in words[:254]]


def test_encode_single_errors(vocab):
    with pytest.raises(TokenizerError):
        encode_single("", vocab, 16)
    with pytest.raises(TokenizerError):
        encode_single("a", vocab, 2)


def test_encode_pair_layout(vocab):
    seq = encode_pair("a accept albums", "an and app articles", vocab, 16)
    assert seq.n_t == 10
    assert list(seq.segment_ids) == [0] * 5 + [1] * 5 + [0] * 6
    assert list(seq.attention_mask) == [1] * 10 + [0] * 6
    assert seq.ids[4] == vocab.sep_id and seq.ids[9] == vocab.sep_id
    _check_layout(seq, vocab)


def test_encode_pair_exact_fill(vocab):
    seq = encode_pair("a", "an", vocab, 5)
    assert seq.n_t == 5
    assert seq.ids == (vocab.cls_id, vocab.id_of("a"), vocab.sep_id, vocab.id_of("an"), vocab.sep_id)


def test_encode_pair_longest_first_truncation(vocab):
    seq = encode_pair(" ".join(["a"] * 200), " ".join(["an"] * 200), vocab, 256)
    a_id, b_id = vocab.id_of("a"), vocab.id_of("an")
    assert seq.ids.count(a_id) == 127
    assert seq.ids.count(b_id) == 126
    assert seq.n_t == 256


def test_truncate_longest_first_ties_cut_second():
    a, b = [1, 2, 3], [4, 5, 6]
    truncate_longest_first(a, b, 5)
    assert (a, b) == ([1, 2, 3], [4, 5])
    truncate_longest_first(a, b, 3)
    assert (a, b) == ([1, 2], [4])


def test_encode_pair_errors(vocab):
    with pytest.raises(TokenizerError):
        encode_pair("a", "", vocab, 16)
    with pytest.raises(TokenizerError):
        encode_pair("a", "an", vocab, 4)


def test_pair_order_changes_segments_not_length(vocab):
    ab = encode_pair("a accept albums", "an and", vocab, 32)
    ba = encode_pair("an and", "a accept albums", vocab, 32)
    assert ab.n_t == ba.n_t
    assert ab.segment_ids != ba.segment_ids


def test_random_sequences_keep_invariants(vocab):
    rng = random.Random(0)
    words = [t for t in vocab.id_to_token if t not in SPECIAL_TOKENS and not t.startswith("##")]
    for _ in range(200):
        text_a = " ".join(rng.choices(words, k=rng.randint(1, 40)))
        text_b = " ".join(rng.choices(words, k=rng.randint(1, 40)))
        max_len = rng.randint(5, 64)
        pair = encode_pair(text_a, text_b, vocab, max_len)
        single = encode_single(text_a, vocab, max_len)
        for seq in (pair, single):
            assert len(seq) == max_len
            _check_layout(seq, vocab)
        assert encode_pair(text_a, text_b, vocab, max_len) == pair


def test_to_tensors_shapes(vocab):
    seqs = [encode_single("maps", vocab, 8), encode_single("a cloud", vocab, 8)]
    ids, seg, mask = to_tensors(seqs)
    assert ids.shape == seg.shape == mask.shape == (2, 8)
    assert ids.dtype == torch.long
    with pytest.raises(TokenizerError):
        to_tensors([encode_single("maps", vocab, 8), encode_single("maps", vocab, 9)])


def test_build_vocab_orders_by_frequency():
    v = build_vocab(["b a b", "c b a"], extra_tokens=["##s"])
    assert v.id_to_token == SPECIAL_TOKENS + ("##s", "b", "a", "c")
    assert tokenize("a b zz", v) == [v.id_of("a"), v.id_of("b"), v.unk_id]
