# tests/conftest.py

from __future__ import annotations

from pathlib import Path

import pytest
import torch

from src.etl.corpus.corpus_loader import Corpus, load_corpus
from src.model.encoder import EncoderConfig
from src.model.filter_head import FilterModel
from src.model.matcher_head import MatcherModel
from src.model.tokenizer import Vocab
from src.pipeline.recommender import ModelBundle

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "data" / "fixture"
TINY_MAX_LEN = 32


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURE_DIR


@pytest.fixture(scope="session")
def corpus() -> Corpus:
    return load_corpus(FIXTURE_DIR)


@pytest.fixture(scope="session")
def vocab() -> Vocab:
    return Vocab.from_file(FIXTURE_DIR / "vocab.txt")


@pytest.fixture(scope="session")
def tiny_config(vocab) -> EncoderConfig:
    return EncoderConfig(
        vocab_size=len(vocab),
        num_layers=1,
        hidden_size=16,
        num_heads=2,
        intermediate_size=32,
        max_positions=TINY_MAX_LEN,
        dropout=0.0,
    )


def perturb(model: torch.nn.Module, seed: int, std: float = 0.3) -> torch.nn.Module:
    """초기화 σ=0.02 로는 출력 차이가 너무 작아서, 비교용으로 가중치를 크게 흔든다."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * std)
    return model


@pytest.fixture
def filter_model(corpus, tiny_config) -> FilterModel:
    model = FilterModel(tiny_config, num_labels=corpus.num_apis)
    model.reset_parameters(seed=0)
    perturb(model, seed=0)
    return model.eval()


@pytest.fixture
def matcher_model(tiny_config) -> MatcherModel:
    model = MatcherModel(tiny_config)
    model.reset_parameters(seed=1)
    perturb(model, seed=1)
    return model.eval()


@pytest.fixture
def bundle(corpus, vocab, filter_model, matcher_model) -> ModelBundle:
    return ModelBundle(
        corpus=corpus,
        vocab=vocab,
        filter_model=filter_model,
        matcher_model=matcher_model,
        filter_max_len=TINY_MAX_LEN,
        matcher_max_len=TINY_MAX_LEN,
        info={"fixture": True},
    )
