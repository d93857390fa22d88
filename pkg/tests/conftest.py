import logging
from dataclasses import dataclass
from typing import List

import numpy as np
import pytest

from core.corpus import (
    DatasetSplit, EncodedExample, Vocabulary, build_vocabulary, compute_max_len, encode_split, generate_synthetic,
    random_embedding_table,
)
from core.logging_manager import close_all_loggers
from core.models import build_model
from core.numerics import make_rng, spawn_rngs
from core.run_db import close_db
from core.training import TrainConfig


@pytest.fixture(autouse=True)
def _reset_global_state(monkeypatch):
    monkeypatch.delenv("FEEDBACK_DATABASE_URL", raising=False)
    yield
    close_db()
    close_all_loggers()
    logging.getLogger("core").propagate = True


@pytest.fixture
def rng():
    return make_rng(1234)


@dataclass
class EncodedCorpus:
    vocab: Vocabulary
    max_len: int
    train: List[EncodedExample]
    dev: List[EncodedExample]
    test: List[EncodedExample]


def _make_config(**overrides) -> TrainConfig:
    values = dict(architecture="cnn", embedding_dim=16, filters=8, region_sizes=(3, 4, 5), gru_hidden=8,
                  max_epochs=5, batch_size=4, learning_rate=0.05, keep_prob=0.5, seed=0, record_runs=False)
    values.update(overrides)
    return TrainConfig(**values)


def _encode(train: DatasetSplit, dev: DatasetSplit, test: DatasetSplit, config: TrainConfig) -> EncodedCorpus:
    vocab = build_vocabulary(train.records, config.min_count, config.tokenizer)
    max_len = max(compute_max_len(train.records, config.tokenizer), config.min_sentence_length)
    return EncodedCorpus(
        vocab=vocab,
        max_len=max_len,
        train=encode_split(train, vocab, max_len, config.tokenizer, expand=True),
        dev=encode_split(dev, vocab, max_len, config.tokenizer),
        test=encode_split(test, vocab, max_len, config.tokenizer),
    )


def _build(config: TrainConfig, corpus: EncodedCorpus):
    init_rng, _ = spawn_rngs(config.seed, 2)
    embedding = random_embedding_table(corpus.vocab, config.embedding_dim, init_rng, config.embedding_init_scale)
    return build_model(config, embedding, init_rng)


@pytest.fixture
def make_config():
    """Small, fast TrainConfig with keyword overrides"""
    return _make_config


@pytest.fixture
def encode_corpus():
    return _encode


@pytest.fixture
def build_small_model():
    return _build


@pytest.fixture(scope="session")
def synthetic_splits():
    """seed 3, 10 per class: 42 train / 6 dev / 12 test"""
    return generate_synthetic(seed=3, n_per_class=10)


@pytest.fixture(scope="session")
def overfit_splits():
    """The 24-record corpus (4 per class) merged into one training split"""
    train, dev, test = generate_synthetic(seed=11, n_per_class=4)
    merged = DatasetSplit(role="train", records=train.records + dev.records + test.records)
    return merged, DatasetSplit(role="dev", records=()), DatasetSplit(role="test", records=())


@pytest.fixture
def random_example():
    def factory(rng: np.random.Generator, vocab_size: int = 20, max_len: int = 12, min_len: int = 5):
        true_length = int(rng.integers(min_len, max_len + 1))
        indices = np.zeros(max_len, dtype=np.int64)
        indices[:true_length] = rng.integers(1, vocab_size, size=true_length)
        label = int(rng.integers(0, 6))
        return EncodedExample(indices=indices, true_length=true_length, label_index=label,
                              gold=frozenset({label}))
    return factory
