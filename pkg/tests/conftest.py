from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from monoglot import wordpiece
from monoglot.encoder.model import ModelConfig, init_model
from monoglot.mlm_data import MaskingPolicy, apply_masking, build_sequences

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def tiny_config() -> ModelConfig:
    # the finite-difference config from the acceptance criteria
    return ModelConfig(vocab_size=37, hidden_dim=8, num_layers=1, num_heads=2,
                       ff_dim=16, max_positions=12, dropout_prob=0.0)


@pytest.fixture(scope="session")
def tiny_params(tiny_config):
    return init_model(tiny_config, seed=1)


@pytest.fixture(scope="session")
def tiny_batch(tiny_config):
    rng = np.random.default_rng(3)
    sents = [list(rng.integers(5, tiny_config.vocab_size, size=7)),
             list(rng.integers(5, tiny_config.vocab_size, size=4))]
    seqs = build_sequences(sents, 10)
    return apply_masking(seqs, MaskingPolicy(select_prob=0.4, seed=5), tiny_config.vocab_size)


@pytest.fixture(scope="session")
def fixture_vocab(fixtures_dir) -> wordpiece.SubwordVocabulary:
    """Vocabulary trained on the committed pretraining corpus."""
    import json

    texts = []
    for line in (fixtures_dir / "pretrain_corpus.jsonl").read_text().splitlines():
        texts.append(json.loads(line)["text"])
    freqs = wordpiece.word_frequencies(texts)
    return wordpiece.train_wordpiece(freqs, wordpiece.TrainerConfig(vocab_size=220))
