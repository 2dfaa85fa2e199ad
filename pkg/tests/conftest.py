"""Shared fixtures: a small trained bundle reused across test modules.

Everything is seeded, so the bundle is bit-identical across runs; the
frozen values asserted in the tests were recorded from these exact seeds.
"""

from __future__ import annotations

import pytest

from ragguard import datagen
from ragguard.decoupler import SURFACE_FORMS, TrainConfig, embedding_key, save_checkpoint, train
from ragguard.embed import hash_embed

SMALL_N = 600
SMALL_CORPUS_SEED = 11
SMALL_EMBED_DIM = 256
SMALL_EMBED_SEED = 0
SMALL_TRAIN_SEED = 5
SMALL_EPOCHS = 40
SMALL_QA_SEED = 9
SMALL_BENCH_SEED = 23


@pytest.fixture(scope="session")
def small_corpus():
    return datagen.build_dataset(SMALL_N, seed=SMALL_CORPUS_SEED)


@pytest.fixture(scope="session")
def small_embeddings(small_corpus):
    out = {}
    for t in small_corpus:
        for form in SURFACE_FORMS:
            out[embedding_key(t.base.id, form)] = hash_embed(
                getattr(t, form), SMALL_EMBED_DIM, SMALL_EMBED_SEED
            )
    return out


@pytest.fixture(scope="session")
def small_train_config():
    return TrainConfig(seed=SMALL_TRAIN_SEED, epochs=SMALL_EPOCHS)


@pytest.fixture(scope="session")
def small_pair(small_corpus, small_embeddings, small_train_config):
    pair = train(small_corpus, small_embeddings, small_train_config)
    pair.train_meta["embed_dim"] = SMALL_EMBED_DIM
    pair.train_meta["embed_seed"] = SMALL_EMBED_SEED
    return pair


@pytest.fixture(scope="session")
def small_checkpoint(small_pair, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "small.tcrw"
    save_checkpoint(path, small_pair)
    return path


@pytest.fixture(scope="session")
def small_qa_cases(small_corpus):
    return datagen.build_qa_cases(
        small_corpus, mix=(0.4, 0.3, 0.3), noise_rate=0.0, seed=SMALL_QA_SEED
    )
