"""Shared fixtures: a synthetic tile corpus and one memorized model.

Both are session-scoped because they are the expensive pieces (the
memorization run trains for 400 iterations); tests treat them as
read-only.
"""

import os

import pytest

from panrestore.data import DatasetSpec, generate_toy_corpus, ingest
from panrestore.model import ModelConfig, build_model
from panrestore.train import TrainConfig, train


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory) -> str:
    """Four smooth 64x64 color tiles, deterministic at seed 0."""
    root = str(tmp_path_factory.mktemp("corpus"))
    generate_toy_corpus(root, count=4, tile=64, seed=0)
    return root


@pytest.fixture(scope="session")
def memorized_sr(corpus_root):
    """A small sr_x2 model overfit onto the four tiles (about 33 dB PSNR).

    Returns (model, samples). Used by the evaluation and checkpoint tests;
    do not mutate the model.
    """
    samples = ingest(DatasetSpec(root=corpus_root, split="all", task="sr_x2"))
    model = build_model(
        ModelConfig(task="sr_x2", depth=2, growth=8, state_size=8, seed=10)
    )
    tc = TrainConfig(lr=3e-3, epochs=100, max_iters=400, step_every=60, seed=10)
    train(model, samples, tc)
    return model, samples


@pytest.fixture()
def run_dir(tmp_path) -> str:
    out = tmp_path / "run"
    os.makedirs(out, exist_ok=True)
    return str(out)
