import numpy as np
import pytest

from fmms.data import DataConfig, generate_dataset
from fmms.models import ALIGNED, FUSED, ModelConfig, init_model, train_contrastive, TrainConfig

TINY = DataConfig(
    classes=3, images=9, captions_per_image=3, height=6, width=6, vocab_size=40, caption_length=4, class_token_pool_size=4
)
TINY_MODEL = ModelConfig(hidden=8, embed_dim=6, token_dim=5)


def tiny_dataset(seed=0, **overrides):
    cfg = DataConfig(**{**TINY.__dict__, **overrides})
    return generate_dataset(cfg, seed)


def tiny_model(kind, d, seed=0, steps=0, perturb_head=True):
    m = init_model(kind, d.image_shape, d.vocab_size, TINY_MODEL, seed)
    if kind == FUSED and perturb_head:
        from dataclasses import replace

        rng = np.random.default_rng(seed + 1000)
        m = replace(m, W=m.W + 0.3 * rng.normal(size=m.W.shape))
    if steps:
        m = train_contrastive(m, d, TrainConfig(steps=steps, batch_size=d.n_images), seed)
    return m


@pytest.fixture(scope="session")
def default_dataset():
    return generate_dataset(DataConfig(), 0)


@pytest.fixture(scope="session")
def trained_models(default_dataset):
    """Both model kinds trained with default hyperparameters on the default dataset."""
    return {
        kind: train_contrastive(init_model(kind, seed=10 + i), default_dataset, TrainConfig(), seed=20 + i)
        for i, kind in enumerate((ALIGNED, FUSED))
    }


@pytest.fixture(params=[ALIGNED, FUSED])
def kind(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[0][3:])):
        terminalreporter.write_line(line)
