import pytest

from compactssl import nncore as nn
from compactssl import synthetic
from compactssl.bench import make_split
from compactssl.trainer import TrainConfig


def fast_config(**kw):
    base = dict(stage1_epochs=1, stage2_epochs=3, lr_steps=20, patience=2, batch_size=16, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def small_split():
    """Three classes of 16x16 images: 8 labelled, 12 test and 20 unlabelled per class."""
    data = synthetic.generate(synthetic.TARGET_SHAPES[:3], 40, seed=3, size=16)
    return make_split(data, test_frac=0.3, L=8, seed=0)


@pytest.fixture(scope="session")
def small_spec():
    return nn.compact_net(3, (1, 16, 16))


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
