import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ensemble_seg.volume import LabelVolume, ProbVolume, VolumeMeta  # noqa: E402


def random_probs(rng, dims, channels=4, dtype=np.float64):
    p = rng.random(tuple(dims) + (channels,)) + 1e-3
    p /= p.sum(axis=3, keepdims=True)
    return ProbVolume(VolumeMeta(dims), p.astype(dtype))


def random_labels(rng, dims, n_classes=4, p_fg=None):
    if p_fg is None:
        vox = rng.integers(0, n_classes, size=dims)
    else:
        vox = np.where(rng.random(dims) < p_fg, rng.integers(1, n_classes, size=dims), 0)
    return LabelVolume(VolumeMeta(dims), vox, n_classes)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
