import numpy as np
import pytest

from audiobank.audio_io import default_class_specs, synth_corpus
from audiobank.histfield import HistFieldParams, HistogramField


def random_field(rng, B, K, T, sharp=False):
    """Random valid histogram field (each position sums to 1)."""
    if sharp:
        labels = rng.integers(0, B, size=(K, T))
        h = np.zeros((B, K, T))
        h[labels, np.arange(K)[:, None], np.arange(T)[None, :]] = 1.0
        h += 0.05 * rng.random((B, K, T))
    else:
        h = rng.random((B, K, T))
    return HistogramField(h / h.sum(axis=0, keepdims=True), HistFieldParams(B=B))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus():
    """Six clips per class of the default synthetic archetypes."""
    specs = default_class_specs()
    return synth_corpus(specs, [6] * len(specs), master_seed=11)


def make_detector(field, det_id=0, class_id=0):
    from audiobank.bank import Detector

    return Detector(id=det_id, class_id=class_id, field=field)


def make_bank(rng, n_classes, per_class, B=4, window=(4, 6)):
    from audiobank.bank import DetectorBank

    dets = []
    for c in range(n_classes):
        for j in range(per_class):
            dets.append(make_detector(random_field(rng, B, *window), len(dets), c))
    return DetectorBank(dets, n_classes, per_class, window)
