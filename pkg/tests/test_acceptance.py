"""End-to-end acceptance checks; each test prints one PASS/FAIL line.

The synthetic corpus and the per-run feature matrices are shared across tests
through module fixtures, so the slow criteria reuse each other's work.
"""

import json
import time
from dataclasses import replace

import numpy as np
import pytest
from conftest import make_detector, random_field
from test_spectrogram import direct_spectrogram

from audiobank.audio_io import CLASS_COUNTS, Signal, default_class_specs, synth_corpus, synth_event
from audiobank.bank import build_bank
from audiobank.classify import LabeledSet, kkt_violation, knn_predict_batch, rbf_kernel, svm_train, SvmConfig
from audiobank.classify import svm_predict_batch, train_binary
from audiobank.cli import main
from audiobank.evaluation import ExperimentConfig, FieldCache, run_experiment
from audiobank.featurize import POOL_SIZE, alt_max_pool, featurize, field_features
from audiobank.histfield import bhattacharyya
from audiobank.matching import match_bank, match_direct, match_fft
from audiobank.nmf import NmfConfig, nmf_fit
from audiobank.spectrogram import SpectrogramParams, compute_spectrogram

pytestmark = pytest.mark.slow

CORPUS_SEED = 2024
EXPERIMENT_SEED = 1


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="module")
def corpus():
    return FieldCache(synth_corpus(default_class_specs(), CLASS_COUNTS, CORPUS_SEED))


@pytest.fixture(scope="module")
def store():
    return {}


@pytest.fixture(scope="module")
def bank48(corpus):
    training = {}
    for clip, f in zip(corpus.clips, corpus.fields):
        training.setdefault(clip.class_id, []).append((clip.clip_id, f))
    return build_bank(training, 4, seed=3)


def base_config(**kw):
    return replace(ExperimentConfig(seed=EXPERIMENT_SEED, n_per_class=4, train_fraction=0.6, runs=5), **kw)


def test_c01_fft_matches_direct(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst, n = 0.0, 0
    for _ in range(150):
        B = int(rng.integers(2, 11))
        kd, td = int(rng.integers(1, 20)), int(rng.integers(1, 40))
        K, T = kd + int(rng.integers(0, 30)), td + int(rng.integers(0, 80))
        sig = random_field(rng, B, K, T, sharp=bool(rng.integers(2)))
        det = make_detector(random_field(rng, B, kd, td))
        worst = max(worst, float(np.max(np.abs(match_fft(sig, det).values - match_direct(sig, det).values))))
        n += 1
    elapsed = time.perf_counter() - t0
    ok = n >= 100 and worst < 1e-6 and elapsed < 60
    report(capsys, 1, ok, f"{n} instances, max |fft-direct| = {worst:.2e}, {elapsed:.1f} s")
    assert ok


def test_c02_spectrogram_oracle(capsys):
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(20):
        x = rng.standard_normal(int(rng.integers(256, 2048)))
        fast = compute_spectrogram(Signal(x, 11025), SpectrogramParams()).values
        ref = direct_spectrogram(x, 256, 128)
        worst = max(worst, float(np.max(np.abs(fast - ref) / np.abs(ref).max())))
    ok = worst < 1e-9
    report(capsys, 2, ok, f"20 signals, max relative error = {worst:.2e}")
    assert ok


def test_c03_loudness_invariance(capsys, corpus, bank48):
    rng = np.random.default_rng(303)
    picks = rng.choice(len(corpus.clips), 10, replace=False)
    worst = 0.0
    for i in picks:
        sig = corpus.clips[i].signal
        base = featurize(sig, bank48).values
        for a in (0.1, 0.5, 2.0, 8.0):
            worst = max(worst, float(np.max(np.abs(featurize(sig.scaled(a), bank48).values - base))))
    ok = worst <= 1e-6
    report(capsys, 3, ok, f"10 clips x 4 gains, max feature difference = {worst:.2e}")
    assert ok


def test_c04_similarity_and_pooling_properties(capsys, bank48):
    rng = np.random.default_rng(404)
    problems = []
    for _ in range(500):
        B = int(rng.integers(2, 17))
        h1 = rng.dirichlet(np.ones(B) * rng.uniform(0.1, 3))
        h2 = rng.dirichlet(np.ones(B) * rng.uniform(0.1, 3))
        s = bhattacharyya(h1, h2)
        if not (0.0 <= s <= 1.0 + 1e-12) or abs(bhattacharyya(h1, h1) - 1.0) > 1e-12:
            problems.append("similarity")
    for _ in range(30):
        sig = random_field(rng, 8, 129, int(rng.integers(32, 200)), sharp=True)
        maps = match_bank(sig, bank48)
        feats = np.concatenate([alt_max_pool(m.values) for m in maps])
        if feats.shape[0] != len(bank48) * POOL_SIZE:
            problems.append("length")
        for m in maps:
            if m.values.min() < -1e-9 or m.values.max() > 1 + 1e-9:
                problems.append("map range")
            pooled = alt_max_pool(m.values)
            if pooled[0] != m.values.max() or np.any(pooled > pooled[0]):
                problems.append("max dominance")
    ok = not problems
    report(capsys, 4, ok, f"violations: {sorted(set(problems)) or 'none'}")
    assert ok


def test_c05_nmf(capsys):
    worst_rise, negative = -np.inf, False
    for seed in range(20):
        rng = np.random.default_rng(500 + seed)
        X = rng.random((int(rng.integers(10, 60)), int(rng.integers(5, 40))))

        def check(it, W, H):
            nonlocal negative
            negative |= bool((W < 0).any() or (H < 0).any())

        model, _ = nmf_fit(X, NmfConfig(rank=int(rng.integers(1, 8)), max_iter=300, rel_tol=0, seed=seed),
                           callback=check)
        worst_rise = max(worst_rise, float(np.max(np.diff(model.history))))
    rng = np.random.default_rng(599)
    X = np.outer(rng.uniform(0.1, 3, 40), rng.uniform(0.1, 3, 25))
    model, H = nmf_fit(X, NmfConfig(rank=1, max_iter=2000, rel_tol=1e-12))
    rel = float(np.linalg.norm(X - model.W @ H) / np.linalg.norm(X))
    ok = worst_rise <= 1e-10 and not negative and rel < 1e-3
    report(capsys, 5, ok, f"max objective rise {worst_rise:.2e}, negative iterate: {negative}, rank-1 error {rel:.2e}")
    assert ok


def test_c06_classifier_sanity(capsys):
    rng = np.random.default_rng(606)
    X = rng.standard_normal((200, 6))
    y = rng.integers(0, 5, 200)
    self_acc = float(np.mean(knn_predict_batch(LabeledSet(X, y), X, k=1) == y))
    Xx = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    yx = np.array([0, 0, 1, 1])
    xor_model = svm_train(LabeledSet(Xx, yx), SvmConfig(C=100.0, sigma=0.5), seed=0)
    xor_acc = float(np.mean(svm_predict_batch(xor_model, Xx) == yx))
    worst_kkt = 0.0
    for seed in range(10):
        r = np.random.default_rng(seed)
        n = int(r.integers(20, 120))
        Xt = r.standard_normal((n, 3))
        yt = np.where(Xt[:, 0] + Xt[:, 1] ** 2 + 0.3 * r.standard_normal(n) > 0.5, 1.0, -1.0)
        C = float(r.choice([0.5, 5.0, 50.0]))
        gram = rbf_kernel(Xt, Xt, float(r.choice([0.1, 0.5, 2.0])))
        alpha, b, _, _ = train_binary(gram, yt, C, 1e-3, 10, seed)
        worst_kkt = max(worst_kkt, kkt_violation(gram, yt, alpha, b, C))
    ok = self_acc == 1.0 and xor_acc == 1.0 and worst_kkt <= 1e-3
    report(capsys, 6, ok, f"kNN self-accuracy {self_acc:.3f}, XOR training accuracy {xor_acc:.3f}, "
                          f"max KKT violation {worst_kkt:.2e}")
    assert ok


def test_c07_end_to_end(capsys, corpus, store):
    t0 = time.perf_counter()
    svm = run_experiment(base_config(classifier="svm-a"), corpus, store=store)
    knn = run_experiment(base_config(classifier="knn", knn_k=5), corpus, store=store)
    elapsed = time.perf_counter() - t0
    n_clips = len(corpus.clips)
    ok = (n_clips >= 480 and svm["mean"] >= 0.90 and svm["std"] <= 0.05 and knn["mean"] >= 0.85
          and elapsed < 600)
    report(capsys, 7, ok, f"{n_clips} clips, SVM-A {svm['mean']:.4f} (std {svm['std']:.4f}), "
                          f"kNN {knn['mean']:.4f}, {elapsed:.0f} s")
    assert ok


def test_c08_trends(capsys, corpus, store):
    k5 = run_experiment(base_config(classifier="knn", knn_k=5, runs=10), corpus, store=store)
    k91 = run_experiment(base_config(classifier="knn", knn_k=91, runs=10), corpus, store=store)
    f60 = run_experiment(base_config(), corpus, store=store)
    f10 = run_experiment(base_config(train_fraction=0.1), corpus, store=store)
    nd = {n: run_experiment(base_config(bank_size=n), corpus, store=store)["mean"] for n in (3, 12, 48)}
    checks = {
        "k": k5["mean"] >= k91["mean"],
        "fraction": f60["mean"] >= f10["mean"],
        "bank 12>=3": nd[12] >= nd[3],
        "bank 12 near 48": nd[48] - nd[12] <= 0.10,
    }
    ok = all(checks.values())
    report(capsys, 8, ok, f"k=5 {k5['mean']:.4f} vs k=91 {k91['mean']:.4f}; frac 0.6 {f60['mean']:.4f} vs "
                          f"0.1 {f10['mean']:.4f}; N_D 3/12/48 {nd[3]:.4f}/{nd[12]:.4f}/{nd[48]:.4f}")
    assert ok


def test_c09_performance(capsys, bank48):
    spec = default_class_specs()[0]
    spec = replace(spec, duration=(2.0, 2.0))
    clip = synth_event(spec, 9)
    bank48._spectra.clear()
    t0 = time.perf_counter()
    fv = featurize(clip, bank48)
    cold = time.perf_counter() - t0
    assert len(fv) == 48 * POOL_SIZE

    rng = np.random.default_rng(909)
    sig = random_field(rng, 8, 129, 256, sharp=True)
    det = make_detector(random_field(rng, 8, 64, 32))

    def best(fn, reps=3):
        times = []
        for _ in range(reps):
            t = time.perf_counter()
            fn(sig, det)
            times.append(time.perf_counter() - t)
        return min(times)

    t_fft, t_direct = best(match_fft), best(match_direct)
    ratio = t_direct / t_fft
    ok = cold < 1.0 and ratio >= 5.0
    report(capsys, 9, ok, f"2 s clip vs 48 detectors in {cold * 1e3:.0f} ms; direct/fft = {ratio:.1f}x")
    assert ok


def test_c10_cli_determinism(capsys, tmp_path):
    def tree(root):
        return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}

    results = {}
    for name in ("a", "b"):
        d = tmp_path / name
        assert main(["synth", "--out", str(d / "corpus"), "--seed", "13", "--counts", "6"]) == 0
        m = str(d / "corpus/manifest.json")
        assert main(["bank", "build", "--manifest", m, "--out", str(d / "bank"), "--seed", "5"]) == 0
        assert main(["evaluate", "--manifest", m, "--out", str(d / "report.json"), "--seed", "5", "--runs", "2",
                     "--classifier", "svm-a"]) == 0
        results[name] = {k: tree(d / k) for k in ("corpus", "bank")}
        results[name]["report"] = (d / "report.json").read_bytes()
    same = {k: results["a"][k] == results["b"][k] for k in ("corpus", "bank", "report")}
    json.loads(results["a"]["report"])
    ok = all(same.values())
    report(capsys, 10, ok, "byte-identical: " + ", ".join(f"{k}={v}" for k, v in same.items()))
    assert ok
