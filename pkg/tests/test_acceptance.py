"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the per-criterion
lines inline. The end-to-end detection criteria share one generated
20-sensor, 5000-step train/test pair with three injected anomalies (one per
kind) and drive the real bundle pipeline (train -> calibrate -> detect ->
evaluate) for each detector.
"""

import filecmp
import json
import time

import numpy as np
import pandas as pd
import pytest

from catseq import (
    AnomalyInjection,
    SentenceTokenizer,
    SyntheticSpec,
    TransformerForecaster,
    calibrate_threshold,
    f_beta,
    flag_times,
    fit_svd,
    generate_synthetic,
)
from catseq.bundle import RunConfig, detect_bundle, evaluate_report, train_bundle
from catseq.cli import main
from catseq.evaluation import round_half_up
from catseq.nn import (
    Tensor,
    dense,
    embedding_lookup,
    finite_difference_check,
    layer_norm,
    lstm_sequence,
    init_lstm,
    scaled_dot_attention,
    softmax_cross_entropy,
)
from conftest import periodic_frame

SEED = 7
DETECT_SPEC = SyntheticSpec(
    sensors=20,
    values_per_sensor=4,
    period=12,
    length=5000,
    coupled_fraction=0.5,
    anomalies=[
        AnomalyInjection("unseen_letter", 1000, 30),
        AnomalyInjection("unseen_word", 2500, 30),
        AnomalyInjection("decoupling", 4000, 30),
    ],
)


def report_line(criterion, ok, detail, elapsed):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE criterion {criterion}: {status} - {detail} ({elapsed:.1f}s)")


@pytest.fixture(scope="module")
def detect_pair():
    return generate_synthetic(DETECT_SPEC, seed=SEED)


def run_detector(config, train, test, truths, out_root):
    train_bundle(config, train, out_root / "bundle")
    report = detect_bundle(out_root / "bundle", test, out_root / "report")
    return evaluate_report(report, truths)


def assert_detection_criterion(metrics):
    assert metrics["f1"] >= 0.8, f"F1 {metrics['f1']:.3f} below 0.8"
    hits = [r["hit_rate"] for r in metrics["rootcause"] if r["hit_rate"] is not None]
    good = sum(h >= 0.25 for h in hits)
    assert good >= 2, f"only {good} of 3 anomalies had >=25% culprits in the top 10%"
    return hits


def test_criterion_1_f_score_arithmetic():
    t0 = time.time()
    table = [
        (13, 6, 0, 0.81, 0.73),
        (4, 2, 0, 0.80, 0.71),
        (9, 6, 4, 0.64, 0.62),
        (4, 0, 0, 1.00, 1.00),
        (12, 3, 1, 0.86, 0.82),
        (4, 3, 0, 0.73, 0.63),
    ]
    for tp, fp, fn, f1, f05 in table:
        assert round_half_up(f_beta(tp, fp, fn, 1.0)) == pytest.approx(f1)
        assert round_half_up(f_beta(tp, fp, fn, 0.5)) == pytest.approx(f05)
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report_line(1, True, "six reference TP/FP/FN rows reproduced to 2 d.p.", elapsed)


def test_criterion_2_tokenizer_fidelity(rng):
    t0 = time.time()
    frame = pd.DataFrame(
        {"Sensor0": ["0", "2", "1", "2"]}, index=[5399, 5400, 5401, 5402]
    )
    corpus = SentenceTokenizer(word_length=4).fit_transform(frame)
    assert corpus.sentence(0).words["Sensor0"].text() == "Sensor0_0_2_1_2"
    assert corpus.sentence(0).time == 5402
    for _ in range(100):
        T = int(rng.integers(2, 60))
        L = int(rng.integers(1, T + 1))
        cols = {f"S{j}": [str(v) for v in rng.integers(0, 3, size=T)] for j in range(int(rng.integers(1, 4)))}
        corpus = SentenceTokenizer(word_length=L).fit_transform(pd.DataFrame(cols))
        assert len(corpus) == T - L + 1
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report_line(2, True, "canonical word example and count law on 100 random series", elapsed)


def test_criterion_3_svd_projector_properties(rng):
    t0 = time.time()
    # idempotence and Pythagoras on 100 random vectors
    W = rng.normal(size=(12, 9))
    proj = fit_svd(W, k=4)
    for _ in range(100):
        x = rng.normal(size=12)
        px = proj.project(x)
        assert np.linalg.norm(proj.project(px) - px) <= 1e-8 * max(np.linalg.norm(x), 1.0)
        lhs = np.linalg.norm(px - x) ** 2 + np.linalg.norm(px) ** 2
        assert lhs == pytest.approx(np.linalg.norm(x) ** 2, rel=1e-8)
    # sampled Eckart-Young dominance on 20 random small matrices
    for i in range(20):
        m, n = (4, 5) if i % 2 == 0 else (6, 8)
        W = rng.normal(size=(m, n))
        U, sigma, Vt = np.linalg.svd(W, full_matrices=False)
        k = int(rng.integers(1, min(m, n)))
        best = np.linalg.norm(W - U[:, :k] @ np.diag(sigma[:k]) @ Vt[:k])
        left = rng.normal(size=(1000, m, k))
        right = rng.normal(size=(1000, k, n))
        rivals = np.linalg.norm(W - left @ right, axis=(1, 2))
        assert np.all(best <= rivals + 1e-12)
    elapsed = time.time() - t0
    assert elapsed < 30.0
    report_line(3, True, "idempotence, Pythagoras, and sampled optimality", elapsed)


def test_criterion_4_gradient_integrity(rng):
    t0 = time.time()
    worst = 0.0
    for rep in range(20):
        B = int(rng.integers(1, 4))
        I, O = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        x = Tensor(rng.normal(size=(B, I)), requires_grad=True)
        W = Tensor(rng.normal(size=(I, O)), requires_grad=True)
        b = Tensor(rng.normal(size=O), requires_grad=True)
        worst = max(worst, finite_difference_check(lambda: (dense(x, W, b).tanh() ** 2).sum(), [x, W, b]))

        table = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        idx = rng.integers(0, 5, size=(B, 2))
        worst = max(
            worst,
            finite_difference_check(lambda: (embedding_lookup(table, idx) ** 2).sum(), [table]),
        )

        C = int(rng.integers(2, 6))
        logits = Tensor(rng.normal(size=(B, C)), requires_grad=True)
        ints = rng.integers(0, C, size=B)
        worst = max(worst, finite_difference_check(lambda: softmax_cross_entropy(logits, ints), [logits]))
        dist = rng.dirichlet(np.ones(C), size=B)
        worst = max(worst, finite_difference_check(lambda: softmax_cross_entropy(logits, dist), [logits]))

        L, D = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        q = Tensor(rng.normal(size=(B, L, D)), requires_grad=True)
        k = Tensor(rng.normal(size=(B, L, D)), requires_grad=True)
        v = Tensor(rng.normal(size=(B, L, D)), requires_grad=True)
        mask = rng.random((L, L)) < 0.6
        mask[np.arange(L), np.arange(L)] = True
        worst = max(
            worst,
            finite_difference_check(lambda: (scaled_dot_attention(q, k, v, mask) ** 2).sum(), [q, k, v]),
        )

        H = int(rng.integers(1, 4))
        p = init_lstm(rng, I, H)
        xs = [Tensor(rng.normal(size=(B, I)), requires_grad=True) for _ in range(3)]

        def unrolled():
            hs, (h, c) = lstm_sequence(xs, p)
            return (hs[-1] ** 2).sum() + (c**2).sum()

        worst = max(worst, finite_difference_check(unrolled, [p.Wx, p.Wh, p.b] + xs))

        g = Tensor(rng.normal(size=D + 1), requires_grad=True)
        bb = Tensor(rng.normal(size=D + 1), requires_grad=True)
        xx = Tensor(rng.normal(size=(B, D + 1)), requires_grad=True)
        worst = max(worst, finite_difference_check(lambda: (layer_norm(xx, g, bb) ** 2).sum(), [xx, g, bb]))
    elapsed = time.time() - t0
    assert worst < 1e-4, f"worst relative gradient error {worst:.2e}"
    assert elapsed < 120.0
    report_line(4, True, f"all ops pass 20 finite-difference reps (worst {worst:.1e})", elapsed)


def test_criterion_5_dual_attention_causality(rng):
    t0 = time.time()
    frame = periodic_frame({"A": [0, 1, 2], "B": ["x", "y"], "C": [4, 5, 6, 7]}, 40)
    corpus = SentenceTokenizer(word_length=2).fit_transform(frame)
    model = TransformerForecaster(
        d_model=16, heads=2, blocks=2, lookback=3, ffn_dim=32, epochs=2, batch_size=16, seed=1
    ).fit(corpus)
    S = len(corpus.sensor_order)
    L = (model.lookback + 1) * S
    m = corpus.vocabulary.size
    worst_target = 0.0
    for _ in range(50):
        tokens = rng.integers(1, m + 1, size=(1, L))
        tokens[:, -S:] = 0
        base = model.target_logits(tokens)
        perturbed = tokens.copy()
        perturbed[:, -S:] = rng.integers(0, m + 1, size=S)
        diff = np.max(np.abs(model.target_logits(perturbed) - base))
        worst_target = max(worst_target, diff)
        assert diff < 1e-12
        ctx = tokens.copy()
        pos = int(rng.integers(L - S))
        ctx[0, pos] = (ctx[0, pos] % m) + 1
        assert np.max(np.abs(model.target_logits(ctx) - base)) > 0
    elapsed = time.time() - t0
    assert elapsed < 60.0
    report_line(
        5, True, f"target perturbations inert (max {worst_target:.1e}), context perturbations felt", elapsed
    )


def test_criterion_6a_svd_detection(detect_pair, tmp_path):
    train, test, truths = detect_pair
    t0 = time.time()
    config = RunConfig(model="svd", word_length=5, energy=1.0, alpha=1.25, seed=SEED)
    metrics = run_detector(config, train, test, truths, tmp_path)
    elapsed = time.time() - t0
    hits = assert_detection_criterion(metrics)
    assert elapsed < 60.0
    report_line(
        "6a (svd)",
        True,
        f"F1={metrics['f1']:.2f} ({metrics['tp']}/{metrics['fp']}/{metrics['fn']}), "
        f"rootcause hits {['%.2f' % h for h in hits]}",
        elapsed,
    )


def test_criterion_6b_transformer_detection(detect_pair, tmp_path):
    train, test, truths = detect_pair
    t0 = time.time()
    config = RunConfig(
        model="transformer",
        word_length=5,
        alpha=1.25,
        seed=0,
        d_model=32,
        heads=2,
        blocks=1,
        lookback=4,
        epochs=5,
        batch_size=64,
    )
    metrics = run_detector(config, train, test, truths, tmp_path)
    elapsed = time.time() - t0
    hits = assert_detection_criterion(metrics)
    assert elapsed < 900.0
    report_line(
        "6b (transformer)",
        True,
        f"F1={metrics['f1']:.2f} ({metrics['tp']}/{metrics['fp']}/{metrics['fn']}), "
        f"rootcause hits {['%.2f' % h for h in hits]}",
        elapsed,
    )


def test_criterion_6c_lstm_detection(detect_pair, tmp_path):
    train, test, truths = detect_pair
    t0 = time.time()
    config = RunConfig(
        model="lstm",
        word_length=5,
        alpha=1.25,
        seed=0,
        embed_dim=None,  # sensor-count default (2 for 20 sensors)
        embed_epochs=6,
        lstm_dims=(64, 48),
        lookback=10,
        epochs=8,
        batch_size=64,
    )
    metrics = run_detector(config, train, test, truths, tmp_path)
    elapsed = time.time() - t0
    hits = assert_detection_criterion(metrics)
    assert elapsed < 900.0
    report_line(
        "6c (lstm)",
        True,
        f"F1={metrics['f1']:.2f} ({metrics['tp']}/{metrics['fp']}/{metrics['fn']}), "
        f"rootcause hits {['%.2f' % h for h in hits]}",
        elapsed,
    )


def test_criterion_7_threshold_semantics(rng):
    t0 = time.time()
    from catseq.detection import ScoreSeries

    scores = rng.exponential(scale=2.0, size=4000)
    series = ScoreSeries(
        times=np.arange(4000),
        scores=scores,
        contributions=scores[:, None],
        sensor_order=("S",),
    )
    th1 = calibrate_threshold(series, alpha=1.0)
    flagged = flag_times(series, th1)
    assert len(flagged) <= 0.005 * len(series)
    previous = None
    for alpha in (1.0, 1.25, 1.5):
        th = calibrate_threshold(series, alpha=alpha)
        current = set(flag_times(series, th).tolist())
        if previous is not None:
            assert current <= previous
        previous = current
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report_line(7, True, "self-calibration flags <= 0.5% and shrinks with alpha", elapsed)


def test_criterion_8_pipeline_determinism(tmp_path):
    t0 = time.time()
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(DETECT_SPEC.to_json_dict()))
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps({"model": "svd", "word_length": 5, "energy": 1.0, "seed": SEED})
    )
    outputs = []
    for run in ("run1", "run2"):
        root = tmp_path / run
        data, bundle, report, metrics = (
            root / "data",
            root / "bundle",
            root / "report",
            root / "metrics",
        )
        assert main(["synth", "--spec", str(spec_path), "--seed", str(SEED), "--out", str(data)]) == 0
        assert main(["train", "--config", str(config_path), "--train", str(data / "train.csv"), "--out", str(bundle)]) == 0
        assert main(["detect", "--bundle", str(bundle), "--test", str(data / "test.csv"), "--out", str(report)]) == 0
        assert main(["eval", "--events", str(report / "events.json"), "--truths", str(data / "truths.json"), "--out", str(metrics)]) == 0
        outputs.append(root)
    mismatches = []
    for rel in sorted(p.relative_to(outputs[0]) for p in outputs[0].rglob("*") if p.is_file()):
        if not filecmp.cmp(outputs[0] / rel, outputs[1] / rel, shallow=False):
            mismatches.append(str(rel))
    assert not mismatches, f"byte differences in: {mismatches}"
    elapsed = time.time() - t0
    report_line(8, True, "synth-train-detect-eval byte-identical across two runs", elapsed)
