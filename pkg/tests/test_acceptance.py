"""Acceptance gate: one test per shipped guarantee, one printed line each.

Every test prints "criterion N (<name>): PASS/FAIL - detail" through the
capture-disabled announcer so the verdicts survive in plain pytest
output, then asserts, so a regression both prints FAIL and fails.
"""
import json
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient

import oracles
from canopy import (
    ConvSpec,
    ServeConfig,
    Tensor,
    build_mini_inception,
    bundle_bytes,
    conv2d,
    create_app,
    dequantize,
    eliminate_dead_nodes,
    evaluate,
    fold_batch_norm,
    fold_constants,
    forward,
    fully_connected,
    global_avg_pool,
    head_gradients,
    load_bundle,
    optimize,
    pool,
    prepare_image,
    probe_batch,
    quantize_array,
    run_pipeline,
    softmax,
)
from canopy.fixtures import SPECIES

LABELS = sorted(SPECIES)


@pytest.fixture
def announce(capsys):
    def emit(line: str) -> None:
        with capsys.disabled():
            print(line, flush=True)

    return emit


@pytest.fixture(scope="module")
def retrain_runs(dataset_dir, tmp_path_factory):
    """Two cold-cache pipeline runs over the synthetic dataset, first one timed."""
    base = tmp_path_factory.mktemp("acceptance-retrain")
    started = time.monotonic()
    first = run_pipeline(dataset_dir, base / "first")
    elapsed = time.monotonic() - started
    second = run_pipeline(dataset_dir, base / "second")
    return first, second, elapsed


def test_criterion_1_kernel_oracles(announce):
    started = time.monotonic()
    rng = np.random.default_rng(1001)
    cases = 50
    failures = []

    def ints(*shape):
        return rng.integers(-4, 5, size=shape).astype(np.float64)

    for case in range(cases):
        b = int(rng.integers(1, 3))
        h = int(rng.integers(1, 9))
        w = int(rng.integers(1, 9))
        cin = int(rng.integers(1, 5))
        cout = int(rng.integers(1, 5))
        padding = "same" if case % 2 == 0 else "valid"
        stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))

        kh = int(rng.integers(1, h + 1)) if padding == "valid" else int(rng.integers(1, 4))
        kw = int(rng.integers(1, w + 1)) if padding == "valid" else int(rng.integers(1, 4))
        x = ints(b, h, w, cin)
        kernel = ints(kh, kw, cin, cout)
        bias = ints(cout) if case % 3 == 0 else None
        got = conv2d(
            Tensor(x),
            ConvSpec(
                kernel=Tensor(kernel),
                bias=Tensor(bias) if bias is not None else None,
                stride=stride,
                padding=padding,
            ),
        ).data
        want = oracles.conv2d_naive(x, kernel, bias, stride, padding)
        if not np.array_equal(got, want):
            failures.append(f"conv2d case {case}")

        wh = int(rng.integers(1, h + 1)) if padding == "valid" else int(rng.integers(1, 4))
        ww = int(rng.integers(1, w + 1)) if padding == "valid" else int(rng.integers(1, 4))
        for mode in ("max", "avg"):
            got = pool(Tensor(x), mode=mode, window=(wh, ww),
                       stride=stride, padding=padding).data
            want = oracles.pool_naive(x, mode, (wh, ww), stride, padding)
            if not np.array_equal(got, want):
                failures.append(f"pool/{mode} case {case}")

        got = global_avg_pool(Tensor(x)).data
        if not np.array_equal(got, oracles.global_avg_pool_naive(x)):
            failures.append(f"global_avg_pool case {case}")

        n = int(rng.integers(1, 5))
        d = int(rng.integers(1, 9))
        k = int(rng.integers(1, 7))
        feats = ints(n, d)
        W = ints(d, k)
        fc_bias = ints(k)
        got = fully_connected(Tensor(feats), Tensor(W), Tensor(fc_bias)).data
        if not np.array_equal(got, oracles.fully_connected_naive(feats, W, fc_bias)):
            failures.append(f"fully_connected case {case}")

    elapsed = time.monotonic() - started
    ok = not failures and elapsed < 30.0
    announce(
        f"criterion 1 (kernel oracles): {'PASS' if ok else 'FAIL'} - "
        f"conv2d/pool/gap/fc exact on {cases} integer-valued cases each, "
        f"{elapsed:.1f}s (< 30s)"
        + (f"; mismatches: {failures[:4]}" if failures else "")
    )
    assert not failures, failures[:10]
    assert elapsed < 30.0


def test_criterion_2_gradient_check(announce):
    started = time.monotonic()
    rng = np.random.default_rng(2002)
    worst = 0.0
    instances = 20
    for _ in range(instances):
        feats = rng.normal(size=(4, 3))
        W = rng.normal(size=(3, 6))
        b = rng.normal(size=6)
        labels = rng.integers(0, 6, size=4)
        dW, db, _ = head_gradients(Tensor(feats), Tensor(W), Tensor(b), labels)
        fd_W, fd_b = oracles.finite_difference_gradients(feats, W, b, labels, h=1e-5)
        for got, want in ((dW.data, fd_W), (db.data, fd_b)):
            rel = np.abs(got - want) / np.maximum(np.abs(want), 1e-6)
            worst = max(worst, float(rel.max()))
    elapsed = time.monotonic() - started
    ok = worst <= 1e-4 and elapsed < 10.0
    announce(
        f"criterion 2 (gradient check): {'PASS' if ok else 'FAIL'} - "
        f"max relative error {worst:.2e} (<= 1e-4) over {instances} "
        f"(batch=4, d=3, k=6) instances, {elapsed:.1f}s (< 10s)"
    )
    assert worst <= 1e-4
    assert elapsed < 10.0


def test_criterion_3_softmax_contracts(announce):
    rng = np.random.default_rng(3003)
    logits = rng.normal(scale=10.0, size=(64, 9))
    probs = softmax(Tensor(logits)).data
    sum_err = float(np.abs(probs.sum(axis=1) - 1.0).max())

    shift = softmax(Tensor(logits + 123.456)).data
    shift_err = float(np.abs(probs - shift).max())

    extreme = softmax(Tensor([[1000.0, 0.0, -1000.0]])).data
    finite = bool(np.isfinite(extreme).all())
    extreme_sum = float(abs(extreme.sum() - 1.0))

    ok = sum_err <= 1e-6 and shift_err <= 1e-9 and finite and extreme_sum <= 1e-6
    announce(
        f"criterion 3 (softmax contracts): {'PASS' if ok else 'FAIL'} - "
        f"row-sum error {sum_err:.1e} (<= 1e-6), shift error {shift_err:.1e} "
        f"(<= 1e-9), logit 1000 finite={finite}"
    )
    assert sum_err <= 1e-6
    assert shift_err <= 1e-9
    assert finite and extreme_sum <= 1e-6


def test_criterion_4_optimizer_equivalence(announce):
    started = time.monotonic()
    graph = build_mini_inception(6, seed=0)
    probes16 = probe_batch(graph, count=16)
    base16 = forward(graph, probes16).data

    const_exact = np.array_equal(base16, forward(fold_constants(graph), probes16).data)
    dce_exact = np.array_equal(base16, forward(eliminate_dead_nodes(graph), probes16).data)
    bn_dev = float(np.max(np.abs(
        base16 - forward(fold_batch_norm(graph), probes16).data
    )))

    final, _ = optimize(graph, labels=LABELS)
    probes200 = probe_batch(graph, count=200, seed=404)
    agree = 0
    for start in range(0, 200, 50):
        chunk = Tensor(probes200.data[start:start + 50])
        agree += int(np.sum(
            np.argmax(forward(graph, chunk).data, axis=1)
            == np.argmax(forward(final, chunk).data, axis=1)
        ))
    agreement = agree / 200.0

    float_bundle = bundle_bytes(graph, LABELS)
    final_bundle = bundle_bytes(final, LABELS)
    size_ratio = len(final_bundle) / len(float_bundle)

    float_payload = sum(
        t.data.astype("<f4").nbytes for n in graph.nodes for t in n.weights.values()
    )
    int8_payload = sum(qt.data.nbytes for n in final.nodes for qt in n.quant.values())
    payload_ratio = int8_payload / float_payload

    elapsed = time.monotonic() - started
    ok = (const_exact and dce_exact and bn_dev <= 1e-4 and agreement >= 0.95
          and size_ratio <= 0.40 and payload_ratio <= 0.26 and elapsed < 120.0)
    announce(
        f"criterion 4 (optimizer equivalence): {'PASS' if ok else 'FAIL'} - "
        f"fold_constants bit-exact={const_exact}, dce bit-exact={dce_exact}, "
        f"fold_batch_norm dev {bn_dev:.1e} (<= 1e-4), top-1 agreement "
        f"{agreement:.1%} (>= 95%), bundle ratio {size_ratio:.1%} (<= 40%), "
        f"int8 payload ratio {payload_ratio:.1%} (<= 26%), {elapsed:.1f}s (< 120s)"
    )
    assert const_exact and dce_exact
    assert bn_dev <= 1e-4
    assert agreement >= 0.95
    assert size_ratio <= 0.40
    assert payload_ratio <= 0.26
    assert elapsed < 120.0


def test_criterion_5_quantization_bound(announce):
    rng = np.random.default_rng(5005)
    fixtures = [rng.uniform(-1.0, 1.0, size=(64, 64)) for _ in range(10)]
    spread = rng.uniform(-1.0, 1.0, size=257)
    spread[0], spread[1] = -1.0, 1.0
    fixtures.append(spread)
    fixtures.append(np.zeros((16, 16)))
    fixtures.extend(np.full((9,), v) for v in (1.0, -2.5, 0.3, 100.0))

    worst_margin = -np.inf
    violations = 0
    for values in fixtures:
        qt = quantize_array(values)
        err = float(np.max(np.abs(values - dequantize(qt))))
        bound = qt.desc.scale / 2 * (1 + 1e-9)
        worst_margin = max(worst_margin, err - qt.desc.scale / 2)
        if err > bound:
            violations += 1
    ok = violations == 0
    announce(
        f"criterion 5 (quantization bound): {'PASS' if ok else 'FAIL'} - "
        f"|w - dequant(quant(w))| <= scale/2 on {len(fixtures)} fixtures "
        f"([-1,1], all-zero, constants); worst excess {max(worst_margin, 0.0):.1e}"
    )
    assert violations == 0


def test_criterion_6_end_to_end_retrain(announce, retrain_runs, dataset_dir):
    result, _, elapsed = retrain_runs
    train_acc = result.train_accuracy
    val_acc = result.validation_accuracy

    loaded_graph, loaded_labels = load_bundle(result.model_path)
    entries = [e for e in result.index.entries if e.split == "train"]
    images = np.concatenate(
        [prepare_image(e.path, 64).data for e in entries], axis=0
    )
    labels = np.array([e.class_index for e in entries])
    acc_graph, confusion_graph = evaluate(loaded_graph, images, labels)

    # reproduce the in-memory evaluation the pipeline reported
    from canopy import compute_bottlenecks

    splits = compute_bottlenecks(result.graph, result.index,
                                 result.model_path.parent / "bottleneck_cache")
    acc_head, confusion_head = evaluate(
        result.head, splits["train"].features, splits["train"].labels
    )
    bit_exact = (acc_graph == acc_head
                 and np.array_equal(confusion_graph, confusion_head))

    ok = (train_acc >= 0.95 and val_acc >= 0.80 and bit_exact and elapsed < 120.0)
    announce(
        f"criterion 6 (end-to-end retrain): {'PASS' if ok else 'FAIL'} - "
        f"train accuracy {train_acc:.1%} (>= 95%), validation accuracy "
        f"{val_acc:.1%} (>= 80%), reloaded-bundle predictions bit-exact="
        f"{bit_exact}, {elapsed:.1f}s (< 120s)"
    )
    assert train_acc >= 0.95
    assert val_acc >= 0.80
    assert bit_exact
    assert elapsed < 120.0


def test_criterion_7_determinism(announce, retrain_runs):
    first, second, _ = retrain_runs
    model_same = first.model_path.read_bytes() == second.model_path.read_bytes()
    labels_same = first.labels_path.read_bytes() == second.labels_path.read_bytes()
    expected = "".join(f"{name}\n" for name in LABELS)
    content_ok = first.labels_path.read_text(encoding="utf-8") == expected
    ok = model_same and labels_same and content_ok
    announce(
        f"criterion 7 (determinism): {'PASS' if ok else 'FAIL'} - "
        f"model.trmb byte-identical={model_same}, labels.txt byte-identical="
        f"{labels_same}, label content = six sorted class names={content_ok}"
    )
    assert model_same and labels_same and content_ok


def test_criterion_8_service_contract(announce, retrain_runs, dataset_dir):
    first, _, _ = retrain_runs
    app = create_app(ServeConfig(model_path=first.model_path))
    with TestClient(app) as client:
        sample = sorted(dataset_dir.glob("magnolia/*.png"))[0]
        response = client.post(
            "/api/classify?k=6", content=sample.read_bytes(),
            headers={"content-type": "application/octet-stream"},
        )
        body = response.json()
        schema_ok = (
            response.status_code == 200
            and set(body) == {"predictions", "model"}
            and set(body["model"]) == {"name", "version"}
            and all(set(p) == {"label", "probability", "description"}
                    for p in body["predictions"])
        )
        top1_ok = body["predictions"][0]["label"] == "magnolia"
        prob_sum = sum(p["probability"] for p in body["predictions"])
        sum_ok = abs(prob_sum - 1.0) <= 1e-6

        bad = client.post("/api/classify", content=b"not an image at all")
        undecodable_ok = (
            400 <= bad.status_code < 500
            and bool(bad.json().get("error", {}).get("code"))
        )

        payload = sample.read_bytes()

        def hit(_):
            return client.post(
                "/api/classify", content=payload,
                headers={"content-type": "application/octet-stream"},
            )

        with ThreadPoolExecutor(max_workers=32) as pool_:
            responses = list(pool_.map(hit, range(100)))
        concurrency_ok = (
            all(r.status_code == 200 for r in responses)
            and len({r.content for r in responses}) == 1
        )

    ok = schema_ok and top1_ok and sum_ok and undecodable_ok and concurrency_ok
    announce(
        f"criterion 8 (service contract): {'PASS' if ok else 'FAIL'} - "
        f"true class top-1={top1_ok}, probability sum {prob_sum:.6f} "
        f"(1 ± 1e-6), schema valid={schema_ok}, undecodable -> 4xx with "
        f"code={undecodable_ok}, 100 concurrent identical={concurrency_ok}"
    )
    assert schema_ok and top1_ok and sum_ok
    assert undecodable_ok
    assert concurrency_ok
