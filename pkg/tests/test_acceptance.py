"""Acceptance criteria, one test per criterion; each records a PASS/FAIL line for the summary.

Tolerances are pinned as module constants.
"""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import CRITERIA
from flowcam.extract import extract_pcap
from flowcam.faithfulness import consistency, sufficiency
from flowcam.features import FEATURE_NAMES, FeatureMatrix, write_csv
from flowcam.metrics import class_metrics, confusion, macro_metrics
from flowcam.models import ModelSpec, train
from flowcam.pipeline import (
    CAMERAS, LabelSchema, PipelineModel, default_spec, run_report, split, synth_generate, two_stage_classify,
)
from flowcam.stats import mutual_information, pca_fit, pearson_matrix
from flowcam.xai import (
    QuartileDiscretizer, ScoreFunction, attribution_explainer, exact_shapley, kernel_shap, lime_explain,
    sample_background, tree_shap_all,
)
from pcapgen import FIXTURES
from test_features import ONE_PKT_UDP, RST_IDLE, THREE_PKT

ORACLE_TOL = 1e-9
LOCAL_ACCURACY_TOL = 1e-6
KERNEL_FULL_TOL = 1e-9
KERNEL_SAMPLED_FRACTION = 0.05
LIME_MIN_HITS = 95
CONSISTENCY_MIN = 0.7
SUFFICIENCY_MIN = 0.95
ACCURACY_MIN = 0.95
FN_RATE_MAX = 0.03
MI_TOL = 0.01
MI_INDEPENDENT_MAX = 0.02
PEARSON_TOL = 1e-12
ORTHONORMAL_TOL = 1e-9

ORACLE_BUDGET_S = 60
FAITHFULNESS_BUDGET_S = 5 * 60
PIPELINE_BUDGET_S = 10 * 60


def record(n: int, ok: bool, text: str) -> None:
    CRITERIA[n] = (bool(ok), text)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
    assert ok, text


# -- fixture ensembles ---------------------------------------------------------

KINDS_SMALL = [
    ("DT", {"max_depth": 4}), ("RF", {"n_estimators": 6, "max_depth": 4}),
    ("ET", {"n_estimators": 6, "max_depth": 4}), ("XGB", {"n_estimators": 3, "max_depth": 4}),
    ("AB", {"n_estimators": 5, "max_depth": 3}),
]
WIDTHS = [6] * 6 + [8] * 6 + [10] * 5 + [12] * 3  # 20 ensembles, d <= 12


def ensembles():
    out = []
    for i, d in enumerate(WIDTHS):
        rng = np.random.default_rng(100 + i)
        X = rng.normal(size=(400, d))
        w = rng.normal(size=d)
        s = X @ w + 0.7 * X[:, 0] * X[:, 1]
        y = np.where(s > 0.5, "hi", np.where(s < -0.5, "lo", "mid"))
        kind, hp = KINDS_SMALL[i % len(KINDS_SMALL)]
        model = train(ModelSpec(kind, hp, seed=i), X, list(y))
        out.append((model, X[:16], rng))
    return out


@pytest.fixture(scope="module")
def fixture_ensembles():
    return ensembles()


def test_criterion_01_tree_equals_exact(fixture_ensembles):
    start = time.perf_counter()
    worst = 0.0
    for model, B, rng in fixture_ensembles:
        d = B.shape[1]
        X = rng.normal(scale=1.5, size=(100, d))
        phi, base, _ = tree_shap_all(model, X, B)
        for i, row in enumerate(X):
            c = i % model.n_classes
            e = exact_shapley(ScoreFunction(model, c, ScoreFunction.for_class(model, c).mode), row, B)
            worst = max(worst, np.abs(e.phi - phi[i, :, c]).max(), abs(e.base_value - base[c]))
    elapsed = time.perf_counter() - start
    record(1, worst <= ORACLE_TOL and elapsed < ORACLE_BUDGET_S and len(fixture_ensembles) >= 20,
           f"{len(fixture_ensembles)} ensembles x 100 instances, max |dphi| = {worst:.2e} "
           f"(<= {ORACLE_TOL:g}), {elapsed:.1f} s (< {ORACLE_BUDGET_S} s)")


def test_criterion_02_local_accuracy(fixture_ensembles):
    worst_tree = worst_exact = 0.0
    for model, B, _ in fixture_ensembles:
        d = B.shape[1]
        X = np.random.default_rng(d * 7919 + len(model.trees)).normal(scale=1.5, size=(1000, d))
        phi, base, _ = tree_shap_all(model, X, B)
        for c in range(model.n_classes):
            f = ScoreFunction.for_class(model, c)
            gap = f(X) - base[c] - phi[:, :, c].sum(axis=1)
            worst_tree = max(worst_tree, np.abs(gap).max())
        for i, row in enumerate(X):
            f = ScoreFunction.for_class(model, i % model.n_classes)
            a = exact_shapley(f, row, B)
            worst_exact = max(worst_exact, abs(float(f(row)[0]) - a.base_value - a.phi.sum()))
    ok = worst_tree <= LOCAL_ACCURACY_TOL and worst_exact <= LOCAL_ACCURACY_TOL
    record(2, ok, f"1000 instances x {len(fixture_ensembles)} ensembles: tree gap {worst_tree:.2e}, "
                  f"exact gap {worst_exact:.2e} (<= {LOCAL_ACCURACY_TOL:g})")


def test_criterion_03_kernel_shap():
    model8, B8, rng8 = ensembles()[6]  # d = 8
    assert B8.shape[1] == 8
    worst_full = 0.0
    for i, row in enumerate(rng8.normal(size=(10, 8))):
        f = ScoreFunction.for_class(model8, i % model8.n_classes)
        k = kernel_shap(f, row, B8, n_samples=2 ** 8)
        worst_full = max(worst_full, np.abs(k.phi - exact_shapley(f, row, B8).phi).max())

    rng = np.random.default_rng(12)
    X = rng.normal(size=(600, 12))
    y = np.where(X[:, :4].sum(1) + X[:, 4] * X[:, 5] > 0, "p", "n")
    model12 = train(ModelSpec("RF", {"n_estimators": 10, "max_depth": 4}, 0), X, list(y))
    B12 = X[:16]
    f = ScoreFunction.for_class(model12, "p")
    scale = float(np.ptp(f(B12)))
    worst_ratio = 0.0
    for seed in range(10):
        row = X[100 + seed]
        e = exact_shapley(f, row, B12)
        k = kernel_shap(f, row, B12, n_samples=4096, seed=seed)
        worst_ratio = max(worst_ratio, np.abs(k.phi - e.phi).max() / scale)
    ok = worst_full <= KERNEL_FULL_TOL and worst_ratio < KERNEL_SAMPLED_FRACTION
    record(3, ok, f"d=8 full design max |dphi| = {worst_full:.2e} (<= {KERNEL_FULL_TOL:g}); "
                  f"d=12, 4096 samples, 10 seeds: max error {worst_ratio:.2e} of range (< {KERNEL_SAMPLED_FRACTION})")


def test_criterion_04_lime_recovery():
    X = np.random.default_rng(4).normal(size=(1000, 6))
    disc = QuartileDiscretizer.fit(X)
    hits = 0
    for seed in range(100):
        e = lime_explain(lambda Z: 5 * Z[:, 3], X[seed], disc, n_features=6, seed=seed)
        hits += e.conditions[0].index == 3
    record(4, hits >= LIME_MIN_HITS, f"relevant feature ranked first in {hits}/100 seeded runs (>= {LIME_MIN_HITS})")


# -- synthetic analogues -------------------------------------------------------

SEED = 0
schema = LabelSchema()


@pytest.fixture(scope="module")
def synth_data():
    combined = synth_generate(default_spec("synth4", 500, SEED), label_by="component")
    tr4, te4 = split(combined, 0.8, SEED)
    six = synth_generate(default_spec("synth6", 500, SEED))
    tr6, te6 = split(six, 0.8, SEED)
    return tr4, te4, tr6, te6


def stage1(m: FeatureMatrix) -> FeatureMatrix:
    out = m.with_mask(m.active_mask)
    out.labels = [schema.stage1_of(lab) for lab in m.labels]
    return out


@pytest.fixture(scope="module")
def trained(synth_data):
    tr4, _, tr6, _ = synth_data
    models, seconds = {}, 0.0
    for kind in ("RF", "XGB", "ET", "AB"):
        start = time.perf_counter()
        models[kind] = (train(ModelSpec(kind, seed=SEED), stage1(tr4)), train(ModelSpec(kind, seed=SEED), tr6))
        seconds += time.perf_counter() - start
    return models, seconds


def test_criterion_05_faithfulness(synth_data, trained):
    tr4, te4, tr6, te6 = synth_data
    models, _ = trained
    start = time.perf_counter()
    parts, ok = [], True
    for name, model, tr, te in (("synth4", models["XGB"][0], stage1(tr4), stage1(te4)),
                                ("synth6", models["XGB"][1], tr6, te6)):
        B = sample_background(tr.X, 100, SEED)
        rows = sample_background(te.X, 200, SEED)
        explain = attribution_explainer(model, B)
        overall, _ = consistency(rows, explain, 0.05, 5, SEED)
        zero, per_zero = consistency(rows, explain, 0.0, 5, SEED)
        phi = explain(rows)
        fill = tr.X.mean(axis=0)
        s10 = sufficiency(model.predict, rows, explain, 10, fill, phi)
        s_all = sufficiency(model.predict, rows, explain, rows.shape[1], fill, phi)
        good = (overall >= CONSISTENCY_MIN and s10 >= SUFFICIENCY_MIN and zero == 1.0
                and set(per_zero.values()) == {1.0} and s_all == 1.0)
        ok &= good
        parts.append(f"{name}: consistency {overall:.4f}, sufficiency@10 {s10:.4f}, zero-noise {zero}, "
                     f"sufficiency@d {s_all}")
    elapsed = time.perf_counter() - start + trained[1] / 4  # XGB share of the training time
    ok &= elapsed < FAITHFULNESS_BUDGET_S
    record(5, ok, "; ".join(parts) + f"; {elapsed:.0f} s (< {FAITHFULNESS_BUDGET_S} s)")


def test_criterion_06_pipeline(synth_data, trained):
    tr4, te4, tr6, te6 = synth_data
    models, train_seconds = trained
    start = time.perf_counter()
    parts, ok = [], True
    te4_s1 = stage1(te4)
    for kind, (m4, m6) in models.items():
        pred4 = m4.predict(te4_s1.X)
        c4 = confusion(te4_s1.labels, pred4, m4.classes)
        acc4 = float(Fraction(int(np.trace(c4.counts)), c4.total))
        fn_iot = class_metrics(c4, "IoTCam").fn_rate
        c6 = confusion(te6.labels, m6.predict(te6.X), m6.classes)
        acc6 = float(Fraction(int(np.trace(c6.counts)), c6.total))
        fn6 = 1 - acc6  # overall camera FN share, as in the six-class table
        pipe = PipelineModel(m4, m6, schema, list(tr4.active_names))
        out = two_stage_classify(pipe, te4.X)
        gating = all(("stage2" in r) == (r["stage1"] == "IoTCam") for r in out)
        gating &= all(r["stage2"] in CAMERAS for r in out if "stage2" in r)
        good = acc4 >= ACCURACY_MIN and acc6 >= ACCURACY_MIN and fn_iot <= FN_RATE_MAX and fn6 <= FN_RATE_MAX
        ok &= good and gating
        parts.append(f"{kind} acc {acc4:.4f}/{acc6:.4f} FN {fn_iot:.4f}/{fn6:.4f} gating {'ok' if gating else 'BROKEN'}")
    elapsed = time.perf_counter() - start + train_seconds
    ok &= elapsed < PIPELINE_BUDGET_S
    record(6, ok, "synth4/synth6: " + "; ".join(parts) + f"; {elapsed:.0f} s (< {PIPELINE_BUDGET_S} s)")


# -- extraction, metrics, statistics, determinism --------------------------------

GOLDEN = ["three_pkt", "three_pkt_ns_be", "tcp_fin_then_syn", "udp_timeout", "one_pkt_udp", "tcp_no_backward",
          "udp_arp_udp", "tcp_rst_idle"]


def test_criterion_07_golden_csvs(tmp_path):
    exact = []
    for name in GOLDEN:
        m, _ = extract_pcap(FIXTURES / f"{name}.pcap")
        write_csv(m, tmp_path / f"{name}.csv")
        exact.append((tmp_path / f"{name}.csv").read_bytes() == (FIXTURES / f"{name}.csv").read_bytes())

    def rows(name):
        return extract_pcap(FIXTURES / f"{name}.pcap")[0]

    def matches(vec, expected):
        return all(math.isclose(vec[FEATURE_NAMES.index(k)], v, rel_tol=1e-12, abs_tol=1e-9)
                   for k, v in expected.items())

    three, one, rst = rows("three_pkt"), rows("one_pkt_udp"), rows("tcp_rst_idle")
    traced = (len(three) == 1 and matches(three.values[0], THREE_PKT) and matches(one.values[0], ONE_PKT_UDP)
              and matches(rst.values[0], RST_IDLE))
    coverage = {
        "timeout split": len(rows("udp_timeout")) == 2,
        "FIN closure": len(rows("tcp_fin_then_syn")) == 2,
        "-1 sentinel": rows("tcp_no_backward").values[0][FEATURE_NAMES.index("Init_Win_bytes_backward")] == -1,
        "one-packet flow": len(one) == 1 and one.values[0][FEATURE_NAMES.index("Tot Fwd Pkts")] == 1,
    }
    ok = all(exact) and traced and all(coverage.values()) and len(GOLDEN) >= 6
    record(7, ok, f"{sum(exact)}/{len(GOLDEN)} captures byte-exact; hand traces {'match' if traced else 'DIFFER'}; "
                  + ", ".join(f"{k} {'ok' if v else 'MISSING'}" for k, v in coverage.items()))


def test_criterion_08_metrics():
    from flowcam.metrics import ConfusionMatrix
    C = ConfusionMatrix(np.array([[8, 2], [1, 9]]), ("a", "b"))
    m0, m1 = class_metrics(C, 0), class_metrics(C, 1)
    mac = macro_metrics(C)
    hand = (m0.precision == 8 / 9 and m0.recall == 0.8 and m0.f1 == 16 / 19 and m0.fn_rate == 0.2
            and m1.precision == 9 / 11 and m1.recall == 0.9 and m1.f1 == 18 / 21 and m1.fn_rate == 0.1
            and m0.accuracy == m1.accuracy == 0.85 and mac["recall"] == 0.85
            and mac["precision"] == float((Fraction(8, 9) + Fraction(9, 11)) / 2)
            and mac["f1"] == float((Fraction(16, 19) + Fraction(18, 21)) / 2))
    rng = np.random.default_rng(8)
    fuzz_ok, cases = True, 0
    for _ in range(2000):
        k = int(rng.integers(2, 7))
        Cf = ConfusionMatrix(rng.integers(0, 30, size=(k, k)), tuple(f"c{i}" for i in range(k)))
        for i in range(k):
            m = class_metrics(Cf, i)
            if m.tp + m.fn:
                cases += 1
                fuzz_ok &= m.fn_rate == float(1 - Fraction(m.tp, m.tp + m.fn))
                fuzz_ok &= abs(m.fn_rate - (1 - m.recall)) <= 1e-15
    record(8, hand and fuzz_ok, f"[[8,2],[1,9]] per-class and macro values exact: {hand}; "
                                f"fn_rate = 1 - recall on {cases} fuzz cases: {fuzz_ok}")


def test_criterion_09_statistics():
    rng = np.random.default_rng(9)
    x = rng.uniform(size=20_000)
    labels = np.digitize(x, np.quantile(x, [0.25, 0.5, 0.75]), right=True).astype(str)
    names = ("f0",)
    mi_det = mutual_information(FeatureMatrix(x[:, None], labels=list(labels), names=names)).scores[0]
    indep = rng.integers(0, 4, size=20_000).astype(str)
    mi_ind = mutual_information(FeatureMatrix(x[:, None], labels=list(indep), names=names)).scores[0]
    t = rng.normal(size=500)
    r = pearson_matrix(FeatureMatrix(np.column_stack([t, 2 * t]), names=("a", "b"))).values[0, 1]
    A = rng.normal(size=(400, 8)) @ rng.normal(size=(8, 8))
    worst_cum, worst_orth = 1.0, 0.0
    for var in (0.5, 0.8, 0.95, 0.99):
        p = pca_fit(FeatureMatrix(A, names=tuple(f"v{i}" for i in range(8))), var)
        worst_cum = min(worst_cum, p.explained_ratio.sum() - var)
        worst_orth = max(worst_orth, np.abs(p.components @ p.components.T - np.eye(p.n_components)).max())
    ok = (abs(mi_det - math.log(4)) <= MI_TOL and mi_ind < MI_INDEPENDENT_MAX and abs(r - 1) <= PEARSON_TOL
          and worst_cum >= -1e-12 and worst_orth <= ORTHONORMAL_TOL)
    record(9, ok, f"MI(det) = {mi_det:.4f} vs ln 4 = {math.log(4):.4f}; MI(indep) = {mi_ind:.4f}; "
                  f"pearson(y=2x) - 1 = {r - 1:.1e}; PCA cumulative margin {worst_cum:.3f}, "
                  f"orthonormality {worst_orth:.1e}")


def test_criterion_10_determinism(tmp_path):
    cfg = {
        "seed": 5, "data": {"source": "synth", "name": "synth4", "n_per_class": 80},
        "models": [{"kind": k, "hyperparameters": hp} for k, hp in
                   [("RF", {"n_estimators": 20}), ("XGB", {"n_estimators": 10}), ("ET", {"n_estimators": 20}),
                    ("AB", {}), ("DT", {}), ("NB", {}), ("LR", {}), ("kNN", {})]],
        "explain": {"rows": 30, "background": 30}, "faithfulness": {"rows": 30, "background": 30, "runs": 2},
    }
    first = run_report(cfg, tmp_path / "a")
    (tmp_path / "a" / "manifest.json").rename(tmp_path / "manifest.json")
    from flowcam.pipeline import load_config
    second = run_report(load_config(tmp_path / "manifest.json"), tmp_path / "b")
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in first["outputs"])
    metrics = json.loads((tmp_path / "b" / "metrics.json").read_text())
    ok = same and first == second and len(metrics["models"]) == 8
    record(10, ok, f"manifest rerun reproduced {sorted(first['outputs'])} byte-identically: {same}")
