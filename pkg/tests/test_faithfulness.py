import numpy as np
import pytest
from scipy.stats import rankdata

from flowcam.faithfulness import (
    FaithfulnessError, consistency, faithfulness_report, rank_agreement, sufficiency, top_k_mask,
)
from flowcam.models import ModelSpec, train
from flowcam.xai import ScoreFunction, attribution_explainer, exact_shapley


def fixture(seed=0, d=6, n=200):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = np.where(X[:, 0] > 0.3, "a", np.where(X[:, 1] + X[:, 2] > 0, "b", "c"))
    m = train(ModelSpec("XGB", {"n_estimators": 6, "max_depth": 3}), X, list(y))
    return X, m


def test_rank_agreement_matches_pearson_of_ranks():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=30), rng.normal(size=30)
    ref = np.corrcoef(rankdata(a), rankdata(b))[0, 1]
    assert abs(rank_agreement(a, b) - ref) < 1e-12
    assert rank_agreement(a, a) == 1.0
    assert rank_agreement(np.zeros(5), np.zeros(5)) == 1.0
    assert rank_agreement(np.zeros(5), np.arange(5)) == 0.0
    assert rank_agreement(a, -a) == pytest.approx(-1.0)


def test_zero_noise_is_perfect():
    X, m = fixture()
    overall, per = consistency(X, attribution_explainer(m, X[:20]), noise_frac=0.0, names=m.feature_names)
    assert overall == 1.0 and set(per.values()) == {1.0}


def test_random_explainer_near_zero():
    X, _ = fixture()
    rng = np.random.default_rng(5)

    def stub(Z):
        return rng.normal(size=Z.shape)

    overall, per = consistency(X, stub, runs=20, seed=1)
    assert abs(overall) < 0.3
    assert all(abs(v) < 0.3 for v in per.values())


def test_consistency_needs_rows():
    with pytest.raises(FaithfulnessError, match="10"):
        consistency(np.zeros((5, 2)), lambda Z: Z)


def test_consistency_in_range_and_seeded():
    X, m = fixture(1)
    ex = attribution_explainer(m, X[:20])
    a = consistency(X, ex, noise_frac=0.3, seed=4)
    assert a == consistency(X, ex, noise_frac=0.3, seed=4)
    assert -1 <= a[0] <= 1 and all(-1 <= v <= 1 for v in a[1].values())


def test_top_k_mask_ties_prefer_low_index():
    phi = np.array([[1.0, -3.0, 3.0, 0.5]])
    assert top_k_mask(phi, 2).tolist() == [[False, True, True, False]]
    assert top_k_mask(phi, 1).tolist() == [[False, True, False, False]]


def test_sufficiency_full_k_and_constant_model():
    X, m = fixture()
    ex = attribution_explainer(m, X[:20])
    assert sufficiency(m.predict, X, ex, k=X.shape[1]) == 1.0
    const = lambda Z: ["a"] * len(Z)  # noqa: E731
    for k in range(1, 7):
        assert sufficiency(const, X, ex, k=k) == 1.0
    with pytest.raises(FaithfulnessError):
        sufficiency(m.predict, X, ex, k=0)


def test_single_driver_top1_is_sufficient():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(60, 5))
    f = lambda Z: np.tanh(2 * Z[:, 3])  # noqa: E731
    predict = lambda Z: np.where(f(Z) > 0.1, "hi", "lo")  # noqa: E731

    def ex(Z):
        return np.array([exact_shapley(f, z, X[:8]).phi for z in Z])

    assert sufficiency(predict, X, ex, k=1) == 1.0


def test_sufficiency_monotone_in_k():
    X, m = fixture(3)
    ex = attribution_explainer(m, X[:20])
    phi = ex(X)
    scores = [sufficiency(m.predict, X, ex, k=k, phi=phi) for k in range(1, X.shape[1] + 1)]
    assert all(b >= a for a, b in zip(scores, scores[1:])), scores
    assert scores[-1] == 1.0


def test_report_shape():
    X, m = fixture()
    rep = faithfulness_report(m, X, attribution_explainer(m, X[:20]), k=3, seed=2)
    d = rep.to_dict()
    assert set(d) == {"overall_consistency", "per_feature_consistency", "sufficiency", "config"}
    assert d["config"] == {"noise_frac": 0.05, "runs": 5, "k": 3, "seed": 2, "rows": 200}
    assert 0 <= rep.sufficiency <= 1
    assert rep.to_dict() == faithfulness_report(m, X, attribution_explainer(m, X[:20]), k=3, seed=2).to_dict()
    assert ScoreFunction.for_class(m, "a").mode == "margin"
