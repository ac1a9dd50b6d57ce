import csv
import unittest.mock

import pytest
from hypothesis import given
from hypothesis import strategies as st

from senti.corpus import LabeledDoc, Polarity
from senti.evaluation import (
    METRIC_COLUMNS,
    CurvePoint,
    MetricsReport,
    compute_metrics,
    f1_score,
    learning_curve,
    plot_curve,
    read_metrics,
    stability_flag,
    write_curve,
    write_metrics,
)
from senti.exceptions import DimensionMismatch, InsufficientDocuments

# corpus size, model, pre_0, rec_0, pre_1, rec_1 and the printed Macro F1
PUBLISHED = [
    (40000, "NB", 0.843, 0.896, 0.889, 0.833, 0.864),
    (40000, "ME", 0.914, 0.850, 0.859, 0.910, 0.880),
    (40000, "LinearSVC", 0.898, 0.881, 0.883, 0.900, 0.890),
    (40000, "LR", 0.902, 0.879, 0.882, 0.905, 0.892),
    (40000, "SVC", 0.910, 0.878, 0.882, 0.913, 0.895),
    (40000, "AdaBoost", 0.898, 0.867, 0.871, 0.902, 0.885),
    (40000, "GBT", 0.897, 0.866, 0.870, 0.890, 0.883),
    (40000, "RF", 0.910, 0.850, 0.860, 0.916, 0.883),
    (40000, "CNN", 0.905, 0.865, 0.870, 0.909, 0.887),
    (40000, "Vote_all", 0.790, 0.955, 0.943, 0.747, 0.849),
    (40000, "LR_all", 0.915, 0.893, 0.896, 0.917, 0.905),
    (80000, "NB", 0.836, 0.900, 0.892, 0.823, 0.862),
    (80000, "ME", 0.907, 0.853, 0.861, 0.913, 0.883),
    (80000, "LinearSVC", 0.895, 0.886, 0.887, 0.897, 0.891),
    (80000, "LR", 0.910, 0.876, 0.880, 0.913, 0.894),
    (80000, "SVC", 0.910, 0.876, 0.880, 0.914, 0.895),
    (80000, "AdaBoost", 0.899, 0.866, 0.871, 0.903, 0.884),
    (80000, "GBT", 0.897, 0.868, 0.872, 0.901, 0.885),
    (80000, "RF", 0.910, 0.868, 0.874, 0.914, 0.891),
    (80000, "CNN", 0.904, 0.864, 0.869, 0.909, 0.886),
    (80000, "Vote_all", 0.786, 0.957, 0.945, 0.739, 0.846),
    (80000, "LR_all", 0.915, 0.895, 0.897, 0.912, 0.906),
    (120000, "NB", 0.839, 0.900, 0.892, 0.827, 0.863),
    (120000, "ME", 0.908, 0.850, 0.859, 0.913, 0.882),
    (120000, "LinearSVC", 0.900, 0.891, 0.892, 0.901, 0.896),
    (120000, "LR", 0.897, 0.882, 0.884, 0.900, 0.890),
    (120000, "SVC", 0.905, 0.881, 0.884, 0.907, 0.894),
    (120000, "AdaBoost", 0.896, 0.864, 0.869, 0.899, 0.882),
    (120000, "GBT", 0.896, 0.867, 0.871, 0.890, 0.883),
    (120000, "RF", 0.910, 0.870, 0.876, 0.914, 0.892),
    (120000, "CNN", 0.915, 0.853, 0.862, 0.920, 0.887),
    (120000, "Vote_all", 0.777, 0.965, 0.953, 0.724, 0.842),
    (120000, "LR_all", 0.917, 0.901, 0.903, 0.919, 0.910),
]
# rows whose printed precision/recall do not round to the printed Macro F1
LOOSE_ROWS = {(40000, "ME"), (40000, "GBT"), (80000, "LR_all"), (120000, "GBT")}

labels = st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=60)


def make_docs(n_pos, n_neg):
    docs = [LabeledDoc(("good",), Polarity.POSITIVE, i) for i in range(n_pos)]
    docs += [LabeledDoc(("bad",), Polarity.NEGATIVE, n_pos + i) for i in range(n_neg)]
    return docs


def oracle(train, test):
    return [doc.label for doc in test]


@pytest.mark.parametrize("size, model, pre_0, rec_0, pre_1, rec_1, printed", PUBLISHED)
def test_published_macro_f1(size, model, pre_0, rec_0, pre_1, rec_1, printed):
    report = MetricsReport.from_precision_recall(pre_0, rec_0, pre_1, rec_1)

    tolerance = 0.0025 if (size, model) in LOOSE_ROWS else 0.001
    assert report.macro_f1 == pytest.approx(printed, abs=tolerance)


def test_f1_score_zero_case():
    assert f1_score(0.0, 0.0) == 0.0
    assert f1_score(1.0, 0.5) == pytest.approx(2 / 3)


def test_compute_metrics_small_example():
    report = compute_metrics([1, 1, 0, 0, 1], [1, 0, 0, 0, 1])

    assert report.pre_1 == pytest.approx(2 / 3)
    assert report.rec_1 == 1.0
    assert report.pre_0 == 1.0
    assert report.rec_0 == pytest.approx(2 / 3)
    assert report.macro_f1 == pytest.approx(0.8)


def test_compute_metrics_never_predicted_class():
    report = compute_metrics([1, 1, 1, 1], [0, 1, 0, 1])

    assert (report.pre_0, report.rec_0, report.f1_0) == (0.0, 0.0, 0.0)
    assert report.rec_1 == 1.0
    assert report.macro_f1 == pytest.approx(f1_score(0.5, 1.0) / 2)


def test_compute_metrics_rejects_bad_input():
    with pytest.raises(DimensionMismatch):
        compute_metrics([1, 0], [1])
    with pytest.raises(InsufficientDocuments):
        compute_metrics([], [])


@given(data=st.data(), truth=labels)
def test_macro_f1_bounds_and_label_swap(data, truth):
    predictions = data.draw(st.lists(st.integers(0, 1), min_size=len(truth), max_size=len(truth)))

    report = compute_metrics(predictions, truth)
    swapped = compute_metrics([1 - p for p in predictions], [1 - t for t in truth])

    assert min(report.f1_0, report.f1_1) <= report.macro_f1 <= max(report.f1_0, report.f1_1)
    assert swapped.macro_f1 == pytest.approx(report.macro_f1)
    assert swapped.pre_0 == pytest.approx(report.pre_1)


def test_metrics_file(tmp_path):
    path = tmp_path / "report.tsv"
    rows = [("NB", compute_metrics([1, 0, 1], [1, 0, 0])), ("Vote_all", compute_metrics([1], [1]))]

    write_metrics(path, rows, "abc123", 7)

    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# config=abc123 seed=7"
    assert lines[1].split("\t") == ["model", *METRIC_COLUMNS]
    assert lines[2].split("\t")[1:3] == ["1.0000", "0.5000"]
    loaded = read_metrics(path)
    assert [name for name, _ in loaded] == ["NB", "Vote_all"]
    assert loaded[0][1].macro_f1 == pytest.approx(rows[0][1].macro_f1, abs=5e-5)


def test_learning_curve_with_perfect_recipe():
    docs = make_docs(40, 30)
    seen = []

    def recipe(train, test):
        seen.append((len(train), len(test)))
        return oracle(train, test)

    points = learning_curve(recipe, docs, [20, 40], repetitions=3, seed=5, model="oracle")

    assert [(p.model, p.corpus_size, p.repetitions) for p in points] == [
        ("oracle", 20, 3),
        ("oracle", 40, 3),
    ]
    assert all(p.best_f1 == p.worst_f1 == p.mean_f1 == 1.0 for p in points)
    assert not any(stability_flag(p) for p in points)
    assert [train + test for train, test in seen] == [20] * 3 + [40] * 3


def test_learning_curve_is_reproducible_across_workers():
    docs = make_docs(30, 30)
    serial, threaded = [], []

    def recorder(log):
        def recipe(train, test):
            log.append(tuple(doc.doc_id for doc in test))
            return [Polarity.POSITIVE] * len(test)

        return recipe

    first = learning_curve(recorder(serial), docs, [16, 24], repetitions=2, seed=1)
    second = learning_curve(recorder(threaded), docs, [16, 24], repetitions=2, seed=1, workers=3)

    assert first == second
    assert sorted(serial) == sorted(threaded)
    assert len(set(serial)) == 4


def test_learning_curve_checks_sizes_before_running():
    recipe = unittest.mock.Mock(side_effect=oracle)

    with pytest.raises(InsufficientDocuments) as e:
        learning_curve(recipe, make_docs(50, 8), [10, 20], repetitions=2)

    assert "20" in e.value.name
    assert recipe.call_count == 0
    with pytest.raises(ValueError):
        learning_curve(recipe, make_docs(5, 5), [10], repetitions=0)


@pytest.mark.parametrize(
    "best, worst, unstable",
    [(0.90, 0.89, False), (0.90, 0.90, False), (0.90, 0.88, True), (0.5, 0.2, True)],
)
def test_stability_flag(best, worst, unstable):
    point = CurvePoint("NB", 1000, 5, best, worst, (best + worst) / 2)

    assert stability_flag(point) is unstable


def test_curve_point_needs_scores():
    with pytest.raises(InsufficientDocuments):
        CurvePoint.from_scores("NB", 100, [])
    point = CurvePoint.from_scores("NB", 100, [0.8, 0.9, 0.85])
    assert (point.best_f1, point.worst_f1) == (0.9, 0.8)
    assert point.mean_f1 == pytest.approx(0.85)


def test_write_curve(tmp_path):
    path = tmp_path / "curve.csv"
    points = [
        CurvePoint("NB", 500, 5, 0.82, 0.78, 0.8),
        CurvePoint("NB", 20000, 5, 0.871, 0.867, 0.869),
    ]

    write_curve(path, points, config_hash="abc123", seed=0)

    with open(path, encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0][:4] == ["size", "best", "worst", "mean"]
    assert rows[1] == ["500", "0.8200", "0.7800", "0.8000", "NB", "1", "abc123", "0"]
    assert rows[2] == ["20000", "0.8710", "0.8670", "0.8690", "NB", "0", "abc123", "0"]


def test_plot_curve_is_reproducible(tmp_path):
    points = [
        CurvePoint("NB", 500, 3, 0.82, 0.78, 0.8),
        CurvePoint("NB", 1000, 3, 0.85, 0.83, 0.84),
        CurvePoint("CNN", 500, 3, 0.8, 0.7, 0.75),
        CurvePoint("CNN", 1000, 3, 0.86, 0.8, 0.83),
    ]

    plot_curve(tmp_path / "first.svg", points)
    plot_curve(tmp_path / "second.svg", points)

    first = (tmp_path / "first.svg").read_bytes()
    assert b"<svg" in first
    assert first == (tmp_path / "second.svg").read_bytes()
