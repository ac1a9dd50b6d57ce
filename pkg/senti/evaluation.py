"""Per-class precision/recall/F1, Macro F1, learning curves and their report files."""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np

from senti.corpus import FoldScheme, LabeledDoc, Polarity, balance, split
from senti.exceptions import DimensionMismatch, InsufficientDocuments

METRIC_COLUMNS = ("pre_0", "rec_0", "pre_1", "rec_1", "f1_0", "f1_1", "macro_f1")
CURVE_COLUMNS = ("size", "best", "worst", "mean", "model", "unstable", "config", "seed")
STABILITY_THRESHOLD = 0.01


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when precision and recall are both 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class ConfusionCounts:
    """Per class c: correct predictions of c, predictions of c and documents of class c."""

    correct: Tuple[int, int]
    predicted: Tuple[int, int]
    actual: Tuple[int, int]

    @classmethod
    def from_predictions(cls, predictions, truth):
        predicted_labels = np.asarray([int(p) for p in predictions], dtype=np.int64)
        true_labels = np.asarray([int(t) for t in truth], dtype=np.int64)
        if len(predicted_labels) != len(true_labels):
            raise DimensionMismatch("predictions", len(true_labels), len(predicted_labels))
        if len(true_labels) == 0:
            raise InsufficientDocuments("metrics", 1, 0)
        hits = predicted_labels == true_labels
        return cls(
            tuple(int(np.sum(hits & (true_labels == c))) for c in Polarity),
            tuple(int(np.sum(predicted_labels == c)) for c in Polarity),
            tuple(int(np.sum(true_labels == c)) for c in Polarity),
        )

    def precision(self, polarity: Polarity) -> float:
        if not self.predicted[polarity]:
            return 0.0
        return self.correct[polarity] / self.predicted[polarity]

    def recall(self, polarity: Polarity) -> float:
        return self.correct[polarity] / self.actual[polarity] if self.actual[polarity] else 0.0


@dataclass(frozen=True)
class MetricsReport:
    pre_0: float
    rec_0: float
    pre_1: float
    rec_1: float
    f1_0: float
    f1_1: float
    macro_f1: float

    @classmethod
    def from_precision_recall(cls, pre_0: float, rec_0: float, pre_1: float, rec_1: float):
        f1_0, f1_1 = f1_score(pre_0, rec_0), f1_score(pre_1, rec_1)
        return cls(pre_0, rec_0, pre_1, rec_1, f1_0, f1_1, (f1_0 + f1_1) / 2)

    def values(self) -> Tuple[float, ...]:
        return tuple(getattr(self, column) for column in METRIC_COLUMNS)


def compute_metrics(predictions, truth) -> MetricsReport:
    """Precision, recall and F1 of each class taken as the positive one, and their Macro F1.

    A class that is never predicted (or never occurs) gets precision (or recall) 0.
    """
    counts = ConfusionCounts.from_predictions(predictions, truth)
    return MetricsReport.from_precision_recall(
        counts.precision(Polarity.NEGATIVE),
        counts.recall(Polarity.NEGATIVE),
        counts.precision(Polarity.POSITIVE),
        counts.recall(Polarity.POSITIVE),
    )


def write_metrics(
    path: Union[str, Path],
    rows: Sequence[Tuple[str, MetricsReport]],
    config_hash: str,
    seed: int,
) -> None:
    """TSV report, one row per model, columns in the published table order."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(f"# config={config_hash} seed={seed}\n")
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(["model", *METRIC_COLUMNS])
        for name, report in rows:
            writer.writerow([name, *(f"{value:.4f}" for value in report.values())])


def read_metrics(path: Union[str, Path]) -> List[Tuple[str, MetricsReport]]:
    with open(path, encoding="utf-8") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    reader = csv.DictReader(lines, delimiter="\t")
    return [
        (row["model"], MetricsReport(*(float(row[column]) for column in METRIC_COLUMNS)))
        for row in reader
    ]


@dataclass(frozen=True)
class CurvePoint:
    model: str
    corpus_size: int
    repetitions: int
    best_f1: float
    worst_f1: float
    mean_f1: float

    @classmethod
    def from_scores(cls, model: str, corpus_size: int, scores: Sequence[float]):
        if not scores:
            raise InsufficientDocuments("curve repetitions", 1, 0)
        return cls(
            model, corpus_size, len(scores), max(scores), min(scores), float(np.mean(scores))
        )


# (train docs, test docs) -> 0/1 predictions for the test docs
Recipe = Callable[[List[LabeledDoc], List[LabeledDoc]], Sequence[int]]


def _check_sizes(docs: Sequence[LabeledDoc], sizes: Sequence[int]) -> None:
    available = {c: sum(1 for doc in docs if doc.label == c) for c in Polarity}
    for size in sizes:
        for polarity, count in available.items():
            if count < size // 2:
                raise InsufficientDocuments(
                    f"corpus size {size} ({polarity.name.lower()} class)", size // 2, count
                )


def learning_curve(
    recipe: Recipe,
    docs: Sequence[LabeledDoc],
    sizes: Sequence[int],
    repetitions: int = 5,
    seed: int = 0,
    workers: int = 1,
    model: str = "model",
) -> List[CurvePoint]:
    """Macro F1 of `recipe` over growing balanced corpora.

    Every (size, repetition) run balances size // 2 docs per class with seed + repetition,
    splits them three-fold with the same seed, trains on the two training folds and scores the
    test fold. Runs may execute on `workers` threads; results are gathered in
    (size, repetition) order.

    Raises:
        InsufficientDocuments: naming the first size the corpus cannot serve, before any run.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    _check_sizes(docs, sizes)

    def run(job: Tuple[int, int]) -> float:
        size, repetition = job
        run_seed = seed + repetition
        parts = split(balance(docs, size // 2, run_seed), FoldScheme.THREE_FOLD, run_seed)
        predictions = recipe(parts.train, parts.test)
        report = compute_metrics(predictions, [doc.label for doc in parts.test])
        logging.info(
            f"{model} size {size} repetition {repetition + 1}: Macro F1 {report.macro_f1:.4f}"
        )
        return report.macro_f1

    jobs = [(size, repetition) for size in sizes for repetition in range(repetitions)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(run, jobs))
    else:
        scores = [run(job) for job in jobs]
    return [
        CurvePoint.from_scores(
            model, size, scores[i * repetitions : (i + 1) * repetitions]
        )
        for i, size in enumerate(sizes)
    ]


def stability_flag(point: CurvePoint, threshold: float = STABILITY_THRESHOLD) -> bool:
    """True (unstable) when best - worst exceeds `threshold`; an exact tie is stable."""
    return point.best_f1 - point.worst_f1 > threshold + 1e-9


def write_curve(
    path: Union[str, Path], points: Sequence[CurvePoint], config_hash: str, seed: int
) -> None:
    """Plain CSV `size,best,worst,mean`, then the model, its stability flag and the stamp."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for point in points:
            writer.writerow(
                [
                    point.corpus_size,
                    f"{point.best_f1:.4f}",
                    f"{point.worst_f1:.4f}",
                    f"{point.mean_f1:.4f}",
                    point.model,
                    int(stability_flag(point)),
                    config_hash,
                    seed,
                ]
            )


def plot_curve(path: Union[str, Path], points: Sequence[CurvePoint]) -> None:
    """SVG plot of mean Macro F1 per model with the best/worst band."""
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "senti"
    import matplotlib.pyplot as plt

    figure, axes = plt.subplots(figsize=(7, 4.5))
    for model in dict.fromkeys(point.model for point in points):
        series = sorted((p for p in points if p.model == model), key=lambda p: p.corpus_size)
        sizes = [p.corpus_size for p in series]
        axes.plot(sizes, [p.mean_f1 for p in series], marker="o", label=model)
        axes.fill_between(
            sizes, [p.worst_f1 for p in series], [p.best_f1 for p in series], alpha=0.2
        )
    axes.set_xlabel("reviews")
    axes.set_ylabel("Macro F1")
    axes.legend()
    # no date and a fixed id salt: repeated plots are byte-identical
    figure.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(figure)
