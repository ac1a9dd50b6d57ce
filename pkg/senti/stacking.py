"""Combining base classifiers: majority vote, the stacked logistic meta-model and subset search.

Meta-features are the hard 0/1 predictions of the bases, one column per base in a fixed order.
The meta-model is fitted on validation predictions only; provenance sets (doc ids a model was
fitted on) are checked so that no model that has seen validation or test documents is used.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import FrozenSet, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from senti.corpus import LabeledDoc, Polarity, provenance
from senti.evaluation import compute_metrics
from senti.exceptions import (
    BaseOrderMismatch,
    CorpusError,
    DimensionMismatch,
    InsufficientDocuments,
    ProvenanceError,
)
from senti.linear_classifiers import LinearModel, linear_predict_many, lr_train


class BaseClassifier(Protocol):
    name: str
    trained_on: FrozenSet[int]

    def predict(self, docs: Sequence[LabeledDoc]) -> np.ndarray:
        ...


@dataclass(frozen=True)
class PredictionVector:
    """One document's base predictions, in the order of `base_ids`."""

    bits: Tuple[int, ...]
    base_ids: Tuple[str, ...]

    def __post_init__(self):
        if len(self.bits) != len(self.base_ids):
            raise DimensionMismatch("prediction vector", len(self.base_ids), len(self.bits))
        if any(bit not in (0, 1) for bit in self.bits):
            raise ValueError(f"prediction bits must be 0 or 1, got {self.bits}")

    def __str__(self) -> str:
        return f"[{' '.join(str(bit) for bit in self.bits)}]"


def _bits(p) -> np.ndarray:
    return np.asarray(p.bits if isinstance(p, PredictionVector) else p, dtype=np.int64)


def vote_all(p) -> Polarity:
    """Majority of the bits; an exact tie is positive."""
    bits = _bits(p)
    if bits.size == 0:
        raise ValueError("Cannot vote over an empty prediction vector")
    return Polarity(int(2 * bits.sum() >= bits.size))


def vote_all_many(matrix: np.ndarray) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.int64))
    if matrix.shape[1] == 0:
        raise ValueError("Cannot vote over an empty prediction vector")
    return (2 * matrix.sum(axis=1) >= matrix.shape[1]).astype(np.int64)


def check_provenance(bases: Sequence[BaseClassifier], docs: Sequence[LabeledDoc], partition: str):
    """Raise ProvenanceError when a base was fitted on any of `docs`."""
    ids = provenance(docs)
    for base in bases:
        overlap = base.trained_on & ids
        if overlap:
            raise ProvenanceError(base.name, partition, len(overlap))


def prediction_matrix(
    bases: Sequence[BaseClassifier], docs: Sequence[LabeledDoc], workers: int = 1
) -> np.ndarray:
    """(n_docs, n_bases) matrix of 0/1 predictions, columns in base order."""
    if workers > 1 and len(bases) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            columns = list(pool.map(lambda base: base.predict(docs), bases))
    else:
        columns = [base.predict(docs) for base in bases]
    if not columns:
        return np.zeros((len(docs), 0), dtype=np.int64)
    return np.column_stack([np.asarray(c, dtype=np.int64) for c in columns])


def prediction_vectors(
    bases: Sequence[BaseClassifier], docs: Sequence[LabeledDoc], workers: int = 1
) -> List[PredictionVector]:
    base_ids = tuple(base.name for base in bases)
    matrix = prediction_matrix(bases, docs, workers)
    return [PredictionVector(tuple(int(bit) for bit in row), base_ids) for row in matrix]


@dataclass(frozen=True)
class StackModel:
    base_ids: Tuple[str, ...]
    meta: LinearModel
    provenance: FrozenSet[int] = frozenset()

    def __post_init__(self):
        if self.meta.dim != len(self.base_ids):
            raise DimensionMismatch("meta-model input", len(self.base_ids), self.meta.dim)

    def permuted(self, order: Sequence[str]) -> "StackModel":
        """The same model with its bases (and their meta weights) listed in `order`."""
        if sorted(order) != sorted(self.base_ids):
            raise BaseOrderMismatch(self.base_ids, order)
        positions = [self.base_ids.index(name) for name in order]
        meta = LinearModel(self.meta.w[positions].copy(), self.meta.b, self.meta.kind)
        return StackModel(tuple(order), meta, self.provenance)

    def save(
        self, path: Union[str, Path], config_hash: Optional[str] = None, seed: Optional[int] = None
    ) -> None:
        """Write the model; a `# config=<hash> seed=<n>` line stamps it when a hash is given."""
        with open(path, "w", encoding="utf-8") as handle:
            if config_hash is not None:
                handle.write(f"# config={config_hash} seed={seed}\n")
            handle.write(f"stack bases={','.join(self.base_ids)}\n")
            handle.write(" ".join(str(i) for i in sorted(self.provenance)) + "\n")
            handle.write("\n".join(self.meta.to_lines()) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]):
        try:
            with open(path, encoding="utf-8") as handle:
                lines = [line for line in handle.read().splitlines() if not line.startswith("#")]
            tag, _, names = lines[0].partition(" bases=")
            if tag != "stack":
                raise ValueError(f"not a stack model header: {lines[0]!r}")
            ids = frozenset(int(i) for i in lines[1].split())
            base_ids = tuple(names.split(",")) if names else ()
            return cls(base_ids, LinearModel.from_lines(lines[2:]), ids)
        except (OSError, ValueError, IndexError) as exc:
            raise CorpusError(path, str(exc)) from exc


def _labels(docs: Sequence[LabeledDoc]) -> np.ndarray:
    return np.asarray([int(doc.label) for doc in docs], dtype=np.int64)


def train_lr_all(
    bases: Sequence[BaseClassifier],
    validate_set: Sequence[LabeledDoc],
    l2: float = 1.0,
    workers: int = 1,
    matrix: Optional[np.ndarray] = None,
) -> StackModel:
    """Fit the logistic meta-model on the bases' validation predictions.

    `matrix` may hold those predictions already, one column per base.

    Raises:
        ProvenanceError: if any base was fitted on a validation document.
    """
    if not bases:
        raise InsufficientDocuments("stacking bases", 1, 0)
    check_provenance(bases, validate_set, "validate")
    if matrix is None:
        matrix = prediction_matrix(bases, validate_set, workers)
    meta = lr_train(matrix, _labels(validate_set), l2=l2)
    names = ", ".join(f"{base.name}={w:+.3f}" for base, w in zip(bases, meta.w))
    logging.info(f"Meta-model weights {names}, bias {meta.b:+.3f}")
    return StackModel(tuple(base.name for base in bases), meta, provenance(validate_set))


def stack_decide(model: StackModel, matrix: np.ndarray) -> np.ndarray:
    """Meta decisions for rows of base predictions in `model.base_ids` order."""
    return linear_predict_many(model.meta, np.atleast_2d(np.asarray(matrix, dtype=np.float64)))


def stack_predict_vector(model: StackModel, p: PredictionVector) -> Polarity:
    if p.base_ids != model.base_ids:
        raise BaseOrderMismatch(model.base_ids, p.base_ids)
    return Polarity(int(stack_decide(model, [p.bits])[0]))


def stack_predict(
    model: StackModel,
    bases: Sequence[BaseClassifier],
    docs: Sequence[LabeledDoc],
    workers: int = 1,
    matrix: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Predict `docs` through the bases and the meta-model; 0.5 resolves to positive.

    `matrix` may hold the bases' predictions for `docs` already.

    Raises:
        BaseOrderMismatch: if the bases differ from (or are ordered unlike) training time.
        ProvenanceError: if a base or the meta-model was fitted on any of `docs`.
    """
    names = tuple(base.name for base in bases)
    if names != model.base_ids:
        raise BaseOrderMismatch(model.base_ids, names)
    check_provenance(bases, docs, "test")
    overlap = model.provenance & provenance(docs)
    if overlap:
        raise ProvenanceError("meta-model", "test", len(overlap))
    if matrix is None:
        matrix = prediction_matrix(bases, docs, workers)
    return stack_decide(model, matrix)


def _stratified_halves(labels: np.ndarray, seed: int):
    rng = np.random.default_rng(seed)
    fit, score = [], []
    for polarity in Polarity:
        indices = rng.permutation(np.flatnonzero(labels == polarity))
        if len(indices) < 2:
            name = f"{polarity.name.lower()} validation docs"
            raise InsufficientDocuments(name, 2, len(indices))
        half = len(indices) // 2
        fit.append(indices[:half])
        score.append(indices[half:])
    return np.sort(np.concatenate(fit)), np.sort(np.concatenate(score))


def select_base_subset(
    bases: Sequence[BaseClassifier],
    validate_set: Sequence[LabeledDoc],
    max_k: int = 5,
    seed: int = 0,
    l2: float = 1.0,
    workers: int = 1,
    matrix: Optional[np.ndarray] = None,
) -> List[str]:
    """Greedy forward selection of bases by meta-model Macro F1.

    The validation set is split into stratified halves; candidates are scored by a meta-model
    fitted on the first half and evaluated on the second. Selection stops at `max_k` bases or
    when the best candidate improves Macro F1 by no more than 1e-4. Equal scores favour the
    base listed first.
    """
    if len(bases) < 2:
        raise InsufficientDocuments("bases for subset selection", 2, len(bases))
    check_provenance(bases, validate_set, "validate")
    if matrix is None:
        matrix = prediction_matrix(bases, validate_set, workers)
    labels = _labels(validate_set)
    fit, score = _stratified_halves(labels, seed)
    selected: List[int] = []
    best_f1 = -np.inf
    while len(selected) < min(max_k, len(bases)):
        candidates = []
        for column in range(len(bases)):
            if column in selected:
                continue
            columns = [*selected, column]
            meta = lr_train(matrix[np.ix_(fit, columns)], labels[fit], l2=l2)
            predicted = linear_predict_many(meta, matrix[np.ix_(score, columns)])
            candidates.append((compute_metrics(predicted, labels[score]).macro_f1, column))
        f1, column = max(candidates, key=lambda pair: (pair[0], -pair[1]))
        if selected and f1 <= best_f1 + 1e-4:
            break
        selected.append(column)
        best_f1 = f1
        logging.info(f"Subset selection added {bases[column].name}: meta Macro F1 {f1:.4f}")
    return [bases[column].name for column in selected]


def export_predictions(path: Union[str, Path], bits: Sequence[int]) -> None:
    """One 0/1 prediction per line."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.writelines(f"{int(bit)}\n" for bit in bits)


def read_predictions(path: Union[str, Path]) -> np.ndarray:
    try:
        with open(path, encoding="utf-8") as handle:
            return np.array([int(line) for line in handle if line.strip()], dtype=np.int64)
    except (OSError, ValueError) as exc:
        raise CorpusError(path, str(exc)) from exc
