from dataclasses import dataclass

import numpy as np
import pytest

from senti.corpus import LabeledDoc, Polarity
from senti.evaluation import compute_metrics
from senti.exceptions import (
    BaseOrderMismatch,
    DimensionMismatch,
    InsufficientDocuments,
    ProvenanceError,
)
from senti.stacking import (
    PredictionVector,
    StackModel,
    export_predictions,
    prediction_matrix,
    prediction_vectors,
    read_predictions,
    select_base_subset,
    stack_decide,
    stack_predict,
    stack_predict_vector,
    train_lr_all,
    vote_all,
    vote_all_many,
)


@dataclass
class FixedBase:
    """Answers from a table keyed by doc id."""

    name: str
    answers: dict
    trained_on: frozenset = frozenset()

    def predict(self, docs):
        return np.array([self.answers[doc.doc_id] for doc in docs], dtype=np.int64)


def make_docs(start, n):
    return [LabeledDoc(("w",), Polarity(i % 2), i) for i in range(start, start + n)]


def wrong_on_residue(name, docs, residue):
    """Correct everywhere except on docs whose id is `residue` modulo 3."""
    answers = {d.doc_id: int(d.label) ^ int(d.doc_id % 3 == residue) for d in docs}
    return FixedBase(name, answers)


def test_vote_all_example_vector():
    p = PredictionVector((0, 0, 1, 0, 1, 0, 0, 1, 0), tuple("ABCDEFGHI"))

    assert vote_all(p) is Polarity.NEGATIVE
    assert str(p) == "[0 0 1 0 1 0 0 1 0]"


def test_vote_all_ties_and_majorities():
    assert vote_all([1, 0]) is Polarity.POSITIVE
    assert vote_all([1, 1, 0]) is Polarity.POSITIVE
    assert vote_all([0]) is Polarity.NEGATIVE
    assert vote_all_many([[1, 0], [0, 0], [1, 1]]).tolist() == [1, 0, 1]
    with pytest.raises(ValueError):
        vote_all([])


def test_prediction_vector_validation():
    with pytest.raises(DimensionMismatch):
        PredictionVector((0, 1), ("NB",))
    with pytest.raises(ValueError):
        PredictionVector((2,), ("NB",))


def test_prediction_matrix_columns_follow_base_order():
    docs = make_docs(0, 6)
    bases = [wrong_on_residue(f"b{k}", docs, k) for k in range(3)]

    matrix = prediction_matrix(bases, docs)
    vectors = prediction_vectors(bases, docs, workers=2)

    assert matrix.shape == (6, 3)
    assert np.array_equal(prediction_matrix(bases, docs, workers=3), matrix)
    assert vectors[0].base_ids == ("b0", "b1", "b2")
    assert [list(v.bits) for v in vectors] == matrix.tolist()


def test_stacking_beats_complementary_bases():
    validate, test = make_docs(0, 60), make_docs(60, 60)
    everything = validate + test
    bases = [wrong_on_residue(f"b{k}", everything, k) for k in range(3)]

    model = train_lr_all(bases, validate)
    stacked = stack_predict(model, bases, test)

    truth = [doc.label for doc in test]
    best_base = max(compute_metrics(b.predict(test), truth).macro_f1 for b in bases)
    assert best_base == pytest.approx(2 / 3)
    assert compute_metrics(stacked, truth).macro_f1 >= best_base
    assert stacked.tolist() == [int(label) for label in truth]
    assert model.base_ids == ("b0", "b1", "b2")
    assert np.all(model.meta.w > 0)


def test_train_lr_all_rejects_bases_fitted_on_validation_docs():
    validate = make_docs(0, 20)
    leaky = FixedBase("NB", {d.doc_id: 1 for d in validate}, frozenset({3, 99}))

    with pytest.raises(ProvenanceError) as e:
        train_lr_all([leaky], validate)

    assert e.value.model == "NB"
    assert e.value.partition == "validate"
    with pytest.raises(InsufficientDocuments):
        train_lr_all([], validate)


def test_stack_predict_checks_order_and_meta_provenance():
    validate, test = make_docs(0, 30), make_docs(30, 30)
    bases = [wrong_on_residue(f"b{k}", validate + test, k) for k in range(3)]
    model = train_lr_all(bases, validate)

    with pytest.raises(BaseOrderMismatch):
        stack_predict(model, bases[::-1], test)
    with pytest.raises(BaseOrderMismatch):
        stack_predict(model, bases[:2], test)
    with pytest.raises(ProvenanceError):
        stack_predict(model, bases, validate)
    with pytest.raises(BaseOrderMismatch):
        stack_predict_vector(model, PredictionVector((1, 1, 0), ("b2", "b1", "b0")))


def test_permuted_model_keeps_decisions():
    validate, test = make_docs(0, 30), make_docs(30, 30)
    bases = [wrong_on_residue(f"b{k}", validate + test, k) for k in range(3)]
    model = train_lr_all(bases, validate)
    order = ("b2", "b0", "b1")

    permuted = model.permuted(order)
    matrix = prediction_matrix(bases, test)

    assert permuted.base_ids == order
    reordered = stack_decide(permuted, matrix[:, [2, 0, 1]])
    assert np.array_equal(reordered, stack_decide(model, matrix))
    with pytest.raises(BaseOrderMismatch):
        model.permuted(("b0", "b1"))


def test_subset_selection_finds_the_perfect_base():
    validate = make_docs(0, 80)
    rng = np.random.default_rng(0)
    noisy = [
        FixedBase(f"N{k}", {d.doc_id: int(rng.integers(0, 2)) for d in validate}) for k in (1, 2)
    ]
    perfect = FixedBase("P", {d.doc_id: int(d.label) for d in validate})

    chosen = select_base_subset([noisy[0], perfect, noisy[1]], validate, seed=3)

    assert chosen == ["P"]


def test_subset_selection_needs_two_bases():
    validate = make_docs(0, 10)

    with pytest.raises(InsufficientDocuments):
        select_base_subset([FixedBase("P", {})], validate)


def test_stack_model_file(tmp_path):
    validate = make_docs(0, 30)
    bases = [wrong_on_residue(f"b{k}", validate, k) for k in range(3)]
    model = train_lr_all(bases, validate)
    path = tmp_path / "LR_all.model"

    model.save(path, config_hash="abc123", seed=4)
    loaded = StackModel.load(path)

    assert path.read_text(encoding="utf-8").splitlines()[0] == "# config=abc123 seed=4"
    assert loaded.base_ids == model.base_ids
    assert loaded.provenance == frozenset(range(30))
    np.testing.assert_array_equal(loaded.meta.w, model.meta.w)
    assert stack_predict_vector(loaded, PredictionVector((1, 1, 0), model.base_ids)) == 1


def test_prediction_files(tmp_path):
    path = tmp_path / "test_NB.txt"

    export_predictions(path, [1, 0, Polarity.POSITIVE])

    assert path.read_text(encoding="utf-8") == "1\n0\n1\n"
    assert read_predictions(path).tolist() == [1, 0, 1]


def macro_f1(predictions, docs):
    return compute_metrics(predictions, [doc.label for doc in docs]).macro_f1


def test_single_base_stack_passes_its_base_through():
    validate, test = make_docs(0, 60), make_docs(60, 60)
    base = wrong_on_residue("b0", validate + test, 0)

    model = train_lr_all([base], validate)

    assert model.meta.w[0] > 0
    assert stack_predict(model, [base], test).tolist() == base.predict(test).tolist()


def test_subset_of_one_is_the_best_single_base():
    validate = make_docs(0, 90)
    good = FixedBase("good", {d.doc_id: int(d.label) ^ int(d.doc_id % 10 == 0) for d in validate})
    bases = [wrong_on_residue(f"b{k}", validate, k) for k in range(2)] + [good]

    chosen = select_base_subset(bases, validate, max_k=1, seed=2)

    assert chosen == ["good"]


def test_four_complementary_bases_stack_at_least_as_well_as_the_best():
    validate, test = make_docs(0, 120), make_docs(120, 60)
    everything = validate + test
    bases = [wrong_on_residue(f"b{k}", everything, k) for k in range(3)]
    quarter = {d.doc_id: int(d.label) ^ int(d.doc_id % 4 == 0) for d in everything}
    bases.append(FixedBase("b3", quarter))

    model = train_lr_all(bases, validate)

    best_base = max(macro_f1(base.predict(test), test) for base in bases)
    assert best_base == pytest.approx(0.75, abs=0.05)
    assert macro_f1(stack_predict(model, bases, test), test) >= best_base


def test_identical_bases_agree_with_vote_and_stack():
    validate, test = make_docs(0, 60), make_docs(60, 60)
    answers = wrong_on_residue("b", validate + test, 0).answers
    bases = [FixedBase(name, answers) for name in ("NB", "LR", "RF")]

    model = train_lr_all(bases, validate)

    expected = bases[0].predict(test).tolist()
    matrix = prediction_matrix(bases, test)
    assert all(base.predict(test).tolist() == expected for base in bases)
    assert vote_all_many(matrix).tolist() == expected
    assert stack_predict(model, bases, test, matrix=matrix).tolist() == expected
