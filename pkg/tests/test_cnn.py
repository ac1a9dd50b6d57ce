import numpy as np
import pytest

from senti.cnn import (
    DEFAULT_LAYERS,
    ConvPoolLayer,
    build_cnn,
    build_review_matrix,
    cnn_forward,
    cnn_loss_and_gradients,
    cnn_predict,
    cnn_predict_many,
    cnn_train,
    conv_forward,
    frame_shapes,
    load_cnn,
    maxpool,
    save_cnn,
)
from senti.corpus import Polarity
from senti.embeddings import EmbeddingModel
from senti.exceptions import (
    CorpusError,
    DimensionMismatch,
    InvalidArchitecture,
    NoKnownTokens,
    TrainingDiverged,
)

SMALL_LAYERS = ((4, 3, 3, 2, 1),)


def numeric_gradient_error(model, x, label, h=1e-6):
    _, analytic = cnn_loss_and_gradients(model, x, label)
    numeric = []
    for param in model.parameters():
        estimate = np.zeros_like(param)
        for index in np.ndindex(param.shape):
            saved = param[index]
            param[index] = saved + h
            upper, _ = cnn_loss_and_gradients(model, x, label)
            param[index] = saved - h
            lower, _ = cnn_loss_and_gradients(model, x, label)
            param[index] = saved
            estimate[index] = (upper - lower) / (2 * h)
        numeric.append(estimate)
    flat_numeric = np.concatenate([g.ravel() for g in numeric])
    flat_analytic = np.concatenate([g.ravel() for g in analytic])
    scale = np.linalg.norm(flat_numeric) + np.linalg.norm(flat_analytic)
    return np.linalg.norm(flat_numeric - flat_analytic) / scale


def separable_matrices(n=100, shape=(12, 8), seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    matrices = [rng.normal(scale=0.5, size=shape) + (0.5 if c else -0.5) for c in labels]
    return matrices, labels


def test_default_frame_chain():
    assert frame_shapes((60, 60)) == [(28, 56), (12, 52), (4, 48)]

    model = build_cnn((60, 60), seed=0)

    assert model.output_weights.shape == (2, 9600)
    assert [layer.kernels.shape for layer in model.layers] == [
        (40, 1, 5, 5),
        (50, 40, 5, 5),
        (50, 50, 5, 5),
    ]
    assert DEFAULT_LAYERS[0][0] == 40


def test_invalid_architectures():
    with pytest.raises(InvalidArchitecture):
        frame_shapes((61, 60))
    with pytest.raises(InvalidArchitecture):
        frame_shapes((3, 3), ((1, 5, 5, 1, 1),))
    with pytest.raises(InvalidArchitecture):
        frame_shapes((6, 6), ((1, 3, 3, 2, 2),))


def test_maxpool_blocks():
    frame = np.arange(8).reshape(4, 2)

    assert maxpool(frame, 2, 1).tolist() == [[2, 3], [6, 7]]
    with pytest.raises(InvalidArchitecture):
        maxpool(np.zeros((3, 2)), 2, 1)


def test_conv_forward_single_frame():
    layer = ConvPoolLayer(np.ones((1, 1, 3, 3)), np.zeros(1), (1, 1))

    out = conv_forward(np.ones((3, 3)), layer)

    assert out.shape == (1, 1, 1)
    assert out[0, 0, 0] == pytest.approx(np.tanh(9.0))
    with pytest.raises(DimensionMismatch):
        conv_forward(np.ones((2, 3)), layer)


def test_gradient_check_one_kernel():
    model = build_cnn((6, 6), ((1, 3, 3, 2, 1),), seed=3)
    x = np.random.default_rng(7).normal(size=(6, 6))

    assert numeric_gradient_error(model, x, Polarity.POSITIVE) < 1e-4
    assert numeric_gradient_error(model, x, Polarity.NEGATIVE) < 1e-4


def test_gradient_check_two_layers_with_several_frames():
    model = build_cnn((10, 6), ((2, 3, 3, 2, 1), (2, 3, 1, 2, 1)), seed=5)
    x = np.random.default_rng(8).normal(size=(10, 6))

    assert numeric_gradient_error(model, x, 1) < 1e-4


def test_training_loss_falls_every_epoch():
    X, y = separable_matrices()
    model = build_cnn((12, 8), SMALL_LAYERS, seed=1)

    trained = cnn_train(
        model, X, y, epochs=5, batch_size=10, lr=0.1, seed=2, min_improvement=-np.inf
    )

    assert len(X) == 100
    assert len(trained.losses) == 6
    assert np.all(np.diff(trained.losses) < 0)
    assert not np.array_equal(trained.output_weights, model.output_weights)
    assert np.mean(cnn_predict_many(trained, X) == y) >= 0.8


def test_threaded_training_matches_serial():
    X, y = separable_matrices(20)
    model = build_cnn((12, 8), SMALL_LAYERS, seed=1)

    serial = cnn_train(model, X, y, epochs=2, batch_size=5, seed=4)
    threaded = cnn_train(model, X, y, epochs=2, batch_size=5, seed=4, workers=3)

    np.testing.assert_array_equal(serial.output_weights, threaded.output_weights)
    assert serial.losses == threaded.losses


def test_training_diverges_on_non_finite_input():
    X, y = separable_matrices(4)
    X[0] = np.full((12, 8), np.nan)

    with pytest.raises(TrainingDiverged) as e:
        cnn_train(build_cnn((12, 8), SMALL_LAYERS), X, y, epochs=1, batch_size=4)

    assert e.value.epoch == 1


def test_prediction_tie_is_positive_and_shape_is_checked():
    model = build_cnn((12, 8), SMALL_LAYERS)
    model.output_weights[:] = 0.0

    assert cnn_predict(model, np.zeros((12, 8))) is Polarity.POSITIVE
    assert cnn_forward(model, np.zeros((12, 8))).tolist() == [0.5, 0.5]
    with pytest.raises(DimensionMismatch):
        cnn_forward(model, np.zeros((8, 12)))


def test_review_matrix_skips_unknown_tokens_and_cycles():
    embeddings = EmbeddingModel.from_vectors(["a", "b"], [[1.0, 0.0], [0.0, 1.0]])

    matrix = build_review_matrix(("a", "zz", "b"), embeddings, L=5)

    assert matrix.tolist() == [[1, 0], [0, 1], [1, 0], [0, 1], [1, 0]]
    with pytest.raises(NoKnownTokens):
        build_review_matrix(("zz",), embeddings, L=5)
    with pytest.raises(NoKnownTokens):
        build_review_matrix(("zz", "zz", "a"), embeddings, L=2)


def test_model_file_round_trip(tmp_path):
    model = build_cnn((12, 8), ((3, 3, 3, 2, 1), (2, 3, 3, 1, 1)), seed=9)
    x = np.random.default_rng(0).normal(size=(12, 8))
    path = tmp_path / "cnn.model"

    save_cnn(model, path)
    loaded = load_cnn(path)

    assert loaded.input_shape == (12, 8)
    assert [layer.pool for layer in loaded.layers] == [(2, 1), (1, 1)]
    np.testing.assert_allclose(cnn_forward(loaded, x), cnn_forward(model, x), rtol=1e-5)
    path.write_bytes(b"NOTACNN!")
    with pytest.raises(CorpusError):
        load_cnn(path)
