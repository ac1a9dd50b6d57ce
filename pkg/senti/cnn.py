"""Convolutional review classifier over L x D review matrices.

Each layer is a valid 2-D cross-correlation with K_out kernels over K_in input frames, a bias,
tanh and row-wise max pooling. The flattened last frame stack feeds one fully-connected layer
of two sigmoid units (index 0 negative, index 1 positive) trained on their cross-entropy.
Everything is float64; model files store float32.
"""

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from senti.corpus import Polarity
from senti.embeddings import EmbeddingModel
from senti.exceptions import (
    CorpusError,
    DimensionMismatch,
    InsufficientDocuments,
    InvalidArchitecture,
    NoKnownTokens,
    TrainingDiverged,
)
from senti.features import Tokens, doc_tokens

# (kernels, kernel rows, kernel cols, pool rows, pool cols) per layer
DEFAULT_LAYERS = ((40, 5, 5, 2, 1), (50, 5, 5, 2, 1), (50, 5, 5, 2, 1))
MAGIC = b"SENTICNN"


@dataclass
class ConvPoolLayer:
    kernels: np.ndarray  # (K_out, K_in, a, b)
    biases: np.ndarray  # (K_out,)
    pool: Tuple[int, int] = (2, 1)

    @property
    def kernel_shape(self) -> Tuple[int, int]:
        return self.kernels.shape[2], self.kernels.shape[3]


@dataclass
class CNNModel:
    layers: List[ConvPoolLayer]
    output_weights: np.ndarray  # (2, flattened size)
    output_bias: np.ndarray  # (2,)
    input_shape: Tuple[int, int]
    losses: List[float] = field(default_factory=list)

    def copy(self) -> "CNNModel":
        return CNNModel(
            [ConvPoolLayer(c.kernels.copy(), c.biases.copy(), c.pool) for c in self.layers],
            self.output_weights.copy(),
            self.output_bias.copy(),
            self.input_shape,
            list(self.losses),
        )

    def parameters(self) -> List[np.ndarray]:
        """Every trainable array, in a fixed order shared with the gradients."""
        arrays = []
        for layer in self.layers:
            arrays.extend([layer.kernels, layer.biases])
        return [*arrays, self.output_weights, self.output_bias]


def frame_shapes(
    input_shape: Tuple[int, int], layer_specs=DEFAULT_LAYERS
) -> List[Tuple[int, int]]:
    """Pooled frame size after every layer.

    Raises:
        InvalidArchitecture: if a kernel does not fit, a pool does not divide its frame, or a
            pool spans more than one embedding column.
    """
    rows, cols = input_shape
    shapes = []
    for depth, (_, a, b, pool_rows, pool_cols) in enumerate(layer_specs, start=1):
        if pool_cols != 1:
            raise InvalidArchitecture(
                f"Layer {depth} pools over {pool_cols} embedding columns; only 1 is allowed"
            )
        rows, cols = rows - a + 1, cols - b + 1
        if rows < 1 or cols < 1:
            raise InvalidArchitecture(f"Layer {depth} kernel {a}x{b} does not fit its input")
        if rows % pool_rows or cols % pool_cols:
            raise InvalidArchitecture(
                f"Layer {depth} frame {rows}x{cols} is not divisible by pool "
                f"{pool_rows}x{pool_cols}"
            )
        rows, cols = rows // pool_rows, cols // pool_cols
        shapes.append((rows, cols))
    return shapes


def build_cnn(input_shape=(60, 60), layer_specs=DEFAULT_LAYERS, seed: int = 0) -> CNNModel:
    """Randomly initialised network; kernels use the LeNet uniform fan-in/fan-out range."""
    shapes = frame_shapes(input_shape, layer_specs)
    if input_shape[1] < 50:
        logging.warning(
            f"Embedding dimension {input_shape[1]} is below 50; the network will see little "
            "semantic detail"
        )
    rng = np.random.default_rng(seed)
    layers = []
    channels = 1
    for kernels, a, b, pool_rows, pool_cols in layer_specs:
        fan_in = channels * a * b
        fan_out = kernels * a * b / (pool_rows * pool_cols)
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(
            ConvPoolLayer(
                rng.uniform(-bound, bound, (kernels, channels, a, b)),
                np.zeros(kernels),
                (pool_rows, pool_cols),
            )
        )
        channels = kernels
    flat = channels * shapes[-1][0] * shapes[-1][1]
    bound = np.sqrt(6.0 / (flat + 2))
    logging.info(f"CNN frames {' -> '.join(f'{r}x{c}' for r, c in [input_shape, *shapes])}")
    return CNNModel(
        layers, rng.uniform(-bound, bound, (2, flat)), np.zeros(2), tuple(input_shape)
    )


def maxpool(frame, p_rows: int, p_cols: int) -> np.ndarray:
    """Block maximum over the last two axes."""
    frame = np.asarray(frame, dtype=np.float64)
    rows, cols = frame.shape[-2:]
    if rows % p_rows or cols % p_cols:
        raise InvalidArchitecture(
            f"Frame {rows}x{cols} is not divisible by pool {p_rows}x{p_cols}"
        )
    blocks = frame.reshape(*frame.shape[:-2], rows // p_rows, p_rows, cols // p_cols, p_cols)
    return blocks.max(axis=(-3, -1))


def _pool_with_argmax(frames: np.ndarray, pool: Tuple[int, int]):
    k, rows, cols = frames.shape
    p_rows, p_cols = pool
    blocks = (
        frames.reshape(k, rows // p_rows, p_rows, cols // p_cols, p_cols)
        .transpose(0, 1, 3, 2, 4)
        .reshape(k, rows // p_rows, cols // p_cols, p_rows * p_cols)
    )
    winner = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, winner[..., None], axis=-1)[..., 0], winner


def _unpool(grad: np.ndarray, winner: np.ndarray, pool: Tuple[int, int]) -> np.ndarray:
    k, out_rows, out_cols = grad.shape
    p_rows, p_cols = pool
    blocks = np.zeros((k, out_rows, out_cols, p_rows * p_cols))
    np.put_along_axis(blocks, winner[..., None], grad[..., None], axis=-1)
    return (
        blocks.reshape(k, out_rows, out_cols, p_rows, p_cols)
        .transpose(0, 1, 3, 2, 4)
        .reshape(k, out_rows * p_rows, out_cols * p_cols)
    )


def _correlate(frames: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Valid cross-correlation of (C, H, W) frames with (K, C, a, b) kernels -> (K, H', W')."""
    a, b = kernels.shape[2:]
    windows = sliding_window_view(frames, (a, b), axis=(1, 2))
    return np.tensordot(windows, kernels, axes=([0, 3, 4], [1, 2, 3])).transpose(2, 0, 1)


def _as_frames(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None] if x.ndim == 2 else x


def conv_forward(frames, layer: ConvPoolLayer) -> np.ndarray:
    """Correlate, add bias, tanh, max-pool. A 2-D input is a single frame."""
    frames = _as_frames(frames)
    a, b = layer.kernel_shape
    if frames.shape[1] < a or frames.shape[2] < b:
        raise DimensionMismatch("convolution input", f">= {a}x{b}", frames.shape[1:])
    if frames.shape[0] != layer.kernels.shape[1]:
        raise DimensionMismatch(
            "convolution input frames", layer.kernels.shape[1], frames.shape[0]
        )
    activated = np.tanh(_correlate(frames, layer.kernels) + layer.biases[:, None, None])
    return maxpool(activated, *layer.pool)


def _check_input(model: CNNModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != tuple(model.input_shape):
        raise DimensionMismatch("review matrix", tuple(model.input_shape), x.shape)
    return x


def _logits(model: CNNModel, x) -> np.ndarray:
    frames = _as_frames(_check_input(model, x))
    for layer in model.layers:
        frames = conv_forward(frames, layer)
    return model.output_weights @ frames.ravel() + model.output_bias


def _logits_many(model: CNNModel, X, workers: int = 1) -> np.ndarray:
    if workers > 1 and len(X) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(lambda x: _logits(model, x), X)))
    return np.array([_logits(model, x) for x in X]).reshape(-1, 2)


def cnn_forward(model: CNNModel, x) -> np.ndarray:
    """Two sigmoid class scores (negative, positive) for one review matrix."""
    return expit(_logits(model, x))


def cnn_forward_many(model: CNNModel, X, workers: int = 1) -> np.ndarray:
    """Scores for every matrix of X, shape (n, 2)."""
    return expit(_logits_many(model, X, workers))


def cnn_predict(model: CNNModel, x) -> Polarity:
    scores = cnn_forward(model, x)
    return Polarity.POSITIVE if scores[1] >= scores[0] else Polarity.NEGATIVE


def cnn_predict_many(model: CNNModel, X, workers: int = 1) -> np.ndarray:
    scores = cnn_forward_many(model, X, workers)
    return (scores[:, 1] >= scores[:, 0]).astype(np.int64)


def _targets(label) -> np.ndarray:
    return np.eye(2)[int(label)]


def _example_loss(logits: np.ndarray, target: np.ndarray) -> float:
    return float((np.logaddexp(0.0, logits) - target * logits).sum())


def cnn_loss_and_gradients(model: CNNModel, x, label) -> Tuple[float, List[np.ndarray]]:
    """Cross-entropy of the two sigmoid outputs and its gradient for every parameter array.

    Gradients come in the order of `CNNModel.parameters()`.
    """
    frames = _as_frames(_check_input(model, x))
    cache = []
    for layer in model.layers:
        activated = np.tanh(_correlate(frames, layer.kernels) + layer.biases[:, None, None])
        pooled, winner = _pool_with_argmax(activated, layer.pool)
        cache.append((frames, activated, winner))
        frames = pooled
    hidden = frames.ravel()
    logits = model.output_weights @ hidden + model.output_bias
    target = _targets(label)
    loss = _example_loss(logits, target)

    delta = expit(logits) - target
    grads_out = [np.outer(delta, hidden), delta]
    grad = (model.output_weights.T @ delta).reshape(frames.shape)
    layer_grads: List[np.ndarray] = []
    for depth in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[depth]
        inputs, activated, winner = cache[depth]
        dz = _unpool(grad, winner, layer.pool) * (1.0 - activated**2)
        a, b = layer.kernel_shape
        windows = sliding_window_view(inputs, (a, b), axis=(1, 2))
        d_kernels = np.tensordot(dz, windows, axes=([1, 2], [1, 2]))
        layer_grads = [d_kernels, dz.sum(axis=(1, 2)), *layer_grads]
        if depth:
            padded = np.pad(dz, ((0, 0), (a - 1, a - 1), (b - 1, b - 1)))
            flipped = layer.kernels[:, :, ::-1, ::-1]
            grad = _correlate(padded, flipped.transpose(1, 0, 2, 3))
    return loss, [*layer_grads, *grads_out]


def cnn_loss(model: CNNModel, X, y, workers: int = 1) -> float:
    """Mean cross-entropy over a data set."""
    logits = _logits_many(model, X, workers)
    targets = np.eye(2)[np.asarray([int(v) for v in y])]
    return float((np.logaddexp(0.0, logits) - targets * logits).sum(axis=1).mean())


def cnn_train(
    model: CNNModel,
    X: Sequence[np.ndarray],
    y,
    epochs: int = 20,
    batch_size: int = 50,
    lr: float = 0.05,
    seed: int = 0,
    min_improvement: float = 1e-4,
    workers: int = 1,
) -> CNNModel:
    """Mini-batch SGD with backpropagation; returns a trained copy of `model`.

    Examples are reshuffled every epoch from `seed`. `losses` of the result holds the mean
    training loss before the first epoch and after each epoch; training stops early once an
    epoch improves it by less than `min_improvement`. Per-example gradients may be computed by
    `workers` threads; they are always summed in example order.

    Raises:
        TrainingDiverged: when the loss stops being finite.
    """
    labels = [int(v) for v in y]
    if not len(X):
        raise InsufficientDocuments("CNN training", 1, 0)
    trained = model.copy()
    trained.losses = [cnn_loss(trained, X, labels, workers)]
    rng = np.random.default_rng(seed)

    def gradient(i):
        return cnn_loss_and_gradients(trained, X[i], labels[i])

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for epoch in range(1, epochs + 1):
            order = rng.permutation(len(X))
            for start in range(0, len(order), batch_size):
                batch = order[start : start + batch_size]
                results = list(pool.map(gradient, batch)) if pool else [gradient(i) for i in batch]
                if not all(np.isfinite(loss) for loss, _ in results):
                    raise TrainingDiverged(epoch, lr)
                params = trained.parameters()
                for position, param in enumerate(params):
                    total = np.zeros_like(param)
                    for _, grads in results:
                        total += grads[position]
                    param -= lr * total / len(batch)
            loss = cnn_loss(trained, X, labels, workers)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, lr)
            trained.losses.append(loss)
            logging.info(f"CNN epoch {epoch}: training loss {loss:.6f}")
            if trained.losses[-2] - loss < min_improvement:
                logging.info(f"CNN early stop after epoch {epoch}")
                break
    finally:
        if pool:
            pool.shutdown()
    return trained


def build_review_matrix(doc: Tokens, model: EmbeddingModel, L: int = 60) -> np.ndarray:
    """L x D matrix of the first L tokens' embeddings, cycled from the start when shorter.

    Tokens missing from the embedding vocabulary are skipped.

    Raises:
        NoKnownTokens: if none of the first L tokens has an embedding.
    """
    known = [model.vocab.index[t] for t in doc_tokens(doc)[:L] if t in model.vocab.index]
    if not known:
        raise NoKnownTokens()
    rows = np.resize(np.array(known), L)
    return model.input_vectors[rows].copy()


def save_cnn(model: CNNModel, path: Union[str, Path]) -> None:
    """Little-endian float32 dump: header, per-layer shape-prefixed kernels, output layer."""
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<3I", len(model.layers), *model.input_shape))
        for layer in model.layers:
            handle.write(struct.pack("<6I", *layer.kernels.shape, *layer.pool))
            handle.write(layer.kernels.astype("<f4").tobytes())
            handle.write(layer.biases.astype("<f4").tobytes())
        handle.write(struct.pack("<2I", *model.output_weights.shape))
        handle.write(model.output_weights.astype("<f4").tobytes())
        handle.write(model.output_bias.astype("<f4").tobytes())


def _read_array(handle, shape) -> np.ndarray:
    count = int(np.prod(shape))
    data = handle.read(4 * count)
    if len(data) != 4 * count:
        raise ValueError("truncated model file")
    return np.frombuffer(data, dtype="<f4").astype(np.float64).reshape(shape)


def load_cnn(path: Union[str, Path]) -> CNNModel:
    try:
        with open(path, "rb") as handle:
            if handle.read(len(MAGIC)) != MAGIC:
                raise ValueError("not a CNN model file")
            n_layers, rows, cols = struct.unpack("<3I", handle.read(12))
            layers = []
            for _ in range(n_layers):
                k_out, k_in, a, b, p_rows, p_cols = struct.unpack("<6I", handle.read(24))
                kernels = _read_array(handle, (k_out, k_in, a, b))
                biases = _read_array(handle, (k_out,))
                layers.append(ConvPoolLayer(kernels, biases, (p_rows, p_cols)))
            out_rows, out_cols = struct.unpack("<2I", handle.read(8))
            weights = _read_array(handle, (out_rows, out_cols))
            bias = _read_array(handle, (out_rows,))
    except (OSError, ValueError, struct.error) as exc:
        raise CorpusError(path, str(exc)) from exc
    return CNNModel(layers, weights, bias, (rows, cols))
