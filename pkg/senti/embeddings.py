"""Skip-gram word embeddings with negative sampling, review averaging and hybrid features.

Training follows the classic word2vec recipe: frequent-word subsampling, a randomly shrunk
context window per position, negatives drawn from the unigram distribution raised to 0.75
and a learning rate decaying linearly over all epochs. All contexts of one center word are
updated together; `workers > 1` runs lock-free threads over interleaved shards of the corpus,
which is fast but not bit-reproducible.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from senti.corpus import LabeledDoc
from senti.exceptions import (
    CorpusError,
    DimensionMismatch,
    EmptyVocabulary,
    ZeroVectorError,
)
from senti.features import Tokens, Vocabulary, doc_tokens, vectorize_binary

HEADER_PREFIX = "word2vec"


@dataclass(frozen=True)
class SkipGramParams:
    window: int = 5
    negatives: int = 5
    min_count: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    min_lr: float = 0.0001
    sample: float = 1e-3
    seed: int = 1
    workers: int = 1


class EmbeddingModel:
    """Word -> dense vector table of dimension `dim`.

    `input_vectors` are the word embeddings; `output_vectors` are the context weights used
    only during training (they are not persisted).
    """

    def __init__(self, vocab: Vocabulary, input_vectors, output_vectors=None, params=None):
        self.vocab = vocab
        self.input_vectors = np.asarray(input_vectors, dtype=np.float64)
        if self.input_vectors.ndim != 2 or self.input_vectors.shape[0] != vocab.m:
            raise DimensionMismatch("embedding matrix rows", vocab.m, self.input_vectors.shape)
        self.output_vectors = (
            np.zeros_like(self.input_vectors)
            if output_vectors is None
            else np.asarray(output_vectors, dtype=np.float64)
        )
        self.params = params or SkipGramParams()

    def __repr__(self) -> str:
        return f"EmbeddingModel(D={self.dim}, V={self.vocab.m})"

    def __contains__(self, word) -> bool:
        return word in self.vocab

    @property
    def dim(self) -> int:
        return self.input_vectors.shape[1]

    def vector(self, word: str) -> np.ndarray:
        return self.input_vectors[self.vocab.index[word]]

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.input_vectors).all() and np.isfinite(self.output_vectors).all()
        )

    @classmethod
    def from_vectors(cls, words: Sequence[str], vectors):
        return cls(Vocabulary(words), vectors)

    def save(self, path: Union[str, Path], binary: bool = False) -> None:
        header = f"{HEADER_PREFIX} D={self.dim} V={self.vocab.m}\n"
        if binary:
            with open(path, "wb") as handle:
                handle.write(header.encode("utf-8"))
                for word, row in zip(self.vocab.words, self.input_vectors):
                    handle.write(word.encode("utf-8") + b" ")
                    handle.write(row.astype("<f4").tobytes())
                    handle.write(b"\n")
            return
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(header)
            for word, row in zip(self.vocab.words, self.input_vectors):
                handle.write(f"{word} {' '.join(f'{value:.8g}' for value in row)}\n")

    @classmethod
    def load(cls, path: Union[str, Path], binary: Optional[bool] = None):
        """Read a model written by `save`; `binary=None` guesses from the file suffix."""
        if binary is None:
            binary = str(path).endswith(".bin")
        try:
            with open(path, "rb") as handle:
                dim, size = _parse_header(handle.readline().decode("utf-8"), path)
                words: List[str] = []
                vectors = np.zeros((size, dim))
                for row in range(size):
                    if binary:
                        word = bytearray()
                        while (char := handle.read(1)) != b" ":
                            if not char:
                                raise CorpusError(path, "truncated binary model")
                            word.extend(char)
                        vectors[row] = np.frombuffer(handle.read(4 * dim), dtype="<f4")
                        handle.read(1)
                        words.append(word.decode("utf-8"))
                    else:
                        parts = handle.readline().decode("utf-8").rstrip("\n").split(" ")
                        if len(parts) != dim + 1:
                            raise CorpusError(path, f"line {row + 2} has {len(parts) - 1} values")
                        words.append(parts[0])
                        vectors[row] = np.array(parts[1:], dtype=np.float64)
        except OSError as exc:
            raise CorpusError(path, str(exc)) from exc
        return cls(Vocabulary(words), vectors)


def _parse_header(line: str, path) -> tuple:
    fields = line.split()
    try:
        if fields[0] != HEADER_PREFIX:
            raise ValueError(line)
        values = dict(field.split("=", 1) for field in fields[1:])
        return int(values["D"]), int(values["V"])
    except (IndexError, KeyError, ValueError) as exc:
        raise CorpusError(path, f"bad embedding header {line.strip()!r}") from exc


def build_skipgram_vocab(docs: Iterable[Tokens], min_count: int) -> Vocabulary:
    """Words with corpus frequency >= min_count, most frequent first."""
    full = Vocabulary.from_documents(docs)
    kept = sorted(
        (word for word, count in full.counts.items() if count >= min_count),
        key=lambda word: (-full.counts[word], word),
    )
    if not kept:
        raise EmptyVocabulary(min_count)
    return Vocabulary(kept, counts=full.counts)


def init_model(vocab: Vocabulary, dim: int, params: SkipGramParams) -> EmbeddingModel:
    """Input vectors uniform in [-0.5/D, 0.5/D], output vectors zero."""
    rng = np.random.default_rng(params.seed)
    vectors = (rng.random((vocab.m, dim)) - 0.5) / dim
    return EmbeddingModel(vocab, vectors, np.zeros((vocab.m, dim)), params)


class _SkipGramTrainer:
    def __init__(self, model: EmbeddingModel, sentences: List[np.ndarray]):
        self.model = model
        self.params = model.params
        self.sentences = sentences
        counts = np.array([model.vocab.counts[w] for w in model.vocab.words], dtype=np.float64)
        noise = counts**0.75
        self.noise_cdf = np.cumsum(noise) / noise.sum()
        if self.params.sample > 0:
            threshold = self.params.sample * counts.sum()
            keep = (np.sqrt(counts / threshold) + 1) * threshold / counts
            self.keep_prob = np.minimum(1.0, keep)
        else:
            self.keep_prob = np.ones_like(counts)
        self.total_words = max(1, sum(len(s) for s in sentences) * self.params.epochs)
        self.processed = 0
        self.lock = threading.Lock()

    def learning_rate(self) -> float:
        progress = min(1.0, self.processed / self.total_words)
        lr = self.params.initial_lr - (self.params.initial_lr - self.params.min_lr) * progress
        return max(self.params.min_lr, lr)

    def train_sentence(self, sentence: np.ndarray, rng: np.random.Generator) -> None:
        lr = self.learning_rate()
        kept = sentence[rng.random(len(sentence)) < self.keep_prob[sentence]]
        with self.lock:
            self.processed += len(sentence)
        if len(kept) < 2:
            return
        window, negatives = self.params.window, self.params.negatives
        w_in, w_out = self.model.input_vectors, self.model.output_vectors
        spans = window - rng.integers(0, window, size=len(kept))
        labels = np.zeros(negatives + 1)
        labels[0] = 1.0
        for pos, center in enumerate(kept):
            span = spans[pos]
            context = np.concatenate(
                [kept[max(0, pos - span) : pos], kept[pos + 1 : pos + 1 + span]]
            )
            if not len(context):
                continue
            noise = np.searchsorted(self.noise_cdf, rng.random((len(context), negatives)), "right")
            noise = np.minimum(noise, len(self.noise_cdf) - 1)
            targets = np.concatenate([context[:, None], noise], axis=1)
            l1 = w_in[center]
            l2 = w_out[targets]
            gradient = (labels - expit(l2 @ l1)) * lr
            gradient[:, 1:][noise == context[:, None]] = 0.0
            neu1e = np.einsum("ck,ckd->d", gradient, l2)
            np.add.at(w_out, targets, gradient[..., None] * l1)
            w_in[center] += neu1e

    def run(self) -> None:
        params = self.params
        if params.workers <= 1:
            rng = np.random.default_rng(params.seed)
            for epoch in range(params.epochs):
                for sentence in self.sentences:
                    self.train_sentence(sentence, rng)
                logging.info(
                    f"skip-gram epoch {epoch + 1}/{params.epochs} done, "
                    f"lr {self.learning_rate():.5f}"
                )
            return
        with ThreadPoolExecutor(max_workers=params.workers) as pool:
            for epoch in range(params.epochs):
                shards = [self.sentences[k :: params.workers] for k in range(params.workers)]
                jobs = [
                    pool.submit(self._train_shard, shard, [params.seed, epoch, k])
                    for k, shard in enumerate(shards)
                ]
                for job in jobs:
                    job.result()
                logging.info(
                    f"skip-gram epoch {epoch + 1}/{params.epochs} done ({params.workers} workers)"
                )

    def _train_shard(self, shard, seed) -> None:
        rng = np.random.default_rng(seed)
        for sentence in shard:
            self.train_sentence(sentence, rng)


def encode(docs: Iterable[Tokens], vocab: Vocabulary) -> List[np.ndarray]:
    """Token sequences as vocabulary index arrays, out-of-vocabulary tokens removed."""
    return [
        np.array([vocab.index[t] for t in doc_tokens(doc) if t in vocab.index], dtype=np.int64)
        for doc in docs
    ]


def train_skipgram(
    docs: Sequence[Tokens], dim: int, params: Optional[SkipGramParams] = None, **overrides
) -> EmbeddingModel:
    """Train skip-gram embeddings with negative sampling.

    Args:
        docs: Token sequences (or LabeledDocs).
        dim: Embedding dimension D.
        params: Hyperparameters; keyword overrides replace single fields.

    Returns:
        The trained model.

    Raises:
        EmptyVocabulary: if no word reaches min_count.
    """
    params = replace(params or SkipGramParams(), **overrides)
    if not docs:
        raise EmptyVocabulary(params.min_count)
    vocab = build_skipgram_vocab(docs, params.min_count)
    model = init_model(vocab, dim, params)
    logging.info(
        f"Training skip-gram D={dim} over {len(docs)} docs, V={vocab.m}, {asdict(params)}"
    )
    _SkipGramTrainer(model, encode(docs, vocab)).run()
    return model


def sample_pairs(docs: Sequence[Tokens], model: EmbeddingModel, n_pairs: int, seed: int = 0):
    """Draw (center, context) index pairs and fixed negatives for loss monitoring."""
    rng = np.random.default_rng(seed)
    pairs = []
    for sentence in encode(docs, model.vocab):
        for pos in range(len(sentence)):
            for other in range(max(0, pos - model.params.window), pos + model.params.window + 1):
                if other != pos and other < len(sentence):
                    pairs.append((sentence[pos], sentence[other]))
    pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) > n_pairs:
        pairs = pairs[rng.choice(len(pairs), size=n_pairs, replace=False)]
    negatives = rng.integers(0, model.vocab.m, size=(len(pairs), model.params.negatives))
    return pairs, negatives


def negative_sampling_loss(model: EmbeddingModel, pairs, negatives) -> float:
    """Mean negative-sampling loss over frozen (center, context, negatives) samples."""
    centers = model.input_vectors[pairs[:, 0]]
    positive = np.einsum("pd,pd->p", centers, model.output_vectors[pairs[:, 1]])
    negative = np.einsum("pd,pkd->pk", centers, model.output_vectors[negatives])
    loss = -np.log(expit(positive)) - np.log(expit(-negative)).sum(axis=1)
    return float(loss.mean())


def average_review_vector(doc: Tokens, model: EmbeddingModel) -> np.ndarray:
    """Mean of the in-vocabulary word vectors; zero vector when every token is unknown."""
    indices = [model.vocab.index[t] for t in doc_tokens(doc) if t in model.vocab.index]
    if not indices:
        return np.zeros(model.dim)
    return model.input_vectors[indices].mean(axis=0)


def hybrid_feature_vector(
    doc: Tokens,
    model: EmbeddingModel,
    chi_vocab: Vocabulary,
    embedding_dim: Optional[int] = 300,
    chi_words: Optional[int] = 150,
) -> np.ndarray:
    """[average embedding || binary CHI-word indicators]; None skips a dimension check."""
    if embedding_dim is not None and model.dim != embedding_dim:
        raise DimensionMismatch("embedding model", embedding_dim, model.dim)
    if chi_words is not None and chi_vocab.m != chi_words:
        raise DimensionMismatch("CHI vocabulary", chi_words, chi_vocab.m)
    return np.concatenate(
        [average_review_vector(doc, model), vectorize_binary(doc, chi_vocab).to_dense()]
    )


def hybrid_matrix(
    docs: Sequence[Union[LabeledDoc, Sequence[str]]],
    model: EmbeddingModel,
    chi_vocab: Vocabulary,
    embedding_dim: Optional[int] = None,
    chi_words: Optional[int] = None,
) -> np.ndarray:
    rows = [hybrid_feature_vector(doc, model, chi_vocab, embedding_dim, chi_words) for doc in docs]
    return np.vstack(rows) if rows else np.zeros((0, model.dim + chi_vocab.m))


def cosine(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch("cosine operands", a.shape, b.shape)
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0:
        raise ZeroVectorError()
    return float(np.clip(a @ b / norm, -1.0, 1.0))
