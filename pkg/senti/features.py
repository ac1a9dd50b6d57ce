"""Vocabularies, sentiment-lexicon merging, chi-square word ranking and binary vectorizers."""

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from senti.corpus import LabeledDoc, Polarity
from senti.exceptions import CorpusError

BIGRAM_SEP = "\x01"

Tokens = Union[LabeledDoc, Sequence[str]]


def doc_tokens(doc: Tokens) -> Sequence[str]:
    return doc.tokens if isinstance(doc, LabeledDoc) else doc


class Vocabulary:
    """Ordered, duplicate-free list of feature strings with dense indices 0..m-1.

    Optional per-word `scores` (CHI values) and `counts` (corpus frequencies) travel with it.
    """

    def __init__(
        self,
        words: Iterable[str] = (),
        scores: Optional[Dict[str, float]] = None,
        counts: Optional[Dict[str, int]] = None,
    ):
        self.words: Tuple[str, ...] = tuple(dict.fromkeys(words))
        self.index: Dict[str, int] = {word: i for i, word in enumerate(self.words)}
        self.scores = {w: scores[w] for w in self.words if w in scores} if scores else {}
        self.counts = {w: counts[w] for w in self.words if w in counts} if counts else {}

    def __repr__(self) -> str:
        head = " ".join(self.words[:5])
        return f"Vocabulary(m={self.m}: {head}{' ...' if self.m > 5 else ''})"

    def __len__(self) -> int:
        return len(self.words)

    def __iter__(self) -> Iterator[str]:
        return iter(self.words)

    def __contains__(self, word) -> bool:
        return word in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.words == other.words

    @property
    def m(self) -> int:
        return len(self.words)

    @classmethod
    def from_documents(cls, docs: Iterable[Tokens], min_df: int = 1, ngrams: bool = False):
        """Build a vocabulary of every unigram (and bigram) with document frequency >= min_df.

        Words are ordered by first appearance.
        """
        document_frequency: Counter = Counter()
        counts: Counter = Counter()
        for doc in docs:
            keys = ngram_keys(doc_tokens(doc)) if ngrams else list(doc_tokens(doc))
            counts.update(keys)
            document_frequency.update(set(keys))
        words = [word for word in counts if document_frequency[word] >= min_df]
        return cls(words, counts=counts)

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(f"m={self.m}\n")
            for word in self.words:
                handle.write(f"{word}\n")

    @classmethod
    def load(cls, path: Union[str, Path]):
        try:
            with open(path, encoding="utf-8") as handle:
                header = handle.readline().strip()
                words = [line.rstrip("\n") for line in handle]
        except OSError as exc:
            raise CorpusError(path, str(exc)) from exc
        if not header.startswith("m=") or int(header[2:]) != len(words):
            raise CorpusError(path, f"bad feature space header {header!r}")
        return cls(words)


def load_lexicon(path: Union[str, Path]) -> List[str]:
    """Read a sentiment word list, one word per line."""
    try:
        with open(path, encoding="utf-8") as handle:
            return [line.strip() for line in handle if line.strip()]
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(path, str(exc)) from exc


def merge_lexicons(lists: Iterable[Iterable[str]], corpus_vocab: Vocabulary) -> Vocabulary:
    """Union of the word lists, restricted to words that occur in the corpus."""
    merged = dict.fromkeys(word for words in lists for word in words)
    kept = [word for word in merged if word in corpus_vocab]
    logging.info(f"Merged lexicons: {len(merged)} words, {len(kept)} occur in the corpus")
    return Vocabulary(kept, counts=corpus_vocab.counts)


@dataclass(frozen=True)
class ChiTable:
    """Two-class contingency counts of one word against class c."""

    word: str
    a: int  # docs of class c containing the word
    b: int  # docs of the other class containing the word
    c: int  # docs of class c without the word
    d: int  # docs of the other class without the word

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d

    @property
    def score(self) -> float:
        return chi_square(self.a, self.b, self.c, self.d)


def chi_square(a, b, c, d) -> float:
    """N(AD - CB)^2 / ((A+C)(B+D)(A+B)(C+D)); zero when any marginal is zero."""
    denominator = (a + c) * (b + d) * (a + b) * (c + d)
    if denominator == 0:
        return 0.0
    n = a + b + c + d
    return float(n * (a * d - c * b) ** 2 / denominator)


def _chi_square_array(a, b, c, d) -> np.ndarray:
    a, b, c, d = (np.asarray(x, dtype=np.float64) for x in (a, b, c, d))
    denominator = (a + c) * (b + d) * (a + b) * (c + d)
    numerator = (a + b + c + d) * (a * d - c * b) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(denominator > 0, denominator, 1)
        return np.where(denominator > 0, numerator / safe, 0.0)


def chi_tables(docs: Sequence[LabeledDoc], vocab: Vocabulary, polarity=Polarity.POSITIVE):
    """Contingency table of every vocabulary word against `polarity`."""
    in_class: Counter = Counter()
    out_class: Counter = Counter()
    class_size = 0
    for doc in docs:
        present = set(doc.tokens)
        if doc.label == polarity:
            class_size += 1
            in_class.update(present)
        else:
            out_class.update(present)
    other_size = len(docs) - class_size
    return {
        word: ChiTable(
            word,
            in_class[word],
            out_class[word],
            class_size - in_class[word],
            other_size - out_class[word],
        )
        for word in vocab
    }


def chi_scores(docs: Sequence[LabeledDoc], vocab: Vocabulary) -> np.ndarray:
    """Per-word CHI score: the maximum over the two classes."""
    best = np.zeros(vocab.m)
    for polarity in Polarity:
        tables = chi_tables(docs, vocab, polarity)
        counts = np.array(
            [(t.a, t.b, t.c, t.d) for t in (tables[w] for w in vocab)], dtype=np.float64
        ).reshape(-1, 4)
        best = np.maximum(best, _chi_square_array(*counts.T))
    return best


def select_top_chi(docs: Sequence[LabeledDoc], vocab: Vocabulary, k: int) -> Vocabulary:
    """The k highest-scoring words; ties by corpus frequency, then lexicographic order."""
    if k <= 0:
        return Vocabulary()
    scores = chi_scores(docs, vocab)
    frequency = Counter(token for doc in docs for token in doc.tokens)
    ranked = sorted(
        range(vocab.m), key=lambda i: (-scores[i], -frequency[vocab.words[i]], vocab.words[i])
    )[:k]
    words = [vocab.words[i] for i in ranked]
    logging.info(f"Selected {len(words)} CHI words, top: {' '.join(words[:10])}")
    return Vocabulary(
        words, scores={vocab.words[i]: float(scores[i]) for i in ranked}, counts=frequency
    )


def build_feature_space(sentiment_vocab: Vocabulary, chi_vocab: Vocabulary) -> Vocabulary:
    """Lexicon words first, then CHI words not already present."""
    space = Vocabulary(
        [*sentiment_vocab.words, *chi_vocab.words],
        scores=chi_vocab.scores,
        counts={**sentiment_vocab.counts, **chi_vocab.counts},
    )
    overlap = sentiment_vocab.m + chi_vocab.m - space.m
    logging.info(f"Feature space has {space.m} words ({overlap} CHI words already in the lexicon)")
    return space


@dataclass(frozen=True)
class SparseVector:
    """Sorted (index, value) pairs over a vocabulary of size `dim`."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __len__(self) -> int:
        return len(self.indices)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        dense[self.indices] = self.values
        return dense


def _binary_vector(keys: Iterable[str], space: Vocabulary) -> SparseVector:
    indices = np.array(sorted({space.index[k] for k in keys if k in space.index}), dtype=np.int64)
    return SparseVector(indices, np.ones(len(indices)), space.m)


def ngram_keys(tokens: Sequence[str]) -> List[str]:
    """Unigrams followed by adjacent-token bigrams joined with BIGRAM_SEP."""
    bigrams = [f"{left}{BIGRAM_SEP}{right}" for left, right in zip(tokens, tokens[1:])]
    return [*tokens, *bigrams]


def vectorize_binary(doc: Tokens, space: Vocabulary) -> SparseVector:
    return _binary_vector(doc_tokens(doc), space)


def vectorize_ngrams(doc: Tokens, space: Vocabulary) -> SparseVector:
    return _binary_vector(ngram_keys(doc_tokens(doc)), space)


def build_ngram_space(docs: Iterable[Tokens], min_df: int = 2) -> Vocabulary:
    space = Vocabulary.from_documents(docs, min_df=min_df, ngrams=True)
    logging.info(f"N-gram space has {space.m} features (min_df={min_df})")
    return space


def stack_vectors(vectors: Sequence[SparseVector], dim: int) -> sp.csr_matrix:
    """Rows of a CSR matrix, one per vector."""
    indptr = np.cumsum([0, *(len(v) for v in vectors)])
    indices = np.concatenate([v.indices for v in vectors]) if vectors else np.zeros(0, np.int64)
    data = np.concatenate([v.values for v in vectors]) if vectors else np.zeros(0)
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


def vectorize_corpus(docs: Sequence[Tokens], space: Vocabulary, ngrams: bool = False):
    """Binary document-feature CSR matrix."""
    vectorize = vectorize_ngrams if ngrams else vectorize_binary
    return stack_vectors([vectorize(doc, space) for doc in docs], space.m)
