"""Loading, labeling, balancing and splitting of rating-annotated review corpora."""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from senti.exceptions import CorpusError, InsufficientDocuments


class Polarity(IntEnum):
    """Binary sentiment label; the numeric codes are the prediction-vector bits."""

    NEGATIVE = 0
    POSITIVE = 1


class CorpusFormat(str, Enum):
    TSV = "tsv"
    JSONL = "jsonl"


class FoldScheme(str, Enum):
    """Fold protocols: 2 train + 1 test folds, or 2 train + 1 validate + 1 test folds."""

    THREE_FOLD = "three_fold"
    FOUR_FOLD = "four_fold"

    @property
    def folds(self) -> int:
        return 3 if self is FoldScheme.THREE_FOLD else 4


@dataclass(frozen=True)
class RawReview:
    rating: int
    tokens: Tuple[str, ...]
    line_no: Optional[int] = None


@dataclass(frozen=True)
class LabeledDoc:
    tokens: Tuple[str, ...]
    label: Polarity
    doc_id: Optional[int] = None


@dataclass
class CorpusSplit:
    train: List[LabeledDoc]
    validate: Optional[List[LabeledDoc]]
    test: List[LabeledDoc]
    seed: int


@dataclass
class LoadedCorpus(Sequence[RawReview]):
    """The reviews of one corpus file plus the number of lines that were skipped."""

    reviews: List[RawReview] = field(default_factory=list)
    skipped: int = 0

    def __getitem__(self, index):
        return self.reviews[index]

    def __len__(self) -> int:
        return len(self.reviews)

    def __iter__(self) -> Iterator[RawReview]:
        return iter(self.reviews)


def tokenize(text: str) -> Tuple[str, ...]:
    """Whitespace tokenizer; the corpus is expected to be segmented already."""
    return tuple(text.split())


def _parse_line(line: str, corpus_format: CorpusFormat) -> Tuple[int, Tuple[str, ...]]:
    if corpus_format is CorpusFormat.TSV:
        rating, tab, text = line.partition("\t")
        if not tab:
            raise ValueError("missing tab separator")
        return int(rating), tokenize(text)
    record = json.loads(line)
    rating = record["rating"]
    if isinstance(rating, bool) or not isinstance(rating, (int, str)):
        raise ValueError(f"rating {rating!r} is not an integer")
    return int(rating), tokenize(str(record["text"]))


def load_corpus(path: Union[str, Path], corpus_format="tsv") -> LoadedCorpus:
    """Read one review per line, skipping (and counting) malformed lines.

    Args:
        path: UTF-8 corpus file.
        corpus_format: "tsv" (`<rating>\\t<tokens>`) or "jsonl" (`{"rating", "text"}`).

    Returns:
        The parsed reviews and the skip count.

    Raises:
        CorpusError: if the file cannot be opened or decoded.
    """
    corpus_format = CorpusFormat(corpus_format)
    corpus = LoadedCorpus()
    try:
        with open(path, encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                line = line.rstrip("\r\n")
                if not line.strip():
                    continue
                try:
                    rating, tokens = _parse_line(line, corpus_format)
                except (ValueError, KeyError, TypeError) as exc:
                    logging.warning(f"{path}:{line_no}: malformed line skipped ({exc})")
                    corpus.skipped += 1
                    continue
                if rating not in range(1, 6):
                    logging.warning(f"{path}:{line_no}: rating {rating} outside 1..5, skipped")
                    corpus.skipped += 1
                    continue
                if not tokens:
                    logging.warning(f"{path}:{line_no}: review has no tokens, skipped")
                    corpus.skipped += 1
                    continue
                corpus.reviews.append(RawReview(rating, tokens, line_no))
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(path, str(exc)) from exc
    logging.info(f"Loaded {len(corpus)} reviews from {path}, skipped {corpus.skipped} lines")
    return corpus


def label_reviews(reviews: Iterable[RawReview]) -> List[LabeledDoc]:
    """Map 4-5 stars to positive, 1-2 stars to negative and drop 3-star reviews."""
    docs = []
    for position, review in enumerate(reviews):
        if review.rating == 3:
            continue
        label = Polarity.POSITIVE if review.rating >= 4 else Polarity.NEGATIVE
        doc_id = review.line_no if review.line_no is not None else position
        docs.append(LabeledDoc(review.tokens, label, doc_id))
    return docs


def _class_indices(docs: Sequence[LabeledDoc]):
    labels = np.fromiter((doc.label for doc in docs), dtype=np.int64, count=len(docs))
    return {polarity: np.flatnonzero(labels == polarity) for polarity in Polarity}


def balance(docs: Sequence[LabeledDoc], per_class: int, seed: int) -> List[LabeledDoc]:
    """Sample exactly `per_class` docs of each polarity without replacement.

    The sampled docs keep their input order.
    """
    rng = np.random.default_rng(seed)
    chosen = []
    for polarity, indices in _class_indices(docs).items():
        if len(indices) < per_class:
            raise InsufficientDocuments(polarity.name.lower(), per_class, len(indices))
        chosen.append(rng.choice(indices, size=per_class, replace=False))
    return [docs[i] for i in np.sort(np.concatenate(chosen))]


def split(docs: Sequence[LabeledDoc], scheme="three_fold", seed: int = 0) -> CorpusSplit:
    """Stratified fold split.

    Each class is shuffled, the classes are concatenated and positions are dealt round-robin
    into the folds, so fold sizes differ by at most one and every class is spread evenly.
    Folds 0 and 1 form the training part; with four folds, fold 2 validates.
    """
    scheme = FoldScheme(scheme)
    if len(docs) < scheme.folds:
        raise InsufficientDocuments(f"{scheme.value} split", scheme.folds, len(docs))
    rng = np.random.default_rng(seed)
    classes = _class_indices(docs).values()
    ordered = np.concatenate([rng.permutation(indices) for indices in classes])
    folds = [ordered[k :: scheme.folds] for k in range(scheme.folds)]

    def part(indices) -> List[LabeledDoc]:
        return [docs[i] for i in rng.permutation(indices)]

    train = part(np.concatenate(folds[:2]))
    if scheme is FoldScheme.FOUR_FOLD:
        return CorpusSplit(train, part(folds[2]), part(folds[3]), seed)
    return CorpusSplit(train, None, part(folds[2]), seed)


def provenance(docs: Iterable[LabeledDoc]) -> FrozenSet[int]:
    """The ids of the given docs, used to detect train/validate/test leakage."""
    return frozenset(doc.doc_id for doc in docs if doc.doc_id is not None)
