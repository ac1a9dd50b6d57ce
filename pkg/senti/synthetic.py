"""Synthetic review corpora with class-conditional word distributions.

The vocabulary is split into a positive-indicative pool (`pos0000`, ...), a negative-indicative
pool (`neg0000`, ...) and a neutral pool (`w0000`, ...). Word frequencies inside each pool are
Zipfian, so embeddings and frequency cut-offs behave much like they do on real text.
"""

import json
import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from senti.corpus import CorpusFormat, RawReview

SENTIMENT_SHARE = 0.1
OWN_POOL_RATE = 0.3
OTHER_POOL_RATE = 0.05
NEUTRAL_RATING_SHARE = 0.05


def word_pools(vocab_size: int) -> Tuple[List[str], List[str], List[str]]:
    """Positive, negative and neutral words of a `vocab_size` vocabulary."""
    if vocab_size < 10:
        raise ValueError(f"vocab_size must be at least 10, got {vocab_size}")
    n_sentiment = max(2, int(vocab_size * SENTIMENT_SHARE))
    positive = [f"pos{i:04d}" for i in range(n_sentiment)]
    negative = [f"neg{i:04d}" for i in range(n_sentiment)]
    neutral = [f"w{i:04d}" for i in range(vocab_size - 2 * n_sentiment)]
    return positive, negative, neutral


def _zipf(n: int) -> np.ndarray:
    weights = 1.0 / np.arange(1, n + 1)
    return weights / weights.sum()


def generate_reviews(
    n_docs: int,
    vocab_size: int = 2000,
    label_noise: float = 0.1,
    seed: int = 0,
    mean_length: int = 30,
) -> List[RawReview]:
    """Draw `n_docs` star-rated reviews.

    Each review picks a polarity, then draws its tokens from its own sentiment pool, the other
    pool or the neutral pool. Positive reviews are rated 4 or 5 and negative ones 1 or 2; a
    small share is rated 3 regardless of content. With probability `label_noise` a review's
    rating is flipped to the other side after its text is drawn.
    """
    if not 0 <= label_noise <= 1:
        raise ValueError(f"label_noise must lie in [0, 1], got {label_noise}")
    rng = np.random.default_rng(seed)
    positive, negative, neutral = word_pools(vocab_size)
    pools = {
        1: (np.asarray(positive), np.asarray(negative)),
        0: (np.asarray(negative), np.asarray(positive)),
    }
    own_p, other_p, neutral_p = _zipf(len(positive)), _zipf(len(negative)), _zipf(len(neutral))
    neutral_words = np.asarray(neutral)
    source_p = [OWN_POOL_RATE, OTHER_POOL_RATE, 1 - OWN_POOL_RATE - OTHER_POOL_RATE]
    reviews = []
    for line_no in range(1, n_docs + 1):
        polarity = int(rng.integers(2))
        length = 5 + int(rng.poisson(mean_length))
        source = rng.choice(3, size=length, p=source_p)
        own, other = pools[polarity]
        tokens = np.where(
            source == 0,
            rng.choice(own, size=length, p=own_p),
            np.where(
                source == 1,
                rng.choice(other, size=length, p=other_p),
                rng.choice(neutral_words, size=length, p=neutral_p),
            ),
        )
        if rng.random() < label_noise:
            polarity = 1 - polarity
        if rng.random() < NEUTRAL_RATING_SHARE:
            rating = 3
        else:
            rating = int(rng.integers(4, 6)) if polarity else int(rng.integers(1, 3))
        reviews.append(RawReview(rating, tuple(str(t) for t in tokens), line_no))
    logging.info(f"Generated {n_docs} synthetic reviews over {vocab_size} words (seed {seed})")
    return reviews


def generate_lexicons(
    vocab_size: int = 2000, coverage: float = 0.5, absent: int = 20, seed: int = 0
) -> Tuple[List[str], List[str]]:
    """Positive and negative word lists.

    Each list holds a `coverage` share of its sentiment pool plus `absent` words that never
    occur in a generated corpus.
    """
    rng = np.random.default_rng(seed)
    positive, negative, _ = word_pools(vocab_size)
    lexicons = []
    for prefix, pool in (("good", positive), ("bad", negative)):
        kept = rng.choice(pool, size=max(1, int(len(pool) * coverage)), replace=False)
        lexicons.append(sorted(str(w) for w in kept) + [f"{prefix}{i:03d}" for i in range(absent)])
    return lexicons[0], lexicons[1]


def write_reviews(
    path: Union[str, Path], reviews: Sequence[RawReview], corpus_format="tsv"
) -> None:
    corpus_format = CorpusFormat(corpus_format)
    with open(path, "w", encoding="utf-8") as handle:
        for review in reviews:
            text = " ".join(review.tokens)
            if corpus_format is CorpusFormat.TSV:
                handle.write(f"{review.rating}\t{text}\n")
            else:
                record = {"rating": review.rating, "text": text}
                handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def write_lexicon(path: Union[str, Path], words: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.writelines(f"{word}\n" for word in words)
