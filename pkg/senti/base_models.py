"""The nine base classifiers behind one fit/predict interface.

Feature routing follows the experimental design: NB and ME read binary vectors over the
lexicon + CHI feature space, LinearSVC reads binary unigram + bigram vectors, LR, SVC and the
three tree ensembles read the hybrid [average embedding || CHI indicators] vector, and the CNN
reads review matrices built from the small embedding model.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Sequence, Tuple, Type

import numpy as np

from senti.cnn import build_cnn, build_review_matrix, cnn_predict_many, cnn_train
from senti.config import MODEL_NAMES, ExperimentConfig
from senti.corpus import LabeledDoc, Polarity, provenance
from senti.embeddings import EmbeddingModel, hybrid_matrix
from senti.ensembles import adaboost_train, ensemble_predict_many, gbt_train, rf_train
from senti.exceptions import ConfigError, NoKnownTokens, UntrackedDocuments
from senti.features import (
    Vocabulary,
    build_feature_space,
    build_ngram_space,
    merge_lexicons,
    select_top_chi,
    vectorize_corpus,
)
from senti.linear_classifiers import (
    linear_predict_many,
    lr_train,
    maxent_predict_proba,
    maxent_train_iis,
    nb_predict_proba,
    nb_train,
    svm_train,
)


@dataclass
class FeatureContext:
    """Everything fitted on the training partition that the bases read their features from."""

    corpus_vocab: Vocabulary
    sentiment_vocab: Vocabulary
    chi_vocab: Vocabulary
    feature_space: Vocabulary
    ngram_space: Vocabulary
    emb_dense: EmbeddingModel
    emb_cnn: EmbeddingModel
    review_length: int = 60
    _hybrid: Dict[tuple, np.ndarray] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def hybrid(self, docs: Sequence[LabeledDoc]) -> np.ndarray:
        """Hybrid feature matrix of `docs`, computed once per document list."""
        key = tuple((doc.doc_id, doc.tokens) for doc in docs)
        with self._lock:
            cached = self._hybrid.get(key)
        if cached is None:
            cached = hybrid_matrix(docs, self.emb_dense, self.chi_vocab)
            with self._lock:
                self._hybrid[key] = cached
        return cached


def build_feature_context(
    train_docs: Sequence[LabeledDoc],
    lexicons: Sequence[Sequence[str]],
    emb_dense: EmbeddingModel,
    emb_cnn: EmbeddingModel,
    chi_words: int = 150,
    ngram_min_df: int = 2,
    review_length: int = 60,
) -> FeatureContext:
    corpus_vocab = Vocabulary.from_documents(train_docs)
    sentiment_vocab = merge_lexicons(lexicons, corpus_vocab)
    chi_vocab = select_top_chi(train_docs, corpus_vocab, min(chi_words, corpus_vocab.m))
    return FeatureContext(
        corpus_vocab,
        sentiment_vocab,
        chi_vocab,
        build_feature_space(sentiment_vocab, chi_vocab),
        build_ngram_space(train_docs, min_df=ngram_min_df),
        emb_dense,
        emb_cnn,
        review_length,
    )


def _labels(docs: Sequence[LabeledDoc]) -> np.ndarray:
    return np.asarray([int(doc.label) for doc in docs], dtype=np.int64)


class BaseModel:
    """A named classifier that remembers the ids of the documents it was fitted on."""

    name = "base"

    def __init__(self, context: FeatureContext, config: ExperimentConfig):
        self.context = context
        self.config = config
        self.trained_on: FrozenSet[int] = frozenset()

    def __repr__(self) -> str:
        return f"{type(self).__name__}(trained on {len(self.trained_on)} docs)"

    def fit(self, docs: Sequence[LabeledDoc]) -> "BaseModel":
        missing = sum(doc.doc_id is None for doc in docs)
        if missing:
            raise UntrackedDocuments(self.name, missing)
        self._fit(docs, _labels(docs))
        self.trained_on = provenance(docs)
        return self

    def predict(self, docs: Sequence[LabeledDoc]) -> np.ndarray:
        if not docs:
            return np.zeros(0, dtype=np.int64)
        return np.asarray(self._predict(docs), dtype=np.int64)

    def _fit(self, docs: Sequence[LabeledDoc], y: np.ndarray) -> None:
        raise NotImplementedError

    def _predict(self, docs: Sequence[LabeledDoc]) -> np.ndarray:
        raise NotImplementedError


def _decide(probabilities: np.ndarray) -> np.ndarray:
    return (probabilities[:, 1] >= probabilities[:, 0]).astype(np.int64)


class NaiveBayes(BaseModel):
    name = "NB"

    def _fit(self, docs, y):
        space = self.context.feature_space
        self.model = nb_train(vectorize_corpus(docs, space), y, m=space.m)

    def _predict(self, docs):
        X = vectorize_corpus(docs, self.context.feature_space)
        return _decide(nb_predict_proba(self.model, X))


class MaximumEntropy(BaseModel):
    name = "ME"

    def _fit(self, docs, y):
        space = self.context.feature_space
        self.model = maxent_train_iis(
            vectorize_corpus(docs, space), y, m=space.m, iterations=self.config.maxent.iterations
        )

    def _predict(self, docs):
        X = vectorize_corpus(docs, self.context.feature_space)
        return _decide(maxent_predict_proba(self.model, X))


class LinearSVC(BaseModel):
    name = "LinearSVC"

    def _fit(self, docs, y):
        settings = self.config.linear_svc
        self.model = svm_train(
            vectorize_corpus(docs, self.context.ngram_space, ngrams=True),
            y,
            C=settings.C,
            loss=settings.loss,
            tol=settings.tol,
            max_iter=settings.max_iter,
            seed=self.config.seed,
            strict=False,
        )

    def _predict(self, docs):
        return linear_predict_many(
            self.model, vectorize_corpus(docs, self.context.ngram_space, ngrams=True)
        )


class LogisticRegression(BaseModel):
    name = "LR"

    def _fit(self, docs, y):
        settings = self.config.lr
        self.model = lr_train(
            self.context.hybrid(docs),
            y,
            l2=settings.l2,
            tol=settings.tol,
            max_iter=settings.max_iter,
        )

    def _predict(self, docs):
        return linear_predict_many(self.model, self.context.hybrid(docs))


class SVC(BaseModel):
    name = "SVC"

    def _fit(self, docs, y):
        settings = self.config.svc
        self.model = svm_train(
            self.context.hybrid(docs),
            y,
            C=settings.C,
            loss=settings.loss,
            tol=settings.tol,
            max_iter=settings.max_iter,
            seed=self.config.seed,
            strict=False,
        )

    def _predict(self, docs):
        return linear_predict_many(self.model, self.context.hybrid(docs))


class AdaBoost(BaseModel):
    name = "AdaBoost"

    def _fit(self, docs, y):
        self.model = adaboost_train(self.context.hybrid(docs), y, self.config.adaboost.rounds)

    def _predict(self, docs):
        return ensemble_predict_many(self.model, self.context.hybrid(docs))


class GradientBoosting(BaseModel):
    name = "GBT"

    def _fit(self, docs, y):
        settings = self.config.gbt
        self.model = gbt_train(
            self.context.hybrid(docs),
            y,
            n_trees=settings.n_trees,
            learning_rate=settings.learning_rate,
            max_depth=settings.max_depth,
            seed=self.config.seed,
        )

    def _predict(self, docs):
        return ensemble_predict_many(self.model, self.context.hybrid(docs))


class RandomForest(BaseModel):
    name = "RF"

    def _fit(self, docs, y):
        settings = self.config.rf
        self.model = rf_train(
            self.context.hybrid(docs),
            y,
            n_trees=settings.n_trees,
            features_per_split=settings.features_per_split,
            seed=self.config.seed,
            max_depth=settings.max_depth,
        )

    def _predict(self, docs):
        return ensemble_predict_many(self.model, self.context.hybrid(docs))


def review_matrices(
    docs: Sequence[LabeledDoc], model: EmbeddingModel, length: int
) -> Tuple[List[np.ndarray], np.ndarray]:
    """Review matrices of the docs that have a known token, and the positions of those docs."""
    matrices: List[np.ndarray] = []
    known: List[int] = []
    for position, doc in enumerate(docs):
        try:
            matrices.append(build_review_matrix(doc, model, length))
        except NoKnownTokens:
            continue
        known.append(position)
    return matrices, np.asarray(known, dtype=np.int64)


class ConvolutionalNetwork(BaseModel):
    """Reviews without any embedded token are predicted as the training majority class."""

    name = "CNN"

    def _fit(self, docs, y):
        settings = self.config.cnn
        length = self.context.review_length
        counts = np.bincount(y, minlength=2)
        self.prior = int(Polarity.POSITIVE if counts[1] >= counts[0] else Polarity.NEGATIVE)
        matrices, known = review_matrices(docs, self.context.emb_cnn, length)
        if len(known) < len(docs):
            logging.warning(f"CNN: {len(docs) - len(known)} training reviews have no known token")
        network = build_cnn((length, self.context.emb_cnn.dim), settings.layers, self.config.seed)
        self.model = cnn_train(
            network,
            matrices,
            y[known],
            epochs=settings.epochs,
            batch_size=settings.batch_size,
            lr=settings.lr,
            seed=self.config.seed,
            min_improvement=settings.min_improvement,
            workers=1 if self.config.deterministic else self.config.workers,
        )

    def _predict(self, docs):
        predictions = np.full(len(docs), self.prior, dtype=np.int64)
        matrices, known = review_matrices(docs, self.context.emb_cnn, self.context.review_length)
        if len(known):
            predictions[known] = cnn_predict_many(self.model, matrices)
        return predictions


MODEL_REGISTRY: Dict[str, Type[BaseModel]] = {
    cls.name: cls
    for cls in (
        NaiveBayes,
        MaximumEntropy,
        LinearSVC,
        LogisticRegression,
        SVC,
        AdaBoost,
        GradientBoosting,
        RandomForest,
        ConvolutionalNetwork,
    )
}
assert tuple(MODEL_REGISTRY) == MODEL_NAMES


def build_base(name: str, context: FeatureContext, config: ExperimentConfig) -> BaseModel:
    try:
        return MODEL_REGISTRY[name](context, config)
    except KeyError:
        raise ConfigError(f"Unknown model {name!r}; known: {', '.join(MODEL_REGISTRY)}") from None


def recipe_for(
    name: str, lexicons: Sequence[Sequence[str]], emb_dense, emb_cnn, config: ExperimentConfig
) -> Callable[[List[LabeledDoc], List[LabeledDoc]], np.ndarray]:
    """A learning-curve recipe: fit a fresh feature context and base `name` on each train set."""

    def recipe(train: List[LabeledDoc], test: List[LabeledDoc]) -> np.ndarray:
        context = build_feature_context(
            train,
            lexicons,
            emb_dense,
            emb_cnn,
            config.features.chi_words,
            config.features.ngram_min_df,
            config.features.review_length,
        )
        return build_base(name, context, config).fit(train).predict(test)

    return recipe
