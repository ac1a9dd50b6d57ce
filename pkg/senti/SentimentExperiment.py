import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from senti.base_models import (
    BaseModel,
    FeatureContext,
    build_base,
    build_feature_context,
    recipe_for,
)
from senti.config import ExperimentConfig, config_hash
from senti.corpus import (
    CorpusSplit,
    LabeledDoc,
    LoadedCorpus,
    Polarity,
    balance,
    label_reviews,
    load_corpus,
    split,
)
from senti.decorators import pipeline_stage
from senti.embeddings import EmbeddingModel, SkipGramParams, train_skipgram
from senti.evaluation import (
    CurvePoint,
    MetricsReport,
    compute_metrics,
    learning_curve,
    plot_curve,
    write_curve,
    write_metrics,
)
from senti.exceptions import ExperimentClosed
from senti.features import load_lexicon
from senti.stacking import (
    export_predictions,
    prediction_matrix,
    select_base_subset,
    stack_predict,
    train_lr_all,
    vote_all_many,
)

MANIFEST = "manifest.yaml"


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _labels(docs: Sequence[LabeledDoc]) -> np.ndarray:
    return np.asarray([int(doc.label) for doc in docs], dtype=np.int64)


class SentimentExperiment:
    """Runs embedding training, the nine-model comparison and learning curves for one config."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.config_hash = config_hash(config)
        self.pool = ThreadPoolExecutor(max_workers=config.workers)
        self.is_closed = False

    def __repr__(self) -> str:
        return f"SentimentExperiment for {self.config.corpus} (seed {self.config.seed})"

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        if not self.is_closed:
            self.pool.shutdown()
        self.is_closed = True

    def close(self):
        self.__exit__(None, None, None)

    def _check_open(self):
        if self.is_closed:
            raise ExperimentClosed()

    @cached_property
    def corpus(self) -> LoadedCorpus:
        return load_corpus(self.config.corpus, self.config.format)

    @cached_property
    def docs(self) -> List[LabeledDoc]:
        docs = label_reviews(self.corpus)
        counts = {p.name.lower(): sum(1 for d in docs if d.label == p) for p in Polarity}
        logging.info(f"Labeled {len(docs)} reviews: {counts}")
        return docs

    @cached_property
    def lexicons(self) -> List[List[str]]:
        return [load_lexicon(path) for path in self.config.lexicons]

    @property
    def out(self) -> Path:
        out = Path(self.config.out)
        out.mkdir(parents=True, exist_ok=True)
        return out

    def embedding_paths(self) -> Dict[str, Path]:
        settings = self.config.embeddings
        directory = self.config.embedding_dir
        return {
            "dense": directory / f"emb{settings.dense_dim}.bin",
            "cnn": directory / f"emb{settings.cnn_dim}.bin",
        }

    def skipgram_params(self) -> SkipGramParams:
        settings = self.config.embeddings
        return SkipGramParams(
            window=settings.window,
            negatives=settings.negatives,
            min_count=settings.min_count,
            epochs=settings.epochs,
            initial_lr=settings.initial_lr,
            min_lr=settings.min_lr,
            sample=settings.sample,
            seed=self.config.seed,
            workers=1 if self.config.deterministic else self.config.workers,
        )

    def train_embeddings(self) -> Tuple[EmbeddingModel, EmbeddingModel]:
        """Train the dense and the CNN skip-gram models and write them with a manifest.

        Returns:
            The (dense, cnn) embedding models.
        """
        self._check_open()
        return self._train_embeddings()

    @pipeline_stage("embeddings")
    def _train_embeddings(self) -> Tuple[EmbeddingModel, EmbeddingModel]:
        settings = self.config.embeddings
        params = self.skipgram_params()
        paths = self.embedding_paths()
        paths["dense"].parent.mkdir(parents=True, exist_ok=True)
        models = {}
        files = {}
        for key, dim in (("dense", settings.dense_dim), ("cnn", settings.cnn_dim)):
            models[key] = train_skipgram(self.docs, dim, params)
            models[key].save(paths[key], binary=True)
            files[paths[key].name] = {
                "sha256": _sha256(paths[key]),
                "dim": dim,
                "words": models[key].vocab.m,
            }
            logging.info(f"Wrote {paths[key]} (D={dim}, V={models[key].vocab.m})")
        manifest = {
            "config": self.config_hash,
            "seed": self.config.seed,
            "corpus": str(self.config.corpus),
            "documents": len(self.docs),
            "hyperparameters": asdict(params),
            "files": files,
        }
        with open(paths["dense"].parent / MANIFEST, "w", encoding="utf-8") as handle:
            yaml.safe_dump(manifest, handle, sort_keys=True)
        return models["dense"], models["cnn"]

    def load_embeddings(self) -> Tuple[EmbeddingModel, EmbeddingModel]:
        """Read both embedding models, training them first when a file is missing."""
        paths = self.embedding_paths()
        missing = [str(path) for path in paths.values() if not path.exists()]
        if missing:
            logging.warning(f"Embeddings {', '.join(missing)} not found, training them now")
            return self.train_embeddings()
        manifest_path = paths["dense"].parent / MANIFEST
        if manifest_path.exists():
            with open(manifest_path, encoding="utf-8") as handle:
                recorded = (yaml.safe_load(handle) or {}).get("files", {})
            for path in paths.values():
                expected = recorded.get(path.name, {}).get("sha256")
                if expected and expected != _sha256(path):
                    logging.warning(f"Checksum of {path} differs from {manifest_path}")
        return EmbeddingModel.load(paths["dense"]), EmbeddingModel.load(paths["cnn"])

    def split_corpus(self) -> CorpusSplit:
        config = self.config
        docs = self.docs
        if config.run_size:
            per_class = config.run_size // 2
        else:
            per_class = min(sum(1 for doc in docs if doc.label == p) for p in Polarity)
        parts = split(balance(docs, per_class, config.seed), config.fold_scheme, config.seed)
        sizes = [len(parts.train), len(parts.validate or ()), len(parts.test)]
        logging.info(f"Split {2 * per_class} balanced docs into train/validate/test {sizes}")
        return parts

    def train_bases(self, context: FeatureContext, train: Sequence[LabeledDoc]) -> List[BaseModel]:
        """Fit every enabled base on `train`, up to `workers` at a time, in config order."""

        def fit(name: str) -> BaseModel:
            return pipeline_stage(f"train {name}")(build_base(name, context, self.config).fit)(
                train
            )

        return list(self.pool.map(fit, self.config.models))

    def run(self) -> List[Tuple[str, MetricsReport]]:
        """Train the bases on train, combine them and score everything on test.

        The TSV report is written even when a stage fails, holding the rows finished so far.

        Returns:
            (model name, metrics) rows: the bases, then Vote_all, LR_all and LR_subset.
        """
        self._check_open()
        return self._run()

    @pipeline_stage("run")
    def _run(self) -> List[Tuple[str, MetricsReport]]:
        config = self.config
        parts = self.split_corpus()
        emb_dense, emb_cnn = self.load_embeddings()
        context = build_feature_context(
            parts.train,
            self.lexicons,
            emb_dense,
            emb_cnn,
            config.features.chi_words,
            config.features.ngram_min_df,
            config.features.review_length,
        )
        out = self.out
        predictions_dir = out / "predictions"
        predictions_dir.mkdir(exist_ok=True)
        rows: List[Tuple[str, MetricsReport]] = []
        try:
            bases = self.train_bases(context, parts.train)
            truth = _labels(parts.test)
            test_matrix = prediction_matrix(bases, parts.test, config.workers)
            for column, base in enumerate(bases):
                rows.append((base.name, compute_metrics(test_matrix[:, column], truth)))
                path = predictions_dir / f"test_{base.name}.txt"
                export_predictions(path, test_matrix[:, column])
            rows.extend(self._combine(bases, parts, test_matrix, predictions_dir))
        finally:
            write_metrics(out / "report.tsv", rows, self.config_hash, config.seed)
            logging.info(f"Wrote {len(rows)} report rows to {out / 'report.tsv'}")
        self._write_run_manifest(parts, rows)
        return rows

    def _combine(
        self,
        bases: List[BaseModel],
        parts: CorpusSplit,
        test_matrix: np.ndarray,
        predictions_dir: Path,
    ) -> List[Tuple[str, MetricsReport]]:
        settings = self.config.combination
        truth = _labels(parts.test)
        rows = []
        if settings.vote_all and bases:
            voted = vote_all_many(test_matrix)
            rows.append(("Vote_all", compute_metrics(voted, truth)))
            export_predictions(predictions_dir / "test_Vote_all.txt", voted)
        if not (settings.lr_all or settings.lr_subset):
            return rows
        if parts.validate is None:
            logging.warning("Stacked models need a validation fold; use fold_scheme four_fold")
            return rows

        validate_matrix = pipeline_stage("validate predictions")(prediction_matrix)(
            bases, parts.validate, self.config.workers
        )
        for column, base in enumerate(bases):
            export_predictions(
                predictions_dir / f"validate_{base.name}.txt", validate_matrix[:, column]
            )
        if settings.lr_all:
            stacked = self._stack("LR_all", bases, parts, validate_matrix, test_matrix)
            rows.append(("LR_all", compute_metrics(stacked, truth)))
        if settings.lr_subset:
            names = self._subset_names(bases, parts.validate, validate_matrix)
            if names:
                columns = [[base.name for base in bases].index(name) for name in names]
                subset = [bases[column] for column in columns]
                stacked = self._stack(
                    "LR_subset",
                    subset,
                    parts,
                    validate_matrix[:, columns],
                    test_matrix[:, columns],
                )
                rows.append(("LR_subset", compute_metrics(stacked, truth)))
        return rows

    def _stack(
        self,
        name: str,
        bases: List[BaseModel],
        parts: CorpusSplit,
        validate_matrix: np.ndarray,
        test_matrix: np.ndarray,
    ) -> np.ndarray:
        @pipeline_stage(name)
        def stack() -> np.ndarray:
            assert parts.validate is not None
            model = train_lr_all(
                bases,
                parts.validate,
                self.config.combination.l2,
                matrix=validate_matrix,
            )
            model.save(self.out / f"{name}.model", self.config_hash, self.config.seed)
            return stack_predict(model, bases, parts.test, matrix=test_matrix)

        predictions = stack()
        export_predictions(self.out / "predictions" / f"test_{name}.txt", predictions)
        return predictions

    def _subset_names(
        self, bases: List[BaseModel], validate: List[LabeledDoc], matrix: np.ndarray
    ) -> List[str]:
        settings = self.config.combination
        if settings.subset == "auto":
            if len(bases) < 2:
                logging.warning("Subset selection needs at least two bases; LR_subset skipped")
                return []
            return select_base_subset(
                bases,
                validate,
                settings.max_k,
                self.config.seed,
                settings.l2,
                matrix=matrix,
            )
        enabled = [base.name for base in bases]
        missing = [name for name in settings.subset if name not in enabled]
        if missing:
            logging.warning(f"LR_subset members not enabled, left out: {', '.join(missing)}")
        names = [name for name in settings.subset if name in enabled]
        if not names:
            logging.warning("No LR_subset member is enabled; LR_subset skipped")
        return names

    def _write_run_manifest(self, parts: CorpusSplit, rows: List[Tuple[str, MetricsReport]]):
        manifest = {
            "config": self.config_hash,
            "seed": self.config.seed,
            "models": list(self.config.models),
            "split": {
                "train": len(parts.train),
                "validate": len(parts.validate or ()),
                "test": len(parts.test),
            },
            "macro_f1": {name: round(report.macro_f1, 4) for name, report in rows},
        }
        with open(self.out / "run.yaml", "w", encoding="utf-8") as handle:
            yaml.safe_dump(manifest, handle, sort_keys=True)

    def curve(self, sizes: Optional[Sequence[int]] = None) -> List[CurvePoint]:
        """Learning curves of the curve models over `sizes` (the configured sizes by default).

        Writes curve.csv, plus curve.svg when plotting is enabled.
        """
        self._check_open()
        return self._curve(sizes)

    @pipeline_stage("curve")
    def _curve(self, sizes: Optional[Sequence[int]]) -> List[CurvePoint]:
        config = self.config
        emb_dense, emb_cnn = self.load_embeddings()
        points: List[CurvePoint] = []
        for name in config.curve_models:
            points.extend(
                learning_curve(
                    recipe_for(name, self.lexicons, emb_dense, emb_cnn, config),
                    self.docs,
                    list(sizes or config.sizes),
                    config.repetitions,
                    config.seed,
                    config.workers,
                    model=name,
                )
            )
        write_curve(self.out / "curve.csv", points, self.config_hash, config.seed)
        if config.plot:
            plot_curve(self.out / "curve.svg", points)
        return points
