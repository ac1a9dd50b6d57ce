import unittest.mock
from pathlib import Path

import pytest

from senti.config import MODEL_NAMES, config_hash, load_config
from senti.exceptions import ConfigError


def write_config(tmp_path, text):
    path = tmp_path / "experiment.yaml"
    path.write_text(text, encoding="utf-8")
    return path


def test_minimal_config_uses_defaults(tmp_path):
    path = write_config(tmp_path, "corpus: data/reviews.tsv\nseed: 3\n")

    config = load_config(path)

    assert config.seed == 3
    assert config.corpus == str(tmp_path / "data" / "reviews.tsv")
    assert config.models == list(MODEL_NAMES)
    assert config.fold_scheme == "four_fold"
    assert config.embeddings.dense_dim == 300
    assert config.embeddings.cnn_dim == 60
    assert config.features.chi_words == 150
    assert config.linear_svc.loss == "squared_hinge"
    assert config.svc.loss == "hinge"
    assert config.cnn.layers[0] == (40, 5, 5, 2, 1)


def test_blocks_and_relative_paths(tmp_path):
    path = write_config(
        tmp_path,
        "corpus: reviews.jsonl\n"
        "format: jsonl\n"
        "seed: 1\n"
        "lexicons: [lexicon/pos.txt, /abs/neg.txt]\n"
        "embeddings: {dense_dim: 20, cnn_dim: 8, directory: emb}\n"
        "cnn:\n"
        "  epochs: 2\n"
        "  layers: [[4, 3, 3, 2, 1]]\n"
        "combination: {lr_subset: true, subset: auto}\n",
    )

    config = load_config(path)

    assert config.lexicons == [str(tmp_path / "lexicon" / "pos.txt"), "/abs/neg.txt"]
    assert config.embeddings.dense_dim == 20
    assert config.embedding_dir == tmp_path / "emb"
    assert config.cnn.layers == ((4, 3, 3, 2, 1),)
    assert config.cnn.batch_size == 50
    assert config.combination.subset == "auto"


def test_command_line_overrides(tmp_path):
    path = write_config(tmp_path, "corpus: reviews.tsv\nseed: 3\nworkers: 2\n")

    config = load_config(path, {"seed": 0, "workers": 4, "models": "NB, LR", "out": None})

    assert config.seed == 0
    assert config.workers == 4
    assert config.models == ["NB", "LR"]
    assert config.out == "results"
    assert config.embedding_dir == Path("results") / "embeddings"


@unittest.mock.patch.dict("os.environ", {"SENTI_SEED": "11"})
def test_seed_from_environment(tmp_path):
    path = write_config(tmp_path, "corpus: reviews.tsv\n")

    assert load_config(path).seed == 11
    assert load_config(path, {"seed": 5}).seed == 5


@unittest.mock.patch.dict("os.environ", {}, clear=True)
def test_missing_seed(tmp_path):
    path = write_config(tmp_path, "corpus: reviews.tsv\n")

    with pytest.raises(ConfigError) as e:
        load_config(path)

    assert "SENTI_SEED" in str(e.value)


@pytest.mark.parametrize(
    "text",
    [
        "corpus: r.tsv\nseed: abc\n",
        "corpus: r.tsv\nseed: 1\nmodel: [NB]\n",
        "corpus: r.tsv\nseed: 1\nmodels: [NB, BERT]\n",
        "corpus: r.tsv\nseed: 1\ncurve_models: [XGB]\n",
        "corpus: r.tsv\nseed: 1\ncnn: {kernels: 3}\n",
        "corpus: r.tsv\nseed: 1\ncnn: 3\n",
        "corpus: r.tsv\nseed: 1\nsvc: {loss: log}\n",
        "corpus: r.tsv\nseed: 1\ncombination: {subset: best}\n",
        "corpus: r.tsv\nseed: 1\nformat: csv\n",
        "corpus: r.tsv\nseed: 1\nfold_scheme: ten_fold\n",
        "corpus: r.tsv\nseed: 1\nworkers: 0\n",
        "seed: 1\n",
        "- just\n- a list\n",
        "corpus: [unclosed\n",
    ],
)
def test_invalid_configs(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError) as e:
        load_config(tmp_path / "nowhere.yaml")

    assert "nowhere.yaml" in str(e.value)


def test_config_hash_ignores_runtime_knobs(tmp_path):
    path = write_config(tmp_path, "corpus: reviews.tsv\nseed: 3\n")

    reference = config_hash(load_config(path))

    assert reference == config_hash(load_config(path))
    assert reference == config_hash(load_config(path, {"workers": 8, "out": "elsewhere"}))
    assert reference != config_hash(load_config(path, {"seed": 4}))
    assert len(reference) == 64
