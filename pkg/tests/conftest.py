import pytest
import yaml

from senti.synthetic import generate_lexicons, generate_reviews, write_lexicon, write_reviews

# small enough to run every base in seconds
FAST_SETTINGS = {
    "embeddings": {"dense_dim": 10, "cnn_dim": 6, "min_count": 1, "epochs": 1},
    "features": {"chi_words": 20, "ngram_min_df": 1, "review_length": 12},
    "cnn": {"layers": [[4, 3, 3, 2, 1]], "epochs": 2, "batch_size": 20},
    "adaboost": {"rounds": 10},
    "gbt": {"n_trees": 10},
    "rf": {"n_trees": 10},
    "svc": {"max_iter": 200},
    "linear_svc": {"max_iter": 200},
    "sizes": [100, 200],
    "repetitions": 2,
    "curve_models": ["NB"],
}


@pytest.fixture
def write_experiment(tmp_path):
    """Write a synthetic corpus, two lexicons and a config; returns the config path."""

    def write(n_docs=600, label_noise=0.0, vocab_size=200, **settings):
        reviews = generate_reviews(n_docs, vocab_size, label_noise, seed=7)
        write_reviews(tmp_path / "reviews.tsv", reviews)
        positive, negative = generate_lexicons(vocab_size, seed=7)
        write_lexicon(tmp_path / "positive.txt", positive)
        write_lexicon(tmp_path / "negative.txt", negative)
        config = {
            "corpus": "reviews.tsv",
            "seed": 1,
            "lexicons": ["positive.txt", "negative.txt"],
            "out": str(tmp_path / "results"),
            **FAST_SETTINGS,
            **settings,
        }
        path = tmp_path / "experiment.yaml"
        path.write_text(yaml.safe_dump(config), encoding="utf-8")
        return path

    return write
