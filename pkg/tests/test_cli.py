import unittest.mock

from senti.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, build_parser, main
from senti.corpus import load_corpus


def test_parser_leaves_unset_overrides_empty():
    args = build_parser().parse_args(["run", "--config", "experiment.yaml"])

    assert (args.seed, args.workers, args.models, args.out, args.plot) == (None,) * 5
    assert build_parser().parse_args(["curve", "--config", "c.yaml", "--plot"]).plot is True


def test_synth_writes_corpus_and_lexicons(tmp_path):
    out = tmp_path / "reviews.jsonl"

    code = main(["synth", "--out", str(out), "--docs", "40", "--vocab", "100", "--lexicons"])

    assert code == EXIT_OK
    assert len(load_corpus(out, "jsonl")) == 40
    assert (tmp_path / "reviews.positive.txt").exists()
    assert (tmp_path / "reviews.negative.txt").exists()


@unittest.mock.patch("logging.error")
def test_missing_config_is_a_usage_error(error, tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == EXIT_USAGE
    assert error.call_count == 1


@unittest.mock.patch("logging.error")
def test_missing_corpus_is_a_usage_error(error, tmp_path):
    config = tmp_path / "experiment.yaml"
    config.write_text("corpus: nowhere.tsv\nseed: 0\n", encoding="utf-8")

    assert main(["embeddings", "--config", str(config)]) == EXIT_USAGE
    assert "nowhere.tsv" in error.call_args[0][0]


@unittest.mock.patch("logging.error")
def test_failed_stage_exits_with_failure(error, write_experiment):
    config = write_experiment(run_size=100000)

    assert main(["run", "--config", str(config)]) == EXIT_FAILED
    assert "stage run" in error.call_args[0][0]


def test_run_prints_one_row_per_model(write_experiment, tmp_path, capsys):
    config = write_experiment()

    code = main(["run", "--config", str(config), "--models", "NB,LR", "--seed", "3"])

    assert code == EXIT_OK
    rows = [line.split("\t") for line in capsys.readouterr().out.splitlines()]
    assert [row[0] for row in rows] == ["NB", "LR", "Vote_all", "LR_all"]
    assert all(0.0 <= float(row[1]) <= 1.0 for row in rows)
    assert (tmp_path / "results" / "report.tsv").exists()
