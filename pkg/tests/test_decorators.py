import logging
import unittest.mock

import pytest

from senti.decorators import pipeline_stage
from senti.exceptions import InsufficientDocuments, StageFailed


@unittest.mock.patch.dict("os.environ", {})
def test_stage_pass():

    internal_fn = unittest.mock.Mock(return_value="test")

    value = pipeline_stage("features")(internal_fn)(1, key=2)

    assert internal_fn.call_count == 1
    internal_fn.assert_called_with(1, key=2)
    assert value == internal_fn.return_value


@unittest.mock.patch("logging.log")
@unittest.mock.patch.dict("os.environ", {})
def test_stage_logs_start_and_finish_at_info(_):

    pipeline_stage("features")(unittest.mock.Mock(return_value=None))()

    assert logging.log.call_count == 2
    assert logging.log.call_args_list[0][0] == (logging.INFO, "stage features started")
    assert logging.log.call_args_list[1][0][0] == logging.INFO
    assert logging.log.call_args_list[1][0][1].startswith("stage features finished in")


@unittest.mock.patch("logging.log")
@unittest.mock.patch.dict("os.environ", {"SENTI_STAGE_LOG_LEVEL": "debug"})
def test_stage_log_level_from_environment(_):

    pipeline_stage("cnn")(unittest.mock.Mock(return_value=None))()

    assert all(call[0][0] == logging.DEBUG for call in logging.log.call_args_list)


@unittest.mock.patch("logging.log")
@unittest.mock.patch.dict("os.environ", {"SENTI_STAGE_LOG_LEVEL": "chatty"})
def test_stage_unknown_log_level_falls_back_to_info(_):

    pipeline_stage("cnn")(unittest.mock.Mock(return_value=None))()

    assert logging.log.call_args_list[0][0][0] == logging.INFO


@unittest.mock.patch.dict("os.environ", {})
def test_stage_wraps_failure():

    internal_fn = unittest.mock.Mock(side_effect=ValueError("bad input"))

    with pytest.raises(StageFailed) as e:
        pipeline_stage("train NB")(internal_fn)()

    assert e.value.stage == "train NB"
    assert "bad input" in str(e.value)
    assert isinstance(e.value.__cause__, ValueError)


@unittest.mock.patch.dict("os.environ", {})
def test_stage_wraps_senti_errors_too():

    internal_fn = unittest.mock.Mock(side_effect=InsufficientDocuments("positive", 10, 3))

    with pytest.raises(StageFailed) as e:
        pipeline_stage("balance")(internal_fn)()

    assert isinstance(e.value.__cause__, InsufficientDocuments)


@unittest.mock.patch.dict("os.environ", {})
def test_nested_stage_keeps_innermost_name():

    inner = pipeline_stage("train CNN")(unittest.mock.Mock(side_effect=RuntimeError("nan")))
    outer = pipeline_stage("run")(lambda: inner())

    with pytest.raises(StageFailed) as e:
        outer()

    assert e.value.stage == "train CNN"
