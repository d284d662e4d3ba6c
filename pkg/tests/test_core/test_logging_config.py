"""Tests for logging configuration"""

import json
import logging

import pytest
from src.core.logging_config import CustomJsonFormatter, TrialLogger, setup_logging


@pytest.fixture
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers = handlers
    root.setLevel(level)


@pytest.mark.unit
class TestLogging:
    """Test suite for structured logging"""

    def test_json_formatter_adds_fields(self):
        """Test the JSON formatter emits level, logger and bound trial fields"""
        formatter = CustomJsonFormatter("%(timestamp)s %(level)s %(name)s %(message)s")
        record = logging.LogRecord("src.solvers", logging.INFO, __file__, 1, "solved", None, None)
        record.trial = 3
        record.method = "s0"

        payload = json.loads(formatter.format(record))
        assert payload["message"] == "solved"
        assert payload["level"] == "INFO"
        assert payload["logger"] == "src.solvers"
        assert payload["trial"] == 3
        assert payload["method"] == "s0"

    def test_setup_logging_writes_to_stderr(self, restore_root_logger, capsys):
        """Test logs never land on stdout"""
        setup_logging(level=logging.INFO, json_format=True)
        logging.getLogger("bench").info("hello")

        captured = capsys.readouterr()
        assert captured.out == ""
        assert "hello" in captured.err

    def test_setup_logging_replaces_handlers(self, restore_root_logger):
        """Test repeated setup does not stack handlers"""
        setup_logging(level=logging.WARNING, json_format=False)
        root = setup_logging(level=logging.WARNING, json_format=False)
        assert len(root.handlers) == 1
        assert root.level == logging.WARNING

    def test_setup_logging_file(self, restore_root_logger, tmp_path):
        """Test an optional log file handler"""
        log_file = tmp_path / "bench.log"
        setup_logging(level=logging.INFO, json_format=True, log_file=str(log_file))
        logging.getLogger("bench").info("to file")
        for handler in logging.getLogger().handlers:
            handler.flush()
        assert "to file" in log_file.read_text()

    def test_trial_logger_binds_fields(self, caplog):
        """Test TrialLogger attaches trial and method to every record"""
        log = TrialLogger(logging.getLogger("bench.trial"), trial=5, method="sinf")
        with caplog.at_level(logging.INFO, logger="bench.trial"):
            log.info("trial done", iteration=2)

        record = caplog.records[-1]
        assert record.trial == 5
        assert record.method == "sinf"
        assert record.iteration == 2

    def test_trial_logger_bind(self, caplog):
        """Test bind keeps the trial and adds fields"""
        log = TrialLogger(logging.getLogger("bench.trial"), trial=1).bind(method="s1")
        with caplog.at_level(logging.WARNING, logger="bench.trial"):
            log.warning("slow")

        record = caplog.records[-1]
        assert record.trial == 1
        assert record.method == "s1"
