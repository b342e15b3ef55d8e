import logging

import pytest

import utils.logger as logger_module
from utils.logger import setup_logger


@pytest.fixture
def fresh_logger(tmp_path, monkeypatch):
    monkeypatch.setattr(logger_module, "LOG_DIR", str(tmp_path))
    created = []

    def make(name, **kwargs):
        logger = setup_logger(name, **kwargs)
        created.append(logger)
        return logger

    yield make
    for logger in created:
        for handler in list(logger.handlers):
            handler.close()
            logger.removeHandler(handler)


def test_lines_carry_process_name(tmp_path, fresh_logger):
    logger = fresh_logger("run_log_check", log_file="run.log")
    logger.info("lateral step done")
    for handler in logger.handlers:
        handler.flush()
    text = (tmp_path / "run.log").read_text(encoding="utf-8")
    assert "| INFO | MainProcess | run_log_check | lateral step done" in text


def test_repeat_call_relevels_without_new_handlers(fresh_logger):
    first = fresh_logger("relevel_check")
    again = fresh_logger("relevel_check", level=logging.WARNING)
    assert again is first
    assert len(again.handlers) == 2
    assert again.level == logging.WARNING
    assert all(handler.level == logging.WARNING for handler in again.handlers)
