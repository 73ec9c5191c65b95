import logging

import pytest

from bw_planner.log import get_logger, logger, replication_context, setup_logging
from bw_planner.replication import ReplicationConfig, run_replications


@pytest.fixture
def restore_handlers():
    yield
    for handler in logger.handlers:
        handler.close()
    logger.handlers.clear()


def test_get_logger_is_a_package_child():
    assert get_logger("bw_planner.optimizer").name == "bw_planner.optimizer"
    assert get_logger("optimizer").name == "bw_planner.optimizer"


def test_console_goes_to_stderr(capsys, restore_handlers):
    setup_logging()
    get_logger("tests").info("solved")
    captured = capsys.readouterr()
    assert captured.out == ""
    assert captured.err == "solved\n"


def test_quiet_keeps_errors_only(capsys, restore_handlers):
    setup_logging(quiet=True)
    log = get_logger("tests")
    log.warning("dropped")
    log.error("kept")
    assert capsys.readouterr().err == "kept\n"


def test_records_carry_the_replication_index(capsys, restore_handlers):
    setup_logging()
    log = get_logger("tests")
    with replication_context(3):
        log.info("inside")
    log.info("outside")
    assert capsys.readouterr().err.splitlines() == ["[rep 3] inside", "outside"]


@pytest.mark.parametrize("workers", [1, 3])
def test_replication_workers_tag_their_records(capsys, restore_handlers, workers):
    setup_logging()
    log = get_logger("tests")

    def task(r):
        log.info(f"task {r}")
        return r

    assert run_replications(task, ReplicationConfig(replications=3, workers=workers)) == [0, 1, 2]
    lines = capsys.readouterr().err.splitlines()
    assert sorted(lines) == ["[rep 0] task 0", "[rep 1] task 1", "[rep 2] task 2"]


def test_log_file_receives_debug(tmp_path, capsys, restore_handlers):
    path = tmp_path / "planner.log"
    setup_logging(log_file=str(path))
    get_logger("tests").debug("probe detail")
    for handler in logger.handlers:
        handler.flush()
    assert capsys.readouterr().err == ""
    text = path.read_text(encoding="utf-8")
    assert "[DEBUG] bw_planner.tests" in text
    assert "probe detail" in text
    assert logging.getLogger("scipy").level == logging.WARNING
