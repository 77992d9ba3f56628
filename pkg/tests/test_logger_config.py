import logging

import logger_config


def test_log_directory_is_created(tmp_path):
    path = tmp_path / "logs" / "run.log"
    logger_config.setup_logging(logging.INFO, log_file=str(path))
    assert path.parent.is_dir()


def test_third_party_loggers_are_quieted(tmp_path):
    logger_config.setup_logging(logging.DEBUG, log_file=str(tmp_path / "run.log"))
    for name in logger_config.QUIET_LOGGERS:
        assert logging.getLogger(name).level == logging.WARNING
