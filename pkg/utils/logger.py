# threshold_dde/utils/logger.py

import logging
import logging.handlers
import os
from typing import Optional

from config import LOG_CONFIG

# 所有模块的日志器都挂在这个名字下面
ROOT_LOGGER = "ThresholdDDE"

_HANDLER_TAG = "_threshold_dde_handler"


def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> logging.Logger:
    """
    配置 ThresholdDDE 日志器: 控制台 + 可选的轮转文件

    只改动本包的日志器，不碰根日志器；重复调用会替换上次装上的处理器。

    Args:
        level: 日志级别，缺省取 TDDE_LOG_LEVEL
        log_file: 日志文件路径，空字符串表示只输出到控制台，缺省取 TDDE_LOG_FILE
    """
    level = (level or LOG_CONFIG["level"]).upper()
    log_file = LOG_CONFIG["file_path"] if log_file is None else log_file
    numeric = getattr(logging, level, None)
    if not isinstance(numeric, int):
        raise ValueError(f"unknown log level {level!r}")

    package_logger = logging.getLogger(ROOT_LOGGER)
    package_logger.setLevel(numeric)
    package_logger.propagate = False
    for handler in [h for h in package_logger.handlers if getattr(h, _HANDLER_TAG, False)]:
        package_logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_CONFIG["format"])
    handlers = [logging.StreamHandler()]
    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        handlers.append(logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=LOG_CONFIG["max_file_size"],
            backupCount=LOG_CONFIG["backup_count"],
            encoding="utf-8",
        ))
    for handler in handlers:
        setattr(handler, _HANDLER_TAG, True)
        handler.setFormatter(formatter)
        package_logger.addHandler(handler)

    package_logger.debug(f"logging at {level} to console{' and ' + log_file if log_file else ''}")
    return package_logger


def get_logger(component: str) -> logging.Logger:
    """ThresholdDDE.<component>"""
    return logging.getLogger(f"{ROOT_LOGGER}.{component}")


def log_performance(logger: logging.Logger, operation: str, duration: float):
    logger.info(f"Performance: {operation} took {duration:.3f} seconds")


class LoggerMixin:
    """求解器、验证套件和控制器共用的日志方法，日志器名取类名"""

    @property
    def logger(self) -> logging.Logger:
        return get_logger(self.__class__.__name__)

    def log_info(self, message: str):
        self.logger.info(message)

    def log_warning(self, message: str):
        self.logger.warning(message)

    def log_error(self, message: str, exc_info: bool = False):
        self.logger.error(message, exc_info=exc_info)

    def log_debug(self, message: str):
        self.logger.debug(message)

    def log_exception(self, message: str):
        self.logger.error(message, exc_info=True)
