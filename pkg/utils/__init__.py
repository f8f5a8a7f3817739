# threshold_dde/utils/__init__.py

"""
工具模块包
"""

from .logger import setup_logging, get_logger, LoggerMixin, log_performance

__all__ = ["setup_logging", "get_logger", "LoggerMixin", "log_performance"]
