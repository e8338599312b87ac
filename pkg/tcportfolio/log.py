"""
Logging helpers shared by the backtest engine, the grid runner and the command line tools.
"""

import logging
from logging.handlers import RotatingFileHandler

LOG_LEVEL = logging.DEBUG
IMPORTANT = 25
logging.addLevelName(IMPORTANT, 'IMPORTANT')

CONSOLE_FORMAT = '%(asctime)s - %(message)s'
DEBUG_FORMAT = '%(asctime)s [%(name)s] %(message)s'
DATE_FORMAT = '%b/%d %H:%M:%S'


class TermColor(object):
    OKBLUE = '\033[94m'
    OKGREEN = '\033[92m'
    WARNING = '\033[93m'
    FAIL = '\033[91m'
    ENDC = '\033[0m'
    BOLD = '\033[1m'

    @classmethod
    def wrap(cls, code, text):
        return '{}{}{}'.format(code, text, cls.ENDC)

    @classmethod
    def warn(cls, text):
        return cls.wrap(cls.WARNING, text)

    @classmethod
    def success(cls, text):
        return cls.wrap(cls.OKGREEN, text)

    @classmethod
    def error(cls, text):
        return cls.wrap(cls.FAIL, text)

    @classmethod
    def emphasis(cls, text):
        return cls.wrap(cls.BOLD, text)

    @classmethod
    def debug(cls, text):
        return cls.wrap(cls.OKBLUE, text)


class ColoredConsoleHandler(logging.StreamHandler):
    """Console handler which colours records by severity."""

    def format(self, record):
        msg = super(ColoredConsoleHandler, self).format(record)
        if record.levelno == logging.WARNING:
            msg = TermColor.warn(msg)
        elif record.levelno > logging.WARNING:
            msg = TermColor.error(msg)
        elif record.levelno == IMPORTANT:
            msg = TermColor.emphasis(msg)
        elif record.levelno == logging.DEBUG:
            msg = TermColor.debug(msg)
        return msg


def get_module_logger(name):
    """
    Create a logger named after the last component of a dotted module name.

    :param name: module name, usually ``__name__``
    :return: logging.Logger
    """
    name = name.split('.')[-1]
    logger = logging.getLogger(name)
    logger.setLevel(LOG_LEVEL)
    logger.addHandler(logging.NullHandler())
    return logger


def log_to_console(level=logging.INFO, debugging=False):
    """
    Send log records to the console.

    :param level: minimum level shown
    :param debugging: include the logger name in every line
    :return: the installed handler
    """
    console = ColoredConsoleHandler()
    console.setLevel(level)
    formatter = logging.Formatter(DEBUG_FORMAT if debugging else CONSOLE_FORMAT, DATE_FORMAT)
    console.setFormatter(formatter)
    logging.getLogger('').addHandler(console)
    return console


def log_to_file(filename, level=logging.DEBUG):
    """
    Send log records to a rotating log file.

    :param filename: path of the log file
    :param level: minimum level written
    :return: the installed handler
    """
    logfile = RotatingFileHandler(filename, maxBytes=1e6, backupCount=10)
    logfile.setLevel(level)
    formatter = logging.Formatter(DEBUG_FORMAT, DATE_FORMAT)
    logfile.setFormatter(formatter)
    logging.getLogger('').addHandler(logfile)
    return logfile


def important(logger, message, *args):
    """Log a run-level milestone at the IMPORTANT level."""
    logger.log(IMPORTANT, message, *args)
