import functools
import logging
import sys

from marketguard.consts import EXIT_INPUT, EXIT_TRAINING, EXIT_MANIFEST

log = logging.getLogger('marketguard')


class MarketGuardError(Exception):
    exit_code = EXIT_INPUT


class InvalidInputError(MarketGuardError):
    pass


class ConfigError(MarketGuardError):
    pass


class ParseError(MarketGuardError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ''
        if path is not None:
            where = '%s:' % path
        if line is not None:
            where += 'line %s: ' % line
        elif where:
            where += ' '
        super(ParseError, self).__init__(where + message)


class ValidationError(MarketGuardError):
    def __init__(self, message, violations=()):
        self.violations = list(violations)
        if self.violations:
            message = message + ': ' + '; '.join(self.violations)
        super(ValidationError, self).__init__(message)


class NotFoundError(MarketGuardError):
    pass


class UnsupportedOperationError(MarketGuardError):
    pass


class DegenerateModelError(MarketGuardError):
    pass


class TrainingError(MarketGuardError):
    exit_code = EXIT_TRAINING


class ConvergenceError(TrainingError):
    """SMO ran out of passes; ``model`` is the best-so-far result."""

    def __init__(self, message, model=None, violation=None, passes=None):
        self.model = model
        self.violation = violation
        self.passes = passes
        super(ConvergenceError, self).__init__(message)


class OracleError(MarketGuardError):
    pass


class SizeLimitError(OracleError):
    pass


class ManifestMismatchError(MarketGuardError):
    exit_code = EXIT_MANIFEST


class ReputationError(MarketGuardError):
    pass


def handle_error(func):
    @functools.wraps(func)
    def inner(*args, **kwargs):
        debug = log.isEnabledFor(logging.DEBUG)
        try:
            return func(*args, **kwargs)
        except MarketGuardError as e:
            if debug:
                log.exception(e)
            else:
                log.error(e)
            sys.exit(e.exit_code)
        except (IOError, OSError) as e:
            if debug:
                log.exception(e)
            else:
                log.error(e)
            sys.exit(EXIT_INPUT)

    return inner
