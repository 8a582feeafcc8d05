import logging

from core.errors import ConfigValidationError, NovelcatError

logger = logging.getLogger(__name__)

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def register_error_handlers(app):
    """Register exception -> (message, exit code) handlers on the command group"""

    @app.errorhandler(ConfigValidationError)
    def invalid_config(error):
        return str(error), USAGE_ERROR

    @app.errorhandler(NovelcatError)
    def runtime_error(error):
        logger.error('%s: %s', type(error).__name__, error)
        return str(error), RUNTIME_ERROR

    @app.errorhandler(FileNotFoundError)
    def missing_file(error):
        return f'File not found: {error.filename}', RUNTIME_ERROR

    @app.errorhandler(Exception)
    def internal_error(error):
        logger.exception('Unhandled error')
        return 'Internal error', RUNTIME_ERROR
