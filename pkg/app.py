import logging

import click
from dotenv import load_dotenv

from config import PRESETS, VERSION, Config

# Load environment variables
load_dotenv()

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

logger = logging.getLogger(__name__)


class NovelcatApp(click.Group):
    """Command group that carries its default config class and error handlers."""

    def __init__(self, *args, config_class=Config, **kwargs):
        super().__init__(*args, **kwargs)
        self.config_class = config_class
        self.error_handlers = {}

    def errorhandler(self, exc_type):
        def decorator(f):
            self.error_handlers[exc_type] = f
            return f
        return decorator

    def register_commands(self, commands):
        for command in commands:
            self.add_command(command)

    def _find_handler(self, error):
        for cls in type(error).__mro__:
            if cls in self.error_handlers:
                return self.error_handlers[cls]
        return None

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.exceptions.Abort, click.ClickException):
            raise
        except Exception as error:
            handler = self._find_handler(error)
            if handler is None:
                raise
            message, exit_code = handler(error)
            click.echo(f'Error: {message}', err=True)
            ctx.exit(exit_code)


def configure_logging(level):
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, force=True)


def create_app(config_class=Config):
    @click.group(cls=NovelcatApp, config_class=config_class)
    @click.version_option(VERSION, prog_name='novelcat')
    @click.option('--preset', type=click.Choice(sorted(PRESETS)), default=None,
                  help='Hyperparameter preset (defaults to the app config).')
    @click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False), default=None,
                  help='JSON file of TrainConfig values; flags take precedence.')
    @click.option('--log-level', default=None, help='Overrides NOVELCAT_LOG_LEVEL.')
    @click.option('--output-root', type=click.Path(file_okay=False), default=None,
                  help='Default parent of command output directories.')
    @click.pass_context
    def app(ctx, preset, config_file, log_level, output_root):
        """Generalized novel category discovery on embedding tables."""
        selected = PRESETS[preset] if preset else config_class
        ctx.obj = {
            'CONFIG_CLASS': selected,
            'CONFIG_FILE': config_file,
            'OUTPUT_ROOT': output_root or selected.OUTPUT_ROOT,
        }
        configure_logging(log_level or selected.LOG_LEVEL)

    # Register commands
    from commands.data_commands import gen, split
    from commands.training_commands import warmup, cal
    from commands.graph_commands import pseudo_label
    from commands.eval_commands import evaluate
    from commands.ablation_commands import ablate

    app.register_commands([gen, split, warmup, cal, pseudo_label, evaluate, ablate])

    # Register error handlers
    from commands.error_handlers import register_error_handlers
    register_error_handlers(app)

    return app


if __name__ == '__main__':
    app = create_app()
    app()
