import logging
import os
from functools import wraps

import click

from config import TOGGLE_FLAGS, VERSION, Config, resolve_config
from models import RunManifest, TrainConfig
from utils.embedding_io import dataset_files
from utils.reports import file_digest, write_json

logger = logging.getLogger(__name__)

MANIFEST_FILE = 'manifest.json'


def _input_files(value):
    if not value:
        return []
    if os.path.isdir(value):
        return dataset_files(value)
    return [value]


def manifest_required(command_name, inputs=(), layout=None):
    """
    Decorator that resolves the run config and writes manifest.json into the
    output directory before the command computes anything.
    Passes the manifest and the resolved TrainConfig to the command function.

    ``inputs`` names the parameters (dataset directories or files) hashed into
    the manifest; ``layout`` maps artifact names to paths relative to ``--out``.
    """
    train_fields = set(TrainConfig.field_names()) | set(TOGGLE_FLAGS)

    def decorator(f):
        @wraps(f)
        def decorated(*args, **kwargs):
            settings = click.get_current_context().obj or {}

            # TrainConfig flags go through preset / config file / flag precedence
            overrides = {name: kwargs.pop(name) for name in list(kwargs) if name in train_fields}
            config = resolve_config(settings.get('CONFIG_CLASS', Config), settings.get('CONFIG_FILE'), overrides)

            out = kwargs.get('out') or os.path.join(settings.get('OUTPUT_ROOT', Config.OUTPUT_ROOT), command_name)
            kwargs['out'] = out
            os.makedirs(out, exist_ok=True)

            files = [path for name in inputs for path in _input_files(kwargs.get(name))]
            params = {name: value for name, value in kwargs.items() if name != 'out'}
            manifest = RunManifest(
                command=command_name,
                config={'train': config.to_dict(), 'params': params},
                dataset_hash=file_digest(files) if files else None,
                version=f'novelcat-{VERSION}',
                layout={'manifest': MANIFEST_FILE, **(layout or {})},
            )
            write_json(os.path.join(out, MANIFEST_FILE), manifest.to_dict(), schema='Manifest')
            logger.info('%s: manifest written to %s', command_name, out)

            # Pass manifest and config to the command function
            return f(manifest, config, *args, **kwargs)

        return decorated
    return decorator
