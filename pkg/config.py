import json
import os
from dataclasses import fields

from dotenv import load_dotenv

from core.errors import ConfigValidationError
from models import TrainConfig

load_dotenv()

VERSION = '1.2.0'


class Config:
    """Published hyperparameters (generic datasets)"""
    OUTPUT_ROOT = os.environ.get('NOVELCAT_OUTPUT_ROOT', 'runs')
    LOG_LEVEL = os.environ.get('NOVELCAT_LOG_LEVEL', 'INFO')

    # Loss weights and temperatures
    ALPHA = 0.35
    BETA = 0.6
    GAMMA = 0.35
    TAU = 1.0
    TAU_A = 0.07

    # SemiAG
    ETA = 1
    K = None  # auto: |M| / (4 |C|)
    QUANTILE_LEVEL = 0.5

    # Memory and sampling
    MEMORY_SIZE = 4096
    N_NEG = 1024
    BATCH_SIZE = 128

    # Optimization
    EPOCHS_STAGE1 = 200
    EPOCHS_STAGE2 = 70
    SGD_LR = 0.1
    SGD_MOMENTUM = 0.9
    WEIGHT_DECAY = 5e-5
    LR_SCHEDULE = 'cosine'
    EMA_MOMENTUM = 0.999

    # Desk-scale surrogates for augmentation, prompt init and distillation
    VIEW_NOISE_SIGMA = 0.1
    PROMPT_INIT_SIGMA = 0.3
    ANCHOR_REG_WEIGHT = 0.5
    ANCHOR_REG_EPOCHS = 5
    HEAD = 'identity'

    VALIDATION_FRACTION = 0.1
    TRANSFER_K = 5
    SEED = 0


class FineGrainedConfig(Config):
    """Fine-grained datasets"""
    QUANTILE_LEVEL = 0.8
    EPOCHS_STAGE2 = 100


class DeskConfig(Config):
    """Laptop-sized runs on synthetic splits"""
    MEMORY_SIZE = 1024
    N_NEG = 256
    BATCH_SIZE = 64
    EPOCHS_STAGE1 = 20
    EPOCHS_STAGE2 = 10


class TestingConfig(Config):
    """Testing configuration"""
    LOG_LEVEL = 'WARNING'
    MEMORY_SIZE = 64
    N_NEG = 16
    BATCH_SIZE = 8
    EPOCHS_STAGE1 = 2
    EPOCHS_STAGE2 = 2


PRESETS = {
    'published': Config,
    'fine-grained': FineGrainedConfig,
    'desk': DeskConfig,
    'testing': TestingConfig,
}


def flag_name(field_name):
    return '--' + field_name.replace('_', '-')


def config_defaults(config_class):
    """TrainConfig values declared by a preset class (fields it leaves out keep dataclass defaults)."""
    values = {}
    for f in fields(TrainConfig):
        attr = f.name.upper()
        if hasattr(config_class, attr):
            values[f.name] = getattr(config_class, attr)
    return values


def validate_config(config):
    """Collect every invalid field; raise once with all of them."""
    problems = {}

    def check(name, ok, message):
        if not ok:
            problems[flag_name(name)] = message

    check('alpha', 0.0 <= config.alpha <= 1.0, 'must lie in [0, 1]')
    check('beta', 0.0 <= config.beta <= 1.0, 'must lie in [0, 1]')
    check('gamma', config.gamma >= 0.0, 'must be >= 0')
    check('tau', config.tau > 0.0, 'must be > 0')
    check('tau_a', config.tau_a > 0.0, 'must be > 0')
    check('eta', config.eta >= 1, 'must be >= 1')
    check('k', config.k is None or config.k >= 1, 'must be >= 1 or auto')
    check('quantile_level', 0.0 < config.quantile_level < 1.0, 'must lie in (0, 1)')
    check('memory_size', config.memory_size >= 1, 'must be >= 1')
    check('n_neg', config.n_neg >= 0, 'must be >= 0')
    check('batch_size', config.batch_size >= 2 and config.batch_size % 2 == 0, 'must be an even number >= 2')
    check('epochs_stage1', config.epochs_stage1 >= 0, 'must be >= 0')
    check('epochs_stage2', config.epochs_stage2 >= 0, 'must be >= 0')
    check('sgd_lr', config.sgd_lr >= 0.0, 'must be >= 0')
    check('sgd_momentum', 0.0 <= config.sgd_momentum < 1.0, 'must lie in [0, 1)')
    check('weight_decay', config.weight_decay >= 0.0, 'must be >= 0')
    check('lr_schedule', config.lr_schedule in ('cosine', 'constant'), "must be 'cosine' or 'constant'")
    check('ema_momentum', 0.0 <= config.ema_momentum <= 1.0, 'must lie in [0, 1]')
    check('view_noise_sigma', config.view_noise_sigma >= 0.0, 'must be >= 0')
    check('prompt_init_sigma', config.prompt_init_sigma >= 0.0, 'must be >= 0')
    check('anchor_reg_weight', config.anchor_reg_weight >= 0.0, 'must be >= 0')
    check('anchor_reg_epochs', config.anchor_reg_epochs >= 1, 'must be >= 1')
    check('head', config.head in ('identity', 'random'), "must be 'identity' or 'random'")
    check('validation_fraction', 0.0 <= config.validation_fraction < 1.0, 'must lie in [0, 1)')
    check('transfer_k', config.transfer_k >= 1, 'must be >= 1')
    check('ap', config.cknn or not config.ap, 'affinity propagation requires the consensus graph (--cknn)')

    if problems:
        raise ConfigValidationError(problems)
    return config


TOGGLE_FLAGS = ('knn_baseline',)


def resolve_toggles(overrides):
    """Expand --knn-baseline and switch AP off with --no-cknn unless --ap was given."""
    overrides = dict(overrides)
    if overrides.pop('knn_baseline', None):
        if overrides.get('cknn') or overrides.get('ap'):
            raise ConfigValidationError({'--knn-baseline': 'cannot be combined with --cknn or --ap'})
        overrides.update(cknn=False, ap=False)
    if overrides.get('cknn') is False and overrides.get('ap') is None:
        overrides['ap'] = False
    return overrides


def resolve_config(config_class=Config, config_file=None, overrides=None):
    """Build a TrainConfig with precedence flags > config file > preset."""
    values = config_defaults(config_class)
    overrides = resolve_toggles(overrides or {})

    if config_file:
        with open(config_file) as fh:
            file_values = json.load(fh)
        unknown = sorted(set(file_values) - set(TrainConfig.field_names()))
        if unknown:
            raise ConfigValidationError({name: 'unknown config key' for name in unknown})
        values.update(file_values)

    for name, value in overrides.items():
        if value is not None:
            values[name] = value
    if values.get('k') == 'auto':
        values['k'] = None

    return validate_config(TrainConfig(**values))
