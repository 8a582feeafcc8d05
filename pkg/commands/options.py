"""click options shared by the commands, one per TrainConfig field."""
import click

from config import flag_name


class NeighborhoodSize(click.ParamType):
    """Positive integer or 'auto'."""
    name = 'k'

    def convert(self, value, param, ctx):
        if value is None or value == 'auto' or isinstance(value, int):
            return value
        try:
            return int(value)
        except ValueError:
            self.fail(f"{value!r} is neither an integer nor 'auto'", param, ctx)


TRAIN_OPTIONS = {
    'alpha': (float, 'SemiCL mix of supervised and self terms'),
    'beta': (float, 'CAL weight inside the unsupervised term'),
    'gamma': (float, 'weight of the prompt stream'),
    'tau': (float, 'SemiCL temperature'),
    'tau_a': (float, 'supervised and CAL temperature'),
    'eta': (int, 'affinity propagation steps'),
    'k': (NeighborhoodSize(), "KNN size, or 'auto' for memory_size // (4 classes)"),
    'quantile_level': (float, 'SemiAG threshold quantile'),
    'memory_size': (int, 'memory bank capacity per stream'),
    'n_neg': (int, 'pseudo-negatives per CAL query'),
    'batch_size': (int, 'items per batch (two views each)'),
    'epochs_stage1': (int, 'warm-up epochs'),
    'epochs_stage2': (int, 'contrastive affinity learning epochs'),
    'sgd_lr': (float, 'initial learning rate'),
    'sgd_momentum': (float, 'SGD momentum'),
    'weight_decay': (float, 'SGD weight decay'),
    'lr_schedule': (click.Choice(['cosine', 'constant']), 'learning-rate schedule'),
    'ema_momentum': (float, 'teacher EMA momentum'),
    'view_noise_sigma': (float, 'Gaussian view augmentation scale'),
    'prompt_init_sigma': (float, 'prompt table initial perturbation'),
    'anchor_reg_weight': (float, 'initial anchor regularizer weight'),
    'anchor_reg_epochs': (int, 'epochs until the anchor regularizer vanishes'),
    'head': (click.Choice(['identity', 'random']), 'projection head'),
    'validation_fraction': (float, 'share of training items whose labels are hidden and scored for validation'),
    'transfer_k': (int, 'trained neighbours whose displacement carries over to held-out rows'),
    'seed': (int, 'random seed'),
}

TOGGLES = {
    'cknn': 'consensus KNN graph (off: mutual KNN)',
    'ap': 'affinity propagation on the consensus graph',
    'semipriori': 'label-forced edges',
    'semicl': 'SemiCL terms in stage 2',
}

GRAPH_FIELDS = ('k', 'eta', 'quantile_level', 'memory_size', 'cknn', 'ap', 'semipriori', 'seed')


def _option(name):
    if name in TOGGLES:
        dashed = name.replace('_', '-')
        return click.option(f'--{dashed}/--no-{dashed}', name, default=None, help=TOGGLES[name])
    kind, help_text = TRAIN_OPTIONS[name]
    return click.option(flag_name(name), name, type=kind, default=None, help=help_text)


def train_options(names=None):
    """Add an option for every named TrainConfig field (all of them by default).

    Unset options stay None so the preset and config file fill them in.
    """
    names = list(names) if names is not None else list(TRAIN_OPTIONS) + list(TOGGLES)

    def decorator(f):
        for name in reversed(names):
            f = _option(name)(f)
        return f
    return decorator


def out_option(f):
    return click.option('--out', type=click.Path(file_okay=False), default=None,
                        help='Output directory (default: <output root>/<command>).')(f)


def data_option(f):
    return click.option('--data', required=True, type=click.Path(exists=True, file_okay=False),
                        help='Dataset directory written by gen or split.')(f)
