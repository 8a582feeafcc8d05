from .data_commands import gen, split
from .training_commands import warmup, cal
from .graph_commands import pseudo_label
from .eval_commands import evaluate
from .ablation_commands import ablate
from .error_handlers import register_error_handlers

__all__ = [
    'gen',
    'split',
    'warmup',
    'cal',
    'pseudo_label',
    'evaluate',
    'ablate',
    'register_error_handlers'
]
