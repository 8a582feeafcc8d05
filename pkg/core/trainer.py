"""Two-stage training over free per-item embedding tables with an EMA teacher.

Stage 1 (warm-up): SemiCL on the class stream plus gamma x SemiCL on the prompt
stream, with an anchor regularizer on the class rows for the first epochs.
Stage 2 (contrastive affinity learning): per batch and per stream, SemiAG on
batch + memory teacher nodes, CAL + teacher-keyed SemiCL, SGD step, enqueue,
EMA update.
"""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from core.data import holdout, normalize_rows
from core.errors import EvaluationError, TrainingDivergedError
from core.evaluation import hungarian_accuracy, semikmeans, silhouette
from core.graph import semiag
from core.heads import build_head
from core.losses import LossWeights, Stage2Stream, stage2_objective, warmup_objective
from core.memory import MemoryBank, subgraph_nodes
from models import STREAMS, ModelState

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    stage1_best: ModelState
    stage2_best: ModelState
    history: list = field(default_factory=list)
    train_indices: np.ndarray = None
    val_indices: np.ndarray = None
    banks: dict = field(default_factory=dict)


def view_noise(shape, sigma, rng):
    """Gaussian perturbations for two views, shape (2,) + shape."""
    shape = (2,) + tuple(shape)
    return rng.normal(0.0, sigma, size=shape) if sigma > 0 else np.zeros(shape)


def apply_views(rows, noise):
    """Stacked [view 1; view 2] of rows + noise, plus the un-normalized inputs."""
    raw = rows[None] + noise
    return np.vstack([normalize_rows(raw[0]), normalize_rows(raw[1])]), raw


def augment_views(base_vectors, sigma, rng):
    """Two noisy, re-normalized views of every row."""
    views, _ = apply_views(base_vectors, view_noise(base_vectors.shape, sigma, rng))
    n = base_vectors.shape[0]
    return views[:n], views[n:]


def _view_backward(grad_view, raw_view):
    """Chain d loss / d normalize(raw) back to raw (= row + noise)."""
    norms = np.linalg.norm(raw_view, axis=1, keepdims=True)
    view = raw_view / norms
    radial = np.sum(grad_view * view, axis=1, keepdims=True)
    return (grad_view - radial * view) / norms


def ema_update(teacher, student, m):
    """teacher <- normalize(m * teacher + (1 - m) * student), row-wise."""
    if teacher.shape != student.shape:
        raise ValueError(f'teacher {teacher.shape} and student {student.shape} differ')
    if m == 1.0:
        return teacher.copy()
    if m == 0.0:
        return student.copy()
    return normalize_rows(m * teacher + (1.0 - m) * student)


def init_state(split, config):
    """Class rows start at the base vectors; prompt rows at a seeded random perturbation of them."""
    rng = np.random.default_rng([config.seed, 1])
    base = normalize_rows(np.asarray(split.base_vectors, dtype=np.float64))
    prompt = normalize_rows(base + rng.normal(0.0, config.prompt_init_sigma, size=base.shape))
    return ModelState(
        student_cls=base.copy(),
        student_prompt=prompt,
        teacher_cls=base.copy(),
        teacher_prompt=prompt.copy(),
        init_cls=base.copy(),
    )


def learning_rate(config, epoch, total_epochs):
    if config.lr_schedule == 'constant' or total_epochs <= 1:
        return config.sgd_lr
    eta_min = config.sgd_lr * 1e-3
    return eta_min + 0.5 * (config.sgd_lr - eta_min) * (1 + math.cos(math.pi * epoch / total_epochs))


def sgd_step(state, name, rows, grad, lr, config):
    """SGD with momentum and weight decay on the batch rows, then unit-norm projection."""
    table = getattr(state, name)
    buf = state.momentum.setdefault(name, np.zeros_like(table))
    grad = grad + config.weight_decay * table[rows]
    buf[rows] = config.sgd_momentum * buf[rows] + grad
    table[rows] = normalize_rows(table[rows] - lr * buf[rows])


def batches(indices, batch_size, rng):
    order = rng.permutation(indices)
    for start in range(0, order.size, batch_size):
        chunk = order[start:start + batch_size]
        if chunk.size >= 2:
            yield np.sort(chunk)


def batch_metas(split, items):
    """One SampleMeta per view: both views of item i share view_group i."""
    metas = [split.samples[i] for i in items]
    return metas + metas


def _check_finite(loss, grads, stage, epoch, batch_id):
    if not np.isfinite(loss):
        max_grad = max((float(np.max(np.abs(g))) for g in grads if g.size), default=float('nan'))
        raise TrainingDivergedError(stage, epoch, batch_id, max_grad)


class Trainer:
    def __init__(self, split, config):
        self.split = split
        self.config = config
        self.weights = LossWeights.from_config(config)
        dim = split.base_vectors.shape[1]
        self.heads = {
            'cls': build_head(config.head, dim, seed=[config.seed, 2]),
            'prompt': build_head(config.head, dim, seed=[config.seed, 3]),
        }
        self.k = config.resolve_k(split.num_classes)

    def _draw_noise(self, items, rng):
        return view_noise((items.size, self.split.base_vectors.shape[1]), self.config.view_noise_sigma, rng)

    def _views(self, table, items, noise):
        return apply_views(table[items], noise)

    @staticmethod
    def _rows_grad(grad_views, raw):
        """Sum the two views' gradients onto the item rows."""
        b = raw.shape[1]
        return _view_backward(grad_views[:b], raw[0]) + _view_backward(grad_views[b:], raw[1])

    def warmup_epoch(self, state, train_items, epoch, rng):
        config = self.config
        lr = learning_rate(config, epoch, config.epochs_stage1)
        anchor = config.anchor_weight(epoch)
        losses = []
        for batch_id, items in enumerate(batches(train_items, config.batch_size, rng)):
            metas = batch_metas(self.split, items)
            noise = self._draw_noise(items, rng)
            h = {}
            raw = {}
            for stream in STREAMS:
                h[stream], raw[stream] = self._views(state.student(stream), items, noise)
            z = {stream: self.heads[stream].forward(h[stream]) for stream in STREAMS}

            loss = warmup_objective(z['cls'], z['prompt'], metas, self.weights)
            grad_z = {'cls': loss.grad_cls, 'prompt': loss.grad_prompt}

            total = loss.total
            row_grads = {}
            for stream in STREAMS:
                grad_h = self.heads[stream].backward(grad_z[stream], h[stream])
                row_grads[stream] = self._rows_grad(grad_h, raw[stream])
            if anchor > 0:
                offset = state.student_cls[items] - state.init_cls[items]
                total += anchor * float(np.sum(offset ** 2)) / items.size
                row_grads['cls'] = row_grads['cls'] + 2.0 * anchor * offset / items.size

            _check_finite(total, list(row_grads.values()), 'warmup', epoch, batch_id)
            sgd_step(state, 'student_cls', items, row_grads['cls'], lr, config)
            sgd_step(state, 'student_prompt', items, row_grads['prompt'], lr, config)
            losses.append(total)
        return state, {'loss': float(np.mean(losses)) if losses else 0.0, 'lr': lr, 'anchorWeight': anchor}

    def cal_epoch(self, state, banks, train_items, epoch, rng):
        config = self.config
        lr = learning_rate(config, epoch, config.epochs_stage2)
        losses, components = [], {stream: [] for stream in STREAMS}
        for batch_id, items in enumerate(batches(train_items, config.batch_size, rng)):
            metas = batch_metas(self.split, items)
            noise = self._draw_noise(items, rng)

            # forward student and teacher on the same views
            h, raw, h_t = {}, {}, {}
            for stream in STREAMS:
                h[stream], raw[stream] = self._views(state.student(stream), items, noise)
                h_t[stream], _ = self._views(state.teacher(stream), items, noise)
            z = {stream: self.heads[stream].forward(h[stream]) for stream in STREAMS}
            z_t = {stream: self.heads[stream].forward(h_t[stream]) for stream in STREAMS}

            # SemiAG for [CLS], then for [P]
            streams = {}
            for stream in STREAMS:
                nodes = subgraph_nodes(banks[stream], h_t[stream], metas)
                k = min(self.k, len(nodes))
                graph = semiag(nodes.embeddings, nodes.metas, k, config.eta, config.quantile_level,
                               cknn=config.cknn, ap=config.ap, semipriori=config.semipriori)
                streams[stream] = Stage2Stream(student_h=h[stream], student_z=z[stream], teacher_z=z_t[stream],
                                               nodes=nodes, graph=graph, metas=metas)

            loss = stage2_objective(streams, self.weights, config.n_neg, rng, use_semicl=config.semicl)

            row_grads = {}
            for stream in STREAMS:
                grad_h = loss.grad_h[stream] + self.heads[stream].backward(loss.grad_z[stream], h[stream])
                row_grads[stream] = self._rows_grad(grad_h, raw[stream])
            _check_finite(loss.total, list(row_grads.values()), 'cal', epoch, batch_id)

            sgd_step(state, 'student_cls', items, row_grads['cls'], lr, config)
            sgd_step(state, 'student_prompt', items, row_grads['prompt'], lr, config)
            for stream in STREAMS:
                banks[stream].enqueue(h_t[stream], metas)
            state.teacher_cls = ema_update(state.teacher_cls, state.student_cls, config.ema_momentum)
            state.teacher_prompt = ema_update(state.teacher_prompt, state.student_prompt, config.ema_momentum)

            losses.append(loss.total)
            for stream in STREAMS:
                components[stream].append(loss.components[stream])

        metrics = {'loss': float(np.mean(losses)) if losses else 0.0, 'lr': lr,
                   'memory': {stream: len(banks[stream]) for stream in STREAMS}}
        for stream in STREAMS:
            if components[stream]:
                metrics[stream] = {key: float(np.mean([c[key] for c in components[stream]]))
                                   for key in ('cal', 'self', 'sup', 'total')}
        return state, banks, metrics

    def validate(self, state, val_items, seed):
        """Known accuracy and Silhouette-on-New of SemiKMeans on the validation rows.

        The rows are trained like any other unlabeled item, so the score moves with the epochs.
        """
        if val_items.size == 0:
            return {'accKnown': None, 'silhouetteNew': None, 'score': 0.0}
        embeddings = state.student_cls[val_items]
        # Validation labels only score Known; clustering itself is unsupervised.
        metas = [replace(self.split.samples[i], class_label=None, is_labeled=False) for i in val_items]
        assignment = semikmeans(embeddings, metas, self.split.num_classes, seed=seed)
        known = np.array([m.is_known_class for m in metas], dtype=bool)
        report = hungarian_accuracy(assignment.labels, self.split.targets[val_items], known,
                                    self.split.num_classes)
        try:
            new_score = silhouette(embeddings[~known], assignment.labels[~known]) if (~known).sum() > 2 else None
        except EvaluationError:
            new_score = None
        acc_known = report.acc_known or 0.0
        return {
            'accKnown': report.acc_known,
            'silhouetteNew': new_score,
            'score': (acc_known + (new_score or 0.0)) / 2.0,
        }

    def run_stage1(self, state, train_items, val_items, rng, history):
        best, best_score = state.copy(), -math.inf
        for epoch in range(self.config.epochs_stage1):
            state, metrics = self.warmup_epoch(state, train_items, epoch, rng)
            val = self.validate(state, val_items, self.config.seed)
            score = val['accKnown'] if val['accKnown'] is not None else -metrics['loss']
            record = {'stage': 1, 'epoch': epoch, **metrics, 'val': val}
            history.append(record)
            logger.info('stage 1 epoch %d: loss=%.4f val known=%s', epoch, metrics['loss'], val['accKnown'])
            if score > best_score:
                best, best_score = state.copy(), score
        return best

    def run_stage2(self, start, train_items, val_items, rng, history):
        """Start from ``start``; teacher = student, empty banks, fresh optimizer slots.

        Returns the best state and the banks as they stand after the last epoch.
        """
        state = start.copy()
        state.teacher_cls = state.student_cls.copy()
        state.teacher_prompt = state.student_prompt.copy()
        state.momentum = {}
        banks = {stream: MemoryBank(self.config.memory_size, stream) for stream in STREAMS}

        best, best_score = state.copy(), -math.inf
        for epoch in range(self.config.epochs_stage2):
            state, banks, metrics = self.cal_epoch(state, banks, train_items, epoch, rng)
            val = self.validate(state, val_items, self.config.seed)
            record = {'stage': 2, 'epoch': epoch, **metrics, 'val': val}
            history.append(record)
            logger.info('stage 2 epoch %d: loss=%.4f val score=%.4f', epoch, metrics['loss'], val['score'])
            if val['score'] > best_score:
                best, best_score = state.copy(), val['score']
        return best, banks


def transfer_displacement(table, base, trained, untrained, k):
    """Shift each untrained row by the mean learned displacement of its ``k`` nearest trained rows.

    Neighbours are found in base space; the shifted rows are re-normalized.
    """
    if untrained.size == 0 or trained.size == 0:
        return table.copy()
    k = min(k, trained.size)
    sims = base[untrained] @ base[trained].T
    nearest = trained[np.argsort(-sims, axis=1, kind='stable')[:, :k]]
    shift = (table[nearest] - base[nearest]).mean(axis=1)
    extended = table.copy()
    extended[untrained] = normalize_rows(base[untrained] + shift)
    return extended


def extend_to_untrained(state, split, trained, k):
    """Copy of ``state`` whose rows outside ``trained`` follow their trained neighbours."""
    base = normalize_rows(np.asarray(split.base_vectors, dtype=np.float64))
    untrained = np.setdiff1d(np.arange(len(split)), trained)
    extended = state.copy()
    for name, table in state.tables().items():
        setattr(extended, name, transfer_displacement(table, base, trained, untrained, k))
    return extended


def run(split, config, initial_state=None, skip_stage1=False):
    """Both stages end to end; returns the best checkpoint of each stage and the metric log.

    Every 'train' item is trained on. A seeded validation share of them has its
    labels hidden during training and scores the epochs. Rows that are never
    trained ('test' items) take over the displacement of their nearest trained
    rows in the returned checkpoints.
    """
    train_items = split.indices('train')
    _, val_pos = holdout(split.take(train_items), config.validation_fraction, config.seed)
    val_items = train_items[val_pos]
    visible = split.hide_labels(val_items)
    logger.info('Training on %d items, %d of them validation', train_items.size, val_items.size)

    trainer = Trainer(visible, config)
    rng = np.random.default_rng(config.seed)
    history = []
    state = initial_state.copy() if initial_state is not None else init_state(split, config)
    if skip_stage1:
        stage1_best = state
    else:
        stage1_best = trainer.run_stage1(state, train_items, val_items, rng, history)

    banks = {}
    if config.epochs_stage2 > 0:
        stage2_best, banks = trainer.run_stage2(stage1_best, train_items, val_items, rng, history)
    else:
        stage2_best = stage1_best.copy()
    return TrainResult(
        stage1_best=extend_to_untrained(stage1_best, split, train_items, config.transfer_k),
        stage2_best=extend_to_untrained(stage2_best, split, train_items, config.transfer_k),
        history=history, train_indices=train_items, val_indices=val_items, banks=banks,
    )
