"""Contrastive objectives with analytic gradients with respect to the queries.

Keys are constants everywhere (teacher embeddings, or batch features under
stop-gradient), so every gradient returned here is d loss / d queries only.

The extended contrastive loss is the supervised-contrastive form

    L(q) = -1/|P| * sum_{p in P} log( exp(q.k_p / tau) / sum_{a in A} exp(q.k_a / tau) )

The printed form without the logarithm is a bounded ratio and is not used.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from core.errors import LossError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContrastSets:
    positives: tuple
    anchors: tuple


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.35
    beta: float = 0.6
    gamma: float = 0.35
    tau: float = 1.0
    tau_a: float = 0.07

    def __post_init__(self):
        if not (0 <= self.alpha <= 1 and 0 <= self.beta <= 1):
            raise LossError('alpha and beta must lie in [0, 1]')
        if self.gamma < 0:
            raise LossError('gamma must be >= 0')
        if self.tau <= 0 or self.tau_a <= 0:
            raise LossError('temperatures must be > 0')

    @classmethod
    def from_config(cls, config):
        return cls(alpha=config.alpha, beta=config.beta, gamma=config.gamma, tau=config.tau, tau_a=config.tau_a)


def masked_contrastive(queries, keys, tau, positive_mask, anchor_mask):
    """Per-query losses and gradients for boolean (m, n) positive/anchor masks."""
    n_pos = positive_mask.sum(axis=1)
    if np.any(n_pos == 0):
        raise LossError(f'{int(np.sum(n_pos == 0))} query(ies) have an empty positive set')
    if np.any(anchor_mask.sum(axis=1) == 0):
        raise LossError('empty anchor set')
    if np.any(positive_mask & ~anchor_mask):
        raise LossError('positive set must be contained in the anchor set')

    logits = queries @ keys.T / tau
    masked = np.where(anchor_mask, logits, -np.inf)
    lse = logsumexp(masked, axis=1)
    probs = np.exp(masked - lse[:, None])

    pos_weights = positive_mask / n_pos[:, None]
    losses = lse - np.sum(logits * pos_weights, axis=1)
    grads = (probs @ keys - pos_weights @ keys) / tau
    return losses, grads


def contrastive_loss(query, keys, tau, sets):
    """Single-query loss and gradient."""
    if not sets.positives:
        raise LossError('empty positive set')
    if not sets.anchors:
        raise LossError('empty anchor set')
    n = keys.shape[0]
    positive_mask = np.zeros((1, n), dtype=bool)
    anchor_mask = np.zeros((1, n), dtype=bool)
    positive_mask[0, list(sets.positives)] = True
    anchor_mask[0, list(sets.anchors)] = True
    losses, grads = masked_contrastive(np.asarray(query)[None, :], keys, tau, positive_mask, anchor_mask)
    return float(losses[0]), grads[0]


def view_partners(metas):
    """Index of the other augmented view for every row (rows sharing a view_group)."""
    groups = {}
    for idx, meta in enumerate(metas):
        groups.setdefault(meta.view_group, []).append(idx)
    partner = np.empty(len(metas), dtype=np.int64)
    for group, members in groups.items():
        if len(members) != 2:
            raise LossError(f'view group {group} has {len(members)} views, expected 2')
        partner[members[0]], partner[members[1]] = members[1], members[0]
    return partner


@dataclass
class SemiCLTerms:
    l_self: float
    l_sup: float
    grad_self: np.ndarray
    grad_sup: np.ndarray


def teacher_keyed_semicl(student_features, teacher_features, metas, tau, tau_a):
    """Self and supervised terms with student queries against (constant) keys.

    Self term: positive = the other view, anchors = every key but the query's own row.
    Supervised term: over labeled rows only; positives share the class label.
    Each term is averaged over the queries it is defined for.
    """
    n = len(metas)
    if student_features.shape != teacher_features.shape or student_features.shape[0] != n:
        raise LossError('student and teacher features must be aligned with metas')
    not_self = ~np.eye(n, dtype=bool)

    partner = view_partners(metas)
    self_pos = np.zeros((n, n), dtype=bool)
    self_pos[np.arange(n), partner] = True
    self_losses, self_grads = masked_contrastive(student_features, teacher_features, tau, self_pos, not_self)
    l_self = float(self_losses.mean())
    grad_self = self_grads / n

    grad_sup = np.zeros_like(student_features)
    l_sup = 0.0
    labeled = np.flatnonzero([m.is_labeled for m in metas])
    if labeled.size >= 2:
        labels = np.array([metas[i].class_label for i in labeled])
        sub_not_self = ~np.eye(labeled.size, dtype=bool)
        sup_pos = (labels[:, None] == labels[None, :]) & sub_not_self
        valid = sup_pos.any(axis=1)
        if not valid.all():
            logger.warning('Skipping supervised term for %d labeled sample(s) without a same-class partner',
                           int((~valid).sum()))
        if valid.any():
            queries = labeled[valid]
            losses, grads = masked_contrastive(
                student_features[queries], teacher_features[labeled], tau_a,
                sup_pos[valid], sub_not_self[valid],
            )
            l_sup = float(losses.mean())
            grad_sup[queries] = grads / queries.size
    elif labeled.size == 1:
        logger.warning('Skipping supervised term: a single labeled sample in the batch')

    return SemiCLTerms(l_self=l_self, l_sup=l_sup, grad_self=grad_self, grad_sup=grad_sup)


def semicl(features, metas, alpha, tau, tau_a, keys=None):
    """(1 - alpha) * self term + alpha * supervised term; keys default to a stop-gradient copy."""
    keys = features.copy() if keys is None else keys
    terms = teacher_keyed_semicl(features, keys, metas, tau, tau_a)
    loss = (1 - alpha) * terms.l_self + alpha * terms.l_sup
    grad = (1 - alpha) * terms.grad_self + alpha * terms.grad_sup
    return loss, grad


@dataclass
class WarmupLoss:
    total: float
    cls: float
    prompt: float
    grad_cls: np.ndarray
    grad_prompt: np.ndarray


def warmup_objective(cls_features, prompt_features, metas, weights):
    """SemiCL on the class stream plus gamma times SemiCL on the prompt stream."""
    cls_loss, cls_grad = semicl(cls_features, metas, weights.alpha, weights.tau, weights.tau_a)
    prompt_loss, prompt_grad = semicl(prompt_features, metas, weights.alpha, weights.tau, weights.tau_a)
    return WarmupLoss(
        total=cls_loss + weights.gamma * prompt_loss,
        cls=cls_loss,
        prompt=prompt_loss,
        grad_cls=cls_grad,
        grad_prompt=weights.gamma * prompt_grad,
    )


def cal_sets(nodes, graph, query_index, partner, n_neg, rng):
    """Pseudo-positive and anchor index sets for one batch query.

    Returns (positives, anchors, short) where ``short`` says fewer than n_neg
    pseudo-negatives were available.
    """
    row = graph.adjacency[query_index]
    others = np.ones(len(nodes), dtype=bool)
    others[query_index] = False

    positive = row & others
    positive[partner] = True
    candidates = np.flatnonzero(~positive & others)
    take = min(n_neg, candidates.size)
    negatives = rng.choice(candidates, size=take, replace=False) if take else np.empty(0, dtype=np.int64)

    anchor = positive.copy()
    anchor[negatives] = True
    return positive, anchor, take < n_neg


def cal_loss(student_h, nodes, graph, query_index, tau_a, n_neg, rng):
    """CAL loss of one student embedding against the sub-graph's teacher nodes."""
    start, stop = nodes.batch_span
    if not start <= query_index < stop:
        raise LossError(f'query index {query_index} outside the batch span {nodes.batch_span}')
    partner = nodes.counterparts()[query_index - start]
    positive, anchor, short = cal_sets(nodes, graph, query_index, partner, n_neg, rng)
    if short:
        logger.warning('Only %d pseudo-negatives available (wanted %d)', int((anchor & ~positive).sum()), n_neg)
    losses, grads = masked_contrastive(student_h[None, :], nodes.embeddings, tau_a, positive[None], anchor[None])
    return float(losses[0]), grads[0]


def cal_batch(student_h, nodes, graph, tau_a, n_neg, rng):
    """Mean CAL loss over every batch query, queries in batch order."""
    start, stop = nodes.batch_span
    m = stop - start
    if student_h.shape[0] != m:
        raise LossError(f'{student_h.shape[0]} student rows for a batch span of {m}')
    partners = nodes.counterparts()

    positive = np.zeros((m, len(nodes)), dtype=bool)
    anchor = np.zeros((m, len(nodes)), dtype=bool)
    n_short = 0
    for q in range(m):
        positive[q], anchor[q], short = cal_sets(nodes, graph, start + q, partners[q], n_neg, rng)
        n_short += short
    if n_short:
        logger.warning('%d of %d queries had fewer than %d pseudo-negatives; using all available',
                       n_short, m, n_neg)

    losses, grads = masked_contrastive(student_h, nodes.embeddings, tau_a, positive, anchor)
    return float(losses.mean()), grads / m


@dataclass
class Stage2Stream:
    student_h: np.ndarray
    student_z: np.ndarray
    teacher_z: np.ndarray
    nodes: object
    graph: object
    metas: list


@dataclass
class Stage2Loss:
    total: float
    components: dict
    grad_h: dict
    grad_z: dict


def stage2_objective(streams, weights, n_neg, rng, use_semicl=True):
    """Per-stream (1-a) L_sup + a (b L_CAL + (1-b) L_self); total = cls + gamma * prompt.

    Without SemiCL the teacher-keyed terms are dropped, leaving a * b * L_CAL.
    """
    a, b = weights.alpha, weights.beta
    total = 0.0
    components, grad_h, grad_z = {}, {}, {}
    for name, stream in streams.items():
        scale = 1.0 if name == 'cls' else weights.gamma
        l_cal, g_cal = cal_batch(stream.student_h, stream.nodes, stream.graph, weights.tau_a, n_neg, rng)
        if use_semicl:
            terms = teacher_keyed_semicl(stream.student_z, stream.teacher_z, stream.metas,
                                         weights.tau, weights.tau_a)
            l_self, l_sup = terms.l_self, terms.l_sup
            g_z = (1 - a) * terms.grad_sup + a * (1 - b) * terms.grad_self
            stream_total = (1 - a) * l_sup + a * (b * l_cal + (1 - b) * l_self)
        else:
            l_self = l_sup = 0.0
            g_z = np.zeros_like(stream.student_z)
            stream_total = a * b * l_cal

        components[name] = {'cal': l_cal, 'self': l_self, 'sup': l_sup, 'total': stream_total}
        grad_h[name] = scale * a * b * g_cal
        grad_z[name] = scale * g_z
        total += scale * stream_total
    return Stage2Loss(total=total, components=components, grad_h=grad_h, grad_z=grad_z)
