from dataclasses import dataclass, field, fields, asdict, replace
from typing import Optional

import numpy as np

# Every embedding table is a float64 (n, d) array with unit-norm rows.
EmbeddingTable = np.ndarray

STREAMS = ('cls', 'prompt')


@dataclass(frozen=True)
class SampleMeta:
    """Training-visible description of one sample (one item, or one view of it).

    ``class_label`` is only set for labeled samples; ground truth for the rest
    lives in ``DatasetSplit.targets``.
    """
    id: int
    class_label: Optional[int] = None
    is_labeled: bool = False
    is_known_class: bool = False
    view_group: int = 0

    def __post_init__(self):
        if self.is_labeled and (self.class_label is None or not self.is_known_class):
            raise ValueError(f"Sample {self.id}: labeled samples need a known class label")

    def to_dict(self):
        return {
            'id': self.id,
            'classLabel': self.class_label,
            'isLabeled': self.is_labeled,
            'isKnownClass': self.is_known_class,
            'viewGroup': self.view_group,
        }


@dataclass
class DatasetSplit:
    num_classes: int
    samples: list
    base_vectors: EmbeddingTable
    targets: np.ndarray
    known_classes: frozenset = frozenset()
    labeling_ratio: float = 0.0
    subset: Optional[np.ndarray] = None  # 'train' / 'test' tag per item

    def __post_init__(self):
        if self.subset is None:
            self.subset = np.array(['train'] * len(self.samples), dtype=object)

    def __len__(self):
        return len(self.samples)

    @property
    def labeled_mask(self):
        return np.array([s.is_labeled for s in self.samples], dtype=bool)

    @property
    def known_mask(self):
        return np.array([s.is_known_class for s in self.samples], dtype=bool)

    def indices(self, subset):
        return np.flatnonzero(self.subset == subset)

    def take(self, indices):
        """Sub-split over ``indices``; sample ids are kept."""
        indices = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            samples=[self.samples[i] for i in indices],
            base_vectors=self.base_vectors[indices],
            targets=self.targets[indices],
            subset=self.subset[indices],
        )

    def hide_labels(self, indices):
        """Copy in which the items at ``indices`` look unlabeled; targets are kept."""
        hidden = set(np.asarray(indices, dtype=np.int64).tolist())
        samples = [replace(s, class_label=None, is_labeled=False) if i in hidden else s
                   for i, s in enumerate(self.samples)]
        return replace(self, samples=samples)

    def to_dict(self):
        return {
            'numClasses': self.num_classes,
            'numSamples': len(self.samples),
            'dim': int(self.base_vectors.shape[1]),
            'knownClasses': sorted(int(c) for c in self.known_classes),
            'labelingRatio': self.labeling_ratio,
            'numLabeled': int(self.labeled_mask.sum()),
            'subsetCounts': {name: int((self.subset == name).sum()) for name in ('train', 'test')},
        }


@dataclass
class TrainConfig:
    """Resolved hyperparameters of one run (see config.py for the presets)."""
    alpha: float = 0.35
    beta: float = 0.6
    gamma: float = 0.35
    tau: float = 1.0
    tau_a: float = 0.07
    eta: int = 1
    k: Optional[int] = None  # None -> floor(memory_size / (4 * num_classes))
    quantile_level: float = 0.5
    memory_size: int = 4096
    n_neg: int = 1024
    batch_size: int = 128
    epochs_stage1: int = 200
    epochs_stage2: int = 70
    sgd_lr: float = 0.1
    sgd_momentum: float = 0.9
    weight_decay: float = 5e-5
    lr_schedule: str = 'cosine'
    ema_momentum: float = 0.999
    view_noise_sigma: float = 0.1
    prompt_init_sigma: float = 0.3
    anchor_reg_weight: float = 0.5
    anchor_reg_epochs: int = 5
    head: str = 'identity'
    validation_fraction: float = 0.1
    transfer_k: int = 5  # trained neighbours lending their displacement to held-out rows
    cknn: bool = True
    ap: bool = True
    semipriori: bool = True
    semicl: bool = True
    seed: int = 0

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    @property
    def knn_baseline(self):
        return not self.cknn and not self.ap

    def resolve_k(self, num_classes):
        if self.k is not None:
            return self.k
        return max(1, self.memory_size // (4 * num_classes))

    def anchor_weight(self, epoch):
        """Anchor regularizer weight for the zero-based stage-1 epoch index."""
        return max(0.0, self.anchor_reg_weight * (1.0 - epoch / self.anchor_reg_epochs))

    def to_dict(self):
        return asdict(self)


@dataclass
class ModelState:
    student_cls: EmbeddingTable
    student_prompt: EmbeddingTable
    teacher_cls: EmbeddingTable
    teacher_prompt: EmbeddingTable
    init_cls: EmbeddingTable
    momentum: dict = field(default_factory=dict)

    def student(self, stream):
        return self.student_cls if stream == 'cls' else self.student_prompt

    def teacher(self, stream):
        return self.teacher_cls if stream == 'cls' else self.teacher_prompt

    def copy(self):
        return ModelState(
            student_cls=self.student_cls.copy(),
            student_prompt=self.student_prompt.copy(),
            teacher_cls=self.teacher_cls.copy(),
            teacher_prompt=self.teacher_prompt.copy(),
            init_cls=self.init_cls.copy(),
            momentum={name: buf.copy() for name, buf in self.momentum.items()},
        )

    def tables(self):
        return {
            'student_cls': self.student_cls,
            'student_prompt': self.student_prompt,
            'teacher_cls': self.teacher_cls,
            'teacher_prompt': self.teacher_prompt,
        }


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    centroids: np.ndarray
    n_iter: int = 0
    objective_history: list = field(default_factory=list)

    @property
    def num_clusters(self):
        return self.centroids.shape[0]


@dataclass
class AccuracyReport:
    acc_all: float
    acc_known: Optional[float]
    acc_new: Optional[float]
    mapping: dict
    confusion: np.ndarray
    known_star: Optional[float] = None
    new_star: Optional[float] = None
    nmi: Optional[float] = None
    ari: Optional[float] = None

    def to_dict(self):
        result = {
            'accAll': self.acc_all,
            'accKnown': self.acc_known,
            'accNew': self.acc_new,
            'mapping': {str(k): int(v) for k, v in sorted(self.mapping.items())},
        }
        if self.nmi is not None:
            result['nmi'] = self.nmi
            result['ari'] = self.ari
        if self.known_star is not None or self.new_star is not None:
            result['knownStar'] = self.known_star
            result['newStar'] = self.new_star
        return result


@dataclass
class RunManifest:
    command: str
    config: dict
    dataset_hash: Optional[str]
    version: str
    layout: dict

    def to_dict(self):
        return {
            'command': self.command,
            'config': self.config,
            'datasetHash': self.dataset_hash,
            'version': self.version,
            'layout': self.layout,
        }
