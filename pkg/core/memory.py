"""FIFO teacher-embedding memory and sub-graph node assembly."""
from dataclasses import dataclass

import numpy as np

from core.errors import MemoryBankError

NORM_TOLERANCE = 1e-6


class MemoryBank:
    """Fixed-capacity ring of (teacher embedding, SampleMeta) entries, oldest evicted first."""

    def __init__(self, capacity, stream_tag='cls'):
        if capacity < 1:
            raise MemoryBankError(f'capacity must be >= 1, got {capacity}')
        self.capacity = capacity
        self.stream_tag = stream_tag
        self._embeddings = None
        self._metas = [None] * capacity
        self._head = 0  # next write position
        self._size = 0

    def __len__(self):
        return self._size

    @property
    def dim(self):
        return None if self._embeddings is None else self._embeddings.shape[1]

    def enqueue(self, embeddings, metas):
        embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
        if len(metas) != embeddings.shape[0]:
            raise MemoryBankError(f'{len(metas)} metas for {embeddings.shape[0]} embeddings')
        if self._embeddings is None:
            self._embeddings = np.zeros((self.capacity, embeddings.shape[1]))
        elif embeddings.shape[1] != self.dim:
            raise MemoryBankError(f'dimension {embeddings.shape[1]} does not match bank dimension {self.dim}')
        norms = np.linalg.norm(embeddings, axis=1)
        off = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOLERANCE)
        if off.size:
            raise MemoryBankError(f'row {off[0]} has norm {norms[off[0]]:.8f}; the bank holds unit vectors only')

        for row, meta in zip(embeddings, metas):
            self._embeddings[self._head] = row
            self._metas[self._head] = meta
            self._head = (self._head + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)
        return self

    def _order(self):
        start = (self._head - self._size) % self.capacity
        return (start + np.arange(self._size)) % self.capacity

    def contents(self):
        """Copies of the entries, oldest to newest."""
        if self._size == 0:
            return np.zeros((0, self.dim or 0)), []
        order = self._order()
        return self._embeddings[order].copy(), [self._metas[i] for i in order]


@dataclass
class SubGraphNodes:
    embeddings: np.ndarray
    metas: list
    batch_span: tuple

    def __len__(self):
        return self.embeddings.shape[0]

    def counterparts(self):
        """Index of the other view of every batch node (same view_group)."""
        start, stop = self.batch_span
        by_group = {}
        for idx in range(start, stop):
            by_group.setdefault(self.metas[idx].view_group, []).append(idx)
        partner = np.empty(stop - start, dtype=np.int64)
        for group, members in by_group.items():
            if len(members) != 2:
                raise MemoryBankError(f'view group {group} has {len(members)} views in the batch, expected 2')
            partner[members[0] - start], partner[members[1] - start] = members[1], members[0]
        return partner


def subgraph_nodes(bank, batch_teacher, batch_metas):
    """Batch teacher embeddings first, then the memory from oldest to newest."""
    batch_teacher = np.asarray(batch_teacher, dtype=np.float64)
    if len(bank) == 0 and batch_teacher.shape[0] == 0:
        raise MemoryBankError('cannot build a sub-graph from an empty bank and an empty batch')
    memory, memory_metas = bank.contents()
    if len(bank):
        embeddings = np.vstack([batch_teacher, memory])
    else:
        embeddings = batch_teacher.copy()
    return SubGraphNodes(
        embeddings=embeddings,
        metas=list(batch_metas) + memory_metas,
        batch_span=(0, batch_teacher.shape[0]),
    )
