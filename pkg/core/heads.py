"""Projection heads g(h) mapping embeddings to features."""
import numpy as np

from core.data import normalize_rows


class IdentityHead:
    def forward(self, embeddings):
        return embeddings

    def backward(self, grad_features, embeddings):
        return grad_features


class RandomLinearHead:
    """Fixed seeded linear map followed by re-normalization; no trainable weights."""

    def __init__(self, dim, seed, out_dim=None):
        rng = np.random.default_rng(seed)
        out_dim = out_dim or dim
        self.weight = rng.standard_normal((out_dim, dim)) / np.sqrt(dim)

    def forward(self, embeddings):
        return normalize_rows(embeddings @ self.weight.T)

    def backward(self, grad_features, embeddings):
        projected = embeddings @ self.weight.T
        norms = np.linalg.norm(projected, axis=1, keepdims=True)
        features = projected / norms
        radial = np.sum(grad_features * features, axis=1, keepdims=True)
        grad_projected = (grad_features - radial * features) / norms
        return grad_projected @ self.weight


def build_head(kind, dim, seed):
    if kind == 'identity':
        return IdentityHead()
    if kind == 'random':
        return RandomLinearHead(dim, seed)
    raise ValueError(f'unknown head {kind!r}')
