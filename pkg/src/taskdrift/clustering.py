"""Density-based clustering of a batch by cosine distance.

Runs DBSCAN over the exact pairwise cosine-distance matrix. Batches are a
couple hundred rows, so the O(m^2 * dim) matrix is computed directly; a
spatial index would buy nothing in 512 dimensions and adds failure modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import ClusterAssignment, EmbeddingBatch


@dataclass(frozen=True)
class ClusterParams:
    """DBSCAN parameters over cosine distance d(u, v) = 1 - u.v."""

    eps: float = 0.3
    min_pts: int = 10

    def __post_init__(self) -> None:
        if not 0.0 < self.eps <= 2.0:
            raise ValueError(f"eps must lie in (0, 2], got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")


def cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    """Pairwise 1 - u.v for unit-norm rows; values in [0, 2] up to rounding."""
    return 1.0 - vectors @ vectors.T


def cluster_embeddings(batch: EmbeddingBatch, params: ClusterParams) -> ClusterAssignment:
    """DBSCAN over cosine distance with deterministic tie-breaking.

    Semantics:
      * a point is core iff at least ``min_pts`` points (itself included)
        lie within ``eps``;
      * clusters are maximal density-connected sets of core points plus the
        border points they reach;
      * border points reachable from several clusters join the cluster that
        claims them first, clusters being grown one at a time in ascending
        order of their first core row;
      * everything else is noise (label -1);
      * final labels are renumbered 0..num_clusters-1 by order of first
        appearance in row order.
    """
    m = batch.size
    dist = cosine_distance_matrix(batch.vectors)
    within = dist <= params.eps
    core = within.sum(axis=1) >= params.min_pts

    labels = np.full(m, -1, dtype=np.int64)
    cluster_id = 0
    for seed in range(m):
        if not core[seed] or labels[seed] != -1:
            continue
        labels[seed] = cluster_id
        stack = [seed]
        while stack:
            p = stack.pop()
            for q in np.flatnonzero(within[p]):
                if labels[q] == -1:
                    labels[q] = cluster_id
                    if core[q]:
                        stack.append(int(q))
        cluster_id += 1

    return ClusterAssignment(labels=_renumber(labels), num_clusters=cluster_id)


def _renumber(labels: np.ndarray) -> np.ndarray:
    """Relabel clusters 0..K-1 by first appearance in row order; noise stays -1."""
    out = np.full_like(labels, -1)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels.tolist()):
        if lab < 0:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out
