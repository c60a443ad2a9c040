"""Cluster centroids and their nearest member embeddings.

Turns one batch into a :class:`~taskdrift.domain.TaskSignature`: the
arithmetic-mean centroid of every cluster plus the k cluster members closest
to it by Manhattan distance. Manhattan distance ranks neighbors only;
centroids are plain means.
"""

from __future__ import annotations

import numpy as np

from .clustering import ClusterParams, cluster_embeddings
from .domain import ClusterAssignment, EmbeddingBatch, EngineError, TaskSignature

DEFAULT_NEIGHBORS = 10


class NoClustersError(EngineError):
    """Clustering produced zero clusters; callers must apply the whole-batch fallback."""


def compute_centroids(batch: EmbeddingBatch, assignment: ClusterAssignment) -> np.ndarray:
    """Component-wise mean of each cluster's members, ordered by cluster label.

    Noise rows (label -1) contribute to no centroid.

    Raises:
        NoClustersError: the assignment contains no clusters.
    """
    if assignment.num_clusters == 0:
        raise NoClustersError("assignment has zero clusters")
    cents = np.empty((assignment.num_clusters, batch.dim), dtype=np.float64)
    for label in range(assignment.num_clusters):
        cents[label] = batch.vectors[assignment.labels == label].mean(axis=0)
    return cents


def nearest_neighbors(members: np.ndarray, centroid: np.ndarray, k: int) -> np.ndarray:
    """The min(k, len(members)) rows closest to ``centroid`` by L1 distance.

    Returned ascending by distance; exact ties keep ascending row order
    (stable sort).
    """
    if len(members) < 1:
        raise ValueError("members must be nonempty")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    dists = np.abs(members - centroid).sum(axis=1)
    order = np.argsort(dists, kind="stable")[: min(k, len(members))]
    return members[order]


def build_signature(
    batch: EmbeddingBatch,
    params: ClusterParams,
    k: int = DEFAULT_NEIGHBORS,
    task_id: int = 0,
) -> TaskSignature:
    """Cluster the batch and assemble its signature.

    If clustering marks everything as noise, the whole batch is treated as a
    single cluster (centroid = batch mean) so that every arriving batch
    yields a signature and the online loop never stalls.
    """
    assignment = cluster_embeddings(batch, params)
    if assignment.num_clusters == 0:
        centroids = batch.vectors.mean(axis=0, keepdims=True)
        member_groups = [batch.vectors]
    else:
        centroids = compute_centroids(batch, assignment)
        member_groups = [
            batch.vectors[assignment.labels == label]
            for label in range(assignment.num_clusters)
        ]
    neighbor_sets = tuple(
        nearest_neighbors(members, centroid, k)
        for members, centroid in zip(member_groups, centroids)
    )
    return TaskSignature(
        task_id=task_id,
        centroids=centroids,
        neighbor_sets=neighbor_sets,
        k=k,
        created_at=batch.batch_id,
    )
