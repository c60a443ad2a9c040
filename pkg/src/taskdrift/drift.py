"""Two-sample drift decisions between task signatures.

The dissimilarity between two signatures is the unbiased MMD^2 estimate
(Gaussian RBF kernel) between their pooled neighbor sets. The decision
threshold is the (1 - significance) quantile of a seeded permutation null,
or a fixed override for deterministic pipelines. The signed score
``statistic - threshold`` is negative when the two signatures look like the
same distribution and positive under drift.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .domain import DriftVerdict, EngineError, TaskSignature


class DegenerateBandwidthError(EngineError):
    """Kernel bandwidth must be strictly positive."""


class TooFewNeighborsError(EngineError):
    """Each pooled neighbor set needs at least two vectors."""


@dataclass(frozen=True)
class DriftParams:
    """Configuration for one drift comparison.

    ``kernel_bandwidth=None`` selects the median heuristic: the median of
    all pairwise Euclidean distances over the pooled samples. A set
    ``fixed_threshold`` bypasses permutation calibration entirely.
    """

    kernel_bandwidth: Optional[float] = None
    permutations: int = 100
    significance: float = 0.05
    fixed_threshold: Optional[float] = None
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.kernel_bandwidth is not None and self.kernel_bandwidth <= 0:
            raise DegenerateBandwidthError(f"bandwidth must be > 0, got {self.kernel_bandwidth}")
        if self.permutations < 1:
            raise ValueError(f"permutations must be >= 1, got {self.permutations}")
        if not 0.0 < self.significance < 1.0:
            raise ValueError(f"significance must lie in (0, 1), got {self.significance}")


def _rbf(x: np.ndarray, y: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-cdist(x, y, "sqeuclidean") / (2.0 * bandwidth * bandwidth))


def mmd_statistic(a: np.ndarray, b: np.ndarray, bandwidth: float) -> float:
    """Unbiased MMD^2 estimate between samples ``a`` and ``b``.

    Mean of off-diagonal within-a kernel values, plus the same for ``b``,
    minus twice the mean cross kernel value. The U-statistic form may go
    negative for same-distribution samples.

    Raises:
        DegenerateBandwidthError: ``bandwidth <= 0``.
        TooFewNeighborsError: either sample has fewer than two rows.
    """
    if bandwidth <= 0:
        raise DegenerateBandwidthError(f"bandwidth must be > 0, got {bandwidth}")
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise TooFewNeighborsError(f"need >= 2 vectors per side, got {na} and {nb}")
    kaa = _rbf(a, a, bandwidth)
    kbb = _rbf(b, b, bandwidth)
    kab = _rbf(a, b, bandwidth)
    term_a = (kaa.sum() - np.trace(kaa)) / (na * (na - 1))
    term_b = (kbb.sum() - np.trace(kbb)) / (nb * (nb - 1))
    return float(term_a + term_b - 2.0 * kab.mean())


def median_bandwidth(pooled: np.ndarray) -> float:
    """Median pairwise Euclidean distance (i < j pairs) over ``pooled`` rows.

    A pool of duplicates has median distance zero; any positive bandwidth
    then yields a constant kernel and a zero statistic, so 1.0 is returned
    to keep the comparison well-defined.
    """
    med = float(np.median(pdist(pooled)))
    return med if med > 0 else 1.0


def _canonical_pool(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Row-lexicographic order makes the permutation null a function of the
    # pooled multiset only, so calibrate_threshold(a, b) == calibrate_threshold(b, a).
    pool = np.vstack([a, b])
    order = np.lexsort(pool.T[::-1])
    return pool[order]


def calibrate_threshold(a: np.ndarray, b: np.ndarray, params: DriftParams) -> float:
    """Null-quantile decision threshold for mmd_statistic(a, b).

    With ``fixed_threshold`` set, returns it unchanged. Otherwise pools the
    two samples, recomputes the statistic on ``params.permutations`` seeded
    shuffles split into the original sizes, and returns the
    (1 - significance) empirical quantile of those null statistics. Each
    shuffle draws from its own seeded substream ``[rng_seed, index]``, so
    the result does not depend on evaluation order.
    """
    if params.fixed_threshold is not None:
        return float(params.fixed_threshold)
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if len(a) < 2 or len(b) < 2:
        raise TooFewNeighborsError(f"need >= 2 vectors per side, got {len(a)} and {len(b)}")
    bandwidth = params.kernel_bandwidth
    if bandwidth is None:
        bandwidth = median_bandwidth(np.vstack([a, b]))
    if bandwidth <= 0:
        raise DegenerateBandwidthError(f"bandwidth must be > 0, got {bandwidth}")

    pool = _canonical_pool(a, b)
    n = len(pool)
    n1 = min(len(a), len(b))
    n2 = n - n1
    # One kernel evaluation over the pool; every permutation reduces to
    # block sums over shuffled indices.
    kernel = _rbf(pool, pool, bandwidth)
    row_sums = kernel.sum(axis=1)
    total = kernel.sum()
    stats = np.empty(params.permutations)
    for i in range(params.permutations):
        rng = np.random.default_rng([params.rng_seed, i])
        left = rng.permutation(n)[:n1]
        s_left = kernel[np.ix_(left, left)].sum()
        cross = row_sums[left].sum() - s_left
        s_right = total - s_left - 2.0 * cross
        term_l = (s_left - n1) / (n1 * (n1 - 1))
        term_r = (s_right - n2) / (n2 * (n2 - 1))
        stats[i] = term_l + term_r - 2.0 * cross / (n1 * n2)
    return float(np.quantile(stats, 1.0 - params.significance, method="higher"))


def drift_check(
    sig_a: TaskSignature, sig_b: TaskSignature, params: DriftParams
) -> DriftVerdict:
    """Decide whether two signatures come from different distributions.

    Compares the pooled neighbor sets of the two signatures; see the module
    docstring for the score convention. Deterministic given
    ``params.rng_seed``.

    Raises:
        TooFewNeighborsError: a signature pools fewer than two neighbors.
    """
    a = sig_a.pooled_neighbors()
    b = sig_b.pooled_neighbors()
    if len(a) < 2 or len(b) < 2:
        raise TooFewNeighborsError(
            f"pooled neighbor sets of sizes {len(a)} and {len(b)}; need >= 2 each"
        )
    if sig_a.dim != sig_b.dim:
        raise ValueError(f"signature dims differ: {sig_a.dim} vs {sig_b.dim}")
    bandwidth = params.kernel_bandwidth
    if bandwidth is None:
        bandwidth = median_bandwidth(np.vstack([a, b]))
    statistic = mmd_statistic(a, b, bandwidth)
    resolved = DriftParams(
        kernel_bandwidth=bandwidth,
        permutations=params.permutations,
        significance=params.significance,
        fixed_threshold=params.fixed_threshold,
        rng_seed=params.rng_seed,
    )
    threshold = calibrate_threshold(a, b, resolved)
    return DriftVerdict(statistic=statistic, threshold=threshold)
