"""K-Means over latent codes and the cluster-to-class lookup table.

Lloyd iterations start from k-means++ seeding and stop at an assignment
fixpoint. The within-cluster sum of squares (WCSS) after each assignment step
is recorded; it never increases. The lookup table maps each cluster to the
majority class of the labelled init batch, which is what turns unsupervised
clusters into a classifier.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ClusteringError, InitializationError

log = logging.getLogger(__name__)

MAX_LLOYD_ITERATIONS = 300
MIN_CLUSTERS, MAX_CLUSTERS = 2, 20


@dataclass(frozen=True)
class Centroids:
    """Fitted cluster centers (K, d) plus fit diagnostics."""

    vectors: np.ndarray
    wcss: float = float("nan")
    wcss_trace: tuple[float, ...] = ()
    iterations: int = 0
    reseeds: int = 0

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=np.float64)
        object.__setattr__(self, "vectors", vectors)
        k = vectors.shape[0]
        if vectors.ndim != 2:
            raise ClusteringError("centroid vectors must form a (K, d) matrix")
        if not MIN_CLUSTERS <= k <= MAX_CLUSTERS:
            raise ClusteringError(f"K={k} outside the supported range [{MIN_CLUSTERS}, {MAX_CLUSTERS}]")
        if not np.isfinite(vectors).all():
            raise ClusteringError("centroids contain non-finite values")
        if len({tuple(v) for v in vectors.tolist()}) != k:
            raise ClusteringError("centroid vectors must be pairwise distinct")

    @property
    def k(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        total = d2.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _lloyd(
    points: np.ndarray, centers: np.ndarray, max_iter: int, rng: np.random.Generator
) -> tuple[np.ndarray, float, list[float], int, int]:
    labels = np.full(points.shape[0], -1)
    trace: list[float] = []
    reseeds = 0
    iteration = 0
    for iteration in range(1, max_iter + 1):
        d2 = _squared_distances(points, centers)
        new_labels = d2.argmin(axis=1)
        trace.append(float(d2[np.arange(points.shape[0]), new_labels].sum()))
        reseeded = False
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        dist_to_own = d2[np.arange(points.shape[0]), labels].copy()
        for cluster in range(centers.shape[0]):
            members = points[labels == cluster]
            if len(members) > 0:
                centers[cluster] = members.mean(axis=0)
            else:
                # Re-seed an empty cluster at the point farthest from its centroid.
                farthest = int(dist_to_own.argmax())
                centers[cluster] = points[farthest]
                labels[farthest] = cluster
                dist_to_own[farthest] = -np.inf  # a point can seed at most one cluster
                reseeds += 1
                reseeded = True
                log.info("re-seeded empty cluster %d at point %d", cluster, farthest)
        if reseeded:
            labels = np.full(points.shape[0], -1)  # force another assignment round
    return centers, trace[-1], trace, iteration, reseeds


def kmeans_fit(
    latents: np.ndarray,
    k: int,
    seed=0,
    restarts: int = 10,
    max_iter: int = MAX_LLOYD_ITERATIONS,
) -> Centroids:
    """Best-of-``restarts`` k-means++ Lloyd fit (lowest final WCSS wins)."""
    points = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    if points.shape[0] < k:
        raise ClusteringError(f"cannot fit {k} clusters to {points.shape[0]} points")
    rng = np.random.default_rng(seed)
    best: Centroids | None = None
    for _ in range(max(1, restarts)):
        centers = _kmeans_pp_init(points, k, rng)
        centers, wcss, trace, iters, reseeds = _lloyd(points, centers, max_iter, rng)
        if best is None or wcss < best.wcss:
            best = Centroids(centers, wcss, tuple(trace), iters, reseeds)
    return best


def assign(centroids: Centroids, z: np.ndarray) -> int:
    """Nearest centroid by squared Euclidean distance; ties go to the lowest id."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (centroids.dim,):
        raise ClusteringError(f"expected latent of shape ({centroids.dim},), got {z.shape}")
    return int(((centroids.vectors - z) ** 2).sum(axis=1).argmin())


def assign_batch(centroids: Centroids, latents: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    return _squared_distances(points, centroids.vectors).argmin(axis=1)


def clustering_loss(centroids: Centroids, latents: np.ndarray) -> float:
    """Mean squared distance of each latent to its assigned centroid (WCSS / n).

    Accumulated sequentially so the value is bit-reproducible against a plain
    double-loop computation.
    """
    points = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    if points.shape[0] == 0:
        raise ClusteringError("clustering loss needs at least one latent")
    mins = _squared_distances(points, centroids.vectors).min(axis=1)
    total = 0.0
    for value in mins.tolist():
        total += value
    return total / points.shape[0]


@dataclass(frozen=True)
class LookupTable:
    """Total map from cluster id in [0, K) to a class id of the owning task."""

    mapping: dict[int, int] = field(default_factory=dict)

    def __getitem__(self, cluster_id: int) -> int:
        return self.mapping[cluster_id]

    @property
    def k(self) -> int:
        return len(self.mapping)


def build_lookup(
    centroids: Centroids,
    labelled_latents: list[tuple[np.ndarray, int]],
    class_set: tuple[int, ...],
) -> LookupTable:
    """Majority-vote cluster-to-class map from one labelled batch.

    Empty clusters fall back to the batch's most frequent class; all ties break
    toward the lowest class id.
    """
    if not labelled_latents:
        raise InitializationError("labelled batch is empty")
    labels = [label for _, label in labelled_latents]
    missing = set(class_set) - set(labels)
    if missing:
        raise InitializationError(f"labelled batch is missing task classes {sorted(missing)}")
    foreign = set(labels) - set(class_set)
    if foreign:
        raise InitializationError(f"labelled batch contains foreign classes {sorted(foreign)}")

    votes: dict[int, Counter] = {c: Counter() for c in range(centroids.k)}
    for z, label in labelled_latents:
        votes[assign(centroids, z)][label] += 1

    overall = Counter(labels)
    fallback = min(c for c, n in overall.items() if n == max(overall.values()))
    mapping: dict[int, int] = {}
    for cluster in range(centroids.k):
        counts = votes[cluster]
        if counts:
            top = max(counts.values())
            mapping[cluster] = min(c for c, n in counts.items() if n == top)
        else:
            mapping[cluster] = fallback
    return LookupTable(mapping)


def centroids_to_dict(centroids: Centroids) -> dict:
    return {"vectors": centroids.vectors.tolist(), "wcss": centroids.wcss}


def centroids_from_dict(d: dict) -> Centroids:
    return Centroids(np.array(d["vectors"], dtype=np.float64), float(d["wcss"]))


def lookup_to_dict(lookup: LookupTable) -> dict:
    return {"map": {str(k): v for k, v in sorted(lookup.mapping.items())}}


def lookup_from_dict(d: dict) -> LookupTable:
    return LookupTable({int(k): int(v) for k, v in d["map"].items()})
