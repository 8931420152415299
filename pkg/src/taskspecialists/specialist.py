"""One frozen specialist per task: VAE + latent K-Means + lookup table.

Training runs the stage-1 recipe (fit VAE, cluster latent means, build the
lookup from the labelled init batch, caption one batch into the buffer) and
then freezes every parameter array, which is what makes earlier tasks immune
to later ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import (
    Centroids,
    LookupTable,
    assign,
    build_lookup,
    centroids_from_dict,
    centroids_to_dict,
    clustering_loss,
    kmeans_fit,
    lookup_from_dict,
    lookup_to_dict,
)
from .errors import TaskSpecialistsError
from .oracles import CaptionBuffer, CaptionerOracle, append_task_captions
from .stream import TaskData
from .vae import (
    VaeParams,
    VaeTrainConfig,
    create_vae,
    encode_means,
    train_vae,
    vae_from_dict,
    vae_loss,
    vae_to_dict,
)


@dataclass(frozen=True)
class TrainingReport:
    """Final stage-1 losses; total is their sum."""

    vae_loss: float
    clustering_loss: float
    total: float


@dataclass(frozen=True)
class SpecialistConfig:
    latent_dim: int = 8
    hidden: tuple[int, ...] = (128, 64)
    clusters: int | None = None  # None -> one cluster per task class
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta: float = 1.0
    kmeans_restarts: int = 10
    seed: int = 0


@dataclass(frozen=True)
class TaskSpecialist:
    """Immutable bundle owning one task's classes."""

    task_id: int
    class_set: tuple[int, ...]
    vae: VaeParams
    centroids: Centroids
    lookup: LookupTable
    report: TrainingReport


def _stage(name: str, task_id: int, fn):
    try:
        return fn()
    except TaskSpecialistsError as err:
        raise type(err)(f"task {task_id}, stage {name!r}: {err}") from err


def train_specialist(
    task: TaskData,
    config: SpecialistConfig,
    captioner: CaptionerOracle,
    buffer: CaptionBuffer,
) -> tuple[TaskSpecialist, CaptionBuffer]:
    """Run stage 1 for one task and append its caption batch to the buffer."""
    features = np.array([s.features for s in task.train_samples])

    def fit_vae() -> VaeParams:
        vae = create_vae(features.shape[1], config.latent_dim, config.hidden, seed=(config.seed, 0, task.task_id))
        train_cfg = VaeTrainConfig(
            epochs=config.epochs,
            batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            beta=config.beta,
            seed=(config.seed, 1, task.task_id),
        )
        vae, _ = train_vae(vae, features, train_cfg)
        return vae

    vae = _stage("vae", task.task_id, fit_vae)
    latents = encode_means(vae, features)
    k = config.clusters if config.clusters is not None else len(task.class_set)
    centroids = _stage(
        "cluster",
        task.task_id,
        lambda: kmeans_fit(latents, k, seed=(config.seed, 2, task.task_id), restarts=config.kmeans_restarts),
    )

    def make_lookup() -> LookupTable:
        batch_latents = encode_means(vae, np.array([s.features for s in task.init_batch]))
        labelled = list(zip(batch_latents, (s.label for s in task.init_batch)))
        return build_lookup(centroids, labelled, task.class_set)

    lookup = _stage("lookup", task.task_id, make_lookup)
    _stage(
        "captions",
        task.task_id,
        lambda: append_task_captions(buffer, task.task_id, captioner, task.init_batch),
    )

    final_vae, _, _ = vae_loss(vae, features, noise=None, beta=config.beta)
    final_clust = clustering_loss(centroids, latents)
    report = TrainingReport(final_vae, final_clust, final_vae + final_clust)

    vae.freeze()
    centroids.vectors.flags.writeable = False
    specialist = TaskSpecialist(task.task_id, tuple(task.class_set), vae, centroids, lookup, report)
    return specialist, buffer


def classify(specialist: TaskSpecialist, x: np.ndarray) -> int:
    """lookup[nearest-centroid(encoder-mean(x))]; always lands in the task's class set."""
    z = encode_means(specialist.vae, np.asarray(x, dtype=np.float64)[None, :])[0]
    return specialist.lookup[assign(specialist.centroids, z)]


def classify_batch(specialist: TaskSpecialist, features: np.ndarray) -> np.ndarray:
    latents = encode_means(specialist.vae, np.atleast_2d(np.asarray(features, dtype=np.float64)))
    d2 = ((latents[:, None, :] - specialist.centroids.vectors[None, :, :]) ** 2).sum(axis=2)
    clusters = d2.argmin(axis=1)
    return np.array([specialist.lookup[int(c)] for c in clusters])


def save_specialist(specialist: TaskSpecialist, directory: str | Path) -> None:
    """Write the vae/centroids/lookup/report JSON artifacts for one task."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "vae.json").write_text(json.dumps(vae_to_dict(specialist.vae)), encoding="utf-8")
    (directory / "centroids.json").write_text(
        json.dumps(centroids_to_dict(specialist.centroids)), encoding="utf-8"
    )
    (directory / "lookup.json").write_text(json.dumps(lookup_to_dict(specialist.lookup)), encoding="utf-8")
    report = {
        "task_id": specialist.task_id,
        "class_set": list(specialist.class_set),
        "vae_loss": specialist.report.vae_loss,
        "clustering_loss": specialist.report.clustering_loss,
        "total": specialist.report.total,
    }
    (directory / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")


def load_specialist(directory: str | Path) -> TaskSpecialist:
    directory = Path(directory)
    vae = vae_from_dict(json.loads((directory / "vae.json").read_text(encoding="utf-8")))
    centroids = centroids_from_dict(json.loads((directory / "centroids.json").read_text(encoding="utf-8")))
    lookup = lookup_from_dict(json.loads((directory / "lookup.json").read_text(encoding="utf-8")))
    report_d = json.loads((directory / "report.json").read_text(encoding="utf-8"))
    report = TrainingReport(report_d["vae_loss"], report_d["clustering_loss"], report_d["total"])
    vae.freeze()
    centroids.vectors.flags.writeable = False
    return TaskSpecialist(
        int(report_d["task_id"]), tuple(report_d["class_set"]), vae, centroids, lookup, report
    )
