"""Class-incremental task streams.

A labelled dataset is split into an ordered sequence of tasks with mutually
exclusive class sets. Training data is handed out one task at a time through
``TaskStream.training_pass``, which is the only sanctioned access path and
records an audit trail of open/release events.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, IngestionError, ProtocolError
from .templates import SyntheticSpec


@dataclass
class Sample:
    """One flattened image with its class label.

    ``template_params`` is generation provenance (set for procedural samples);
    the captioner oracle needs it to write an exact generative description.
    """

    features: np.ndarray
    label: int
    template_params: tuple[float, ...] | None = None


@dataclass
class TaskData:
    """Everything one task owns: class set, train/test samples, labelled init batch."""

    task_id: int
    class_set: tuple[int, ...]
    train_samples: list[Sample]
    test_samples: list[Sample]
    init_batch: list[Sample]


@dataclass
class TaskStream:
    """Ordered tasks, presented strictly sequentially."""

    tasks: tuple[TaskData, ...]
    access_log: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.tasks = tuple(self.tasks)
        for expected, task in enumerate(self.tasks, start=1):
            if task.task_id != expected:
                raise ConfigurationError(
                    f"task ids must be consecutive from 1; found {task.task_id} at position {expected}"
                )
        seen: set[int] = set()
        for task in self.tasks:
            overlap = seen.intersection(task.class_set)
            if overlap:
                raise ConfigurationError(f"class set of task {task.task_id} reuses classes {sorted(overlap)}")
            seen.update(task.class_set)

    def __len__(self) -> int:
        return len(self.tasks)

    def training_pass(self, log: list | None = None):
        """Yield tasks in order, releasing each before the next is exposed.

        The generator form is the sequential-access contract: task t+1 training
        data is not produced until the consumer finishes with task t. Events go
        to ``log`` when given, else to the stream's own ``access_log``.
        """
        sink = self.access_log if log is None else log
        for task in self.tasks:
            sink.append(("train_open", task.task_id))
            yield task
            sink.append(("train_release", task.task_id))

    def feature_dim(self) -> int:
        return int(self.tasks[0].train_samples[0].features.size)

    def all_classes(self) -> list[int]:
        out: list[int] = []
        for task in self.tasks:
            out.extend(task.class_set)
        return out


def split_class_incremental(
    dataset: list[Sample],
    classes_per_task: int,
    order: list[int] | None = None,
    *,
    test_fraction: float = 0.2,
    init_batch_size: int = 64,
    seed: int = 0,
) -> TaskStream:
    """Partition a dataset into tasks of ``classes_per_task`` consecutive classes.

    ``order`` fixes which classes group together (default: ascending label
    order). Each task gets a stratified train/test split and a class-balanced
    labelled init batch drawn from its training samples, all under ``seed``.
    """
    if order is None:
        order = sorted({s.label for s in dataset})
    if classes_per_task < 1 or len(order) % classes_per_task != 0:
        raise ConfigurationError(
            f"{len(order)} classes cannot be grouped into tasks of {classes_per_task}"
        )
    known = set(order)
    for sample in dataset:
        if sample.label not in known:
            raise ProtocolError(f"sample label {sample.label} is not in the class order")

    rng = np.random.default_rng(seed)
    by_class: dict[int, list[Sample]] = {c: [] for c in order}
    for sample in dataset:
        by_class[sample.label].append(sample)

    tasks = []
    for t in range(len(order) // classes_per_task):
        class_set = tuple(order[t * classes_per_task : (t + 1) * classes_per_task])
        train: list[Sample] = []
        test: list[Sample] = []
        train_by_class: dict[int, list[Sample]] = {}
        for c in class_set:
            pool = by_class[c]
            perm = rng.permutation(len(pool))
            n_test = int(round(len(pool) * test_fraction))
            test.extend(pool[i] for i in perm[:n_test])
            chosen = [pool[i] for i in perm[n_test:]]
            train.extend(chosen)
            train_by_class[c] = chosen
        init_batch = _balanced_batch(train_by_class, class_set, init_batch_size)
        tasks.append(TaskData(t + 1, class_set, train, test, init_batch))
    return TaskStream(tuple(tasks))


def _balanced_batch(
    train_by_class: dict[int, list[Sample]],
    class_set: tuple[int, ...],
    batch_size: int,
) -> list[Sample]:
    quota, extra = divmod(batch_size, len(class_set))
    batch: list[Sample] = []
    for i, c in enumerate(sorted(class_set)):
        want = quota + (1 if i < extra else 0)
        have = train_by_class[c]
        if len(have) < want:
            raise ConfigurationError(
                f"class {c} has {len(have)} training samples, "
                f"fewer than the {want} needed for the labelled init batch"
            )
        batch.extend(have[:want])
    return batch


def make_synthetic_dataset(spec: SyntheticSpec, seed: int) -> list[Sample]:
    """Draw ``samples_per_class`` procedural samples per class, deterministically."""
    registry = spec.registry()
    rng = np.random.default_rng(seed)
    samples: list[Sample] = []
    for class_id in registry.class_ids:
        template = registry.templates[class_id]
        for _ in range(spec.samples_per_class):
            params = template.sample_params(rng)
            clean = registry.render(class_id, params)
            noisy = clean + spec.sample_noise * rng.standard_normal(clean.size)
            samples.append(Sample(np.clip(noisy, 0.0, 1.0), class_id, params))
    return samples


def class_mean_separation(samples: list[Sample]) -> float:
    """Smallest L2 distance between any two class-mean feature vectors."""
    labels = sorted({s.label for s in samples})
    means = {
        c: np.mean([s.features for s in samples if s.label == c], axis=0) for c in labels
    }
    best = np.inf
    for i, a in enumerate(labels):
        for b in labels[i + 1 :]:
            best = min(best, float(np.linalg.norm(means[a] - means[b])))
    return best


def load_image_dataset(path: str | Path, manifest: str | Path) -> list[Sample]:
    """Load images listed in a ``relative/path,label-id`` manifest (no header).

    Pixels are scaled to [0, 1]; images are flattened row-major with channels
    interleaved per pixel. All images must decode to the same shape.
    """
    from PIL import Image, UnidentifiedImageError

    root = Path(path)
    samples: list[Sample] = []
    expected_shape: tuple[int, ...] | None = None
    for line_no, raw in enumerate(Path(manifest).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.rsplit(",", 1)
        if len(parts) != 2:
            raise IngestionError(f"{manifest}:{line_no}: expected 'relative/path,label-id'")
        rel, label_text = parts[0].strip(), parts[1].strip()
        try:
            label = int(label_text)
        except ValueError:
            raise IngestionError(f"{manifest}:{line_no}: unknown label {label_text!r} for {rel}") from None
        if label < 0:
            raise IngestionError(f"{manifest}:{line_no}: unknown label {label} for {rel}")
        file_path = root / rel
        if not file_path.exists():
            raise IngestionError(f"missing file {file_path}")
        try:
            with Image.open(file_path) as img:
                pixels = np.asarray(img, dtype=np.float64)
        except UnidentifiedImageError:
            raise IngestionError(f"cannot decode image {file_path}") from None
        if expected_shape is None:
            expected_shape = pixels.shape
        elif pixels.shape != expected_shape:
            raise IngestionError(
                f"size mismatch for {file_path}: {pixels.shape} != {expected_shape}"
            )
        samples.append(Sample(pixels.reshape(-1) / 255.0, label))
    return samples
