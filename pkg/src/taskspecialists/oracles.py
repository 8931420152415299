"""Captioner and generator oracles plus the caption buffer.

The captioner turns a sample into a short generative description; the
generator renders a sample back from such a description. Both are interfaces:
the procedural implementations here invert the class templates exactly, and a
service-backed captioner/generator can be slotted in through the same
protocols. The caption buffer is the only state that survives a task boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import CaptioningError, ConfigurationError, GenerationError, ProtocolError
from .stream import Sample
from .templates import PARAM_DECIMALS, TemplateRegistry

CAPTION_MAX_BYTES = 256
TASK_ID_BYTES = 4  # accounting size of one stored task id


@dataclass(frozen=True)
class Caption:
    """A short UTF-8 generative description of one sample."""

    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise CaptioningError("caption must be non-empty")
        if len(self.text.encode("utf-8")) > CAPTION_MAX_BYTES:
            raise CaptioningError(f"caption exceeds {CAPTION_MAX_BYTES} bytes")

    def byte_length(self) -> int:
        return len(self.text.encode("utf-8"))


class CaptionerOracle(Protocol):
    def caption(self, sample: Sample) -> Caption: ...


class GeneratorOracle(Protocol):
    def generate(self, caption: Caption, noise_seed, noise_scale: float) -> np.ndarray: ...


def format_caption(class_id: int, params: tuple[float, ...]) -> Caption:
    body = ",".join(f"{p:.{PARAM_DECIMALS}f}" for p in params)
    return Caption(f"class={class_id};params={body}")


def parse_caption(caption: Caption) -> tuple[int, tuple[float, ...]]:
    """Recover (class id, parameters) from a caption; raises on anything malformed."""
    text = caption.text
    try:
        class_part, param_part = text.split(";")
        key_c, value_c = class_part.split("=")
        key_p, value_p = param_part.split("=")
        if key_c != "class" or key_p != "params":
            raise ValueError
        class_id = int(value_c)
        params = tuple(float(p) for p in value_p.split(","))
    except ValueError:
        raise GenerationError(f"unparseable caption {text!r}") from None
    return class_id, params


def procedural_caption(sample: Sample, registry: TemplateRegistry) -> Caption:
    """Serialize a sample's generation provenance as its caption.

    Exact parameters cannot be recovered from noisy pixels, so the procedural
    captioner requires provenance; a sample lacking it is not attributable to
    any template.
    """
    if sample.template_params is None:
        raise CaptioningError("sample carries no template provenance")
    if sample.label not in registry.templates:
        raise CaptioningError(f"no template registered for class {sample.label}")
    expected = len(registry.templates[sample.label].ranges)
    if len(sample.template_params) != expected:
        raise CaptioningError(
            f"class {sample.label} takes {expected} parameters, "
            f"sample records {len(sample.template_params)}"
        )
    return format_caption(sample.label, sample.template_params)


def procedural_generate(
    caption: Caption,
    noise_seed,
    noise_scale: float,
    registry: TemplateRegistry,
) -> np.ndarray:
    """Render the captioned template and add clipped i.i.d. Gaussian noise."""
    if noise_scale < 0:
        raise ConfigurationError(f"noise scale must be >= 0, got {noise_scale}")
    class_id, params = parse_caption(caption)
    if class_id not in registry.templates:
        raise GenerationError(f"caption names unknown class: {caption.text!r}")
    if len(params) != len(registry.templates[class_id].ranges):
        raise GenerationError(f"caption has wrong parameter count: {caption.text!r}")
    clean = registry.render(class_id, params)
    if noise_scale == 0.0:
        return clean
    rng = np.random.default_rng(noise_seed)
    return np.clip(clean + noise_scale * rng.standard_normal(clean.size), 0.0, 1.0)


class ProceduralCaptioner:
    """CaptionerOracle backed by template provenance."""

    def __init__(self, registry: TemplateRegistry):
        self.registry = registry

    def caption(self, sample: Sample) -> Caption:
        return procedural_caption(sample, self.registry)


class ProceduralGenerator:
    """GeneratorOracle that re-renders captions through the template registry."""

    def __init__(self, registry: TemplateRegistry):
        self.registry = registry

    def generate(self, caption: Caption, noise_seed, noise_scale: float) -> np.ndarray:
        return procedural_generate(caption, noise_seed, noise_scale, self.registry)

    def generate_sample(self, caption: Caption, noise_seed, noise_scale: float) -> Sample:
        """Like generate, but wrapped as a Sample carrying fresh provenance."""
        class_id, params = parse_caption(caption)
        features = self.generate(caption, noise_seed, noise_scale)
        return Sample(features, class_id, params)


@dataclass(frozen=True)
class CaptionRecord:
    task_id: int
    caption: Caption


class CaptionBuffer:
    """Append-only store of (task id, caption) records, one batch per task."""

    def __init__(self, batch_size: int):
        if batch_size < 1:
            raise ConfigurationError(f"caption batch size must be >= 1, got {batch_size}")
        self.batch_size = batch_size
        self._records: list[CaptionRecord] = []

    @property
    def records(self) -> tuple[CaptionRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def max_task_id(self) -> int:
        return self._records[-1].task_id if self._records else 0

    def task_ids(self) -> list[int]:
        return sorted({r.task_id for r in self._records})


def append_task_captions(
    buffer: CaptionBuffer,
    task_id: int,
    captioner: CaptionerOracle,
    batch: list[Sample],
) -> CaptionBuffer:
    """Caption one batch for the next task id and append the records in order."""
    expected = buffer.max_task_id() + 1
    if task_id != expected:
        raise ProtocolError(f"captions for task {task_id} appended out of order (expected {expected})")
    if len(batch) != buffer.batch_size:
        raise ProtocolError(
            f"caption batch for task {task_id} has {len(batch)} samples, "
            f"configured batch size is {buffer.batch_size}"
        )
    records = [CaptionRecord(task_id, captioner.caption(sample)) for sample in batch]
    buffer._records.extend(records)
    return buffer


def buffer_memory_bytes(buffer: CaptionBuffer) -> int:
    """UTF-8 bytes of every caption plus one 4-byte task id per record."""
    return sum(record.caption.byte_length() + TASK_ID_BYTES for record in buffer.records)


def exemplar_memory_bytes(
    n_exemplars: int, sample_dims: tuple[int, ...], bytes_per_value: int = 1
) -> int:
    """Storage an exemplar-replay buffer of the same record count would need."""
    if n_exemplars < 1 or bytes_per_value < 1 or any(d < 1 for d in sample_dims):
        raise ConfigurationError("exemplar accounting needs positive counts and dimensions")
    return n_exemplars * int(np.prod(sample_dims)) * bytes_per_value


def save_caption_buffer(buffer: CaptionBuffer, path: str | Path) -> None:
    """One JSON object per line, in insertion order."""
    with Path(path).open("w", encoding="utf-8") as f:
        for record in buffer.records:
            f.write(json.dumps({"task": record.task_id, "caption": record.caption.text}) + "\n")


def load_caption_buffer(path: str | Path, batch_size: int) -> CaptionBuffer:
    buffer = CaptionBuffer(batch_size)
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                obj = json.loads(line)
                buffer._records.append(CaptionRecord(int(obj["task"]), Caption(obj["caption"])))
    return buffer
