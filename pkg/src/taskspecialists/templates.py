"""Parameterized image templates behind the synthetic benchmark.

Each class is a template family (oriented bars, soft blobs, checkerboards)
plus a per-parameter value range. Parameters live in [0, 1] and are quantized
to three decimals when a sample is drawn, so a rendered image is an exact
function of the short parameter string that later becomes its caption.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

PARAM_DECIMALS = 3

# family -> number of parameters
FAMILY_ARITY = {"bars": 3, "blob": 3, "checker": 3}


def quantize(value: float) -> float:
    """Snap a parameter to the 3-decimal grid used by captions."""
    return float(f"{value:.{PARAM_DECIMALS}f}")


def _pixel_grid(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    v = (np.arange(height) + 0.5) / height
    u = (np.arange(width) + 0.5) / width
    return np.meshgrid(u, v)  # (U, V), each (height, width)


def _render_bars(height: int, width: int, params: tuple[float, ...]) -> np.ndarray:
    angle, freq, phase = params
    theta = angle * np.pi
    cycles = 1.0 + 3.0 * freq
    uu, vv = _pixel_grid(height, width)
    t = uu * np.cos(theta) + vv * np.sin(theta)
    return 0.5 + 0.5 * np.sin(2.0 * np.pi * (cycles * t + phase))


def _render_blob(height: int, width: int, params: tuple[float, ...]) -> np.ndarray:
    cx, cy, size = params
    sigma = 0.08 + 0.3 * size
    uu, vv = _pixel_grid(height, width)
    return np.exp(-((uu - cx) ** 2 + (vv - cy) ** 2) / (2.0 * sigma * sigma))


def _render_checker(height: int, width: int, params: tuple[float, ...]) -> np.ndarray:
    cell_param, px, py = params
    cell = 1 + int(cell_param * 3.999)  # 1..4 pixels
    xs = np.arange(width)
    ys = np.arange(height)
    col = np.floor((xs + px * cell) / cell).astype(int)
    row = np.floor((ys + py * cell) / cell).astype(int)
    return ((row[:, None] + col[None, :]) % 2).astype(np.float64)


_RENDERERS = {"bars": _render_bars, "blob": _render_blob, "checker": _render_checker}


@dataclass(frozen=True)
class ClassTemplate:
    """One class: a family name and an inclusive range per parameter."""

    family: str
    ranges: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if self.family not in FAMILY_ARITY:
            raise ConfigurationError(f"unknown template family {self.family!r}")
        if len(self.ranges) != FAMILY_ARITY[self.family]:
            raise ConfigurationError(
                f"family {self.family!r} takes {FAMILY_ARITY[self.family]} parameters, "
                f"got {len(self.ranges)} ranges"
            )
        for lo, hi in self.ranges:
            if not (0.0 <= lo <= hi <= 1.0):
                raise ConfigurationError(f"parameter range ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 1")

    def overlaps(self, other: "ClassTemplate") -> bool:
        """True when every parameter range intersects (classes indistinguishable)."""
        if self.family != other.family:
            return False
        return all(
            max(lo_a, lo_b) <= min(hi_a, hi_b)
            for (lo_a, hi_a), (lo_b, hi_b) in zip(self.ranges, other.ranges)
        )

    def sample_params(self, rng: np.random.Generator) -> tuple[float, ...]:
        return tuple(quantize(rng.uniform(lo, hi)) for lo, hi in self.ranges)


class TemplateRegistry:
    """Class id -> template, plus the shared image geometry."""

    def __init__(self, image_shape: tuple[int, int, int], templates: dict[int, ClassTemplate]):
        height, width, channels = image_shape
        if height < 1 or width < 1 or channels < 1:
            raise ConfigurationError(f"invalid image shape {image_shape}")
        if len(templates) < 2:
            raise ConfigurationError("a synthetic dataset needs at least 2 classes")
        ids = sorted(templates)
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                if templates[a].overlaps(templates[b]):
                    raise ConfigurationError(
                        f"classes {a} and {b} have overlapping {templates[a].family!r} "
                        "parameter ranges; classes must be distinguishable by construction"
                    )
        self.image_shape = (height, width, channels)
        self.templates = dict(templates)

    @property
    def feature_dim(self) -> int:
        h, w, c = self.image_shape
        return h * w * c

    @property
    def class_ids(self) -> list[int]:
        return sorted(self.templates)

    def render(self, class_id: int, params: tuple[float, ...]) -> np.ndarray:
        """Clean rendering as a flat [0, 1] feature vector (row-major, channels interleaved)."""
        if class_id not in self.templates:
            raise ConfigurationError(f"class {class_id} has no registered template")
        template = self.templates[class_id]
        if len(params) != len(template.ranges):
            raise ConfigurationError(
                f"class {class_id} expects {len(template.ranges)} parameters, got {len(params)}"
            )
        h, w, c = self.image_shape
        plane = _RENDERERS[template.family](h, w, params)
        image = np.repeat(plane[:, :, None], c, axis=2)
        return image.reshape(-1)


def default_templates() -> dict[int, ClassTemplate]:
    """Ten visually distinct classes: 4 bar orientations, 4 blob corners, 2 checker scales.

    Consecutive class pairs (the default 2-class tasks) mix families so latent
    clustering inside a task stays easy, and no two tasks share a pattern.
    """
    bars = lambda lo: ClassTemplate("bars", ((lo, lo + 0.06), (0.30, 0.36), (0.0, 0.2)))
    blob = lambda cx, cy: ClassTemplate("blob", ((cx, cx + 0.15), (cy, cy + 0.15), (0.15, 0.30)))
    checker = lambda lo: ClassTemplate("checker", ((lo, lo + 0.1), (0.0, 0.3), (0.0, 0.3)))
    return {
        0: bars(0.0),            # horizontal stripes
        1: blob(0.20, 0.20),     # top-left blob
        2: bars(0.50),           # vertical stripes
        3: blob(0.65, 0.65),     # bottom-right blob
        4: checker(0.20),        # fine checkerboard
        5: bars(0.25),           # diagonal stripes
        6: blob(0.20, 0.65),     # bottom-left blob
        7: checker(0.55),        # coarse checkerboard
        8: bars(0.75),           # anti-diagonal stripes
        9: blob(0.65, 0.20),     # top-right blob
    }


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a procedural dataset: geometry, class templates, counts, noise."""

    image_shape: tuple[int, int, int] = (24, 24, 1)
    templates: dict[int, ClassTemplate] | None = None
    samples_per_class: int = 100
    sample_noise: float = 0.02
    separation_margin: float = 1.0

    def registry(self) -> TemplateRegistry:
        templates = self.templates if self.templates is not None else default_templates()
        return TemplateRegistry(self.image_shape, templates)
