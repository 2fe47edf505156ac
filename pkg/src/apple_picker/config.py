"""Picker configuration, presets and config-file loading."""
from __future__ import annotations

import configparser
import logging
import math
import sys
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

__all__ = ["Config", "PRESETS", "load_preset", "load_config_file"]

PRESETS = ("betagal", "t20s", "ribosome70s", "klh")


@dataclass(frozen=True)
class Config:
    """All picker settings.

    Sizes named ``*_size``, ``*_diameter``, ``border_crop`` and
    ``min_center_distance`` are in original (unbinned) pixels; ``query_size``,
    ``container_size``, ``min_pixels``/``max_pixels`` and ``erosion_radius``
    refer to the binned micrograph.
    """

    particle_size: int | None = None
    query_size: int | None = None
    container_size: int = 225
    tau1: float = 5.0
    tau2: float = 75.0
    bin_factor: int = 2
    border_crop: int = 100
    threshold_divisor: float = 20.0
    svm_bandwidth: float = 1.0
    svm_slack: float = 1.0
    min_pixels: float | None = None
    max_pixels: float | None = None
    min_diameter: float | None = None
    max_diameter: float | None = None
    erosion_radius: float | None = None
    min_center_distance: float | None = None
    min_noise_windows: int = 50
    out_format: str = "box"
    threads: int = 1
    ctf_sidecar: str | None = None
    overlay: bool = False
    save_scores: bool = False

    @classmethod
    def from_mapping(cls, values: dict) -> "Config":
        return cls().updated(values)

    def updated(self, values: dict) -> "Config":
        known = {f.name for f in fields(self)}
        clean = {}
        for key, value in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ValueError(f"unknown configuration key {key!r}")
            clean[key] = value
        return replace(self, **clean)

    def as_dict(self) -> dict:
        return asdict(self)

    # -- derived values -------------------------------------------------

    @property
    def binned_particle_size(self) -> float:
        return self.particle_size / self.bin_factor

    def resolved_query_size(self) -> int:
        if self.query_size is None:
            return max(2, 2 * round(0.4 * self.binned_particle_size))
        n = int(self.query_size)
        if n % 2:
            log.warning("query size %d is odd; using %d", n, n - 1)
            n -= 1
        return n

    def pixel_bounds(self) -> tuple[float, float]:
        """Cluster pixel-count bounds, defaulting to a band around the particle disk area."""
        area = math.pi * (self.binned_particle_size / 2.0) ** 2
        lo = 0.3 * area if self.min_pixels is None else self.min_pixels
        hi = 3.0 * area if self.max_pixels is None else self.max_pixels
        return lo, hi

    @property
    def uses_diameter_filter(self) -> bool:
        return self.min_diameter is not None or self.max_diameter is not None

    def diameter_bounds(self) -> tuple[float, float]:
        lo = 0.0 if self.min_diameter is None else self.min_diameter / self.bin_factor
        hi = math.inf if self.max_diameter is None else self.max_diameter / self.bin_factor
        return lo, hi

    def resolved_erosion_radius(self) -> float:
        if self.erosion_radius is not None:
            return float(self.erosion_radius)
        if self.uses_diameter_filter:
            return self.diameter_bounds()[0] / 2.0
        return 0.0

    def binned_min_distance(self) -> float:
        d = self.particle_size if self.min_center_distance is None else self.min_center_distance
        return d / self.bin_factor

    def validate(self) -> "Config":
        if self.particle_size is None or self.particle_size <= 0:
            raise ValueError("particle_size (original pixels) is required and must be positive")
        if not 0 < self.tau1 <= self.tau2 <= 100:
            raise ValueError(f"need 0 < tau1 <= tau2 <= 100, got tau1={self.tau1} tau2={self.tau2}")
        if self.bin_factor < 1:
            raise ValueError("bin_factor must be >= 1")
        if self.border_crop < 0:
            raise ValueError("border_crop must be >= 0")
        n = self.resolved_query_size()
        if n > self.container_size:
            raise ValueError(f"query size {n} exceeds container size {self.container_size}")
        if self.threshold_divisor <= 0:
            raise ValueError("threshold_divisor must be positive")
        if self.out_format not in ("box", "star"):
            raise ValueError(f"out_format must be 'box' or 'star', got {self.out_format!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        return self


def _read_toml(path: Path) -> dict:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    # allow an optional [apple_picker] table
    return dict(data.get("apple_picker", data))


def _read_ini(path: Path) -> dict:
    parser = configparser.ConfigParser()
    parser.read(path)
    section = parser["apple_picker"] if parser.has_section("apple_picker") else parser.defaults()
    out = {}
    for key, raw in section.items():
        out[key] = _coerce(raw)
    return out


def _coerce(raw: str):
    low = raw.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for kind in (int, float):
        try:
            return kind(raw)
        except ValueError:
            pass
    return raw.strip().strip('"')


def load_config_file(path) -> dict:
    """Settings from a TOML file (or INI for ``.ini``/``.cfg``) as a plain dict."""
    path = Path(path)
    if path.suffix.lower() in (".ini", ".cfg"):
        return _read_ini(path)
    return _read_toml(path)


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("apple_picker.presets").joinpath(f"{name}.toml").read_text()
    return tomllib.loads(text)
