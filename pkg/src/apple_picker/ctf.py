"""Contrast transfer function evaluation and phase flipping."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .micrograph_io import Micrograph

__all__ = ["CtfParams", "ctf_value", "phase_flip", "electron_wavelength", "read_ctf_sidecar"]


@dataclass(frozen=True)
class CtfParams:
    """Non-astigmatic CTF parameters; all lengths in Angstrom."""

    defocus: float
    wavelength: float
    spherical_aberration: float
    amplitude_contrast: float
    pixel_size: float

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be positive")
        if not 0.0 <= self.amplitude_contrast <= 1.0:
            raise ValueError("amplitude_contrast must lie in [0, 1]")


def ctf_value(p: CtfParams, g):
    """CTF at radial spatial frequency ``g`` (1/Angstrom); scalar or array."""
    g = np.asarray(g, dtype=np.float64)
    lam = p.wavelength
    chi = np.pi * lam * g**2 * p.defocus - 0.5 * np.pi * p.spherical_aberration * lam**3 * g**4
    a = p.amplitude_contrast
    out = -math.sqrt(1.0 - a * a) * np.sin(chi) - a * np.cos(chi)
    return out if out.ndim else float(out)


def radial_frequency(shape: tuple[int, int], pixel_size: float) -> np.ndarray:
    fy = np.fft.fftfreq(shape[0], d=pixel_size)
    fx = np.fft.fftfreq(shape[1], d=pixel_size)
    return np.hypot(fy[:, None], fx[None, :])


def phase_flip(m: Micrograph, p: CtfParams) -> Micrograph:
    """Multiply the spectrum of ``m`` by sign(CTF), treating sign(0) as +1."""
    sign = np.where(ctf_value(p, radial_frequency(m.shape, p.pixel_size)) < 0, -1.0, 1.0)
    flipped = np.fft.ifft2(np.fft.fft2(m.data) * sign)
    return replace(m, data=flipped.real)


def electron_wavelength(voltage_kv: float) -> float:
    """Relativistic electron wavelength in Angstrom for an accelerating voltage in kV."""
    v = voltage_kv * 1e3
    return 12.2643247 / math.sqrt(v * (1.0 + 0.978466e-6 * v))


_SIDECAR_KEYS = {
    "defocus_A": "defocus",
    "lambda_A": "wavelength",
    "cs_A": "spherical_aberration",
    "amplitude_contrast": "amplitude_contrast",
    "pixel_size_A": "pixel_size",
}


def read_ctf_sidecar(path) -> CtfParams:
    """Parse ``key=value`` lines (defocus_A, lambda_A, cs_A, amplitude_contrast, pixel_size_A)."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _SIDECAR_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[_SIDECAR_KEYS[key]] = float(value)
    missing = sorted(k for k, v in _SIDECAR_KEYS.items() if v not in values)
    if missing:
        raise ValueError(f"{path}: missing keys {', '.join(missing)}")
    return CtfParams(**values)
