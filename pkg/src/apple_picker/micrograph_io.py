"""Micrograph container, MRC2014 reading/writing, cropping, binning and pick output."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Micrograph",
    "Pick",
    "MrcError",
    "read_mrc",
    "write_mrc",
    "crop_border",
    "bin_micrograph",
    "write_picks",
    "read_box",
]

HEADER_BYTES = 1024

_HEADER_FIELDS = [
    ("nx", "i4"), ("ny", "i4"), ("nz", "i4"), ("mode", "i4"),
    ("nxstart", "i4"), ("nystart", "i4"), ("nzstart", "i4"),
    ("mx", "i4"), ("my", "i4"), ("mz", "i4"),
    ("cella", "f4", 3), ("cellb", "f4", 3),
    ("mapc", "i4"), ("mapr", "i4"), ("maps", "i4"),
    ("dmin", "f4"), ("dmax", "f4"), ("dmean", "f4"),
    ("ispg", "i4"), ("nsymbt", "i4"),
    ("extra1", "V8"), ("exttyp", "S4"), ("nversion", "i4"), ("extra2", "V84"),
    ("origin", "f4", 3), ("map", "S4"), ("machst", "u1", 4),
    ("rms", "f4"), ("nlabl", "i4"), ("label", "S80", 10),
]

# MRC2014 data modes accepted on read
_MODES = {0: "i1", 1: "i2", 2: "f4", 6: "u2"}


def _header_dtype(byteorder: str) -> np.dtype:
    fields = []
    for f in _HEADER_FIELDS:
        kind = f[1]
        if kind[0] in "if" or kind[0] == "u":
            kind = byteorder + kind
        fields.append((f[0], kind) + tuple(f[2:]))
    dt = np.dtype(fields)
    assert dt.itemsize == HEADER_BYTES
    return dt


class MrcError(ValueError):
    """Raised for malformed or unsupported MRC files."""


@dataclass(frozen=True, eq=False)
class Micrograph:
    """A 2D micrograph plus the geometry needed to map back to the source image.

    ``origin_offset`` is the (row, col) of this image's pixel (0, 0) inside the
    original micrograph and ``bin_factor`` the accumulated downsampling, so a
    coordinate ``p`` here corresponds to ``origin_offset + bin_factor * p`` in
    original pixels.
    """

    data: np.ndarray
    pixel_size: float | None = None
    origin_offset: tuple[int, int] = (0, 0)
    bin_factor: int = 1
    original_shape: tuple[int, int] | None = field(default=None)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"micrograph must be a non-empty 2D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("micrograph contains non-finite values")
        if int(self.bin_factor) < 1:
            raise ValueError("bin_factor must be a positive integer")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "bin_factor", int(self.bin_factor))
        object.__setattr__(self, "origin_offset", tuple(int(v) for v in self.origin_offset))
        if self.original_shape is None:
            object.__setattr__(self, "original_shape", tuple(data.shape))
        else:
            object.__setattr__(self, "original_shape", tuple(int(v) for v in self.original_shape))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def to_original(self, row, col):
        """Map (row, col) in this image to original-micrograph pixels."""
        return (self.origin_offset[0] + self.bin_factor * np.asarray(row, dtype=float),
                self.origin_offset[1] + self.bin_factor * np.asarray(col, dtype=float))

    def from_original(self, row, col):
        return ((np.asarray(row, dtype=float) - self.origin_offset[0]) / self.bin_factor,
                (np.asarray(col, dtype=float) - self.origin_offset[1]) / self.bin_factor)


@dataclass(frozen=True)
class Pick:
    """A particle detection in original-micrograph pixels (x = column, y = row)."""

    center_x: float
    center_y: float
    box_size: int
    score: float = 0.0


def _detect_byteorder(raw: bytes) -> str:
    stamp = raw[212]
    if stamp == 0x44:
        return "<"
    if stamp == 0x11:
        return ">"
    # no usable machine stamp; pick the byte order giving a sane header
    for order in ("<", ">"):
        nx, ny, nz, mode = np.frombuffer(raw[:16], dtype=order + "i4")
        if 0 < nx < 2**20 and 0 < ny < 2**20 and 0 < nz < 2**20 and 0 <= mode < 32:
            return order
    raise MrcError("cannot determine byte order from header")


def read_mrc(path) -> Micrograph:
    """Read a single-section MRC2014 file (modes 0, 1, 2 and 6)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER_BYTES:
        raise MrcError(f"{path}: file shorter than the 1024-byte MRC header")
    order = _detect_byteorder(raw)
    hdr = np.frombuffer(raw[:HEADER_BYTES], dtype=_header_dtype(order))[0]
    nx, ny, nz, mode = int(hdr["nx"]), int(hdr["ny"]), int(hdr["nz"]), int(hdr["mode"])
    if nx <= 0 or ny <= 0 or nz <= 0:
        raise MrcError(f"{path}: invalid dimensions nx={nx} ny={ny} nz={nz}")
    if mode not in _MODES:
        raise MrcError(f"{path}: unsupported MRC mode {mode}")
    if nz > 1:
        raise MrcError(f"{path}: stack not supported (nz={nz}); extract a section")
    nsymbt = int(hdr["nsymbt"])
    if nsymbt < 0:
        raise MrcError(f"{path}: negative extended header size")
    dtype = np.dtype(_MODES[mode]).newbyteorder(order)
    start = HEADER_BYTES + nsymbt
    count = nx * ny
    if len(raw) < start + count * dtype.itemsize:
        raise MrcError(f"{path}: truncated data block")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=start).reshape(ny, nx)
    data = data.astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise MrcError(f"{path}: data contains NaN or Inf")

    pixel_size = None
    mx = int(hdr["mx"]) or nx
    cella_x = float(hdr["cella"][0])
    if cella_x > 0 and mx > 0:
        pixel_size = cella_x / mx
    return Micrograph(data, pixel_size=pixel_size)


def write_mrc(m: Micrograph, path) -> None:
    """Write ``m`` as a little-endian mode-2 (float32) MRC2014 file."""
    data = np.ascontiguousarray(m.data, dtype="<f4")
    ny, nx = data.shape
    hdr = np.zeros((), dtype=_header_dtype("<"))
    hdr["nx"], hdr["ny"], hdr["nz"] = nx, ny, 1
    hdr["mode"] = 2
    hdr["mx"], hdr["my"], hdr["mz"] = nx, ny, 1
    if m.pixel_size:
        hdr["cella"] = (nx * m.pixel_size, ny * m.pixel_size, m.pixel_size)
    hdr["cellb"] = (90.0, 90.0, 90.0)
    hdr["mapc"], hdr["mapr"], hdr["maps"] = 1, 2, 3
    hdr["dmin"], hdr["dmax"], hdr["dmean"] = data.min(), data.max(), data.mean(dtype=np.float64)
    hdr["rms"] = data.std(dtype=np.float64)
    hdr["exttyp"] = b"MRCO"
    hdr["nversion"] = 20140
    hdr["map"] = b"MAP "
    hdr["machst"] = (0x44, 0x44, 0, 0)
    with open(path, "wb") as fh:
        fh.write(hdr.tobytes())
        fh.write(data.tobytes())


def crop_border(m: Micrograph, margin: int) -> Micrograph:
    margin = int(margin)
    if margin < 0:
        raise ValueError("margin must be non-negative")
    if 2 * margin >= min(m.shape):
        raise ValueError(f"margin {margin} too large for micrograph of shape {m.shape}")
    if margin == 0:
        return m
    shift = margin * m.bin_factor
    return replace(
        m,
        data=m.data[margin:-margin, margin:-margin],
        origin_offset=(m.origin_offset[0] + shift, m.origin_offset[1] + shift),
    )


def bin_micrograph(m: Micrograph, factor: int) -> Micrograph:
    """Average ``factor x factor`` blocks; trailing rows/columns that do not fill a block are dropped."""
    factor = int(factor)
    if factor < 1:
        raise ValueError("bin factor must be >= 1")
    if factor == 1:
        return m
    h, w = m.height // factor, m.width // factor
    if h < 1 or w < 1:
        raise ValueError(f"micrograph of shape {m.shape} is smaller than one {factor}x{factor} block")
    blocks = m.data[: h * factor, : w * factor].reshape(h, factor, w, factor)
    pixel_size = m.pixel_size * factor if m.pixel_size else m.pixel_size
    return replace(m, data=blocks.mean(axis=(1, 3)), bin_factor=m.bin_factor * factor,
                   pixel_size=pixel_size)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def write_picks(picks: Sequence[Pick], path, format: str = "box") -> None:
    """Write picks as an EMAN-style box file or a RELION coordinate STAR file.

    Box lines hold the lower-left corner and box size as tab-separated
    integers; STAR rows hold the centers.
    """
    lines: list[str] = []
    if format == "box":
        for p in picks:
            x = _round_half_up(p.center_x - p.box_size / 2)
            y = _round_half_up(p.center_y - p.box_size / 2)
            lines.append(f"{x}\t{y}\t{int(p.box_size)}\t{int(p.box_size)}")
    elif format == "star":
        lines += ["", "data_", "", "loop_", "_rlnCoordinateX #1", "_rlnCoordinateY #2"]
        for p in picks:
            lines.append(f"{p.center_x:.2f}\t{p.center_y:.2f}")
    else:
        raise ValueError(f"unknown pick format {format!r}")
    text = "\n".join(lines)
    if lines:
        text += "\n"
    Path(path).write_text(text)


def read_box(path) -> list[Pick]:
    """Read a box file written by :func:`write_picks` back into picks."""
    picks = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        x, y, w, _h = (float(v) for v in line.split())
        picks.append(Pick(center_x=x + w / 2, center_y=y + w / 2, box_size=int(w)))
    return picks


def picks_from_arrays(rows: Iterable[float], cols: Iterable[float], box_size: int) -> list[Pick]:
    return [Pick(center_x=float(c), center_y=float(r), box_size=int(box_size))
            for r, c in zip(rows, cols)]
