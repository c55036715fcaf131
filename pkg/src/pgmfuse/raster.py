"""
Grid containers and the flat binary raster format.

Every raster is stored as two files: a payload of little-endian float32
values in row-major pixel order with channels interleaved per pixel, and a
sidecar ``<payload>.hdr`` text header of ``key: value`` lines. Containers
hold their payload as float32 (labels and flags as small unsigned ints that
float32 represents exactly), so a write/read cycle is bit-exact.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FusionError

#: label value marking pixels without a class
NODATA_LABEL = 255

#: entries outside [-PROB_RANGE_TOL, 1 + PROB_RANGE_TOL] are rejected
PROB_RANGE_TOL = 1e-9
#: per-pixel sums further than this from 1 are rejected
PROB_SUM_TOL = 1e-6

_PAYLOAD_DTYPE = np.dtype("<f4")


class MaskFlag(enum.IntEnum):
    CLEAR = 0
    CLOUD = 1
    SHADOW = 2
    NODATA = 3


@dataclass(frozen=True)
class GridGeometry:
    """Affine north-up grid: upper-left origin plus signed pixel sizes."""

    width: int
    height: int
    origin_x: float
    origin_y: float
    pixel_size_x: float
    pixel_size_y: float

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if self.pixel_size_x == 0 or self.pixel_size_y == 0:
            raise ValueError("pixel sizes must be nonzero")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        for name in ("origin_x", "origin_y", "pixel_size_x", "pixel_size_y"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def shape(self):
        """(rows, cols) of the grid."""
        return (self.height, self.width)

    @property
    def size(self):
        return self.width * self.height

    def pixel_center(self, col, row):
        """Map coordinates of pixel centers; accepts scalars or arrays."""
        col = np.asarray(col, dtype=float)
        row = np.asarray(row, dtype=float)
        x = self.origin_x + (col + 0.5) * self.pixel_size_x
        y = self.origin_y + (row + 0.5) * self.pixel_size_y
        return x, y

    def map_to_pixel(self, x, y):
        """Integer (col, row) of the pixel containing each map point.

        Points outside the grid still get indices; check with ``contains``.
        """
        col = np.floor((np.asarray(x, dtype=float) - self.origin_x) / self.pixel_size_x)
        row = np.floor((np.asarray(y, dtype=float) - self.origin_y) / self.pixel_size_y)
        return col.astype(np.int64), row.astype(np.int64)

    def contains(self, col, row):
        col = np.asarray(col)
        row = np.asarray(row)
        return (col >= 0) & (col < self.width) & (row >= 0) & (row < self.height)

    def centers(self):
        """Map coordinates of every pixel center, each shaped (rows, cols)."""
        rows, cols = np.mgrid[0 : self.height, 0 : self.width]
        return self.pixel_center(cols, rows)


def _check_geometry(geometry):
    if not isinstance(geometry, GridGeometry):
        raise TypeError(f"expected GridGeometry, got {type(geometry).__name__}")


def _freeze(arr):
    arr.setflags(write=False)
    return arr


def normalize_distribution(p, axis=-1):
    """Rescale nonnegative weights along ``axis`` so they sum to one.

    Entries down to ``-PROB_RANGE_TOL`` are treated as float noise and
    clipped to zero; anything more negative, or a nonpositive total,
    raises ``DEGENERATE_DISTRIBUTION``.
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < -PROB_RANGE_TOL) or np.any(~np.isfinite(p)):
        raise FusionError("DEGENERATE_DISTRIBUTION", "negative or non-finite probability")
    p = np.clip(p, 0.0, None)
    total = p.sum(axis=axis, keepdims=True)
    if np.any(total <= 0):
        raise FusionError("DEGENERATE_DISTRIBUTION", "distribution sums to zero")
    return p / total


@dataclass(frozen=True, eq=False)
class ProbabilityRaster:
    """Per-pixel class distributions, shape (rows, cols, classes).

    Invalid pixels hold an all-NaN distribution. Valid pixels must have
    entries in [0, 1] and sum to one within ``PROB_SUM_TOL``.
    """

    geometry: GridGeometry
    data: np.ndarray

    def __post_init__(self):
        _check_geometry(self.geometry)
        data = np.array(self.data, dtype=np.float32)
        if data.ndim != 3 or data.shape[:2] != self.geometry.shape:
            raise FusionError(
                "SIZE_MISMATCH",
                f"probability cube shape {data.shape} does not match grid {self.geometry.shape}",
            )
        if data.shape[2] < 1:
            raise FusionError("SIZE_MISMATCH", "probability cube needs at least one class")
        nan = np.isnan(data)
        invalid = nan.all(axis=2)
        if np.any(nan.any(axis=2) & ~invalid):
            raise FusionError("BAD_PROBABILITY", "partially NaN distribution")
        vals = data[~invalid].astype(np.float64)
        if vals.size:
            if vals.min() < -PROB_RANGE_TOL or vals.max() > 1 + PROB_RANGE_TOL:
                raise FusionError("BAD_PROBABILITY", "probability outside [0, 1]")
            if np.max(np.abs(vals.sum(axis=1) - 1.0)) > PROB_SUM_TOL:
                raise FusionError("BAD_PROBABILITY", "distribution does not sum to one")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def num_classes(self):
        return self.data.shape[2]

    @property
    def valid(self):
        """Boolean (rows, cols) mask of pixels that carry a distribution."""
        return ~np.isnan(self.data).all(axis=2)

    def probabilities(self):
        """Float64 copy with valid pixels renormalized exactly; invalid stay NaN."""
        out = np.full(self.data.shape, np.nan)
        valid = self.valid
        out[valid] = normalize_distribution(self.data[valid])
        return out

    def argmax(self):
        """Most probable class per pixel (smallest index on ties) as a LabelRaster."""
        labels = np.full(self.geometry.shape, NODATA_LABEL, dtype=np.uint8)
        valid = self.valid
        labels[valid] = np.argmax(self.probabilities()[valid], axis=1)
        return LabelRaster(self.geometry, self.num_classes, labels)


@dataclass(frozen=True, eq=False)
class LabelRaster:
    geometry: GridGeometry
    num_classes: int
    labels: np.ndarray

    def __post_init__(self):
        _check_geometry(self.geometry)
        labels = np.asarray(self.labels)
        if labels.shape != self.geometry.shape:
            raise FusionError("SIZE_MISMATCH", f"label grid {labels.shape} vs {self.geometry.shape}")
        if not 1 <= int(self.num_classes) < NODATA_LABEL:
            raise ValueError(f"num_classes must be in [1, {NODATA_LABEL}), got {self.num_classes}")
        if np.issubdtype(labels.dtype, np.floating) and np.any(labels != np.round(labels)):
            raise FusionError("BAD_LABEL", "non-integer label value")
        labels = np.array(labels, dtype=np.int64)
        bad = (labels != NODATA_LABEL) & ((labels < 0) | (labels >= self.num_classes))
        if np.any(bad):
            raise FusionError("BAD_LABEL", f"labels must be < {self.num_classes} or {NODATA_LABEL}")
        object.__setattr__(self, "num_classes", int(self.num_classes))
        object.__setattr__(self, "labels", _freeze(labels.astype(np.uint8)))

    @property
    def valid(self):
        return self.labels != NODATA_LABEL


@dataclass(frozen=True, eq=False)
class BandRaster:
    """Multi-band reflectance or derived values, shape (rows, cols, bands)."""

    geometry: GridGeometry
    data: np.ndarray
    nodata: float = math.nan

    def __post_init__(self):
        _check_geometry(self.geometry)
        data = np.array(self.data, dtype=np.float32)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[:2] != self.geometry.shape or data.shape[2] < 1:
            raise FusionError("SIZE_MISMATCH", f"band stack {data.shape} vs grid {self.geometry.shape}")
        object.__setattr__(self, "nodata", float(self.nodata))
        object.__setattr__(self, "data", _freeze(data))

    @property
    def num_bands(self):
        return self.data.shape[2]

    def nodata_mask(self):
        """(rows, cols) mask of pixels where any band is nodata."""
        bad = np.isnan(self.data)
        if not math.isnan(self.nodata):
            bad |= self.data == np.float32(self.nodata)
        return bad.any(axis=2)

    def band(self, index):
        """Single-band raster holding band ``index``."""
        return BandRaster(self.geometry, self.data[:, :, index], self.nodata)

    def values(self, band=0):
        """Float64 copy of one band with nodata replaced by NaN."""
        out = self.data[:, :, band].astype(np.float64)
        if not math.isnan(self.nodata):
            out[self.data[:, :, band] == np.float32(self.nodata)] = np.nan
        return out


@dataclass(frozen=True, eq=False)
class MaskRaster:
    geometry: GridGeometry
    flags: np.ndarray

    def __post_init__(self):
        _check_geometry(self.geometry)
        flags = np.asarray(self.flags)
        if flags.shape != self.geometry.shape:
            raise FusionError("SIZE_MISMATCH", f"mask grid {flags.shape} vs {self.geometry.shape}")
        allowed = [int(f) for f in MaskFlag]
        if not np.all(np.isin(flags, allowed)):
            raise FusionError("BAD_MASK", f"mask flags must be one of {allowed}")
        object.__setattr__(self, "flags", _freeze(flags.astype(np.uint8)))

    def cloud_or_shadow(self):
        return (self.flags == MaskFlag.CLOUD) | (self.flags == MaskFlag.SHADOW)


# ---------------------------------------------------------------------------
# container I/O


def header_path(path):
    return Path(f"{path}.hdr")


def _format_value(value):
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_container(path, kind, geometry, payload, **extra):
    """Write a (rows, cols, channels) payload plus header. Low-level."""
    payload = np.asarray(payload)
    if payload.ndim == 2:
        payload = payload[:, :, None]
    header = {
        "kind": kind,
        "width": geometry.width,
        "height": geometry.height,
        "channels": payload.shape[2],
        "dtype": "float32",
        "byteorder": "little",
        "origin_x": geometry.origin_x,
        "origin_y": geometry.origin_y,
        "pixel_size_x": geometry.pixel_size_x,
        "pixel_size_y": geometry.pixel_size_y,
    }
    header.update(extra)
    text = "".join(f"{k}: {_format_value(v)}\n" for k, v in header.items())
    raw = np.ascontiguousarray(payload, dtype=_PAYLOAD_DTYPE).tobytes()
    try:
        Path(path).write_bytes(raw)
        header_path(path).write_text(text)
    except OSError as exc:
        raise FusionError("IO_FAILURE", f"cannot write {path}: {exc}") from exc


def _parse_header(text):
    header = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition(":")
        if not sep or not key.strip():
            raise FusionError("MALFORMED_HEADER", f"line {lineno}: expected 'key: value'")
        header[key.strip()] = value.strip()
    return header


def read_container(path):
    """Return (header dict, geometry, float32 payload of shape (rows, cols, channels))."""
    try:
        text = header_path(path).read_text()
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FusionError("IO_FAILURE", f"cannot read {path}: {exc}") from exc
    header = _parse_header(text)
    try:
        width = int(header["width"])
        height = int(header["height"])
        channels = int(header["channels"])
        geometry = GridGeometry(
            width,
            height,
            float(header["origin_x"]),
            float(header["origin_y"]),
            float(header["pixel_size_x"]),
            float(header["pixel_size_y"]),
        )
    except (KeyError, ValueError) as exc:
        raise FusionError("MALFORMED_HEADER", f"{header_path(path)}: {exc}") from exc
    if header.get("dtype", "float32") != "float32" or header.get("byteorder", "little") != "little":
        raise FusionError("MALFORMED_HEADER", "only little-endian float32 payloads are supported")
    if channels < 1:
        raise FusionError("MALFORMED_HEADER", "channels must be >= 1")
    expected = width * height * channels * _PAYLOAD_DTYPE.itemsize
    if len(raw) != expected:
        raise FusionError("SIZE_MISMATCH", f"payload has {len(raw)} bytes, header implies {expected}")
    payload = np.frombuffer(raw, dtype=_PAYLOAD_DTYPE).reshape(height, width, channels)
    return header, geometry, payload.astype(np.float32)


def _header_float(header, key, default=math.nan):
    try:
        return float(header.get(key, default))
    except ValueError as exc:
        raise FusionError("MALFORMED_HEADER", f"bad value for {key}") from exc


def _header_int(header, key):
    try:
        return int(header[key])
    except (KeyError, ValueError) as exc:
        raise FusionError("MALFORMED_HEADER", f"missing or bad {key}") from exc


def write_raster(raster, path):
    """Serialize any raster container to ``path`` (+ ``path.hdr``)."""
    if isinstance(raster, ProbabilityRaster):
        write_container(path, "probability", raster.geometry, raster.data, num_classes=raster.num_classes)
    elif isinstance(raster, LabelRaster):
        write_container(
            path,
            "label",
            raster.geometry,
            raster.labels,
            num_classes=raster.num_classes,
            nodata=float(NODATA_LABEL),
        )
    elif isinstance(raster, BandRaster):
        write_container(path, "band", raster.geometry, raster.data, nodata=raster.nodata)
    elif isinstance(raster, MaskRaster):
        write_container(path, "mask", raster.geometry, raster.flags)
    elif hasattr(raster, "_write"):
        raster._write(path)
    else:
        raise TypeError(f"cannot serialize {type(raster).__name__}")


def read_raster(path, kind):
    """Load a raster of ``kind`` ('probability', 'label', 'band', 'mask',
    'timeseries' or 'groupmap')."""
    if kind == "timeseries":
        from .features import TimeSeriesStack

        return TimeSeriesStack._read(path)
    if kind == "groupmap":
        from .align import GroupMap

        return GroupMap._read(path)

    header, geometry, payload = read_container(path)
    if header.get("kind") != kind:
        raise FusionError("MALFORMED_HEADER", f"{path} holds kind {header.get('kind')!r}, wanted {kind!r}")
    channels = payload.shape[2]
    if kind == "probability":
        if _header_int(header, "num_classes") != channels:
            raise FusionError("MALFORMED_HEADER", "num_classes disagrees with channels")
        return ProbabilityRaster(geometry, payload)
    if kind == "band":
        return BandRaster(geometry, payload, _header_float(header, "nodata"))
    if channels != 1:
        raise FusionError("MALFORMED_HEADER", f"{kind} rasters have exactly one channel")
    if kind == "label":
        return LabelRaster(geometry, _header_int(header, "num_classes"), payload[:, :, 0])
    if kind == "mask":
        return MaskRaster(geometry, payload[:, :, 0])
    raise ValueError(f"unknown raster kind {kind!r}")


# ---------------------------------------------------------------------------
# sample sets

TRAIN = "TRAIN"
VALIDATION = "VALIDATION"


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Point samples in map coordinates with class labels and a split tag."""

    x: np.ndarray
    y: np.ndarray
    label: np.ndarray
    split: np.ndarray = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64).ravel()
        y = np.asarray(self.y, dtype=np.float64).ravel()
        label = np.asarray(self.label, dtype=np.int64).ravel()
        split = self.split
        if split is None:
            split = np.full(x.shape, VALIDATION)
        split = np.asarray(split, dtype=object).ravel()
        if not (x.shape == y.shape == label.shape == split.shape):
            raise ValueError("sample columns must have equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise FusionError("BAD_SAMPLE", "non-finite sample coordinate")
        if np.any(label < 0):
            raise FusionError("BAD_SAMPLE", "negative class label")
        if not all(s in (TRAIN, VALIDATION) for s in split):
            raise FusionError("BAD_SAMPLE", f"split must be {TRAIN} or {VALIDATION}")
        for name, value in (("x", x), ("y", y), ("label", label), ("split", split)):
            object.__setattr__(self, name, _freeze(value))

    def __len__(self):
        return self.x.size

    def subset(self, keep):
        keep = np.asarray(keep)
        return SampleSet(self.x[keep], self.y[keep], self.label[keep], self.split[keep])

    def select(self, split):
        return self.subset(self.split == split)

    def pixels(self, geometry):
        """(col, row) of each sample on ``geometry``; off-grid points are not checked."""
        return geometry.map_to_pixel(self.x, self.y)


def write_samples(samples, path):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "label", "split"])
            for x, y, lab, split in zip(samples.x, samples.y, samples.label, samples.split):
                writer.writerow([repr(float(x)), repr(float(y)), int(lab), split])
    except OSError as exc:
        raise FusionError("IO_FAILURE", f"cannot write {path}: {exc}") from exc


def read_samples(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise FusionError("IO_FAILURE", f"cannot read {path}: {exc}") from exc
    try:
        x = [float(r["x"]) for r in rows]
        y = [float(r["y"]) for r in rows]
        label = [int(r["label"]) for r in rows]
        split = [r["split"].strip().upper() for r in rows]
    except (KeyError, ValueError, AttributeError) as exc:
        raise FusionError("MALFORMED_HEADER", f"{path}: sample CSV needs x,y,label,split") from exc
    return SampleSet(x, y, label, split)
