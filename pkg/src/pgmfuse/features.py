"""
Per-pixel features: NDVI, GLCM textures and time-series preprocessing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from .errors import FusionError
from .raster import BandRaster, GridGeometry, read_container, write_container

SG_WINDOW = 5
SG_ORDER = 2


def ndvi(red, nir):
    """(nir - red) / (nir + red) on the first band of each raster.

    Pixels that are nodata in either input, or where nir + red == 0, are NaN.
    """
    if red.geometry != nir.geometry:
        raise FusionError("GEOMETRY_MISMATCH", "red and nir grids differ")
    r = red.values(0)
    n = nir.values(0)
    den = n + r
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den != 0, (n - r) / np.where(den != 0, den, 1.0), np.nan)
    out[np.isnan(r) | np.isnan(n)] = np.nan
    return BandRaster(red.geometry, out)


# ---------------------------------------------------------------------------
# GLCM


@dataclass(frozen=True)
class GlcmParams:
    grey_levels: int = 16
    window_size: int = 7
    offset: tuple = (1, 1)

    def __post_init__(self):
        if int(self.grey_levels) < 2:
            raise ValueError("grey_levels must be >= 2")
        if int(self.window_size) < 3 or int(self.window_size) % 2 == 0:
            raise ValueError("window_size must be odd and >= 3")
        dx, dy = (int(v) for v in self.offset)
        if max(abs(dx), abs(dy)) >= int(self.window_size) or (dx, dy) == (0, 0):
            raise ValueError("offset must be nonzero and shorter than the window")
        object.__setattr__(self, "offset", (dx, dy))


def quantize(values, grey_levels):
    """Linear min-max binning of finite values into ``grey_levels`` bins.

    NaN stays unassigned (-1). A constant image maps to bin 0.
    """
    v = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(v)
    q = np.full(v.shape, -1, dtype=np.int64)
    if not np.any(finite):
        return q
    lo = v[finite].min()
    hi = v[finite].max()
    if hi > lo:
        scaled = np.floor((v[finite] - lo) / (hi - lo) * grey_levels)
        q[finite] = np.clip(scaled, 0, grey_levels - 1).astype(np.int64)
    else:
        q[finite] = 0
    return q


def cooccurrence_matrix(quantized, grey_levels, offset):
    """Directed co-occurrence probabilities of a quantized patch.

    ``P[i, j]`` is the share of pixel pairs (p, p + offset) with levels
    (i, j); ``offset`` is (dx, dy) in (columns, rows).
    """
    q = np.asarray(quantized, dtype=np.int64)
    dx, dy = offset
    h, w = q.shape
    r0, r1 = max(0, -dy), h - max(0, dy)
    c0, c1 = max(0, -dx), w - max(0, dx)
    ref = q[r0:r1, c0:c1]
    nbr = q[r0 + dy : r1 + dy, c0 + dx : c1 + dx]
    counts = np.zeros((grey_levels, grey_levels))
    np.add.at(counts, (ref.ravel(), nbr.ravel()), 1.0)
    return counts / counts.sum()


def glcm_statistics(p):
    """(mean, contrast, entropy) of a normalized co-occurrence matrix."""
    p = np.asarray(p, dtype=np.float64)
    i, j = np.indices(p.shape)
    nz = p > 0
    mean = float(np.sum(i * p))
    contrast = float(np.sum((i - j) ** 2 * p))
    entropy = float(-np.sum(p[nz] * np.log(p[nz])))
    return mean, contrast, entropy


def _box_sum(img, top, left, height, width, rows, cols):
    """Sums of img[r+top : r+top+height, c+left : c+left+width] for each (r, c)."""
    s = np.zeros((img.shape[0] + 1, img.shape[1] + 1))
    s[1:, 1:] = np.cumsum(np.cumsum(img, axis=0), axis=1)
    r = rows + top
    c = cols + left
    return s[r + height, c + width] - s[r, c + width] - s[r + height, c] + s[r, c]


def glcm_textures(band, params=None):
    """GLCM mean, contrast and entropy over a sliding window.

    Values are quantized once with the band's global min and max. Each
    output pixel uses the window centered on it; the border ring where the
    window leaves the image, and windows touching nodata, are NaN.
    Returns a 3-band raster (mean, contrast, entropy).
    """
    params = params or GlcmParams()
    levels = int(params.grey_levels)
    win = int(params.window_size)
    dx, dy = params.offset
    rows, cols = band.geometry.shape
    if win > min(rows, cols):
        raise FusionError("WINDOW_TOO_LARGE", f"window {win} does not fit a {rows}x{cols} image")
    half = win // 2
    q = quantize(band.values(0), levels)

    # pair code at each reference pixel whose neighbor is inside the image
    code = np.full((rows, cols), -1, dtype=np.int64)
    r0, r1 = max(0, -dy), rows - max(0, dy)
    c0, c1 = max(0, -dx), cols - max(0, dx)
    ref = q[r0:r1, c0:c1]
    nbr = q[r0 + dy : r1 + dy, c0 + dx : c1 + dx]
    code[r0:r1, c0:c1] = np.where((ref >= 0) & (nbr >= 0), ref * levels + nbr, -1)

    cr, cc = np.mgrid[half : rows - half, half : cols - half]
    box = dict(
        top=-half + max(0, -dy),
        left=-half + max(0, -dx),
        height=win - abs(dy),
        width=win - abs(dx),
        rows=cr,
        cols=cc,
    )
    npairs = box["height"] * box["width"]
    holes = _box_sum((q < 0).astype(float), -half, -half, win, win, cr, cc)

    mean = np.zeros(cr.shape)
    contrast = np.zeros(cr.shape)
    entropy = np.zeros(cr.shape)
    for k in np.unique(code[code >= 0]):
        i, j = divmod(int(k), levels)
        p = _box_sum((code == k).astype(float), **box) / npairs
        mean += i * p
        contrast += (i - j) ** 2 * p
        with np.errstate(divide="ignore", invalid="ignore"):
            entropy -= np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)

    out = np.full((rows, cols, 3), np.nan)
    inner = out[half : rows - half, half : cols - half]
    inner[..., 0] = mean
    inner[..., 1] = contrast
    inner[..., 2] = entropy
    inner[holes > 0] = np.nan
    return BandRaster(band.geometry, out)


# ---------------------------------------------------------------------------
# time series


def missing_fraction(missing):
    """Share of missing epochs in a boolean series mask."""
    missing = np.asarray(missing, dtype=bool)
    if missing.shape[-1] < 1:
        raise ValueError("series must have at least one epoch")
    return missing.mean(axis=-1)


def fill_missing(series, missing):
    """Linear interpolation across gaps, flat extrapolation at the ends."""
    y = np.asarray(series, dtype=np.float64)
    missing = np.asarray(missing, dtype=bool) | ~np.isfinite(y)
    present = np.flatnonzero(~missing)
    if present.size < 2:
        raise FusionError("INSUFFICIENT_DATA", f"{present.size} present epochs, need 2")
    t = np.arange(y.size)
    return np.interp(t, present, y[present])


def savitzky_golay_smooth(series, missing=None, window=SG_WINDOW, poly_order=SG_ORDER):
    """Fill gaps then apply a Savitzky-Golay filter.

    The polynomial fit at the series ends uses the first/last full window,
    so polynomials up to ``poly_order`` are reproduced everywhere. Series
    shorter than ``window`` use the largest odd window that fits (and a
    lower order if needed).
    """
    window = int(window)
    poly_order = int(poly_order)
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd count")
    if not 0 <= poly_order < window:
        raise ValueError("poly_order must be in [0, window)")
    y = np.asarray(series, dtype=np.float64)
    if missing is None:
        missing = np.zeros(y.shape, dtype=bool)
    filled = fill_missing(y, missing)
    n = filled.size
    if window > n:
        window = n if n % 2 else n - 1
        poly_order = min(poly_order, window - 1)
    if window < 3:
        return filled
    return savgol_filter(filled, window, poly_order, mode="interp")


@dataclass(frozen=True, eq=False)
class TimeSeriesStack:
    """values: (rows, cols, epochs, channels); missing: (rows, cols, epochs)."""

    geometry: GridGeometry
    values: np.ndarray
    missing: np.ndarray
    channel_names: tuple = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float32)
        missing = np.array(self.missing, dtype=bool)
        if values.ndim != 4 or values.shape[:2] != self.geometry.shape:
            raise FusionError("SIZE_MISMATCH", f"series values {values.shape} vs grid {self.geometry.shape}")
        if values.shape[2] < 1 or values.shape[3] < 1:
            raise FusionError("SIZE_MISMATCH", "need at least one epoch and one channel")
        if missing.shape != values.shape[:3]:
            raise FusionError("SIZE_MISMATCH", "missing mask must be (rows, cols, epochs)")
        names = tuple(self.channel_names) or tuple(f"c{i}" for i in range(values.shape[3]))
        if len(names) != values.shape[3]:
            raise ValueError("one channel name per channel")
        values.setflags(write=False)
        missing.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)
        object.__setattr__(self, "channel_names", names)

    @property
    def num_epochs(self):
        return self.values.shape[2]

    @property
    def num_channels(self):
        return self.values.shape[3]

    def missing_fraction(self):
        return BandRaster(self.geometry, missing_fraction(self.missing))

    def smoothed(self, window=SG_WINDOW, poly_order=SG_ORDER):
        """Gap-filled, smoothed copy; pixels with <2 present epochs become NaN."""
        rows, cols, t, k = self.values.shape
        out = np.full((rows, cols, t, k), np.nan)
        for r in range(rows):
            for c in range(cols):
                miss = self.missing[r, c]
                if np.count_nonzero(~miss) < 2:
                    continue
                for ch in range(k):
                    out[r, c, :, ch] = savitzky_golay_smooth(self.values[r, c, :, ch], miss, window, poly_order)
        return TimeSeriesStack(self.geometry, out, self.missing, self.channel_names)

    def features(self):
        """Flatten to a (rows, cols, epochs * channels) BandRaster, epoch-major."""
        rows, cols, t, k = self.values.shape
        return BandRaster(self.geometry, self.values.reshape(rows, cols, t * k))

    def _write(self, path):
        rows, cols, t, k = self.values.shape
        payload = np.concatenate(
            [self.values.reshape(rows, cols, t * k), self.missing.astype(np.float32)], axis=2
        )
        write_container(
            path,
            "timeseries",
            self.geometry,
            payload,
            epochs=t,
            series_channels=k,
            channel_names=",".join(self.channel_names),
            layout="epoch-major values then per-epoch missing flags",
        )

    @classmethod
    def _read(cls, path):
        header, geometry, payload = read_container(path)
        if header.get("kind") != "timeseries":
            raise FusionError("MALFORMED_HEADER", f"{path} is not a timeseries raster")
        try:
            t = int(header["epochs"])
            k = int(header["series_channels"])
        except (KeyError, ValueError) as exc:
            raise FusionError("MALFORMED_HEADER", f"{path}: {exc}") from exc
        if payload.shape[2] != t * k + t:
            raise FusionError("SIZE_MISMATCH", "channels disagree with epochs and series_channels")
        names = tuple(n for n in header.get("channel_names", "").split(",") if n)
        rows, cols = geometry.shape
        values = payload[:, :, : t * k].reshape(rows, cols, t, k)
        flags = payload[:, :, t * k :]
        if not np.all((flags == 0) | (flags == 1)):
            raise FusionError("MALFORMED_HEADER", "missing flags must be 0 or 1")
        return cls(geometry, values, flags.astype(bool), names)
