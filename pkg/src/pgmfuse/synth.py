"""
Deterministic synthetic scenes for end-to-end runs.

A scene has a ground-truth class map on a fine grid, two fine band stacks
from different dates (B partly cloud/shadow covered, with a matching mask),
a coarse multi-channel time series with gaps, train/validation samples and
the true endmember spectra. Class probabilities for all three sources come
from the reference classifier trained on the scene's training samples.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.ndimage import gaussian_filter

from . import classify
from .features import TimeSeriesStack, ndvi
from .raster import (
    TRAIN,
    VALIDATION,
    BandRaster,
    GridGeometry,
    LabelRaster,
    MaskFlag,
    MaskRaster,
    SampleSet,
)
from .unmix import ROLES, EndmemberSet

RED_BAND = 3
NIR_BAND = 4

# 7 surface-reflectance-like bands: coastal, blue, green, red, nir, swir1, swir2
ENDMEMBER_SPECTRA = np.array(
    [
        [0.80, 0.82, 0.83, 0.85, 0.86, 0.70, 0.60],  # cloud
        [0.12, 0.15, 0.20, 0.26, 0.32, 0.38, 0.34],  # soil
        [0.03, 0.04, 0.08, 0.04, 0.45, 0.22, 0.10],  # vegetation
        [0.02, 0.02, 0.02, 0.02, 0.01, 0.01, 0.01],  # dark
    ]
)

# (soil, vegetation, dark) abundances per class for the two dates; class
# order cropland, forest, water, impervious
_SURFACE_A = np.array(
    [
        [0.55, 0.35, 0.10],
        [0.25, 0.60, 0.15],
        [0.05, 0.05, 0.90],
        [0.55, 0.25, 0.20],
    ]
)
_SURFACE_B = np.array(
    [
        [0.25, 0.65, 0.10],
        [0.20, 0.65, 0.15],
        [0.05, 0.05, 0.90],
        [0.65, 0.05, 0.30],
    ]
)

CHANNELS = ("EVI", "RED", "NIR", "BLUE", "MIR")


@dataclass(frozen=True)
class SceneSpec:
    fine_width: int = 64
    fine_height: int = 64
    fine_pixel: float = 30.0
    coarse_factor: int = 8
    origin_x: float = 500000.0
    origin_y: float = 4400000.0
    num_classes: int = 4
    cloud_fraction: float = 0.2
    noise_a: float = 0.035
    noise_b: float = 0.035
    noise_coarse: float = 0.03
    epochs: int = 23
    missing_rate: float = 0.2
    mixed_cell_rate: float = 0.3
    train_per_class: int = 40
    validation_count: int = 600
    temperature: float = 0.0

    def __post_init__(self):
        if self.fine_width < self.coarse_factor or self.fine_height < self.coarse_factor:
            raise ValueError("fine grid must cover at least one coarse cell")
        if not 2 <= self.num_classes <= 4:
            raise ValueError("synthetic scenes support 2 to 4 classes")
        if not 0.0 <= self.cloud_fraction <= 1.0:
            raise ValueError("cloud_fraction must lie in [0, 1]")
        if not 0.0 <= self.missing_rate <= 0.5:
            raise ValueError("missing_rate must lie in [0, 0.5]")
        if self.epochs < 5:
            raise ValueError("need at least 5 epochs")
        if self.train_per_class < 2 or self.validation_count < 0:
            raise ValueError("bad sample counts")
        for name in ("noise_a", "noise_b", "noise_coarse", "fine_pixel", "temperature"):
            if getattr(self, name) < 0 or (name == "fine_pixel" and self.fine_pixel == 0):
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_dict(cls, values):
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in known:
                raise ValueError(f"unknown scene key {key!r}")
            kwargs[key] = (int if known[key] in (int, "int") else float)(value)
        return cls(**kwargs)

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Scene:
    spec: SceneSpec
    truth: LabelRaster
    bands_a: BandRaster
    bands_b: BandRaster
    mask_b: MaskRaster
    coarse: TimeSeriesStack
    samples: SampleSet
    endmembers: EndmemberSet
    coarse_truth: np.ndarray  # (coarse rows, coarse cols, classes) class fractions


def _phenology(epochs):
    """EVI-like seasonal curves per class over one year."""
    t = np.linspace(0, 1, epochs)
    crop = 0.15 + 0.55 * np.exp(-(((t - 0.55) / 0.12) ** 2))
    forest = 0.25 + 0.35 * np.exp(-(((t - 0.5) / 0.25) ** 2))
    water = np.full(epochs, 0.02)
    impervious = 0.1 + 0.05 * np.sin(2 * np.pi * t)
    return np.stack([crop, forest, water, impervious])


def _smooth_field(rng, shape, sigma):
    return gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")


def _surface(abund, labels):
    spectra = abund @ ENDMEMBER_SPECTRA[1:]
    return spectra[labels]


def generate_scene(spec=None, seed=0):
    """Build a Scene from ``spec``; same spec and seed give identical arrays."""
    spec = spec or SceneSpec()
    rng = np.random.default_rng(seed)
    h, w, k = spec.fine_height, spec.fine_width, spec.num_classes
    cf = spec.coarse_factor
    fine = GridGeometry(w, h, spec.origin_x, spec.origin_y, spec.fine_pixel, -spec.fine_pixel)
    ch, cw = -(-h // cf), -(-w // cf)
    coarse = GridGeometry(cw, ch, spec.origin_x, spec.origin_y, spec.fine_pixel * cf, -spec.fine_pixel * cf)

    # truth: one class per coarse cell, some cells with a rectangle of another class
    cell_class = rng.integers(0, k, size=(ch, cw))
    truth = np.kron(cell_class, np.ones((cf, cf), dtype=np.int64))[:h, :w].copy()
    for r in range(ch):
        for c in range(cw):
            if rng.random() < spec.mixed_cell_rate:
                other = (cell_class[r, c] + rng.integers(1, k)) % k
                rh, rw = rng.integers(1, cf // 2 + 1, size=2)
                r0 = r * cf + rng.integers(0, cf - rh + 1)
                c0 = c * cf + rng.integers(0, cf - rw + 1)
                truth[r0 : r0 + rh, c0 : c0 + rw] = other

    bands = ENDMEMBER_SPECTRA.shape[1]
    clean_a = _surface(_SURFACE_A[:k], truth) + rng.normal(0, spec.noise_a, (h, w, bands))
    clean_b = _surface(_SURFACE_B[:k], truth) + rng.normal(0, spec.noise_b, (h, w, bands))

    # cloud: top quantile of a smooth field; shadow: displaced copy of it
    field = _smooth_field(rng, (h, w), max(h, w) / 10)
    flags = np.full((h, w), int(MaskFlag.CLEAR), dtype=np.uint8)
    n_cloud = int(round(spec.cloud_fraction * h * w))
    order = np.argsort(-field, axis=None, kind="stable")
    cloud = np.zeros(h * w, dtype=bool)
    cloud[order[:n_cloud]] = True
    cloud = cloud.reshape(h, w)
    shift = (max(1, h // 16), max(1, w // 10))
    shadow = np.zeros_like(cloud)
    shadow[shift[0] :, shift[1] :] = cloud[: h - shift[0], : w - shift[1]]
    shadow &= ~cloud
    flags[cloud] = MaskFlag.CLOUD
    flags[shadow] = MaskFlag.SHADOW

    thickness = np.clip(0.55 + 0.35 * _smooth_field(rng, (h, w), 2.0) / 0.2, 0.3, 1.0)
    corrupted = clean_b.copy()
    corrupted[cloud] = (1 - thickness[cloud, None]) * clean_b[cloud] + thickness[cloud, None] * ENDMEMBER_SPECTRA[0]
    darkness = np.clip(0.6 + 0.1 * rng.standard_normal((h, w)), 0.3, 0.9)
    corrupted[shadow] = (1 - darkness[shadow, None]) * clean_b[shadow] + darkness[shadow, None] * ENDMEMBER_SPECTRA[3]

    # coarse series: class-fraction-weighted curves plus noise, with gaps
    onehot = np.eye(k)[truth]
    pad_h, pad_w = ch * cf - h, cw * cf - w
    onehot = np.pad(onehot, ((0, pad_h), (0, pad_w), (0, 0)))
    frac = onehot.reshape(ch, cf, cw, cf, k).sum(axis=(1, 3))
    frac /= np.maximum(frac.sum(axis=2, keepdims=True), 1)
    evi = _phenology(spec.epochs)[:k]
    t = spec.epochs
    series = np.empty((ch, cw, t, len(CHANNELS)))
    series[..., 0] = frac @ evi
    # spectral channels follow greenness: red/blue drop and nir rises with EVI
    series[..., 1] = 0.25 - 0.25 * series[..., 0]
    series[..., 2] = 0.15 + 0.5 * series[..., 0]
    series[..., 3] = 0.12 - 0.1 * series[..., 0]
    series[..., 4] = 0.3 - 0.2 * series[..., 0]
    series += rng.normal(0, spec.noise_coarse, series.shape)
    rate = rng.uniform(0, 2 * spec.missing_rate, size=(ch, cw, 1))
    missing = rng.random((ch, cw, t)) < rate
    missing[..., 0] = False  # keep at least two anchors per series
    missing[..., -1] = False
    series[missing] = np.nan
    stack = TimeSeriesStack(coarse, series, missing, CHANNELS)

    # samples at pixel centers; validation drawn first, training from the rest
    flat = np.arange(h * w)
    val = rng.choice(flat, size=min(spec.validation_count, h * w // 2), replace=False)
    taken = np.zeros(h * w, dtype=bool)
    taken[val] = True
    train = []
    for c in range(k):
        pool = flat[(truth.ravel() == c) & ~taken]
        n = min(spec.train_per_class, pool.size)
        train.extend(rng.choice(pool, size=n, replace=False).tolist())
    idx = np.concatenate([val, np.array(train, dtype=np.int64)])
    rows, cols = np.divmod(idx, w)
    x, y = fine.pixel_center(cols, rows)
    split = np.array([VALIDATION] * len(val) + [TRAIN] * len(train), dtype=object)
    samples = SampleSet(x, y, truth.ravel()[idx], split)

    return Scene(
        spec=spec,
        truth=LabelRaster(fine, k, truth),
        bands_a=BandRaster(fine, clean_a),
        bands_b=BandRaster(fine, corrupted),
        mask_b=MaskRaster(fine, flags),
        coarse=stack,
        samples=samples,
        endmembers=EndmemberSet(ENDMEMBER_SPECTRA, ROLES),
        coarse_truth=frac,
    )


def fine_features(bands):
    """Bands plus NDVI as the per-pixel feature stack for fine sources."""
    index = ndvi(bands.band(RED_BAND), bands.band(NIR_BAND))
    data = np.concatenate([bands.data, index.data], axis=2)
    return BandRaster(bands.geometry, data)


def _temperature(spec, num_features):
    return spec.temperature if spec.temperature > 0 else float(num_features)


def scene_priors(scene, sg_window=5, sg_order=2):
    """Train the reference classifier per source and predict probability rasters.

    Returns (prior_a, prior_b, prior_m). Training for B skips samples under
    cloud or shadow; the coarse classifier trains on cells whose dominant
    class covers at least 75% of the cell.
    """
    spec = scene.spec
    k = spec.num_classes
    train_set = scene.samples.select(TRAIN)

    feats_a = fine_features(scene.bands_a)
    x, y, _ = classify.sample_features(feats_a, train_set)
    model_a = classify.train(x, y, k, _temperature(spec, x.shape[1]))
    prior_a = classify.predict_raster(model_a, feats_a)

    feats_b = fine_features(scene.bands_b)
    col, row = train_set.pixels(feats_b.geometry)
    clear = ~scene.mask_b.cloud_or_shadow()[row, col]
    x, y, _ = classify.sample_features(feats_b, train_set.subset(clear))
    model_b = classify.train(x, y, k, _temperature(spec, x.shape[1]))
    prior_b = classify.predict_raster(model_b, feats_b)

    smooth = scene.coarse.smoothed(sg_window, sg_order)
    feats_m = smooth.features()
    frac = scene.coarse_truth.reshape(-1, k)
    dominant = frac.argmax(axis=1)
    pure = frac.max(axis=1) >= 0.75
    xm = feats_m.data.reshape(-1, feats_m.num_bands)[pure].astype(np.float64)
    model_m = classify.train(xm, dominant[pure], k, _temperature(spec, xm.shape[1]))
    prior_m = classify.predict_raster(model_m, feats_m)
    return prior_a, prior_b, prior_m
