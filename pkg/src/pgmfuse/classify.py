"""
Minimal probability provider: diagonal-Gaussian nearest-centroid softmax.

Real deployments feed externally produced probability rasters; this model
only exists so synthetic scenes can run end to end.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import FusionError
from .raster import ProbabilityRaster

VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class ClassifierModel:
    centroids: np.ndarray  # (C, F)
    variances: np.ndarray  # (C, F)
    temperature: float = 1.0

    def __post_init__(self):
        mu = np.array(self.centroids, dtype=np.float64)
        var = np.array(self.variances, dtype=np.float64)
        if mu.ndim != 2 or mu.shape != var.shape:
            raise ValueError("centroids and variances must both be (classes, features)")
        if mu.shape[0] < 2:
            raise ValueError("need at least two classes")
        if np.any(var <= 0):
            raise ValueError("variances must be positive")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        object.__setattr__(self, "centroids", mu)
        object.__setattr__(self, "variances", var)
        object.__setattr__(self, "temperature", float(self.temperature))

    @property
    def num_classes(self):
        return self.centroids.shape[0]

    @property
    def num_features(self):
        return self.centroids.shape[1]


def train(features, labels, num_classes, temperature=1.0):
    """Per-class means and floored diagonal variances."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("features must be (samples, F) with one label per sample")
    counts = np.bincount(y, minlength=num_classes)
    if counts.size > num_classes:
        raise ValueError("label outside class range")
    if np.any(counts < 2):
        raise FusionError("CLASS_UNDERSAMPLED", f"classes {np.flatnonzero(counts < 2).tolist()} have < 2 samples")
    mu = np.stack([x[y == c].mean(axis=0) for c in range(num_classes)])
    var = np.stack([x[y == c].var(axis=0) for c in range(num_classes)])
    return ClassifierModel(mu, np.maximum(var, VARIANCE_FLOOR), temperature)


def predict_proba(model, features):
    """Softmax of -0.5 * Mahalanobis^2 / temperature; works on (..., F)."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape[-1] != model.num_features:
        raise FusionError("DIMENSION_MISMATCH", f"got {x.shape[-1]} features, model has {model.num_features}")
    d2 = (((x[..., None, :] - model.centroids) ** 2) / model.variances).sum(axis=-1)
    logits = -0.5 * d2 / model.temperature
    logits -= logits.max(axis=-1, keepdims=True)
    p = np.exp(logits)
    # keep every class strictly positive
    p = np.maximum(p, np.finfo(np.float64).tiny)
    return p / p.sum(axis=-1, keepdims=True)


def predict_raster(model, features):
    """Class probabilities for every pixel of a feature BandRaster.

    Pixels with any nodata feature get an all-NaN distribution.
    """
    bad = features.nodata_mask()
    out = np.full(features.geometry.shape + (model.num_classes,), np.nan)
    out[~bad] = predict_proba(model, features.data[~bad].astype(np.float64))
    return ProbabilityRaster(features.geometry, out)


def dumps(model):
    """Plain-text key-value header followed by centroid and variance CSV blocks."""
    buf = io.StringIO()
    buf.write(f"num_classes: {model.num_classes}\n")
    buf.write(f"num_features: {model.num_features}\n")
    buf.write(f"temperature: {model.temperature!r}\n")
    for name, block in (("centroids", model.centroids), ("variances", model.variances)):
        buf.write(f"[{name}]\n")
        for row in block:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def loads(text):
    header = {}
    blocks = {}
    current = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            blocks[current] = []
        elif current is None:
            key, _, value = line.partition(":")
            header[key.strip()] = value.strip()
        else:
            blocks[current].append([float(v) for v in line.split(",")])
    try:
        c = int(header["num_classes"])
        f = int(header["num_features"])
        mu = np.array(blocks["centroids"]).reshape(c, f)
        var = np.array(blocks["variances"]).reshape(c, f)
        return ClassifierModel(mu, var, float(header["temperature"]))
    except (KeyError, ValueError) as exc:
        raise FusionError("MALFORMED_HEADER", f"bad classifier model text: {exc}") from exc


def save_model(model, path):
    try:
        with open(path, "w") as fh:
            fh.write(dumps(model))
    except OSError as exc:
        raise FusionError("IO_FAILURE", f"cannot write {path}: {exc}") from exc


def load_model(path):
    try:
        with open(path) as fh:
            return loads(fh.read())
    except OSError as exc:
        raise FusionError("IO_FAILURE", f"cannot read {path}: {exc}") from exc


def sample_features(raster, samples):
    """Feature vectors at sample points; rows with nodata are dropped.

    Returns (features, labels, kept_mask).
    """
    col, row = samples.pixels(raster.geometry)
    inside = raster.geometry.contains(col, row)
    keep = inside.copy()
    keep[inside] &= ~raster.nodata_mask()[row[inside], col[inside]]
    x = raster.data[row[keep], col[keep]].astype(np.float64)
    return x, samples.label[keep], keep

