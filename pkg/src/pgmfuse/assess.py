"""
Confusion-matrix accuracy assessment.

Rows are the classification, columns the ground reference, as in the
usual land-cover accuracy tables. User's accuracy is per row, producer's
accuracy per column; a class with an empty row or column has an undefined
accuracy (``None``), never 0.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import FusionError
from .raster import NODATA_LABEL, VALIDATION


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray
    #: validation points that fell on NODATA map pixels
    excluded: int = 0

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("counts must be square")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def num_classes(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts, self.excluded + other.excluded)


def score(label_map, samples, mask=None, split=VALIDATION):
    """Tally validation samples against the map.

    ``mask`` (a MaskRaster on the map grid) restricts scoring to samples on
    CLOUD/SHADOW pixels. Samples on NODATA map pixels are counted in
    ``excluded`` only.
    """
    if split is not None:
        samples = samples.select(split)
    geom = label_map.geometry
    col, row = samples.pixels(geom)
    inside = geom.contains(col, row)
    if not np.all(inside):
        bad = int(np.flatnonzero(~inside)[0])
        raise FusionError("SAMPLE_OFF_GRID", f"sample at ({samples.x[bad]}, {samples.y[bad]}) is off the map")
    ref = samples.label
    if np.any(ref >= label_map.num_classes):
        raise FusionError("BAD_SAMPLE", "sample label exceeds the map's class count")
    if mask is not None:
        if mask.geometry != geom:
            raise FusionError("GEOMETRY_MISMATCH", "mask grid differs from map grid")
        keep = mask.cloud_or_shadow()[row, col]
        row, col, ref = row[keep], col[keep], ref[keep]
    pred = label_map.labels[row, col].astype(np.int64)
    nodata = pred == NODATA_LABEL
    c = label_map.num_classes
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (pred[~nodata], ref[~nodata]), 1)
    return ConfusionMatrix(counts, int(nodata.sum()))


def overall_accuracy(cm):
    if cm.total == 0:
        raise FusionError("EMPTY_MATRIX", "no scored samples")
    return float(np.trace(cm.counts)) / cm.total


def class_accuracies(cm):
    """List of (user_accuracy, producer_accuracy) per class; None if undefined."""
    diag = np.diag(cm.counts)
    rows = cm.counts.sum(axis=1)
    cols = cm.counts.sum(axis=0)
    out = []
    for i in range(cm.num_classes):
        ua = diag[i] / rows[i] if rows[i] else None
        pa = diag[i] / cols[i] if cols[i] else None
        out.append((None if ua is None else float(ua), None if pa is None else float(pa)))
    return out


def percent(value, digits=0):
    """Percentage string rounded half up, as printed in accuracy tables."""
    if value is None:
        return "-"
    scaled = math.floor(100 * value * 10**digits + 0.5 + 1e-9)
    return f"{scaled / 10**digits:.{digits}f}"


def format_table(cm, names=None):
    """Aligned text table: counts, row totals with UA, column totals, PA, OA."""
    c = cm.num_classes
    names = list(names) if names else [f"C{i}" for i in range(c)]
    acc = class_accuracies(cm)
    rows = cm.counts.sum(axis=1)
    cols = cm.counts.sum(axis=0)
    lines = [["Name", *names, "Total", "UA (%)"]]
    for i in range(c):
        lines.append([names[i], *map(str, cm.counts[i]), str(rows[i]), percent(acc[i][0])])
    lines.append(["Total", *map(str, cols), str(cm.total), ""])
    oa = percent(overall_accuracy(cm), 1) if cm.total else "-"
    lines.append(["PA (%)", *(percent(a[1]) for a in acc), "", oa])
    width = max(len(cell) for line in lines for cell in line)
    text = "\n".join("  ".join(cell.rjust(width) for cell in line) for line in lines)
    return text + "\n"


def to_csv(cm, names=None):
    """Counts with totals, then a per-class UA/PA block with raw fractions."""
    c = cm.num_classes
    names = list(names) if names else [f"C{i}" for i in range(c)]
    buf = io.StringIO()
    buf.write(",".join(["name", *names, "total"]) + "\n")
    for i in range(c):
        buf.write(",".join([names[i], *map(str, cm.counts[i]), str(cm.counts[i].sum())]) + "\n")
    buf.write(",".join(["total", *map(str, cm.counts.sum(axis=0)), str(cm.total)]) + "\n")
    buf.write("\nclass,user_accuracy,producer_accuracy\n")
    for name, (ua, pa) in zip(names, class_accuracies(cm)):
        buf.write(f"{name},{'' if ua is None else repr(ua)},{'' if pa is None else repr(pa)}\n")
    if cm.total:
        buf.write(f"\noverall_accuracy,{overall_accuracy(cm)!r}\n")
    buf.write(f"excluded_nodata,{cm.excluded}\n")
    return buf.getvalue()
