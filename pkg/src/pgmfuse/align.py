"""
Fine-to-coarse pixel grouping and the coarse-source reliability weight.

A fine pixel belongs to the coarse cell containing its center. Within a
group, the agreement of pixel n is the share of the group whose most
probable class equals that of n (n included). The reliability of the
coarse source at n is ``g / (g + 1 - m)`` where ``m`` is the missing share
of the coarse cell's time series.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import FusionError
from .raster import BandRaster, GridGeometry, ProbabilityRaster, read_container, write_container

#: assignment value of fine pixels outside the coarse extent
NO_GROUP = -1

# float32 payloads hold integers exactly up to 2**24
_MAX_CELLS = 2**24


@dataclass(frozen=True, eq=False)
class GroupMap:
    """Many-to-one map from fine pixels (row-major flat index) to coarse cells."""

    fine_geometry: GridGeometry
    coarse_geometry: GridGeometry
    assignment: np.ndarray

    def __post_init__(self):
        assignment = np.asarray(self.assignment, dtype=np.int64).ravel()
        if assignment.size != self.fine_geometry.size:
            raise FusionError("SIZE_MISMATCH", "assignment length differs from fine pixel count")
        if np.any((assignment < NO_GROUP) | (assignment >= self.coarse_geometry.size)):
            raise FusionError("BAD_GROUP", "assignment outside coarse cell range")
        assignment.setflags(write=False)
        object.__setattr__(self, "assignment", assignment)

    @cached_property
    def sizes(self):
        """Number of fine pixels per coarse cell."""
        grouped = self.assignment[self.assignment != NO_GROUP]
        return np.bincount(grouped, minlength=self.coarse_geometry.size)

    @cached_property
    def members(self):
        """List over coarse cells of the fine flat indices they contain."""
        order = np.argsort(self.assignment, kind="stable")
        keys = self.assignment[order]
        start = np.searchsorted(keys, 0)
        bounds = np.cumsum(self.sizes)
        return np.split(order[start:], bounds[:-1])

    def coarse_to_fine(self, values, fill=np.nan):
        """Broadcast per-cell values (cells, ...) onto fine pixels (fine, ...)."""
        flat = np.asarray(values).reshape(self.coarse_geometry.size, -1)
        out = np.full((self.fine_geometry.size, flat.shape[1]), fill, dtype=np.result_type(flat.dtype, np.float64))
        grouped = self.assignment != NO_GROUP
        out[grouped] = flat[self.assignment[grouped]]
        return out

    def _write(self, path):
        c = self.coarse_geometry
        if c.size >= _MAX_CELLS:
            raise FusionError("IO_FAILURE", "too many coarse cells for a float32 index raster")
        write_container(
            path,
            "groupmap",
            self.fine_geometry,
            self.assignment.reshape(self.fine_geometry.shape).astype(np.float32),
            nodata=float(NO_GROUP),
            coarse_width=c.width,
            coarse_height=c.height,
            coarse_origin_x=c.origin_x,
            coarse_origin_y=c.origin_y,
            coarse_pixel_size_x=c.pixel_size_x,
            coarse_pixel_size_y=c.pixel_size_y,
        )

    @classmethod
    def _read(cls, path):
        header, fine, payload = read_container(path)
        if header.get("kind") != "groupmap" or payload.shape[2] != 1:
            raise FusionError("MALFORMED_HEADER", f"{path} is not a groupmap raster")
        try:
            coarse = GridGeometry(
                int(header["coarse_width"]),
                int(header["coarse_height"]),
                float(header["coarse_origin_x"]),
                float(header["coarse_origin_y"]),
                float(header["coarse_pixel_size_x"]),
                float(header["coarse_pixel_size_y"]),
            )
        except (KeyError, ValueError) as exc:
            raise FusionError("MALFORMED_HEADER", f"{path}: coarse geometry: {exc}") from exc
        return cls(fine, coarse, payload[:, :, 0].astype(np.int64))


def build_group_map(fine, coarse):
    """Assign each fine pixel to the coarse cell containing its center."""
    x, y = fine.centers()
    col, row = coarse.map_to_pixel(x, y)
    inside = coarse.contains(col, row)
    if not np.any(inside):
        raise FusionError("EMPTY_OVERLAP", "no fine pixel center falls inside the coarse grid")
    assignment = np.where(inside, row * coarse.width + col, NO_GROUP)
    return GroupMap(fine, coarse, assignment.ravel())


def agreement_from_labels(labels, groups):
    """Group agreement for flat MAP labels (negative = no label).

    Unlabelled pixels neither count toward group sizes nor receive a value
    (NaN); grouped pixels get count(same class in group) / labelled group
    size; ungrouped labelled pixels get 0.
    """
    labels = np.asarray(labels, dtype=np.int64).ravel()
    cell = groups.assignment
    labelled = labels >= 0
    use = labelled & (cell != NO_GROUP)
    num_classes = int(labels.max()) + 1 if np.any(labelled) else 1
    key = cell[use] * num_classes + labels[use]
    counts = np.bincount(key, minlength=groups.coarse_geometry.size * num_classes)
    size = np.bincount(cell[use], minlength=groups.coarse_geometry.size)
    g = np.full(labels.shape, np.nan)
    g[labelled] = 0.0
    g[use] = counts[key] / size[cell[use]]
    return g


def group_agreement(fused_fine, groups):
    """Per-pixel agreement g between each pixel's MAP class and its group."""
    if not isinstance(fused_fine, ProbabilityRaster):
        raise TypeError("group_agreement expects a ProbabilityRaster")
    if fused_fine.geometry != groups.fine_geometry:
        raise FusionError("GEOMETRY_MISMATCH", "fused raster is not on the group map's fine grid")
    labels = fused_fine.argmax().labels.astype(np.int64).ravel()
    labels[~fused_fine.valid.ravel()] = -1
    g = agreement_from_labels(labels, groups)
    return BandRaster(fused_fine.geometry, g.reshape(fused_fine.geometry.shape))


def reliability_weight(g, m):
    """Trust in the coarse source: ``g / (g + 1 - m)``, with 0/0 taken as 0.

    Works elementwise on arrays; NaN inputs give NaN.
    """
    g = np.asarray(g, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    finite = np.isfinite(g) & np.isfinite(m)
    if np.any(finite & ((g < 0) | (g > 1) | (m < 0) | (m > 1))):
        raise FusionError("BAD_FRACTION", "g and m must lie in [0, 1]")
    # g + (1 - m) never rounds below g, so w <= 1 holds in floating point
    denom = g + (1.0 - m)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(denom > 0, g / np.where(denom > 0, denom, 1.0), 0.0)
    w = np.where(finite, w, np.nan)
    return float(w) if w.ndim == 0 else w
