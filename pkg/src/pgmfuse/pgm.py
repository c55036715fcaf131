"""
Per-pixel directed graphical model for fusing class distributions.

Each fine pixel n carries the chain

    LA_n, LB_n  ->  LL_n  ->  R_n  <-  M

where LA/LB are two fine-resolution sources, LL their combination, M the
coarse source covering the pixel and R the land-cover estimate. Both
conditional tables share one shape: the child copies parent 1 with weight
``k``, parent 2 with weight ``1 - k``, is certain when the parents agree and
never takes a third value. For stage 1 ``k = 1 - 0.5 (1 - f)`` with ``f``
the cloud/shadow fraction of source B; for stage 2 ``k = 1 - 0.5 w`` with
``w`` the coarse-source reliability.

Because most table entries are zero, marginalizing a stage collapses to an
O(C) per-class formula (``combine_pair``). ``joint_enumeration_oracle``
sums the full joint over the explicit tables and exists to check it.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .align import NO_GROUP, agreement_from_labels, reliability_weight
from .errors import FusionError
from .raster import NODATA_LABEL, BandRaster, LabelRaster, MaskFlag, ProbabilityRaster

#: tolerance on input distributions handed to the fusion formulas
NORM_TOL = 1e-9
#: joint enumeration is O(C**5); refuse beyond this
ORACLE_MAX_CLASSES = 16


class FusionMode(str, enum.Enum):
    TWO_STAGE = "two_stage"
    A_ONLY = "a_only"


def stage1_keep_weight(f):
    """Weight of source A given B's cloud/shadow fraction ``f``."""
    return 1.0 - 0.5 * (1.0 - np.asarray(f, dtype=np.float64))


def stage2_keep_weight(w):
    """Weight of the fine-source combination given coarse reliability ``w``."""
    return 1.0 - 0.5 * np.asarray(w, dtype=np.float64)


@dataclass(frozen=True)
class FusionCpd:
    """Tabular CPD P(child | primary, secondary) with keep weight ``k``."""

    num_classes: int
    keep_weight: float

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if not 0.0 <= self.keep_weight <= 1.0:
            raise ValueError(f"keep_weight must lie in [0, 1], got {self.keep_weight}")

    def table(self):
        """Array ``T[child, primary, secondary]``."""
        c = self.num_classes
        k = float(self.keep_weight)
        idx = np.arange(c)
        child = idx[:, None, None]
        primary = idx[None, :, None]
        secondary = idx[None, None, :]
        t = np.zeros((c, c, c))
        t = np.where((child == primary) & (primary == secondary), 1.0, t)
        t = np.where((child == primary) & (primary != secondary), k, t)
        t = np.where((child == secondary) & (primary != secondary), 1.0 - k, t)
        return t


def _check_distribution(p, name):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 0 or p.shape[-1] < 1:
        raise FusionError("UNNORMALIZED_INPUT", f"{name} must be a vector of class probabilities")
    if not np.all(np.isfinite(p)) or np.any(p < -NORM_TOL) or np.any(p > 1 + NORM_TOL):
        raise FusionError("UNNORMALIZED_INPUT", f"{name} has entries outside [0, 1]")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > NORM_TOL):
        raise FusionError("UNNORMALIZED_INPUT", f"{name} does not sum to one")
    return p


def combine_pair(p_primary, p_secondary, keep_weight, renormalize=True):
    """Marginal of a child whose CPD is ``FusionCpd(C, keep_weight)``.

    ``P(child=c) = A_c B_c + A_c (1 - B_c) k + (1 - A_c) B_c (1 - k)``.

    Inputs broadcast: distributions over the last axis, ``keep_weight`` over
    the leading axes. With ``renormalize=False`` the raw formula value is
    returned, which already sums to one up to rounding.
    """
    a = _check_distribution(p_primary, "p_primary")
    b = _check_distribution(p_secondary, "p_secondary")
    k = np.asarray(keep_weight, dtype=np.float64)
    if np.any(~np.isfinite(k)) or np.any(k < 0.5 - NORM_TOL) or np.any(k > 1 + NORM_TOL):
        raise FusionError("BAD_WEIGHT", "keep_weight must lie in [0.5, 1]")
    k = k[..., None]
    out = a * b + a * (1.0 - b) * k + (1.0 - a) * b * (1.0 - k)
    if not renormalize:
        return out
    total = out.sum(axis=-1, keepdims=True)
    assert np.all(np.abs(total - 1.0) <= NORM_TOL), "fusion output drifted from sum-to-one"
    return out / total


@dataclass(frozen=True, eq=False)
class PixelModel:
    """Priors and quality parameters of one pixel's graphical model.

    ``has_b`` switches the stage-1 combination on (otherwise LL = LA);
    ``apply_m`` switches the stage-2 coarse combination on (otherwise R = LL).
    """

    prior_a: np.ndarray
    prior_b: np.ndarray | None = None
    prior_m: np.ndarray | None = None
    f: float = 0.0
    w: float = 0.0
    has_b: bool = False
    apply_m: bool = False

    def __post_init__(self):
        a = _check_distribution(self.prior_a, "prior_a")
        object.__setattr__(self, "prior_a", a)
        for name, flag in (("prior_b", self.has_b), ("prior_m", self.apply_m)):
            p = getattr(self, name)
            if flag and p is None:
                raise FusionError("MISSING_INPUT", f"{name} required")
            if p is not None:
                p = _check_distribution(p, name)
                if p.shape != a.shape:
                    raise FusionError("UNNORMALIZED_INPUT", f"{name} has {p.shape[-1]} classes, prior_a {a.shape[-1]}")
                object.__setattr__(self, name, p)
        for name in ("f", "w"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise FusionError("BAD_FRACTION", f"{name} must lie in [0, 1], got {v}")
            object.__setattr__(self, name, v)

    @property
    def num_classes(self):
        return self.prior_a.shape[-1]


def fuse_pixel(model):
    """Posterior P(R) by two-step elimination with the O(C) stage formula."""
    if model.has_b:
        ll = combine_pair(model.prior_a, model.prior_b, stage1_keep_weight(model.f))
    else:
        ll = model.prior_a
    if model.apply_m:
        return combine_pair(ll, model.prior_m, stage2_keep_weight(model.w))
    return ll / ll.sum()


def joint_enumeration_oracle(model):
    """Posterior P(R) by summing the full joint over M, LA, LB and LL.

    Disabled stages are expressed through their tables (keep weight 1 makes
    the child copy its primary parent), so the same summation covers every
    flag combination. Memory and time are O(C**5); test-scale only.
    """
    c = model.num_classes
    if c > ORACLE_MAX_CLASSES:
        raise FusionError("TOO_MANY_CLASSES", f"oracle limited to {ORACLE_MAX_CLASSES} classes")
    uniform = np.full(c, 1.0 / c)
    pa = model.prior_a
    pb = model.prior_b if model.has_b else uniform
    pm = model.prior_m if model.apply_m else uniform
    k1 = float(stage1_keep_weight(model.f)) if model.has_b else 1.0
    k2 = float(stage2_keep_weight(model.w)) if model.apply_m else 1.0
    t1 = FusionCpd(c, k1).table()  # [LL, LA, LB]
    t2 = FusionCpd(c, k2).table()  # [R, LL, M]
    # full joint over (M, LA, LB, LL, R), then sum out everything but R
    joint = (
        pm[:, None, None, None, None]
        * pa[None, :, None, None, None]
        * pb[None, None, :, None, None]
        * np.transpose(t1, (1, 2, 0))[None, :, :, :, None]
        * np.transpose(t2, (2, 1, 0))[:, None, None, :, :]
    )
    posterior = joint.sum(axis=(0, 1, 2, 3))
    return posterior / posterior.sum()


def marginal_map(posterior):
    """Index of the most probable class; the smallest index wins ties."""
    return np.argmax(np.asarray(posterior), axis=-1)


# ---------------------------------------------------------------------------
# raster fusion


@dataclass(frozen=True, eq=False)
class FusionResult:
    posterior: ProbabilityRaster
    labels: LabelRaster
    stage1: ProbabilityRaster
    agreement: BandRaster | None
    weight: BandRaster | None
    applied: np.ndarray


def _chunked(fn, n, workers, *arrays):
    """Apply ``fn`` to contiguous row slices of ``arrays``; results concatenated."""
    if workers <= 1 or n < 2 * workers:
        return fn(*arrays)
    bounds = np.linspace(0, n, workers + 1).astype(int)
    slices = [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda s: fn(*(arr[s] for arr in arrays)), slices))
    return np.concatenate(parts, axis=0)


def _stage(primary, secondary, keep):
    if primary.shape[0] == 0:
        return primary.copy()
    return combine_pair(primary, secondary, keep)


def _same_grid(expected, raster, name):
    if raster.geometry != expected:
        raise FusionError("GEOMETRY_MISMATCH", f"{name} is not on the expected grid")


def fuse_raster_detailed(
    a,
    b=None,
    m_coarse=None,
    f_map=None,
    mask_b=None,
    groups=None,
    m_fractions=None,
    mode=FusionMode.TWO_STAGE,
    workers=1,
):
    """Run both fusion stages over a scene and keep the intermediates.

    Stage 1 (TWO_STAGE only) combines A and B wherever B has data, with
    ``f`` read from ``f_map``. Pixels flagged NODATA in ``mask_b`` keep
    LL = LA. Stage 2 runs when ``m_coarse`` is given: in TWO_STAGE mode only
    on CLOUD/SHADOW pixels of ``mask_b``, in A_ONLY mode on every pixel; in
    both cases only for pixels that fall inside a coarse cell. Agreement is
    computed on the full stage-1 raster before stage 2 starts. Missing
    fractions default to 0 when ``m_fractions`` is absent.
    """
    mode = FusionMode(mode)
    geom = a.geometry
    c = a.num_classes
    n = geom.size
    two_stage = mode is FusionMode.TWO_STAGE
    if two_stage:
        for name, value in (("b", b), ("mask_b", mask_b), ("f_map", f_map)):
            if value is None:
                raise FusionError("MISSING_INPUT", f"TWO_STAGE fusion needs {name}")
        _same_grid(geom, b, "b")
        _same_grid(geom, mask_b, "mask_b")
        _same_grid(geom, f_map, "f_map")
        if b.num_classes != c:
            raise FusionError("GEOMETRY_MISMATCH", "b has a different class count")
    if m_coarse is not None:
        if groups is None:
            raise FusionError("MISSING_INPUT", "coarse fusion needs a group map")
        if groups.fine_geometry != geom:
            raise FusionError("GEOMETRY_MISMATCH", "group map fine grid differs from a")
        _same_grid(groups.coarse_geometry, m_coarse, "m_coarse")
        if m_coarse.num_classes != c:
            raise FusionError("GEOMETRY_MISMATCH", "m_coarse has a different class count")
        if m_fractions is not None:
            _same_grid(groups.coarse_geometry, m_fractions, "m_fractions")

    pa = a.probabilities().reshape(n, c)
    valid = a.valid.ravel().copy()

    # stage 1
    ll = pa.copy()
    if two_stage:
        flags = mask_b.flags.ravel()
        f = f_map.values(0).ravel()
        pb = b.probabilities().reshape(n, c)
        b_valid = b.valid.ravel()
        use_b = flags != MaskFlag.NODATA
        f_ok = np.isfinite(f)
        if np.any(use_b & valid & f_ok & ((f < 0) | (f > 1))):
            raise FusionError("BAD_FRACTION", "f_map values must lie in [0, 1]")
        use_b &= f_ok
        valid &= ~use_b | b_valid
        sel = np.flatnonzero(use_b & valid)
        if sel.size:
            keep = stage1_keep_weight(f[sel])
            ll[sel] = _chunked(_stage, sel.size, workers, pa[sel], pb[sel], keep)
    ll[~valid] = np.nan

    posterior = ll.copy()
    agreement = weight = None
    applied = np.zeros(n, dtype=bool)
    if m_coarse is not None:
        ll_labels = np.full(n, -1, dtype=np.int64)
        ll_labels[valid] = marginal_map(ll[valid])
        g = agreement_from_labels(ll_labels, groups)
        cell = groups.assignment
        grouped = cell != NO_GROUP
        m = np.zeros(n)
        if m_fractions is not None:
            m_cells = m_fractions.values(0).ravel()
            m[grouped] = m_cells[cell[grouped]]
        w = np.full(n, np.nan)
        ok = np.isfinite(g) & np.isfinite(m)
        w[ok] = reliability_weight(g[ok], m[ok])
        pm_cells = m_coarse.probabilities().reshape(-1, c)
        pm = np.full((n, c), np.nan)
        pm[grouped] = pm_cells[cell[grouped]]
        applied = valid & grouped
        if two_stage:
            applied &= mask_b.cloud_or_shadow().ravel()
        # a required coarse prior that is missing voids the pixel
        void = applied & (np.isnan(pm).any(axis=1) | ~np.isfinite(w))
        valid &= ~void
        applied &= ~void
        sel = np.flatnonzero(applied)
        if sel.size:
            keep = stage2_keep_weight(w[sel])
            posterior[sel] = _chunked(_stage, sel.size, workers, ll[sel], pm[sel], keep)
        posterior[~valid] = np.nan
        agreement = BandRaster(geom, g.reshape(geom.shape))
        weight = BandRaster(geom, w.reshape(geom.shape))

    labels = np.full(n, NODATA_LABEL, dtype=np.uint8)
    labels[valid] = marginal_map(posterior[valid])
    return FusionResult(
        posterior=ProbabilityRaster(geom, posterior.reshape(geom.shape + (c,))),
        labels=LabelRaster(geom, c, labels.reshape(geom.shape)),
        stage1=ProbabilityRaster(geom, ll.reshape(geom.shape + (c,))),
        agreement=agreement,
        weight=weight,
        applied=applied.reshape(geom.shape),
    )


def fuse_raster(
    a,
    b=None,
    m_coarse=None,
    f_map=None,
    mask_b=None,
    groups=None,
    m_fractions=None,
    mode=FusionMode.TWO_STAGE,
    workers=1,
):
    """Fuse probability rasters; returns ``(posterior, labels)``.

    See ``fuse_raster_detailed`` for the stage rules and intermediates.
    """
    res = fuse_raster_detailed(a, b, m_coarse, f_map, mask_b, groups, m_fractions, mode, workers)
    return res.posterior, res.labels
