"""
Endmember extraction and sum-to-one linear unmixing.

The cloud/shadow fraction of a pixel is ``(c + s) / (c + s + v + d)`` over
its cloud, soil, vegetation and dark abundances. Abundances come from an
equality-constrained least-squares fit (sum to one, no sign constraint);
negative values are clamped only when forming the fraction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import FusionError
from .raster import BandRaster, MaskFlag

CLOUD = "CLOUD"
SOIL = "SOIL"
VEGETATION = "VEGETATION"
DARK = "DARK"
ROLES = (CLOUD, SOIL, VEGETATION, DARK)

# relative volume gain needed to accept a vertex swap
_VOLUME_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class EndmemberSet:
    """``spectra`` is (E, B); ``roles`` is None or one role name per row."""

    spectra: np.ndarray
    roles: tuple | None = None
    indices: np.ndarray | None = None

    def __post_init__(self):
        spectra = np.array(self.spectra, dtype=np.float64)
        if spectra.ndim != 2 or spectra.shape[0] < 1:
            raise ValueError("spectra must be a 2-D (endmembers, bands) array")
        e, b = spectra.shape
        if e > b + 1:
            raise FusionError("TOO_MANY_ENDMEMBERS", f"{e} endmembers cannot form a simplex in {b} bands")
        if self.roles is not None:
            roles = tuple(str(r).upper() for r in self.roles)
            if len(roles) != e or any(r not in ROLES for r in roles):
                raise ValueError(f"roles must be {e} names from {ROLES}")
            if e == 4 and len(set(roles)) != 4:
                raise ValueError("four endmembers need four distinct roles")
            object.__setattr__(self, "roles", roles)
        spectra.setflags(write=False)
        object.__setattr__(self, "spectra", spectra)

    @property
    def num_endmembers(self):
        return self.spectra.shape[0]

    @property
    def num_bands(self):
        return self.spectra.shape[1]

    def with_roles(self, roles):
        return EndmemberSet(self.spectra, roles, self.indices)

    def role_index(self, role):
        if self.roles is None:
            raise FusionError("MISSING_ROLES", "endmember roles are not assigned")
        return self.roles.index(role)


@dataclass(frozen=True, eq=False)
class AbundanceVector:
    fractions: np.ndarray
    roles: tuple | None = None

    def __getitem__(self, role):
        if self.roles is None:
            raise KeyError(role)
        return float(self.fractions[self.roles.index(role)])


# ---------------------------------------------------------------------------
# N-FINDR


def principal_projection(pixels, dims):
    """Project (P, B) spectra onto their leading ``dims`` principal axes."""
    x = np.asarray(pixels, dtype=np.float64)
    centered = x - x.mean(axis=0)
    if dims == 0:
        return np.zeros((x.shape[0], 0))
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axes = vt[:dims]
    # deterministic sign: largest loading positive
    flip = np.sign(axes[np.arange(axes.shape[0]), np.argmax(np.abs(axes), axis=1)])
    flip[flip == 0] = 1.0
    axes = axes * flip[:, None]
    proj = centered @ axes.T
    if proj.shape[1] < dims:
        proj = np.hstack([proj, np.zeros((x.shape[0], dims - proj.shape[1]))])
    return proj


def simplex_volume(vertices):
    """Volume of the simplex spanned by (E, E-1) reduced-space vertices."""
    v = np.asarray(vertices, dtype=np.float64)
    e = v.shape[0]
    m = np.vstack([np.ones(e), v.T])
    return abs(np.linalg.det(m)) / math.factorial(e - 1)


def _seed(proj, e):
    """E distinct pixels chosen by extreme principal-axis projections."""
    chosen = []
    candidates = []
    if proj.shape[1]:
        candidates += [int(np.argmin(proj[:, 0])), int(np.argmax(proj[:, 0]))]
        for k in range(1, proj.shape[1]):
            candidates.append(int(np.argmax(np.abs(proj[:, k]))))
    candidates += list(range(proj.shape[0]))
    for idx in candidates:
        if idx not in chosen:
            chosen.append(idx)
        if len(chosen) == e:
            break
    return chosen


def _replace_vertices(aug, current, volume, max_iterations, scale):
    e = len(current)
    for _ in range(max_iterations):
        improved = False
        for slot in range(e):
            trial = np.repeat(aug[current][None], aug.shape[0], axis=0)
            trial[:, slot] = aug
            vols = np.abs(np.linalg.det(trial))
            best = int(np.argmax(vols))
            if vols[best] > volume * (1 + _VOLUME_RTOL) + _VOLUME_RTOL * scale and best not in current:
                current[slot] = best
                volume = vols[best]
                improved = True
        if not improved:
            break
    return current, volume


def nfindr_extract(pixels, num_endmembers, max_iterations=100, restarts=16, seed=0):
    """Find the pixels spanning the largest simplex by vertex replacement.

    Spectra are reduced to ``num_endmembers - 1`` principal dimensions. From
    a seed, each sweep tries every pixel in every vertex slot and keeps a
    swap when it enlarges the volume; sweeps repeat until none improves or
    ``max_iterations`` sweeps have run. Single-seed replacement can stall
    in a local optimum, so the search is repeated from the principal-axis
    extremes and from ``restarts`` further seeds drawn with ``seed``; the
    largest simplex wins (ties go to the earliest run).

    Returns an ``EndmemberSet`` (roles unassigned) whose ``indices`` point
    into ``pixels``.
    """
    x = np.asarray(pixels, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("pixels must be (count, bands)")
    e = int(num_endmembers)
    if e < 2:
        raise ValueError("need at least two endmembers")
    if x.shape[0] < e:
        raise FusionError("TOO_FEW_PIXELS", f"{x.shape[0]} pixels for {e} endmembers")
    if e > x.shape[1] + 1:
        raise FusionError("TOO_MANY_ENDMEMBERS", f"{e} endmembers cannot form a simplex in {x.shape[1]} bands")
    proj = principal_projection(x, e - 1)
    # rows [1, y]: replacing a vertex swaps one row of the determinant
    aug = np.hstack([np.ones((x.shape[0], 1)), proj])
    scale = max(np.abs(proj).max(), 1e-300) ** (e - 1)

    rng = np.random.default_rng(seed)
    seeds = [_seed(proj, e)]
    seeds += [sorted(int(i) for i in rng.choice(x.shape[0], e, replace=False)) for _ in range(restarts)]
    best, best_volume = None, -1.0
    for start in seeds:
        start_volume = abs(np.linalg.det(aug[start]))
        current, volume = _replace_vertices(aug, list(start), start_volume, max_iterations, scale)
        if volume > best_volume * (1 + _VOLUME_RTOL):
            best, best_volume = current, volume
    if best_volume <= 1e-9 * scale:
        raise FusionError("DEGENERATE_CLOUD", "pixels do not span a simplex of nonzero volume")
    idx = np.array(best)
    return EndmemberSet(x[idx], None, idx)


def assign_roles(endmembers, red_band, nir_band, override=None):
    """Label four endmembers CLOUD/SOIL/VEGETATION/DARK.

    Heuristic: brightest mean reflectance is cloud, darkest is dark, largest
    NIR minus red among the rest is vegetation, the remaining one is soil.
    ``override`` maps role name to endmember index and wins over the
    heuristic for the roles it names.
    """
    if endmembers.num_endmembers != 4:
        raise ValueError("role assignment needs exactly four endmembers")
    s = endmembers.spectra
    roles = [None] * 4
    fixed = {}
    for role, idx in (override or {}).items():
        role = role.upper()
        if role not in ROLES or not 0 <= int(idx) < 4:
            raise ValueError(f"bad role override {role}={idx}")
        fixed[role] = int(idx)
    if len(set(fixed.values())) != len(fixed):
        raise ValueError("role override assigns one endmember twice")
    for role, idx in fixed.items():
        roles[idx] = role
    free = [i for i in range(4) if roles[i] is None]
    brightness = s.mean(axis=1)
    greenness = s[:, nir_band] - s[:, red_band]
    for role, key, pick in (
        (CLOUD, brightness, np.argmax),
        (DARK, brightness, np.argmin),
        (VEGETATION, greenness, np.argmax),
    ):
        if role in fixed:
            continue
        i = free[int(pick(key[free]))]
        roles[i] = role
        free.remove(i)
    for i in free:
        roles[i] = SOIL
    return endmembers.with_roles(roles)


# ---------------------------------------------------------------------------
# unmixing


def _difference_basis(spectra):
    """Affine parameterization a_last = 1 - sum(others); checks rank."""
    e = spectra.shape[0]
    ref = spectra[-1]
    d = (spectra[:-1] - ref).T  # (B, E-1)
    if e > 1:
        sv = np.linalg.svd(d, compute_uv=False)
        if sv.size < e - 1 or sv[-1] <= 1e-10 * max(sv[0], 1e-300):
            raise FusionError("RANK_DEFICIENT", "endmembers are affinely dependent")
    return ref, d


def unmix_spectra(spectra, endmembers):
    """Sum-to-one least-squares abundances for (P, B) spectra -> (P, E)."""
    x = np.asarray(spectra, dtype=np.float64)
    if x.shape[-1] != endmembers.num_bands:
        raise FusionError("DIMENSION_MISMATCH", "spectrum and endmember band counts differ")
    ref, d = _difference_basis(endmembers.spectra)
    flat = x.reshape(-1, x.shape[-1])
    if d.shape[1]:
        head = np.linalg.lstsq(d, (flat - ref).T, rcond=None)[0].T
    else:
        head = np.zeros((flat.shape[0], 0))
    last = 1.0 - head.sum(axis=1, keepdims=True)
    out = np.hstack([head, last])
    return out.reshape(x.shape[:-1] + (endmembers.num_endmembers,))


def unmix_pixel(spectrum, endmembers):
    """Abundances of one spectrum under the sum-to-one constraint."""
    return AbundanceVector(unmix_spectra(spectrum, endmembers), endmembers.roles)


def _fraction_from_array(ab, idx):
    clamped = np.clip(ab, 0.0, 1.0)
    c, s, v, d = (clamped[..., idx[r]] for r in ROLES)
    num = c + s
    den = num + v + d
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(f, 0.0, 1.0)


def cloud_shadow_fraction(abundance):
    """(c + s) / (c + s + v + d) after clamping each fraction to [0, 1]."""
    if abundance.roles is None:
        raise FusionError("MISSING_ROLES", "abundance roles are not assigned")
    idx = {r: abundance.roles.index(r) for r in ROLES}
    return float(_fraction_from_array(np.asarray(abundance.fractions, dtype=np.float64), idx))


def fraction_raster(bands, mask, endmembers):
    """Cloud/shadow fraction per pixel.

    CLOUD and SHADOW pixels are unmixed; CLEAR pixels are exactly 0;
    NODATA pixels (or pixels with nodata bands) are NaN.
    """
    if bands.geometry != mask.geometry:
        raise FusionError("GEOMETRY_MISMATCH", "bands and mask grids differ")
    if endmembers.roles is None:
        raise FusionError("MISSING_ROLES", "endmember roles are not assigned")
    idx = {r: endmembers.roles.index(r) for r in ROLES}
    flags = mask.flags
    out = np.zeros(bands.geometry.shape)
    bad = (flags == MaskFlag.NODATA) | bands.nodata_mask()
    sel = mask.cloud_or_shadow() & ~bad
    if np.any(sel):
        ab = unmix_spectra(bands.data[sel].astype(np.float64), endmembers)
        out[sel] = _fraction_from_array(ab, idx)
    out[bad] = np.nan
    return BandRaster(bands.geometry, out)


# ---------------------------------------------------------------------------
# CSV


def write_endmembers(endmembers, path):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["role"] + [f"b{i + 1}" for i in range(endmembers.num_bands)])
            roles = endmembers.roles or ("",) * endmembers.num_endmembers
            for role, row in zip(roles, endmembers.spectra):
                writer.writerow([role] + [repr(float(v)) for v in row])
    except OSError as exc:
        raise FusionError("IO_FAILURE", f"cannot write {path}: {exc}") from exc


def read_endmembers(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FusionError("IO_FAILURE", f"cannot read {path}: {exc}") from exc
    if not rows or rows[0][:1] != ["role"]:
        raise FusionError("MALFORMED_HEADER", f"{path}: expected header role,b1..bB")
    try:
        spectra = [[float(v) for v in r[1:]] for r in rows[1:]]
    except ValueError as exc:
        raise FusionError("MALFORMED_HEADER", f"{path}: {exc}") from exc
    roles = [r[0] for r in rows[1:]]
    return EndmemberSet(np.array(spectra), tuple(roles) if all(roles) else None)
