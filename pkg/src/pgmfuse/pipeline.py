"""
Workflow orchestration behind the command-line interface.

Each ``cmd_*`` function takes plain arguments, writes its outputs and
returns an exit status: 0 success, 1 domain error (``FusionError``),
2 usage/configuration error (``ConfigError``). Messages go to the
``pgmfuse`` logger and to stdout/stderr via the CLI.
"""

from __future__ import annotations

import hashlib
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import assess, synth
from .align import build_group_map
from .errors import FusionError
from .features import SG_ORDER, SG_WINDOW, GlcmParams, glcm_textures, ndvi
from .pgm import FusionMode, fuse_raster_detailed
from .raster import MaskFlag, header_path, read_raster, read_samples, write_raster, write_samples
from .unmix import (
    assign_roles,
    fraction_raster,
    nfindr_extract,
    read_endmembers,
    write_endmembers,
)

log = logging.getLogger("pgmfuse")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class ConfigError(Exception):
    """Invalid or incomplete run configuration (exit status 2)."""


def _parse_roles(text):
    """'CLOUD=0,SOIL=3' -> {'CLOUD': 0, 'SOIL': 3}."""
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"bad roles entry {item!r}; expected ROLE=index")
        try:
            out[key.strip().upper()] = int(value)
        except ValueError as exc:
            raise ConfigError(f"bad roles entry {item!r}") from exc
    return out


@dataclass
class RunConfig:
    mode: str = "two_stage"
    prior_a: str | None = None
    prior_b: str | None = None
    prior_m: str | None = None
    mask_b: str | None = None
    bands_b: str | None = None
    f_map: str | None = None
    endmembers: str | None = None
    roles: str | None = None
    red_band: int = synth.RED_BAND
    nir_band: int = synth.NIR_BAND
    coarse_ts: str | None = None
    m_fractions: str | None = None
    sg_window: int = SG_WINDOW
    sg_order: int = SG_ORDER
    glcm_levels: int = 16
    glcm_window: int = 7
    glcm_offset: str = "1,1"
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    out: str = "fused"

    def validate(self):
        try:
            mode = FusionMode(self.mode.lower())
        except ValueError as exc:
            raise ConfigError(f"mode must be two_stage or a_only, got {self.mode!r}") from exc
        if not self.prior_a:
            raise ConfigError("prior_a is required")
        if mode is FusionMode.TWO_STAGE:
            missing = [k for k in ("prior_b", "mask_b") if not getattr(self, k)]
            if missing:
                raise ConfigError(f"two_stage mode requires {', '.join(missing)}")
            if not (self.bands_b or self.f_map):
                raise ConfigError("two_stage mode requires bands_b or f_map")
        if (self.coarse_ts or self.m_fractions) and not self.prior_m:
            raise ConfigError("coarse_ts/m_fractions given without prior_m")
        if self.sg_window < 1 or self.sg_window % 2 == 0 or not 0 <= self.sg_order < self.sg_window:
            raise ConfigError("sg_window must be odd and sg_order in [0, sg_window)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.glcm_params()
            _parse_roles(self.roles)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return mode

    def glcm_params(self):
        dx, dy = (int(v) for v in self.glcm_offset.split(","))
        return GlcmParams(self.glcm_levels, self.glcm_window, (dx, dy))

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, values):
        cfg = cls()
        cfg.update(values)
        return cfg

    def update(self, values):
        types = {f.name: f.type for f in fields(self)}
        for key, value in values.items():
            if value is None:
                continue
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            if "int" in str(types[key]) and not isinstance(value, int):
                try:
                    value = int(value)
                except ValueError as exc:
                    raise ConfigError(f"{key} must be an integer") from exc
            setattr(self, key, value)
        return self


def read_config_file(path):
    """Plain-text ``key = value`` (or ``key: value``) lines; '#' starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            key, found, value = line.partition(sep)
            if found:
                break
        else:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        values[key.strip()] = value.strip()
    return values


def _digest(path):
    h = hashlib.sha256()
    for p in (Path(path), header_path(path)):
        if p.exists():
            h.update(p.read_bytes())
    return h.hexdigest()


def _write_manifest(path, entries, inputs):
    lines = [f"{k}: {v}" for k, v in entries]
    lines += [f"input {name}: {value} sha256={_digest(value)}" for name, value in inputs if value]
    Path(path).write_text("\n".join(lines) + "\n")


def _f_map(cfg, mask):
    if cfg.f_map:
        return read_raster(cfg.f_map, "band"), None
    bands = read_raster(cfg.bands_b, "band")
    if cfg.endmembers:
        em = read_endmembers(cfg.endmembers)
    else:
        usable = ~bands.nodata_mask() & (mask.flags != MaskFlag.NODATA)
        em = nfindr_extract(bands.data[usable].astype(np.float64), 4)
    if em.roles is None or cfg.roles:
        em = assign_roles(em, cfg.red_band, cfg.nir_band, _parse_roles(cfg.roles))
    return fraction_raster(bands, mask, em), em


def cmd_fuse(cfg):
    """Run the fusion workflow described by a RunConfig; returns exit status."""
    mode = cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    a = read_raster(cfg.prior_a, "probability")
    b = mask = f_map = None
    endmembers = None
    if mode is FusionMode.TWO_STAGE:
        b = read_raster(cfg.prior_b, "probability")
        mask = read_raster(cfg.mask_b, "mask")
        f_map, endmembers = _f_map(cfg, mask)

    m = groups = m_frac = None
    if cfg.prior_m:
        m = read_raster(cfg.prior_m, "probability")
        groups = build_group_map(a.geometry, m.geometry)
        if cfg.m_fractions:
            m_frac = read_raster(cfg.m_fractions, "band")
        elif cfg.coarse_ts:
            m_frac = read_raster(cfg.coarse_ts, "timeseries").missing_fraction()

    res = fuse_raster_detailed(a, b, m, f_map, mask, groups, m_frac, mode, cfg.workers)

    write_raster(res.posterior, out / "posterior.bin")
    write_raster(res.labels, out / "labels.bin")
    write_raster(res.stage1, out / "stage1.bin")
    if f_map is not None:
        write_raster(f_map, out / "f_map.bin")
    if endmembers is not None:
        write_endmembers(endmembers, out / "endmembers.csv")
    if res.weight is not None:
        write_raster(res.weight, out / "w_map.bin")
        write_raster(res.agreement, out / "g_map.bin")
    _write_manifest(
        out / "manifest.txt",
        [
            ("mode", mode.value),
            ("stage1_keep", "1 - 0.5 * (1 - f)"),
            ("stage2_keep", "1 - 0.5 * w"),
            ("reliability", "w = g / (g + 1 - m)"),
            ("sg_window", cfg.sg_window),
            ("sg_order", cfg.sg_order),
            ("roles", cfg.roles or "auto"),
            ("classes", a.num_classes),
            ("pixels", a.geometry.size),
            ("nodata_pixels", int((~res.labels.valid).sum())),
            ("coarse_applied_pixels", int(res.applied.sum())),
        ],
        [
            ("prior_a", cfg.prior_a),
            ("prior_b", cfg.prior_b if mode is FusionMode.TWO_STAGE else None),
            ("prior_m", cfg.prior_m),
            ("mask_b", cfg.mask_b if mode is FusionMode.TWO_STAGE else None),
            ("bands_b", cfg.bands_b if mode is FusionMode.TWO_STAGE and not cfg.f_map else None),
            ("f_map", cfg.f_map),
            ("endmembers", cfg.endmembers),
            ("coarse_ts", cfg.coarse_ts),
            ("m_fractions", cfg.m_fractions),
        ],
    )
    log.info("fused %d pixels (%s) into %s", a.geometry.size, mode.value, out)
    return EXIT_OK


def cmd_assess(map_path, samples_path, mask_path=None, names=None, csv_path=None, stream=None):
    """Print the confusion table of a label map against validation samples."""
    stream = stream or sys.stdout
    label_map = read_raster(map_path, "label")
    samples = read_samples(samples_path)
    mask = read_raster(mask_path, "mask") if mask_path else None
    cm = assess.score(label_map, samples, mask)
    if names and len(names) != cm.num_classes:
        raise ConfigError(f"{len(names)} class names for {cm.num_classes} classes")
    if cm.total == 0:
        stream.write(f"0 samples scored ({cm.excluded} on nodata pixels)\n")
    else:
        stream.write(assess.format_table(cm, names))
        stream.write(f"{cm.total} samples scored, {cm.excluded} on nodata pixels\n")
    if csv_path:
        Path(csv_path).write_text(assess.to_csv(cm, names))
    return EXIT_OK


def cmd_synth(out_dir, seed=0, spec=None):
    """Write a synthetic scene and its source probability rasters."""
    spec = spec or synth.SceneSpec()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = synth.generate_scene(spec, seed)
    prior_a, prior_b, prior_m = synth.scene_priors(scene)
    write_raster(scene.truth, out / "truth.bin")
    write_raster(scene.bands_a, out / "bands_a.bin")
    write_raster(scene.bands_b, out / "bands_b.bin")
    write_raster(scene.mask_b, out / "mask_b.bin")
    write_raster(scene.coarse, out / "coarse_ts.bin")
    write_raster(prior_a, out / "prior_a.bin")
    write_raster(prior_b, out / "prior_b.bin")
    write_raster(prior_m, out / "prior_m.bin")
    write_samples(scene.samples, out / "samples.csv")
    write_endmembers(scene.endmembers, out / "endmembers_true.csv")
    lines = [f"seed = {seed}"] + [f"{k} = {v}" for k, v in spec.as_dict().items()]
    (out / "scene.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_unmix(bands_path, mask_path, out_dir, endmembers_path=None, roles=None, red_band=3, nir_band=4):
    """Cloud/shadow fraction map (and extracted endmembers) for one scene."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = RunConfig(bands_b=bands_path, endmembers=endmembers_path, roles=roles, red_band=red_band, nir_band=nir_band)
    mask = read_raster(mask_path, "mask")
    f_map, em = _f_map(cfg, mask)
    write_raster(f_map, out / "f_map.bin")
    write_endmembers(em, out / "endmembers.csv")
    return EXIT_OK


def cmd_features(bands_path, out_dir, red_band=3, nir_band=4, texture_band=None, glcm=None):
    """NDVI and GLCM textures (mean, contrast, entropy) of a band stack."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bands = read_raster(bands_path, "band")
    write_raster(ndvi(bands.band(red_band), bands.band(nir_band)), out / "ndvi.bin")
    tb = nir_band if texture_band is None else texture_band
    write_raster(glcm_textures(bands.band(tb), glcm or GlcmParams()), out / "textures.bin")
    return EXIT_OK


def cmd_smooth(series_path, out_dir, window=SG_WINDOW, order=SG_ORDER):
    """Gap-fill and smooth a coarse time-series stack; record missing fractions."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stack = read_raster(series_path, "timeseries")
    write_raster(stack.smoothed(window, order), out / "smoothed_ts.bin")
    write_raster(stack.missing_fraction(), out / "m_fractions.bin")
    return EXIT_OK


def run(name, fn, *args, **kwargs):
    """Call command ``name``, mapping exceptions onto exit codes."""
    try:
        return fn(*args, **kwargs)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FusionError as exc:
        print(f"error [{name}]: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

