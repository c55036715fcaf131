"""Command-line entry point: ``pgmfuse <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .features import GlcmParams
from .pipeline import RunConfig
from .synth import SceneSpec


def _add_fuse(sub):
    p = sub.add_parser("fuse", help="fuse source probability rasters into a land-cover map")
    p.add_argument("--config", help="plain-text key = value file; flags override its keys")
    for key in RunConfig.keys():
        flags = [f"--{key}"]
        if "_" in key:
            flags.append(f"--{key.replace('_', '-')}")
        p.add_argument(*flags, dest=key, default=None, metavar=key.upper())


def _add_assess(sub):
    p = sub.add_parser("assess", help="confusion matrix and OA/UA/PA of a label map")
    p.add_argument("map", help="label raster")
    p.add_argument("samples", help="sample CSV (x,y,label,split)")
    p.add_argument("--mask", help="mask raster; score only samples on CLOUD/SHADOW pixels")
    p.add_argument("--names", help="comma-separated class names")
    p.add_argument("--csv", help="also write the matrix and statistics as CSV")


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate a deterministic synthetic scene")
    p.add_argument("out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spec", help="plain-text key = value scene spec file")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one scene spec key (repeatable)",
    )


def _add_unmix(sub):
    p = sub.add_parser("unmix", help="endmember extraction and cloud/shadow fraction map")
    p.add_argument("bands", help="band raster of the cloudy scene")
    p.add_argument("mask", help="mask raster of the cloudy scene")
    p.add_argument("out", help="output directory")
    p.add_argument("--endmembers", help="endmember CSV to use instead of extraction")
    p.add_argument("--roles", help="role override, e.g. CLOUD=0,DARK=2")
    p.add_argument("--red_band", "--red-band", type=int, default=3)
    p.add_argument("--nir_band", "--nir-band", type=int, default=4)


def _add_features(sub):
    p = sub.add_parser("features", help="NDVI and GLCM textures of a band raster")
    p.add_argument("bands")
    p.add_argument("out", help="output directory")
    p.add_argument("--red_band", "--red-band", type=int, default=3)
    p.add_argument("--nir_band", "--nir-band", type=int, default=4)
    p.add_argument("--texture_band", "--texture-band", type=int, default=None)
    p.add_argument("--grey_levels", "--grey-levels", type=int, default=16)
    p.add_argument("--window", type=int, default=7)
    p.add_argument("--offset", default="1,1", help="dx,dy")


def _add_smooth(sub):
    p = sub.add_parser("smooth", help="gap-fill and smooth a time-series raster")
    p.add_argument("series", help="timeseries raster")
    p.add_argument("out", help="output directory")
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--order", type=int, default=2)


def build_parser():
    parser = argparse.ArgumentParser(prog="pgmfuse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for add in (_add_fuse, _add_assess, _add_synth, _add_unmix, _add_features, _add_smooth):
        add(sub)
    return parser


def _fuse(args):
    values = pipeline.read_config_file(args.config) if args.config else {}
    values.update({k: getattr(args, k) for k in RunConfig.keys() if getattr(args, k) is not None})
    return pipeline.cmd_fuse(RunConfig.from_mapping(values))


def _synth(args):
    values = pipeline.read_config_file(args.spec) if args.spec else {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise pipeline.ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = value.strip()
    seed = int(values.pop("seed", args.seed))
    return pipeline.cmd_synth(args.out, seed, SceneSpec.from_dict(values))


def _dispatch(args):
    if args.command == "fuse":
        return _fuse(args)
    if args.command == "assess":
        names = args.names.split(",") if args.names else None
        return pipeline.cmd_assess(args.map, args.samples, args.mask, names, args.csv)
    if args.command == "synth":
        return _synth(args)
    if args.command == "unmix":
        return pipeline.cmd_unmix(
            args.bands, args.mask, args.out, args.endmembers, args.roles, args.red_band, args.nir_band
        )
    if args.command == "features":
        dx, dy = (int(v) for v in args.offset.split(","))
        glcm = GlcmParams(args.grey_levels, args.window, (dx, dy))
        return pipeline.cmd_features(args.bands, args.out, args.red_band, args.nir_band, args.texture_band, glcm)
    if args.command == "smooth":
        return pipeline.cmd_smooth(args.series, args.out, args.window, args.order)
    raise AssertionError(args.command)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return pipeline.run(args.command, _dispatch, args)


if __name__ == "__main__":
    sys.exit(main())
