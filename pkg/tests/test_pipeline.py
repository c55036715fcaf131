import hashlib
import io

import numpy as np
import pytest
from conftest import TABLES, fuse_config
from numpy.testing import assert_array_equal

from pgmfuse import GridGeometry, LabelRaster, SampleSet, read_raster, write_raster, write_samples
from pgmfuse.cli import main
from pgmfuse.raster import header_path
from pgmfuse.pipeline import ConfigError, RunConfig, cmd_assess, cmd_fuse, read_config_file
from pgmfuse.synth import SceneSpec, generate_scene

SUBCOMMANDS = ["fuse", "assess", "synth", "unmix", "features", "smooth"]


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.mark.parametrize("name", SUBCOMMANDS)
def test_subcommand_help(name, capsys):
    with pytest.raises(SystemExit) as exc:
        main([name, "--help"])
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_usage_errors_exit_2(tmp_path, scene_dir):
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 2
    args = ["fuse", "--prior_a", str(scene_dir / "prior_a.bin"), "--out", str(tmp_path)]
    assert main(args) == 2  # two_stage without prior_b / mask_b
    assert main(args + ["--mode", "sideways"]) == 2
    assert main(args + ["--mode", "a_only", "--workers", "zero"]) == 2


def test_domain_error_exits_1(tmp_path, capsys):
    rc = main(["fuse", "--mode", "a_only", "--prior_a", str(tmp_path / "none.bin"), "--out", str(tmp_path)])
    assert rc == 1
    assert "IO_FAILURE" in capsys.readouterr().err


def test_a_only_without_coarse_is_argmax(tmp_path, scene_dir):
    rc = main(["fuse", "--mode", "a_only", "--prior-a", str(scene_dir / "prior_a.bin"), "--out", str(tmp_path)])
    assert rc == 0
    a = read_raster(scene_dir / "prior_a.bin", "probability")
    labels = read_raster(tmp_path / "labels.bin", "label")
    assert_array_equal(labels.labels, a.argmax().labels)


def test_two_stage_outputs_and_manifest(tmp_path, scene_dir):
    assert cmd_fuse(fuse_config(scene_dir, tmp_path)) == 0
    for name in ["posterior", "labels", "stage1", "f_map", "w_map", "g_map"]:
        assert (tmp_path / f"{name}.bin").exists(), name
    manifest = (tmp_path / "manifest.txt").read_text()
    assert "mode" in manifest and "two_stage" in manifest
    # input digests cover payload and header
    prior_a = scene_dir / "prior_a.bin"
    h = hashlib.sha256(prior_a.read_bytes() + header_path(prior_a).read_bytes()).hexdigest()
    assert f"sha256={h}" in manifest


def test_config_file_and_flag_override(tmp_path, scene_dir):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(
        "# a-only run\n"
        f"mode = a_only\nprior_a = {scene_dir / 'prior_a.bin'}\n"
        f"prior_m: {scene_dir / 'prior_m.bin'}\nworkers = 3\nout = {tmp_path / 'ignored'}\n"
    )
    values = read_config_file(cfg_path)
    assert values["mode"] == "a_only" and values["workers"] == "3"
    rc = main(["fuse", "--config", str(cfg_path), "--out", str(tmp_path / "used")])
    assert rc == 0
    assert (tmp_path / "used" / "labels.bin").exists()
    assert not (tmp_path / "ignored").exists()


def test_unknown_config_key():
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"colour": "blue"})


def test_repeated_runs_byte_identical(tmp_path, scene_dir):
    for run, workers in (("one", 1), ("two", 1), ("four", 4)):
        assert cmd_fuse(fuse_config(scene_dir, tmp_path / run, workers=workers)) == 0
    for name in ["posterior.bin", "labels.bin", "w_map.bin", "manifest.txt"]:
        d = {digest(tmp_path / run / name) for run in ("one", "two", "four")}
        assert len(d) == 1, name


def test_synth_deterministic_and_cloud_fraction(tmp_path):
    assert main(["synth", str(tmp_path / "a"), "--seed", "5", "--set", "fine_width=32", "--set", "fine_height=32"]) == 0
    assert main(["synth", str(tmp_path / "b"), "--seed", "5", "--set", "fine_width=32", "--set", "fine_height=32"]) == 0
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name
    for cf, flag in ((0.0, 0), (1.0, 1)):
        scene = generate_scene(SceneSpec(cloud_fraction=cf, fine_width=16, fine_height=16), 0)
        assert np.all(scene.mask_b.flags == flag)
    assert main(["synth", str(tmp_path / "c"), "--set", "cloud_fraction=1.5"]) == 2


def _table_fixture(tmp_path, counts):
    """One pixel per validation sample, labelled with the predicted class."""
    counts = np.asarray(counts)
    pred, ref = np.nonzero(counts)
    pred = np.repeat(pred, counts[pred, ref])
    ref = np.repeat(ref, counts[np.nonzero(counts)])
    geom = GridGeometry(pred.size, 1, 0, 0, 1, -1)
    write_raster(LabelRaster(geom, counts.shape[0], pred[None].astype(np.uint8)), tmp_path / "map.bin")
    write_samples(SampleSet(np.arange(pred.size) + 0.5, np.full(pred.size, -0.5), ref), tmp_path / "samples.csv")
    return tmp_path / "map.bin", tmp_path / "samples.csv"


def test_assess_published_fixture(tmp_path):
    t = TABLES["area1_A"]
    map_path, samples_path = _table_fixture(tmp_path, t["counts"])
    out = io.StringIO()
    assert cmd_assess(map_path, samples_path, names=t["names"], csv_path=tmp_path / "cm.csv", stream=out) == 0
    text = out.getvalue()
    lines = text.splitlines()
    assert lines[-2].split()[-1] == "74.0"
    assert lines[1].split()[-1] == "80"  # cropland UA
    assert lines[5].split()[-1] == "100"  # waterbodies UA
    assert "439 samples scored, 0 on nodata pixels" in text
    assert (tmp_path / "cm.csv").read_text().startswith("name,CR,FR")


def test_assess_perfect_and_masked_empty(tmp_path, capsys):
    map_path, samples_path = _table_fixture(tmp_path, np.diag([3, 4]))
    assert main(["assess", str(map_path), str(samples_path)]) == 0
    assert "100.0" in capsys.readouterr().out
    geom = read_raster(map_path, "label").geometry
    from pgmfuse import MaskRaster

    write_raster(MaskRaster(geom, np.zeros(geom.shape, np.uint8)), tmp_path / "mask.bin")
    assert main(["assess", str(map_path), str(samples_path), "--mask", str(tmp_path / "mask.bin")]) == 0
    assert "0 samples scored" in capsys.readouterr().out


def test_unmix_features_smooth_commands(tmp_path, scene_dir):
    assert main(["unmix", str(scene_dir / "bands_b.bin"), str(scene_dir / "mask_b.bin"), str(tmp_path / "u")]) == 0
    f = read_raster(tmp_path / "u" / "f_map.bin", "band").values(0)
    mask = read_raster(scene_dir / "mask_b.bin", "mask")
    assert np.all(f[mask.flags == 0] == 0)
    assert np.all((f[mask.cloud_or_shadow()] >= 0) & (f[mask.cloud_or_shadow()] <= 1))
    assert main(["features", str(scene_dir / "bands_a.bin"), str(tmp_path / "f")]) == 0
    tex = read_raster(tmp_path / "f" / "textures.bin", "band")
    assert tex.num_bands == 3
    assert np.all(np.isnan(tex.data[:3])) and np.all(np.isfinite(tex.data[3:-3, 3:-3]))
    assert main(["smooth", str(scene_dir / "coarse_ts.bin"), str(tmp_path / "s"), "--window", "7"]) == 0
    m = read_raster(tmp_path / "s" / "m_fractions.bin", "band").values(0)
    assert np.all((m >= 0) & (m <= 1))
    assert main(["smooth", str(scene_dir / "coarse_ts.bin"), str(tmp_path / "s"), "--window", "4"]) == 2
