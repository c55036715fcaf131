"""Shared fixtures: published accuracy tables and the acceptance report."""

import numpy as np
import pytest

# counts[prediction, reference], printed UA/PA (integer %), printed OA (%)
TABLES = {
    "area1_A": dict(
        names=["CR", "FR", "GR", "SHR", "WB", "IMP", "BL"],
        counts=[
            [93, 4, 5, 6, 0, 8, 0],
            [9, 97, 0, 21, 0, 0, 0],
            [2, 0, 1, 1, 0, 0, 0],
            [2, 33, 0, 46, 0, 0, 0],
            [0, 0, 0, 0, 9, 0, 0],
            [8, 0, 3, 0, 0, 75, 2],
            [3, 1, 0, 4, 2, 0, 4],
        ],
        ua=[80, 76, 25, 57, 100, 85, 29],
        pa=[79, 72, 11, 59, 82, 90, 67],
        oa="74.0",
    ),
    "area1_B": dict(
        names=["CR", "FR", "GR", "SHR", "WB", "IMP", "BL"],
        counts=[
            [95, 10, 5, 5, 1, 7, 1],
            [11, 97, 0, 19, 1, 2, 0],
            [6, 2, 1, 3, 0, 0, 0],
            [3, 25, 1, 47, 0, 0, 0],
            [0, 1, 0, 0, 9, 0, 0],
            [1, 0, 2, 1, 0, 73, 2],
            [1, 0, 0, 3, 0, 1, 3],
        ],
        ua=[77, 75, 8, 62, 90, 92, 38],
        pa=[81, 72, 11, 60, 82, 88, 50],
        oa="74.0",
    ),
    "area1_LL": dict(
        names=["CR", "FR", "GR", "SHR", "WB", "IMP", "BL"],
        counts=[
            [103, 6, 6, 4, 0, 7, 0],
            [7, 110, 0, 19, 0, 0, 0],
            [0, 0, 2, 2, 0, 0, 0],
            [2, 19, 0, 51, 0, 0, 0],
            [0, 0, 0, 0, 10, 0, 0],
            [4, 0, 1, 0, 0, 76, 2],
            [1, 0, 0, 2, 1, 0, 4],
        ],
        ua=[82, 81, 50, 71, 100, 92, 50],
        pa=[88, 81, 22, 65, 91, 92, 67],
        oa="81.1",
    ),
    "area1_R": dict(
        names=["CR", "FR", "GR", "SHR", "WB", "IMP", "BL"],
        counts=[
            [104, 6, 6, 4, 0, 7, 0],
            [7, 111, 0, 19, 0, 0, 0],
            [0, 0, 2, 2, 0, 0, 0],
            [2, 18, 0, 52, 0, 0, 0],
            [0, 0, 0, 0, 10, 0, 0],
            [3, 0, 1, 0, 0, 76, 2],
            [1, 0, 0, 1, 1, 0, 4],
        ],
        ua=[82, 81, 50, 72, 100, 93, 57],
        pa=[89, 82, 22, 67, 91, 92, 67],
        oa="81.8",
    ),
    "area2_A": dict(
        names=["CR", "FR", "WB", "IMP"],
        counts=[[179, 36, 6, 17], [2, 67, 1, 0], [0, 0, 52, 0], [4, 0, 6, 53]],
        ua=[75, 96, 100, 84],
        pa=[97, 65, 80, 76],
        oa="83.0",
    ),
    "area2_R": dict(
        names=["CR", "FR", "WB", "IMP"],
        counts=[[181, 30, 5, 13], [2, 72, 2, 1], [0, 0, 58, 0], [2, 1, 0, 56]],
        ua=[79, 94, 100, 95],
        pa=[98, 70, 89, 80],
        oa="86.8",
    ),
}


@pytest.fixture(params=sorted(TABLES))
def published_table(request):
    t = TABLES[request.param]
    return request.param, dict(t, counts=np.array(t["counts"]))


_ACCEPTANCE = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title}"
        if detail:
            line += f"  ({detail})"
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


SCENE_SEED = 0


@pytest.fixture(scope="session")
def scene_dir(tmp_path_factory):
    """Standard synthetic scene written by cmd_synth (fixed seed)."""
    from pgmfuse.pipeline import cmd_synth

    out = tmp_path_factory.mktemp("scene")
    assert cmd_synth(out, SCENE_SEED) == 0
    return out


def fuse_config(scene, out, **overrides):
    from pgmfuse.pipeline import RunConfig

    values = dict(
        mode="two_stage",
        prior_a=str(scene / "prior_a.bin"),
        prior_b=str(scene / "prior_b.bin"),
        prior_m=str(scene / "prior_m.bin"),
        mask_b=str(scene / "mask_b.bin"),
        bands_b=str(scene / "bands_b.bin"),
        coarse_ts=str(scene / "coarse_ts.bin"),
        workers=1,
        out=str(out),
    )
    values.update(overrides)
    return RunConfig.from_mapping(values)
