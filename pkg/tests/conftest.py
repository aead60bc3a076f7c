from functools import lru_cache

import numpy as np
import pytest

from semgrasp import fixtures
from semgrasp.geometry import build_bvh
from semgrasp.language import MockVlm, ground_part
from semgrasp.pipeline import load_image
from semgrasp.projection import Mode, partition_mesh

# part whose box defines the graspable region for each part fixture
PART_OF = {
    "mug": ("handle", Mode.GRASP),
    "ice_cream": ("cone", Mode.GRASP),
    "teapot": ("spout", Mode.AVOID),
    "doll": ("torso", Mode.GRASP),
    "saucepan": ("handle", Mode.GRASP),
    "plant": ("pot", Mode.GRASP),
}


@lru_cache(maxsize=None)
def fixture(name):
    return fixtures.load_fixture(name)


@lru_cache(maxsize=None)
def bvh_of(name):
    return build_bvh(fixture(name).mesh)


@lru_cache(maxsize=None)
def part_box(name, part=None):
    part = part or PART_OF[name][0]
    fx = fixture(name)
    vlm = MockVlm.from_csv(fixtures.mock_vlm_table())
    return ground_part(vlm, load_image(fx.image_path), part, image_id=name)


@lru_cache(maxsize=None)
def fixture_partition(name, mode=None):
    part, default_mode = PART_OF[name]
    fx = fixture(name)
    return partition_mesh(fx.mesh, fx.camera, part_box(name), mode or default_mode, bvh=bvh_of(name))


def part_faces(name, part):
    fx = fixture(name)
    labels = (fx.directory / "parts.txt").read_text().split("\n")
    return np.array([lab == part for lab in labels[: fx.mesh.n_faces]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion and assert on it."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
