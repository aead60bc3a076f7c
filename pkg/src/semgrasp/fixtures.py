"""Bundled test objects: meshes, cameras, images and backend fixture tables.

Objects are built from primitives in meters. ``scripts/make_fixtures.py``
writes them to ``data/fixtures/<name>/<name>.obj`` together with a rendered image and
the camera used to render it.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import shapes
from .geometry import TriMesh, load_mesh
from .projection import CameraModel, load_camera

IMAGE_SIZE = (640, 480)
FOCAL = 600.0


def data_dir() -> Path:
    return Path(str(resources.files("semgrasp") / "data"))


def _cube():
    return {"cube": shapes.box((0, 0, 0), (1, 1, 1))}


def _plates():
    return {
        "top": shapes.quad((0, 0, 0.03), (0, 0, 1), 0.1),
        "bottom": shapes.quad((0, 0, -0.03), (0, 0, -1), 0.1),
    }


def _mug():
    return {
        "body": shapes.cylinder((0, 0, 0), (0, 0, 0.1), 0.04, n=32),
        "handle": shapes.torus((0.055, 0, 0.05), (0, 1, 0), 0.028, 0.008),
    }


def _ice_cream():
    return {
        "cone": shapes.cone((0, 0, 0), (0, 0, 0.12), 0.025, n=32),
        "scoop": shapes.sphere((0, 0, 0.145), 0.032),
    }


def _teapot():
    return {
        "body": shapes.sphere((0, 0, 0.07), 0.07, n_lat=14, n_lon=28, scale=(1, 1, 0.85)),
        "spout": shapes.cylinder((0.045, 0, 0.06), (0.13, 0, 0.125), 0.011, n=16),
        "handle": shapes.torus((-0.078, 0, 0.075), (0, 1, 0), 0.03, 0.008),
        "lid": shapes.sphere((0, 0, 0.128), 0.014, n_lat=6, n_lon=12),
    }


def _doll():
    return {
        "torso": shapes.box((0, 0, 0.15), (0.06, 0.035, 0.09)),
        "head": shapes.sphere((0, 0, 0.225), 0.03),
        "left leg": shapes.cylinder((-0.016, 0, 0.108), (-0.016, 0, 0.0), 0.011, n=16),
        "right leg": shapes.cylinder((0.016, 0, 0.108), (0.016, 0, 0.0), 0.011, n=16),
        "left arm": shapes.cylinder((-0.04, 0, 0.188), (-0.05, 0, 0.11), 0.009, n=16),
        "right arm": shapes.cylinder((0.04, 0, 0.188), (0.05, 0, 0.11), 0.009, n=16),
    }


def _saucepan():
    return {
        "pan": shapes.cylinder((0, 0, 0), (0, 0, 0.06), 0.08, n=40),
        "handle": shapes.box((0.155, 0, 0.05), (0.16, 0.025, 0.015)),
    }


def _plant():
    return {
        "pot": shapes.cylinder((0, 0, 0), (0, 0, 0.08), 0.045, n=32),
        "leaves": shapes.sphere((0, 0, 0.135), 0.055, scale=(1, 1, 0.9)),
    }


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    label: str  # object label handed to the language backend
    build: object
    eye: tuple
    target: tuple
    up: tuple = (0.0, 0.0, 1.0)


OBJECTS = {
    s.name: s
    for s in (
        ObjectSpec("cube", "cube", _cube, (0, 0, 3.0), (0, 0, 0), (0, 1, 0)),
        ObjectSpec("plates", "plates", _plates, (0, -0.5, 0), (0, 0, 0)),
        ObjectSpec("mug", "mug", _mug, (0.0, -0.4, 0.12), (0.015, 0, 0.05)),
        ObjectSpec("ice_cream", "ice cream", _ice_cream, (0.0, -0.45, 0.1), (0, 0, 0.09)),
        ObjectSpec("teapot", "teapot", _teapot, (0.0, -0.55, 0.15), (0.02, 0, 0.07)),
        ObjectSpec("doll", "doll", _doll, (0.0, -0.55, 0.12), (0, 0, 0.12)),
        ObjectSpec("saucepan", "saucepan", _saucepan, (0.05, -0.55, 0.3), (0.07, 0, 0.03)),
        ObjectSpec("plant", "plant", _plant, (0.0, -0.5, 0.12), (0, 0, 0.09)),
    )
}

# Objects with a nontrivial part structure, used for confinement audits.
PART_OBJECTS = ("mug", "ice_cream", "teapot", "doll", "saucepan", "plant")
# Part objects that also appear in the human preference survey.
SURVEY_OBJECTS = ("doll", "ice_cream", "plant", "mug", "saucepan")


def build_object(name: str) -> tuple[TriMesh, list[str]]:
    spec = OBJECTS[name]
    return shapes.assemble(spec.build(), name=name)


def object_camera(name: str) -> CameraModel:
    spec = OBJECTS[name]
    w, h = IMAGE_SIZE
    return CameraModel.look_at(spec.eye, spec.target, spec.up, FOCAL, FOCAL, w / 2, h / 2, w, h)


@dataclass(frozen=True, eq=False)
class Fixture:
    name: str
    label: str
    mesh: TriMesh
    camera: CameraModel
    part_names: tuple[str, ...]
    directory: Path

    @property
    def mesh_path(self) -> Path:
        return self.directory / f"{self.name}.obj"

    @property
    def image_path(self) -> Path:
        return self.directory / f"{self.name}.png"

    @property
    def camera_path(self) -> Path:
        return self.directory / "camera.json"


def load_fixture(name: str) -> Fixture:
    d = data_dir() / "fixtures" / name
    mesh = load_mesh(d / f"{name}.obj")
    parts = tuple((d / "parts.txt").read_text(encoding="utf-8").splitlines())
    return Fixture(name, OBJECTS[name].label, mesh, load_camera(d / "camera.json"), parts, d)


def mock_llm_table() -> Path:
    return data_dir() / "mock_llm.csv"


def mock_vlm_table() -> Path:
    return data_dir() / "mock_vlm.csv"


def survey_table() -> Path:
    return data_dir() / "survey_table1.csv"


def reference_table() -> Path:
    return data_dir() / "reference_table1.csv"
