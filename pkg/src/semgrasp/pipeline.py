"""End-to-end driver: object label -> part -> box -> partition -> ranked grasps."""
from __future__ import annotations

import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import fixtures
from .evaluation import (
    MethodFrequency,
    SimilarityReport,
    build_report,
    deterministic_frequency,
    empirical_frequency,
    ingest_frequencies,
    ingest_reference,
    ingest_survey,
)
from .geometry import build_bvh, load_mesh
from .language import BackendConfig, PartAnswer, PartQuery, build_prompt, ground_part, query_part
from .planner import GraspSet, GripperModel, dumps_grasp_set, sample_grasps, top_k, unrestricted_baseline
from .projection import (
    BoundingBox2D,
    CameraModel,
    DepthBand,
    Mode,
    RegionPartition,
    Silhouette,
    load_camera,
    partition_mesh,
    project_point,
)

logger = logging.getLogger(__name__)

STAGES = ("config", "prompt", "llm", "vlm", "partition", "sample", "rank", "output")


class ConfigError(Exception):
    pass


class StageError(Exception):
    """A pipeline stage failed; ``cause`` holds the original exception."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def parse_visibility(name: str, delta: float = 0.02):
    name = name.replace("_", "-").lower()
    if name == "silhouette":
        return Silhouette()
    if name == "depth-band":
        return DepthBand(delta)
    raise ConfigError(f"unknown visibility rule {name!r}")


@dataclass(frozen=True)
class PipelineConfig:
    mesh: Path
    image: Path
    camera: Path
    object_label: str
    mode: Mode = Mode.GRASP
    visibility: object = Silhouette()
    gripper: GripperModel = GripperModel()
    n_grasps: int = 20
    n_samples: int = 100
    rng_seed: int = 0
    backend: BackendConfig = field(default_factory=BackendConfig)
    out_dir: Path = Path("out")
    literal_template: bool = False
    image_id: str | None = None
    vlm_threshold: float = 0.1
    workers: int = 1

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "PipelineConfig":
        try:
            vis = parse_visibility(d.get("visibility", "silhouette"), float(d.get("depth_band_delta", 0.02)))
            return cls(
                mesh=base / d["mesh"],
                image=base / d["image"],
                camera=base / d["camera"],
                object_label=d.get("object", ""),
                mode=Mode(d.get("mode", "grasp")),
                visibility=vis,
                gripper=GripperModel(**d.get("gripper", {})),
                n_grasps=int(d.get("n_grasps", 20)),
                n_samples=int(d.get("n_samples", 100)),
                rng_seed=int(d.get("seed", 0)),
                backend=BackendConfig.from_dict(d.get("backend", {}), base),
                out_dir=Path(d.get("out_dir", "out")),  # relative to the working directory
                literal_template=bool(d.get("literal_template", False)),
                image_id=d.get("image_id"),
                vlm_threshold=float(d.get("vlm_threshold", 0.1)),
                workers=int(d.get("workers", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc, path.parent)

    def validate(self) -> "PipelineConfig":
        for name in ("mesh", "image", "camera"):
            p = getattr(self, name)
            if not Path(p).is_file():
                raise ConfigError(f"{name} file not found: {p}")
        for ep in (self.backend.llm, self.backend.vlm):
            if ep.mock is not None and not Path(ep.mock).is_file():
                raise ConfigError(f"mock table not found: {ep.mock}")
        if self.n_grasps < 1 or self.n_samples < 1:
            raise ConfigError("n_grasps and n_samples must be >= 1")
        return self


@dataclass(frozen=True, eq=False)
class PipelineResult:
    part_answer: PartAnswer
    box: BoundingBox2D
    n_graspable: int
    n_obstacle: int
    grasps: GraspSet
    timings_ms: dict
    partition: RegionPartition = field(repr=False)
    outputs: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "part": self.part_answer.part_label,
            "box": self.box.as_list(),
            "confidence": self.box.confidence,
            "graspable_faces": self.n_graspable,
            "obstacle_faces": self.n_obstacle,
            "n_grasps": len(self.grasps),
            "timings_ms": self.timings_ms,
            "outputs": {k: str(v) for k, v in self.outputs.items()},
        }


def atomic_write(path: Path, data: bytes | str) -> None:
    """Write via a temporary file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


class _Stage:
    def __init__(self, name: str, timings: dict):
        self.name, self.timings = name, timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = (time.perf_counter() - self.t0) * 1000.0
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def locate_part(config: PipelineConfig, timings: dict | None = None):
    """Run the language stages; returns ``(answer, box, image, camera, mesh)``."""
    timings = {} if timings is None else timings
    with _Stage("config", timings):
        config.validate()
        mesh = load_mesh(config.mesh)
        camera = load_camera(config.camera)
        image = load_image(config.image)
        if image.shape[:2] != (camera.height, camera.width):
            raise ConfigError(f"image is {image.shape[1]}x{image.shape[0]}, camera expects {camera.width}x{camera.height}")
        llm, vlm = config.backend.make_llm(), config.backend.make_vlm()
    with _Stage("prompt", timings):
        prompt = build_prompt(PartQuery(config.object_label, config.mode), config.literal_template)
    with _Stage("llm", timings):
        answer = query_part(llm, prompt)
    with _Stage("vlm", timings):
        image_id = config.image_id or Path(config.image).stem
        box = ground_part(vlm, image, answer.part_label, config.vlm_threshold, image_id=image_id)
    return answer, box, image, camera, mesh


def run_pipeline(config: PipelineConfig, write: bool = True) -> PipelineResult:
    timings: dict[str, float] = {}
    answer, box, image, camera, mesh = locate_part(config, timings)
    outputs: dict[str, Path] = {}
    with _Stage("partition", timings):
        bvh = build_bvh(mesh)
        partition = partition_mesh(mesh, camera, box, config.mode, config.visibility, bvh)
        if write:
            outputs["partition"] = config.out_dir / "partition.txt"
            atomic_write(outputs["partition"], partition.to_text())
    with _Stage("sample", timings):
        samples = sample_grasps(
            mesh, bvh, partition, config.gripper, max(config.n_samples, config.n_grasps), config.rng_seed, config.workers
        )
    with _Stage("rank", timings):
        best = top_k(samples, config.n_grasps)
        if write:
            outputs["grasps"] = config.out_dir / "grasps.json"
            atomic_write(outputs["grasps"], dumps_grasp_set(best, config.gripper, Path(config.mesh).stem))
    with _Stage("output", timings):
        if write:
            overlay = render_overlay(image, box, camera, best)
            outputs["overlay"] = config.out_dir / "overlay.png"
            atomic_write(outputs["overlay"], _png_bytes(overlay))
    return PipelineResult(answer, box, partition.n_graspable, partition.n_obstacle, best, timings, partition, outputs)


def _png_bytes(img: Image.Image) -> bytes:
    import io

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def render_overlay(image, box: BoundingBox2D, camera: CameraModel, grasps, marker: int = 4) -> Image.Image:
    """Draw the part box in green and each grasp's contacts labelled by rank."""
    img = Image.fromarray(np.asarray(image, dtype=np.uint8)).convert("RGB")
    if img.size != (camera.width, camera.height):
        raise ValueError("camera does not match image dimensions")
    draw = ImageDraw.Draw(img)
    draw.rectangle(box.as_list(), outline=(0, 200, 0), width=3)
    for rank, g in enumerate(grasps, 1):
        for contact in (g.contact_a, g.contact_b):
            px = project_point(camera, contact.point)
            if px is None or not (0 <= px[0] < camera.width and 0 <= px[1] < camera.height):
                logger.warning("grasp %d: contact at %s projects out of frame; skipped", rank, contact.point.tolist())
                continue
            u, v = px
            draw.ellipse([u - marker, v - marker, u + marker, v + marker], outline=(220, 30, 30), width=2)
            draw.text((u + marker + 1, v - marker - 1), str(rank), fill=(220, 30, 30))
    return img


# ---------------------------------------------------------------- evaluation


def semantic_frequencies(survey, llm, literal: bool = False, method: str = "semantic") -> list[MethodFrequency]:
    """Frequencies of the language-guided planner: all grasps land on the part the LLM names."""
    out = []
    for rec in survey:
        answer = query_part(llm, build_prompt(PartQuery(rec.object_label, Mode.GRASP), literal))
        out.append(deterministic_frequency(rec, answer.part_label, method))
    return out


def measure_unrestricted(
    names=fixtures.SURVEY_OBJECTS, survey=None, gripper: GripperModel = GripperModel(), seed: int = 0, n: int = 20
) -> list[MethodFrequency]:
    """Top-``n`` geometry-only grasps per bundled fixture, counted against the survey's part a."""
    from .language import MockVlm

    survey = {r.object_label: r for r in (survey or ingest_survey(fixtures.survey_table()))}
    vlm = MockVlm.from_csv(fixtures.mock_vlm_table())
    out = []
    for name in names:
        fx = fixtures.load_fixture(name)
        rec = survey[fx.label]
        image = load_image(fx.image_path)
        box = ground_part(vlm, image, rec.part_a, image_id=name)
        region = partition_mesh(fx.mesh, fx.camera, box, Mode.GRASP)
        grasps = unrestricted_baseline(fx.mesh, build_bvh(fx.mesh), gripper, n, seed)
        out.append(empirical_frequency(grasps, region, fx.label, "unrestricted"))
    return out


def run_eval(
    survey_path,
    out_dir,
    llm=None,
    reference_path=None,
    frequency_paths=(),
    measure: bool = False,
    seed: int = 0,
) -> SimilarityReport:
    survey = ingest_survey(survey_path)
    freqs: list[MethodFrequency] = []
    if llm is not None:
        freqs += semantic_frequencies(survey, llm)
    for p in frequency_paths:
        freqs += ingest_frequencies(p)
    if measure:
        freqs += measure_unrestricted(survey=survey, seed=seed)
    reference = ingest_reference(reference_path) if reference_path else []
    report = build_report(survey, freqs, reference)
    out_dir = Path(out_dir)
    atomic_write(out_dir / "report.txt", report.to_text())
    atomic_write(out_dir / "report.json", report.to_json())
    return report


def with_overrides(config: PipelineConfig, **kw) -> PipelineConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
