"""Regenerate the bundled fixture data under src/semgrasp/data/.

Usage: python scripts/make_fixtures.py
"""
from __future__ import annotations

import csv
import json

import numpy as np
from PIL import Image, ImageDraw

from semgrasp.fixtures import OBJECTS, PART_OBJECTS, build_object, data_dir, object_camera
from semgrasp.geometry import save_mesh
from semgrasp.projection import project_points, save_camera

PALETTE = [(214, 140, 69), (70, 130, 180), (120, 170, 90), (200, 90, 110), (150, 110, 190), (90, 180, 180)]

# human survey: object, preferred part (a), alternative part (b), percent choosing a
SURVEY = [
    ("doll", "torso", "head", 92.1),
    ("ice cream", "cone", "scoop", 100.0),
    ("candle", "base", "wick", 93.1),
    ("flowers in the vase", "vase", "flowers", 93.2),
    ("bag", "handle", "body", 91.1),
    ("plant", "pot", "leaves", 94.3),
    ("hand brush", "handle", "bristles", 95.4),
    ("toilet brush", "handle", "brush head", 97.6),
    ("cactus", "pot", "cactus", 98.8),
    ("cupcake", "wrapper", "frosting", 100.0),
    ("cup on a saucer", "saucer", "cup", 81.2),
    ("plate of cake", "plate", "cake", 98.8),
    ("mug", "handle", "body", 77.1),
    ("saucepan", "handle", "pan", 94.3),
    ("broom", "handle", "bristles", 97.6),
]
# published similarity values of the two reference planners
REFERENCE = {
    "GraspIt!": [0.28, 0.05, 0.22, 0.32, 0.79, 0.16, 0.65, 0.42, 0.26, 0.10, 0.24, 0.11, 0.28, 0.36, 0.42],
    "GraspGPT": [0.48, 0.40, 0.57, 0.73, 0.69, 0.56, 0.95, 0.52, 0.99, 0.40, 0.59, 0.51, 0.73, 0.94, 0.98],
}
# parts to avoid touching
AVOID = [
    ("keyboard", "keys"),
    ("TV remote", "buttons"),
    ("computer mouse", "buttons"),
    ("smartphone", "screen"),
    ("laptop", "screen"),
    ("teapot", "spout"),
    ("standing fan", "blades"),
]
EXTRA_GRASP = [("teapot", "handle")]


def render(mesh, labels, camera, order):
    img = Image.new("RGB", (camera.width, camera.height), (235, 235, 235))
    draw = ImageDraw.Draw(img)
    tris = mesh.triangles
    cen = tris.mean(axis=1)
    view = cen - camera.center
    depth = np.linalg.norm(view, axis=1)
    facing = np.einsum("ij,ij->i", mesh.face_normals, view) < 0
    uv, valid = project_points(camera, tris.reshape(-1, 3))
    uv = uv.reshape(-1, 3, 2)
    light = -view / depth[:, None]
    shade = 0.35 + 0.65 * np.clip(np.einsum("ij,ij->i", mesh.face_normals, light), 0, 1)
    for i in np.argsort(-depth, kind="stable"):
        if not facing[i] or not valid.reshape(-1, 3)[i].all():
            continue
        base = PALETTE[order.index(labels[i]) % len(PALETTE)]
        color = tuple(int(c * shade[i]) for c in base)
        draw.polygon([tuple(p) for p in uv[i]], fill=color)
    return img


def part_box(mesh, labels, camera, part, pad=2.0):
    faces = mesh.faces[[i for i, lab in enumerate(labels) if lab == part]]
    uv, valid = project_points(camera, mesh.vertices[np.unique(faces)])
    uv = uv[valid]
    lo, hi = uv.min(axis=0) - pad, uv.max(axis=0) + pad
    lo = np.maximum(lo, 0.0)
    hi = np.minimum(hi, [camera.width, camera.height])
    return [round(float(x), 1) for x in (*lo, *hi)]


def main():
    root = data_dir()
    vlm_rows = []
    for name, spec in OBJECTS.items():
        mesh, labels = build_object(name)
        camera = object_camera(name)
        d = root / "fixtures" / name
        d.mkdir(parents=True, exist_ok=True)
        save_mesh(mesh, d / f"{name}.obj")
        save_camera(camera, d / "camera.json")
        (d / "parts.txt").write_text("\n".join(labels) + "\n", encoding="utf-8")
        order = list(dict.fromkeys(labels))
        render(mesh, labels, camera, order).save(d / f"{name}.png")
        if name in PART_OBJECTS:
            for k, part in enumerate(order):
                conf = round(0.72 - 0.07 * k, 2)
                vlm_rows.append([name, part, *part_box(mesh, labels, camera, part), conf])
            print(f"{name}: {mesh.n_faces} faces, parts {order}")

    # a weaker second detection, so argmax selection and its warning are exercised
    mug_body = next(r for r in vlm_rows if r[:2] == ["mug", "body"])
    vlm_rows.append(["mug", "handle", *mug_body[2:6], 0.15])
    # the pipeline asks for torso / cone / handle by those exact names
    with open(root / "mock_vlm.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "part_label", "x_min", "y_min", "x_max", "y_max", "confidence"])
        w.writerows(vlm_rows)

    with open(root / "mock_llm.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["object_label", "mode", "part_label"])
        for obj, part, _, _ in SURVEY:
            w.writerow([obj, "grasp", part])
        for obj, part in EXTRA_GRASP:
            w.writerow([obj, "grasp", part])
        for obj, part in AVOID:
            w.writerow([obj, "avoid", part])

    with open(root / "survey_table1.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["object", "part_a", "part_b", "p_a", "unit"])
        for obj, a, b, pct in SURVEY:
            w.writerow([obj, a, b, f"{pct:.1f}", "percent"])

    with open(root / "reference_table1.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["object", "method", "sim"])
        for method, sims in REFERENCE.items():
            for (obj, *_), sim in zip(SURVEY, sims):
                w.writerow([obj, method, f"{sim:.2f}"])

    cfg_dir = root / "configs"
    cfg_dir.mkdir(exist_ok=True)
    for name in PART_OBJECTS:
        spec = OBJECTS[name]
        cfg = {
            "mesh": f"../fixtures/{name}/{name}.obj",
            "image": f"../fixtures/{name}/{name}.png",
            "camera": f"../fixtures/{name}/camera.json",
            "object": spec.label,
            "mode": "avoid" if name == "teapot" else "grasp",
            "visibility": "silhouette",
            "n_grasps": 20,
            "seed": 42,
            "gripper": {},
            "backend": {
                "llm": {"mock": "../mock_llm.csv"},
                "vlm": {"mock": "../mock_vlm.csv"},
                "timeout": 10.0,
                "retries": 2,
            },
            "out_dir": f"out/{name}",
        }
        (cfg_dir / f"{name}.json").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
