"""Closed primitive meshes for building test objects.

Each builder returns ``(vertices, faces)`` with outward-facing winding.
:func:`assemble` stacks named parts into one mesh plus a per-face part name.
"""
from __future__ import annotations

import math

import numpy as np

from .geometry import TriMesh


def _signed_volume(v, f) -> float:
    t = v[f]
    return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)


def _outward(v, f):
    v, f = np.asarray(v, float), np.asarray(f, np.int64)
    if _signed_volume(v, f) < 0:
        f = f[:, ::-1].copy()
    return v, f


def _frame(axis):
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    e = np.zeros(3)
    e[int(np.argmin(np.abs(axis)))] = 1.0
    u = np.cross(axis, e)
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u), axis


def box(center, size):
    c, h = np.asarray(center, float), 0.5 * np.asarray(size, float)
    v = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float) * h + c
    f = [
        [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],
        [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],
        [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
    ]  # fmt: skip
    return _outward(v, f)


def cylinder(p0, p1, radius, n=32):
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    u, w, _ = _frame(p1 - p0)
    ang = 2 * math.pi * np.arange(n) / n
    ring = radius * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * w)
    v = np.vstack([p0 + ring, p1 + ring, p0, p1])
    f = []
    for i in range(n):
        j = (i + 1) % n
        f += [[i, j, n + j], [i, n + j, n + i], [2 * n, j, i], [2 * n + 1, n + i, n + j]]
    return _outward(v, f)


def cone(apex, base_center, radius, n=32):
    apex, bc = np.asarray(apex, float), np.asarray(base_center, float)
    u, w, _ = _frame(bc - apex)
    ang = 2 * math.pi * np.arange(n) / n
    ring = bc + radius * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * w)
    v = np.vstack([ring, apex, bc])
    f = []
    for i in range(n):
        j = (i + 1) % n
        f += [[n, j, i], [n + 1, i, j]]
    return _outward(v, f)


def sphere(center, radius, n_lat=12, n_lon=24, scale=(1.0, 1.0, 1.0)):
    c = np.asarray(center, float)
    verts = [[0, 0, 1.0]]
    for i in range(1, n_lat):
        th = math.pi * i / n_lat
        for j in range(n_lon):
            ph = 2 * math.pi * j / n_lon
            verts.append([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
    verts.append([0, 0, -1.0])
    v = np.array(verts) * radius * np.asarray(scale, float) + c
    south = len(verts) - 1
    f = []

    def ring(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)

    for j in range(n_lon):
        f.append([0, ring(1, j), ring(1, j + 1)])
        f.append([south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)])
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b, c2, d = ring(i, j), ring(i, j + 1), ring(i + 1, j + 1), ring(i + 1, j)
            f += [[a, d, c2], [a, c2, b]]
    return _outward(v, f)


def torus(center, axis, major, minor, n_major=24, n_minor=12):
    c = np.asarray(center, float)
    u, w, a = _frame(axis)
    v = []
    for i in range(n_major):
        th = 2 * math.pi * i / n_major
        radial = math.cos(th) * u + math.sin(th) * w
        for j in range(n_minor):
            ph = 2 * math.pi * j / n_minor
            v.append(c + (major + minor * math.cos(ph)) * radial + minor * math.sin(ph) * a)
    f = []
    for i in range(n_major):
        for j in range(n_minor):
            p = i * n_minor + j
            q = ((i + 1) % n_major) * n_minor + j
            r = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            s = i * n_minor + (j + 1) % n_minor
            f += [[p, q, r], [p, r, s]]
    return _outward(np.array(v), f)


def quad(center, normal, size):
    """Single-sided square facing along ``normal``."""
    u, w, n = _frame(normal)
    c, h = np.asarray(center, float), size / 2.0
    v = np.array([c - h * u - h * w, c + h * u - h * w, c + h * u + h * w, c - h * u + h * w])
    f = np.array([[0, 1, 2], [0, 2, 3]])
    if np.dot(np.cross(v[1] - v[0], v[2] - v[0]), n) < 0:
        f = f[:, ::-1].copy()
    return v, f


def assemble(parts: dict, name: str = "") -> tuple[TriMesh, list[str]]:
    """Concatenate named ``(vertices, faces)`` parts into one mesh."""
    vs, fs, labels = [], [], []
    offset = 0
    for label, (v, f) in parts.items():
        vs.append(v)
        fs.append(np.asarray(f) + offset)
        labels += [label] * len(f)
        offset += len(v)
    mesh = TriMesh.from_arrays(np.vstack(vs), np.vstack(fs), name=name)
    if mesh.n_dropped:
        raise ValueError(f"{name}: primitives produced degenerate faces")
    return mesh, labels
