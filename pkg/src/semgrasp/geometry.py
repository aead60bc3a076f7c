"""Triangle meshes, mesh IO, a BVH for ray casting and exact box/triangle overlap."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-12
RAY_EPS = 1e-9
# Hits closer than this to the nearest distance count as ties (lowest face wins).
TIE_TOL = 1e-12
LEAF_SIZE = 8


class GeometryError(Exception):
    pass


class ParseError(GeometryError):
    pass


class EmptyMesh(GeometryError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle mesh in meters.

    Construct through :meth:`from_arrays`, which drops degenerate faces and
    records how many were dropped in ``n_dropped``.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray = field(repr=False)
    face_areas: np.ndarray = field(repr=False)
    n_dropped: int = 0
    name: str = ""

    @classmethod
    def from_arrays(cls, vertices, faces, name: str = "") -> "TriMesh":
        v = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ParseError(f"face index out of range for {len(v)} vertices")
        if not np.all(np.isfinite(v)):
            raise ParseError("non-finite vertex coordinate")
        cross = _face_cross(v, f)
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        keep = areas > DEGENERATE_AREA
        n_dropped = int(len(f) - keep.sum())
        if n_dropped:
            logger.warning("dropped %d degenerate face(s)%s", n_dropped, f" from {name}" if name else "")
        f, cross, areas = f[keep], cross[keep], areas[keep]
        if len(f) == 0:
            raise EmptyMesh("mesh has no valid faces")
        normals = cross / (2.0 * areas[:, None])
        lo, hi = v[f.ravel()].min(axis=0), v[f.ravel()].max(axis=0)
        if not np.linalg.norm(hi - lo) > 0:
            raise EmptyMesh("mesh bounding box has zero extent")
        return cls(
            vertices=_readonly(v),
            faces=_readonly(f),
            face_normals=_readonly(normals),
            face_areas=_readonly(areas),
            n_dropped=n_dropped,
            name=name,
        )

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def triangles(self) -> np.ndarray:
        """(F, 3, 3) array of face corner coordinates."""
        return self.vertices[self.faces]

    @property
    def centroids(self) -> np.ndarray:
        return self.triangles.mean(axis=1)

    @property
    def total_area(self) -> float:
        return float(self.face_areas.sum())

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.faces)]
        return used.min(axis=0), used.max(axis=0)

    def scaled(self, s: float) -> "TriMesh":
        return TriMesh.from_arrays(self.vertices * s, self.faces, name=self.name)


def _face_cross(v: np.ndarray, f: np.ndarray) -> np.ndarray:
    tri = v[f]
    return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])


# ---------------------------------------------------------------- mesh IO


def load_mesh(path, fmt: str | None = None) -> TriMesh:
    """Load an OBJ or ASCII PLY file.

    ``fmt`` is ``"obj"`` or ``"ply"``; when omitted it is taken from the suffix.
    Texture coordinates and normals in the file are ignored.
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if fmt == "obj":
        v, f = _parse_obj(text)
    elif fmt == "ply":
        v, f = _parse_ply_ascii(text)
    else:
        raise ParseError(f"unsupported mesh format {fmt!r}")
    return TriMesh.from_arrays(v, f, name=path.stem)


def _parse_obj(text: str):
    verts: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        try:
            if tag == "v":
                if len(parts) < 4:
                    raise ValueError("vertex needs 3 coordinates")
                verts.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                if len(parts) < 4:
                    raise ValueError("face needs at least 3 vertices")
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    # OBJ indices are 1-based; negatives count back from the end.
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                    if i == 0:
                        raise ValueError("vertex index 0")
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
    if not verts:
        raise ParseError("no vertices")
    return np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3)


def _parse_ply_ascii(text: str):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic")
    elements: list[list] = []  # [name, count, [property names]]
    body_start = None
    for i, line in enumerate(lines[1:], 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] != "ascii":
                raise ParseError("only ASCII PLY is supported")
        elif parts[0] == "element":
            elements.append([parts[1], int(parts[2]), []])
        elif parts[0] == "property":
            if not elements:
                raise ParseError("property before element")
            elements[-1][2].append(parts[-1])
        elif parts[0] == "end_header":
            body_start = i + 1
            break
    if body_start is None:
        raise ParseError("missing end_header")
    rows = iter(lines[body_start:])
    verts = faces = None
    try:
        for name, count, props in elements:
            block = [next(rows).split() for _ in range(count)]
            if name == "vertex":
                cols = [props.index(c) for c in ("x", "y", "z")]
                verts = np.array([[float(r[c]) for c in cols] for r in block]).reshape(-1, 3)
            elif name == "face":
                tris = []
                for r in block:
                    n = int(r[0])
                    idx = [int(x) for x in r[1 : 1 + n]]
                    if n < 3 or len(idx) != n:
                        raise ValueError(f"bad face record {r}")
                    tris.extend((idx[0], idx[k], idx[k + 1]) for k in range(1, n - 1))
                faces = np.array(tris, dtype=np.int64).reshape(-1, 3)
    except (StopIteration, ValueError, IndexError) as exc:
        raise ParseError(f"malformed PLY body: {exc}") from exc
    if verts is None or faces is None:
        raise ParseError("PLY needs vertex and face elements")
    return verts, faces


def save_mesh(mesh: TriMesh, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    out: list[str] = []
    if fmt == "obj":
        out += [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
        out += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    elif fmt == "ply":
        out += [
            "ply",
            "format ascii 1.0",
            f"element vertex {len(mesh.vertices)}",
            "property double x",
            "property double y",
            "property double z",
            f"element face {mesh.n_faces}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        out += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
        out += [f"3 {a} {b} {c}" for a, b, c in mesh.faces.tolist()]
    else:
        raise ValueError(f"unsupported mesh format {fmt!r}")
    path.write_text("\n".join(out) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- rays


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if not n > 0:
            raise ValueError("ray direction must be nonzero")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d / n)


@dataclass(frozen=True)
class Hit:
    face: int
    distance: float
    barycentric: tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class Bvh:
    """Flattened median-split BVH. Node ``i`` is a leaf when ``left[i] < 0``;
    its faces are ``order[start[i]:start[i] + count[i]]``."""

    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def leaves(self):
        for i in np.flatnonzero(self.left < 0):
            yield int(i), self.order[self.start[i] : self.start[i] + self.count[i]]


def build_bvh(mesh: TriMesh, leaf_size: int = LEAF_SIZE) -> Bvh:
    tri = mesh.triangles
    tlo, thi = tri.min(axis=1), tri.max(axis=1)
    cen = tri.mean(axis=1)
    order = np.arange(mesh.n_faces)
    lo, hi, left, right, start, count = [], [], [], [], [], []

    def new_node(s: int, e: int) -> int:
        idx = order[s:e]
        b0, b1 = tlo[idx].min(axis=0), thi[idx].max(axis=0)
        pad = 1e-9 * (1.0 + np.maximum(np.abs(b0), np.abs(b1)))
        lo.append(b0 - pad)
        hi.append(b1 + pad)
        left.append(-1)
        right.append(-1)
        start.append(s)
        count.append(e - s)
        return len(left) - 1

    root = new_node(0, mesh.n_faces)
    stack = [(root, 0, mesh.n_faces)]
    while stack:
        node, s, e = stack.pop()
        if e - s <= leaf_size:
            continue
        c = cen[order[s:e]]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        # stable sort keeps the build deterministic for coincident centroids
        perm = np.argsort(c[:, axis], kind="stable")
        order[s:e] = order[s:e][perm]
        mid = s + (e - s) // 2
        left[node] = new_node(s, mid)
        right[node] = new_node(mid, e)
        start[node], count[node] = s, 0
        stack.append((left[node], s, mid))
        stack.append((right[node], mid, e))

    return Bvh(
        lo=_readonly(np.array(lo)),
        hi=_readonly(np.array(hi)),
        left=_readonly(np.array(left, dtype=np.int64)),
        right=_readonly(np.array(right, dtype=np.int64)),
        start=_readonly(np.array(start, dtype=np.int64)),
        count=_readonly(np.array(count, dtype=np.int64)),
        order=_readonly(order),
    )


def _mt_kernel(v0, e1, e2, origins, dirs):
    """Moller-Trumbore over broadcastable triangle (v0, e1, e2) and ray arrays."""
    p = np.cross(dirs, e2)
    det = (e1 * p).sum(-1)
    scale = np.linalg.norm(e1, axis=-1) * np.linalg.norm(e2, axis=-1)
    ok = np.abs(det) > 1e-14 * scale
    inv = np.divide(1.0, det, out=np.zeros_like(det), where=ok)
    s = origins - v0
    u = (s * p).sum(-1) * inv
    q = np.cross(s, e1)
    v = (dirs * q).sum(-1) * inv
    t = (e2 * q).sum(-1) * inv
    hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > RAY_EPS)
    return hit, t, u, v


def intersect_pairs(tri: np.ndarray, origins: np.ndarray, dirs: np.ndarray):
    """Moller-Trumbore on aligned arrays of triangles (N,3,3) and rays (N,3).

    Returns ``(hit, t, u, v)``; edges and vertices count as inside so that
    rays through a shared edge hit both neighbours.
    """
    return _mt_kernel(tri[:, 0], tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0], origins, dirs)


def _resolve(n_rays, ray_idx, face, t, u, v):
    """Nearest hit per ray; ties within TIE_TOL go to the lowest face index."""
    out_f = np.full(n_rays, -1, dtype=np.int64)
    out_t = np.full(n_rays, np.inf)
    out_b = np.zeros((n_rays, 3))
    if len(ray_idx) == 0:
        return out_f, out_t, out_b
    best = np.full(n_rays, np.inf)
    np.minimum.at(best, ray_idx, t)
    cand = t <= best[ray_idx] + TIE_TOL
    ray_idx, face, t, u, v = ray_idx[cand], face[cand], t[cand], u[cand], v[cand]
    order = np.lexsort((face, ray_idx))
    ray_idx, face, t, u, v = ray_idx[order], face[order], t[order], u[order], v[order]
    first = np.ones(len(ray_idx), dtype=bool)
    first[1:] = ray_idx[1:] != ray_idx[:-1]
    r = ray_idx[first]
    out_f[r] = face[first]
    out_t[r] = t[first]
    out_b[r] = np.stack([1.0 - u[first] - v[first], u[first], v[first]], axis=1)
    return out_f, out_t, out_b


def _as_ray_arrays(origins, directions):
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    return o, d


def ray_cast_many(mesh: TriMesh, bvh: Bvh, origins, directions):
    """Cast a batch of rays through the BVH.

    Traversal is breadth-first over (ray, node) pairs so the work is done in
    numpy. Returns arrays ``(face, distance, barycentric)``; misses have face
    ``-1`` and distance ``inf``.
    """
    o, d = _as_ray_arrays(origins, directions)
    n = len(o)
    with np.errstate(divide="ignore"):
        inv = 1.0 / d
    tris = mesh.triangles
    best = np.full(n, np.inf)
    hits_r, hits_f, hits_t, hits_u, hits_v = [], [], [], [], []

    rays = np.arange(n)
    nodes = np.zeros(n, dtype=np.int64)
    while len(rays):
        ro, ri = o[rays], inv[rays]
        with np.errstate(invalid="ignore"):
            t1 = (bvh.lo[nodes] - ro) * ri
            t2 = (bvh.hi[nodes] - ro) * ri
        tnear = np.fmax.reduce(np.fmin(t1, t2), axis=1)
        tfar = np.fmin.reduce(np.fmax(t1, t2), axis=1)
        tnear = np.nan_to_num(tnear, nan=-np.inf)
        tfar = np.nan_to_num(tfar, nan=np.inf)
        keep = (tfar >= np.maximum(tnear, 0.0)) & (tnear <= best[rays] + TIE_TOL)
        rays, nodes = rays[keep], nodes[keep]

        leaf = bvh.left[nodes] < 0
        lr, ln = rays[leaf], nodes[leaf]
        if len(lr):
            cnt = bvh.count[ln]
            pr = np.repeat(lr, cnt)
            offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            pf = bvh.order[np.repeat(bvh.start[ln], cnt) + offs]
            hit, t, u, v = intersect_pairs(tris[pf], o[pr], d[pr])
            if hit.any():
                pr, pf, t, u, v = pr[hit], pf[hit], t[hit], u[hit], v[hit]
                np.minimum.at(best, pr, t)
                hits_r.append(pr)
                hits_f.append(pf)
                hits_t.append(t)
                hits_u.append(u)
                hits_v.append(v)

        ir, inn = rays[~leaf], nodes[~leaf]
        rays = np.concatenate([ir, ir])
        nodes = np.concatenate([bvh.left[inn], bvh.right[inn]])

    if not hits_r:
        return _resolve(n, np.zeros(0, np.int64), *([np.zeros(0)] * 4))
    return _resolve(
        n,
        np.concatenate(hits_r),
        np.concatenate(hits_f),
        np.concatenate(hits_t),
        np.concatenate(hits_u),
        np.concatenate(hits_v),
    )


def ray_cast_brute_many(mesh: TriMesh, origins, directions, chunk: int = 1_000_000):
    """All-triangles reference for :func:`ray_cast_many` (same output layout)."""
    o, d = _as_ray_arrays(origins, directions)
    n, nf = len(o), mesh.n_faces
    tris = mesh.triangles
    v0, e1, e2 = tris[:, 0], tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]
    step = max(1, chunk // nf)
    parts = []
    for s in range(0, n, step):
        rs = np.arange(s, min(n, s + step))
        hit, t, u, v = _mt_kernel(v0, e1, e2, o[rs, None, :], d[rs, None, :])
        ri, fi = np.nonzero(hit)
        parts.append((rs[ri], fi, t[ri, fi], u[ri, fi], v[ri, fi]))
    return _resolve(n, *(np.concatenate(x) for x in zip(*parts)))


def _to_hit(f, t, b) -> Hit | None:
    if f[0] < 0:
        return None
    return Hit(face=int(f[0]), distance=float(t[0]), barycentric=tuple(float(x) for x in b[0]))


def ray_cast(mesh: TriMesh, bvh: Bvh, ray: Ray) -> Hit | None:
    return _to_hit(*ray_cast_many(mesh, bvh, ray.origin, ray.direction))


def ray_cast_brute(mesh: TriMesh, ray: Ray) -> Hit | None:
    return _to_hit(*ray_cast_brute_many(mesh, ray.origin, ray.direction))


# ---------------------------------------------------------------- boxes


@dataclass(frozen=True)
class OrientedBox:
    """Box with ``rotation`` columns as its local axes in world coordinates."""

    center: np.ndarray
    half_extents: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        h = np.asarray(self.half_extents, dtype=np.float64).reshape(3)
        if not np.all(h > 0):
            raise ValueError("half extents must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "half_extents", h)
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))

    @property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.half_extents))

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
        return self.center + (signs * self.half_extents) @ self.rotation.T


def box_triangles_overlap(box: OrientedBox, tris) -> np.ndarray:
    """Separating-axis test of one closed box against (N, 3, 3) closed triangles."""
    tris = np.asarray(tris, dtype=np.float64).reshape(-1, 3, 3)
    h = box.half_extents
    # work in the box frame, where the box is axis aligned
    local = (tris - box.center) @ box.rotation
    # the 3 box axes first: cheap, and they reject most far triangles
    out = np.all(local.min(axis=1) <= h, axis=1) & np.all(local.max(axis=1) >= -h, axis=1)
    idx = np.flatnonzero(out)
    if not len(idx):
        return out
    local = local[idx]
    edges = np.stack(
        [local[:, 1] - local[:, 0], local[:, 2] - local[:, 1], local[:, 0] - local[:, 2]], axis=1
    )
    normal = np.cross(edges[:, 0], edges[:, 1])
    # 9 edge x box-axis products and the triangle normal
    cross_axes = np.cross(np.eye(3)[None, :, None, :], edges[:, None, :, :]).reshape(-1, 9, 3)
    axes = np.concatenate([cross_axes, normal[:, None, :]], axis=1)
    proj = np.matmul(axes, local.transpose(0, 2, 1))
    radius = np.abs(axes) @ h
    sep = (proj.min(axis=2) > radius) | (proj.max(axis=2) < -radius)
    out[idx] = ~sep.any(axis=1)
    return out


def box_triangle_overlap(box: OrientedBox, tri) -> bool:
    return bool(box_triangles_overlap(box, np.asarray(tri, dtype=np.float64)[None])[0])
