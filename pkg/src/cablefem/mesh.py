"""Environment triangle meshes: STL/OBJ ingestion, AABB tree, mesh utilities.

Convention: triangle normals point toward the free side of the wall (into the
cavity the robot travels in). `orient_normals` flips winding so this holds for
a given reference configuration of the robot.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshError

_DEGENERATE_AREA = 1e-20  # m^2 (twice-area actually; far below any real facet)


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float
    triangles: np.ndarray  # (T, 3) int
    normals: np.ndarray = field(init=False)  # (T, 3) unit, from winding

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size == 0:
            raise MeshError("mesh has no triangles")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("mesh vertices contain non-finite values")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise MeshError("triangle indices out of range")
        self.normals = self._winding_normals()

    def _winding_normals(self):
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        cross = np.cross(b - a, c - a)
        norm = np.linalg.norm(cross, axis=1)
        bad = np.flatnonzero(norm * norm < _DEGENERATE_AREA)
        if bad.size:
            raise MeshError(f"degenerate (zero-area) triangles at indices {bad[:10].tolist()}")
        return cross / norm[:, None]

    @property
    def triangle_count(self):
        return len(self.triangles)

    def bounds(self):
        used = self.vertices[np.unique(self.triangles)]
        return used.min(axis=0), used.max(axis=0)

    def flip(self, which):
        """Reverse winding (and hence the normal) of the given triangle indices."""
        which = np.asarray(which, dtype=np.int64)
        self.triangles[which] = self.triangles[which][:, [0, 2, 1]]
        self.normals[which] = -self.normals[which]

    def corners(self):
        """(T, 3, 3) corner positions."""
        return self.vertices[self.triangles]


def load_mesh(path):
    """Load an STL (binary or ASCII) or triangulated OBJ file, units meters."""
    path = Path(path)
    if not path.exists():
        raise MeshError(f"mesh file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".stl":
        return _load_stl(path)
    if suffix == ".obj":
        return _load_obj(path)
    raise MeshError(f"unsupported mesh format '{suffix}' (want .stl or .obj): {path}")


def _load_stl(path):
    raw = path.read_bytes()
    if len(raw) >= 84:
        (count,) = struct.unpack_from("<I", raw, 80)
        if len(raw) == 84 + 50 * count:
            return _parse_stl_binary(raw, count)
    text = raw.decode("ascii", errors="replace")
    if text.lstrip().lower().startswith("solid"):
        return _parse_stl_ascii(text, path)
    raise MeshError(f"not a valid STL file: {path}")


def _parse_stl_binary(raw, count):
    rec = np.frombuffer(raw[84:84 + 50 * count], dtype=np.uint8).reshape(count, 50)
    floats = rec[:, :48].copy().view("<f4").reshape(count, 12).astype(float)
    verts = floats[:, 3:12].reshape(count * 3, 3)
    return _dedup(verts)


def _parse_stl_ascii(text, path):
    verts = []
    for line in text.splitlines():
        parts = line.split()
        if parts and parts[0] == "vertex":
            if len(parts) != 4:
                raise MeshError(f"malformed STL vertex line in {path}: {line!r}")
            verts.append([float(v) for v in parts[1:4]])
    if not verts or len(verts) % 3 != 0:
        raise MeshError(f"ASCII STL facet list incomplete in {path}")
    return _dedup(np.asarray(verts, dtype=float))


def _dedup(flat_vertices):
    uniq, inverse = np.unique(flat_vertices, axis=0, return_inverse=True)
    tris = inverse.reshape(-1, 3)
    return TriangleMesh(uniq, tris)


def _load_obj(path):
    verts = []
    faces = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            verts.append([float(v) for v in parts[1:4]])
        elif parts[0] == "f":
            refs = parts[1:]
            if len(refs) != 3:
                raise MeshError(
                    f"{path} line {lineno}: face with {len(refs)} vertices; "
                    "only triangulated OBJ is supported (re-export with triangulation)")
            faces.append([int(r.split("/")[0]) - 1 for r in refs])
    if not faces:
        raise MeshError(f"no faces found in {path}")
    return TriangleMesh(np.asarray(verts, dtype=float), np.asarray(faces))


def save_stl(mesh, path):
    """Write binary STL (units meters, normals from winding)."""
    count = mesh.triangle_count
    buf = bytearray(b"\0" * 80)
    buf += struct.pack("<I", count)
    corners = mesh.corners()
    for t in range(count):
        buf += struct.pack("<3f", *mesh.normals[t])
        for k in range(3):
            buf += struct.pack("<3f", *corners[t, k])
        buf += b"\0\0"
    Path(path).write_bytes(bytes(buf))


def orient_normals(mesh, reference_points):
    """Flip windings so normals face the given free-space reference points.

    A winding-consistent surface has a single global orientation sign, so the
    decision is a distance-weighted majority vote over facets (per-facet
    nearest-point tests are unreliable for facets oblique to the reference
    set). Returns the number of flipped triangles (0 or all).
    """
    pts = np.asarray(reference_points, dtype=float).reshape(-1, 3)
    centroids = mesh.corners().mean(axis=1)
    d2 = ((centroids[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    nearest_idx = np.argmin(d2, axis=1)
    nearest = pts[nearest_idx]
    offset = nearest - centroids
    side = np.einsum("ij,ij->i", mesh.normals, offset)
    weight = 1.0 / np.maximum(np.einsum("ij,ij->i", offset, offset), 1e-18)
    score = float(np.sign(side) @ weight)
    if score < 0.0:
        mesh.flip(np.arange(mesh.triangle_count))
        return int(mesh.triangle_count)
    return 0


def mesh_info(mesh):
    """Report triangle count, bounds, and winding/normal consistency."""
    lo, hi = mesh.bounds()
    edges = {}
    consistent = True
    for tri in mesh.triangles:
        for e in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(e), max(e))
            direction = 1 if e[0] < e[1] else -1
            seen = edges.setdefault(key, [])
            seen.append(direction)
    for uses in edges.values():
        if len(uses) > 2 or (len(uses) == 2 and uses[0] == uses[1]):
            consistent = False
            break
    unit_err = float(np.abs(np.linalg.norm(mesh.normals, axis=1) - 1.0).max())
    return {
        "triangle_count": int(mesh.triangle_count),
        "vertex_count": int(len(mesh.vertices)),
        "bounds_min": lo.tolist(),
        "bounds_max": hi.tolist(),
        "winding_consistent": consistent,
        "max_unit_normal_error": unit_err,
    }


class AabbTree:
    """Static axis-aligned bounding-box tree over triangles (median split)."""

    LEAF_SIZE = 8

    def __init__(self, mesh):
        corners = mesh.corners()
        self.tri_lo = corners.min(axis=1)
        self.tri_hi = corners.max(axis=1)
        n = len(corners)
        self.order = np.arange(n)
        centers = 0.5 * (self.tri_lo + self.tri_hi)

        # nodes as parallel arrays; children == -1 marks a leaf
        self.node_lo, self.node_hi = [], []
        self.node_left, self.node_right = [], []
        self.node_start, self.node_count = [], []
        self._build(0, n, centers)
        self.node_lo = np.asarray(self.node_lo)
        self.node_hi = np.asarray(self.node_hi)
        self.node_left = np.asarray(self.node_left)
        self.node_right = np.asarray(self.node_right)
        self.node_start = np.asarray(self.node_start)
        self.node_count = np.asarray(self.node_count)

    def _build(self, start, end, centers):
        idx = len(self.node_lo)
        sel = self.order[start:end]
        self.node_lo.append(self.tri_lo[sel].min(axis=0))
        self.node_hi.append(self.tri_hi[sel].max(axis=0))
        self.node_left.append(-1)
        self.node_right.append(-1)
        self.node_start.append(start)
        self.node_count.append(end - start)
        if end - start <= self.LEAF_SIZE:
            return idx
        axis = int(np.argmax(self.node_hi[idx] - self.node_lo[idx]))
        mid = (start + end) // 2
        # stable partition keeps the build deterministic
        keys = centers[sel][:, axis]
        perm = np.argsort(keys, kind="stable")
        self.order[start:end] = sel[perm]
        self.node_left[idx] = self._build(start, mid, centers)
        self.node_right[idx] = self._build(mid, end, centers)
        return idx

    def query_sphere(self, point, radius):
        """Triangle indices whose AABB intersects the sphere, ascending order."""
        point = np.asarray(point, dtype=float)
        out = []
        stack = [0]
        while stack:
            node = stack.pop()
            gap = np.maximum(self.node_lo[node] - point,
                             np.maximum(0.0, point - self.node_hi[node]))
            if gap @ gap > radius * radius:
                continue
            if self.node_left[node] < 0:
                s = self.node_start[node]
                cand = self.order[s:s + self.node_count[node]]
                lo = self.tri_lo[cand]
                hi = self.tri_hi[cand]
                g = np.maximum(lo - point, np.maximum(0.0, point - hi))
                keep = np.einsum("ij,ij->i", g, g) <= radius * radius
                out.extend(cand[keep].tolist())
            else:
                stack.append(self.node_right[node])
                stack.append(self.node_left[node])
        out.sort()
        return np.asarray(out, dtype=np.int64)


def closest_points_on_triangles(p, a, b, c):
    """Closest point(s) to p on each triangle (a[i], b[i], c[i]); vectorized.

    p is a single point broadcast over all rows, or one point per row.
    Standard region classification on the barycentric plane.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim == 1:
        p = np.broadcast_to(p, a.shape)
    ab = b - a
    ac = c - a
    ap = p - a

    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    out = np.empty_like(a)
    done = np.zeros(len(a), dtype=bool)

    def assign(mask, value):
        mask = mask & ~done
        out[mask] = value[mask]
        done[mask] = True

    assign((d1 <= 0) & (d2 <= 0), a)  # vertex A
    assign((d3 >= 0) & (d4 <= d3), b)  # vertex B
    assign((d6 >= 0) & (d5 <= d6), c)  # vertex C

    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = np.where(d1 - d3 != 0.0, d1 / (d1 - d3), 0.0)
    assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v_ab[:, None] * ab)  # edge AB

    vb = d5 * d2 - d1 * d6
    with np.errstate(divide="ignore", invalid="ignore"):
        w_ac = np.where(d2 - d6 != 0.0, d2 / (d2 - d6), 0.0)
    assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w_ac[:, None] * ac)  # edge AC

    va = d3 * d6 - d5 * d4
    denom_bc = (d4 - d3) + (d5 - d6)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_bc = np.where(denom_bc != 0.0, (d4 - d3) / denom_bc, 0.0)
    assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0),
           b + w_bc[:, None] * (c - b))  # edge BC

    # interior
    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(denom != 0.0, vb / denom, 0.0)
        w = np.where(denom != 0.0, vc / denom, 0.0)
    interior = ~done
    out[interior] = (a + v[:, None] * ab + w[:, None] * ac)[interior]
    return out


def make_rectangle(center, u_span, v_span, normal_axis="z"):
    """Two-triangle rectangle; winding gives +axis normal."""
    cx, cy, cz = center
    axes = {"z": ((1, 0, 0), (0, 1, 0)), "y": ((0, 0, 1), (1, 0, 0)),
            "x": ((0, 1, 0), (0, 0, 1))}
    u, v = (np.asarray(a, dtype=float) for a in axes[normal_axis])
    c = np.asarray(center, dtype=float)
    p00 = c - u * u_span / 2 - v * v_span / 2
    p10 = c + u * u_span / 2 - v * v_span / 2
    p11 = c + u * u_span / 2 + v * v_span / 2
    p01 = c - u * u_span / 2 + v * v_span / 2
    verts = np.array([p00, p10, p11, p01])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return TriangleMesh(verts, tris)


def make_tube(path_points, radii, segments=16):
    """Tube around a polyline with per-point radius; normals point inward.

    Sections are swept with parallel-transported frames so the tube does not
    twist along a curved path.
    """
    path = np.asarray(path_points, dtype=float)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(path),))
    if len(path) < 2:
        raise MeshError("tube path needs at least two points")

    tangents = np.gradient(path, axis=0)
    tangents /= np.linalg.norm(tangents, axis=1, keepdims=True)
    # parallel transport an initial normal along the path
    ref = np.array([0.0, 0.0, 1.0])
    if abs(tangents[0] @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    n0 = np.cross(tangents[0], ref)
    n0 /= np.linalg.norm(n0)
    frames = [n0]
    for i in range(1, len(path)):
        n_prev = frames[-1]
        t = tangents[i]
        n_new = n_prev - (n_prev @ t) * t
        norm = np.linalg.norm(n_new)
        if norm < 1e-12:
            n_new = np.cross(t, ref)
            norm = np.linalg.norm(n_new)
        frames.append(n_new / norm)

    angles = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    rings = []
    for i in range(len(path)):
        b = np.cross(tangents[i], frames[i])
        ring = (path[i][None, :]
                + radii[i] * (np.cos(angles)[:, None] * frames[i][None, :]
                              + np.sin(angles)[:, None] * b[None, :]))
        rings.append(ring)
    verts = np.vstack(rings)

    tris = []
    for i in range(len(path) - 1):
        for j in range(segments):
            j2 = (j + 1) % segments
            a0 = i * segments + j
            a1 = i * segments + j2
            b0 = (i + 1) * segments + j
            b1 = (i + 1) * segments + j2
            # winding chosen so normals face the tube axis (free interior)
            tris.append([a0, b0, a1])
            tris.append([a1, b0, b1])
    mesh = TriangleMesh(verts, np.asarray(tris))
    orient_normals(mesh, path)
    return mesh
