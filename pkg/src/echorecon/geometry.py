"""Planes, poses, meshes and voxel grids.

World coordinates are millimetres throughout.  A slice plane is posed by a
reference point ``p0``, a unit normal ``n``, an in-plane translation
``(du, dv)`` in slice units and an isotropic scale ``s`` in mm per slice
unit.  The in-plane basis is not part of the pose; it is derived
deterministically from the normal (see :func:`plane_frame`) so pose files
are portable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidArgument

Vec3 = np.ndarray  # shape (3,), float64


def as_vec3(x) -> Vec3:
    v = np.asarray(x, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(v)):
        raise InvalidArgument(f"non-finite vector {v}")
    return v


@dataclass(frozen=True)
class Frame:
    """Right-handed orthonormal in-plane basis (e_u, e_v) for a normal."""

    e_u: Vec3
    e_v: Vec3


def plane_frame(n) -> Frame:
    """Deterministic in-plane frame for a unit normal.

    The canonical axis least aligned with ``n`` (smallest absolute
    component, ties broken x < y < z) seeds the basis:
    ``e_u = normalize(a x n)``, ``e_v = n x e_u``.
    """
    n = as_vec3(n)
    norm = float(np.linalg.norm(n))
    if abs(norm - 1.0) > 1e-6:
        raise InvalidArgument(f"normal must be unit length, got |n| = {norm:.3e}")
    a = np.zeros(3)
    a[int(np.argmin(np.abs(n)))] = 1.0
    e_u = np.cross(a, n)
    e_u = e_u / np.linalg.norm(e_u)
    e_v = np.cross(n, e_u)
    return Frame(e_u=e_u, e_v=e_v)


@dataclass
class PlanePose:
    """Spatial pose of a 2D slice: p0 + s*((u+du)*e_u + (v+dv)*e_v)."""

    p0: Vec3
    n: Vec3
    du: float = 0.0
    dv: float = 0.0
    s: float = 1.0
    name: str = ""

    def __post_init__(self):
        self.p0 = as_vec3(self.p0)
        n = as_vec3(self.n)
        norm = float(np.linalg.norm(n))
        if abs(norm - 1.0) > 1e-6:
            raise InvalidArgument(f"pose normal must be unit length, got |n| = {norm:.3e}")
        self.n = n / norm
        self.du = float(self.du)
        self.dv = float(self.dv)
        self.s = float(self.s)
        if not self.s > 0:
            raise InvalidArgument(f"pose scale must be positive, got {self.s}")

    def frame(self) -> Frame:
        return plane_frame(self.n)

    def copy(self) -> "PlanePose":
        return PlanePose(self.p0.copy(), self.n.copy(), self.du, self.dv, self.s, self.name)


def slice_to_world(pose: PlanePose, uv) -> np.ndarray:
    """Map slice coordinates to world mm.

    ``uv`` may be a single (u, v) pair or an (N, 2) array; the result has
    matching shape (3,) or (N, 3).
    """
    uv_arr = np.asarray(uv, dtype=np.float64)
    single = uv_arr.ndim == 1
    uv_arr = np.atleast_2d(uv_arr)
    f = pose.frame()
    offs = (uv_arr[:, 0] + pose.du)[:, None] * f.e_u + (uv_arr[:, 1] + pose.dv)[:, None] * f.e_v
    pts = pose.p0 + pose.s * offs
    return pts[0] if single else pts


def poses_to_json(poses: list[PlanePose]) -> list[dict]:
    return [
        {
            "p0": [float(x) for x in p.p0],
            "n": [float(x) for x in p.n],
            "du": p.du,
            "dv": p.dv,
            "s": p.s,
            "name": p.name,
        }
        for p in poses
    ]


def poses_from_json(data) -> list[PlanePose]:
    if not isinstance(data, list):
        raise FormatError("pose file must contain a JSON array")
    out = []
    for i, entry in enumerate(data):
        try:
            out.append(
                PlanePose(
                    p0=entry["p0"],
                    n=entry["n"],
                    du=entry.get("du", 0.0),
                    dv=entry.get("dv", 0.0),
                    s=entry.get("s", 1.0),
                    name=entry.get("name", ""),
                )
            )
        except (KeyError, TypeError, InvalidArgument) as e:
            raise FormatError(f"bad pose entry {i}: {e}") from e
    return out


def save_poses(poses: list[PlanePose], path) -> None:
    from ._io import atomic_write_text

    atomic_write_text(path, json.dumps(poses_to_json(poses), indent=2) + "\n")


def load_poses(path) -> list[PlanePose]:
    with open(path, "r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"invalid JSON: {e}", path=str(path)) from e
    return poses_from_json(data)


# ---------------------------------------------------------------------------
# Triangle meshes


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64, mm
    faces: np.ndarray  # (F, 3) int64
    warnings: list[str] = field(default_factory=list)
    dropped_degenerate: int = 0

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            bad = int(np.nonzero((self.faces < 0) | (self.faces >= len(self.vertices)))[0][0])
            raise InvalidArgument(f"face {bad} references a vertex out of range")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def edge_face_counts(self) -> dict[tuple[int, int], int]:
        counts: dict[tuple[int, int], int] = {}
        for a, b, c in self.faces:
            for i, j in ((a, b), (b, c), (c, a)):
                key = (int(i), int(j)) if i < j else (int(j), int(i))
                counts[key] = counts.get(key, 0) + 1
        return counts

    def boundary_edge_count(self) -> int:
        return sum(1 for v in self.edge_face_counts().values() if v != 2)

    def is_closed(self) -> bool:
        return self.num_faces > 0 and self.boundary_edge_count() == 0


def _face_areas_sq(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    v0 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - v0
    e2 = vertices[faces[:, 2]] - v0
    cr = np.cross(e1, e2)
    return 0.25 * np.einsum("ij,ij->i", cr, cr)


def _clean_faces(vertices: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, int]:
    """Drop zero-area faces (including repeated-index faces)."""
    if len(faces) == 0:
        return faces, 0
    repeated = (
        (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
    )
    keep = ~repeated
    keep[keep] = _face_areas_sq(vertices, faces[keep]) > 1e-24
    return faces[keep], int((~keep).sum())


def make_mesh(vertices, faces, check_manifold: bool = True) -> TriangleMesh:
    """Build a mesh, dropping degenerate faces and flagging non-manifold edges."""
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    faces, dropped = _clean_faces(vertices, faces)
    mesh = TriangleMesh(vertices, faces, dropped_degenerate=dropped)
    if dropped:
        mesh.warnings.append(f"dropped {dropped} degenerate face(s)")
    if check_manifold and mesh.num_faces:
        bad = mesh.boundary_edge_count()
        if bad:
            mesh.warnings.append(f"non-manifold: {bad} edge(s) not shared by exactly 2 faces")
    return mesh


def _parse_obj(path) -> tuple[np.ndarray, list[tuple[int, list[int]]]]:
    vertices: list[list[float]] = []
    faces: list[tuple[int, list[int]]] = []
    with open(path, "r") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise FormatError("vertex line needs 3 coordinates", path=str(path), line=lineno)
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as e:
                    raise FormatError(f"bad vertex coordinate: {e}", path=str(path), line=lineno) from e
            elif tag == "f":
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/")[0]
                    try:
                        k = int(head)
                    except ValueError as e:
                        raise FormatError(f"bad face index {tok!r}", path=str(path), line=lineno) from e
                    if k == 0:
                        raise FormatError("face index 0 is not valid in OBJ", path=str(path), line=lineno)
                    idx.append(k - 1 if k > 0 else len(vertices) + k)
                if len(idx) < 3:
                    raise FormatError("face needs at least 3 vertices", path=str(path), line=lineno)
                faces.append((lineno, idx))
            # all other directives ignored (vn, vt, o, g, s, usemtl, ...)
    if not vertices:
        raise FormatError("no vertices found", path=str(path))
    return np.asarray(vertices, dtype=np.float64), faces


def _parse_ply(path) -> tuple[np.ndarray, list[tuple[int, list[int]]]]:
    with open(path, "r") as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError("missing 'ply' magic", path=str(path), line=1)
    n_vert = n_face = None
    vert_props: list[str] = []
    in_vertex = False
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        i += 1
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise FormatError("only ASCII PLY is supported", path=str(path), line=i)
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if parts[1] == "vertex":
                n_vert = int(parts[2])
            elif parts[1] == "face":
                n_face = int(parts[2])
        elif parts[0] == "property" and in_vertex and parts[1] != "list":
            vert_props.append(parts[-1])
        elif parts[0] == "end_header":
            break
    else:
        raise FormatError("missing end_header", path=str(path))
    if n_vert is None or n_face is None:
        raise FormatError("header must declare vertex and face elements", path=str(path))
    try:
        ix, iy, iz = (vert_props.index(c) for c in ("x", "y", "z"))
    except ValueError as e:
        raise FormatError("vertex element must carry x, y, z properties", path=str(path)) from e

    vertices = np.empty((n_vert, 3), dtype=np.float64)
    for k in range(n_vert):
        lineno = i + k + 1
        try:
            toks = lines[i + k].split()
            vertices[k] = (float(toks[ix]), float(toks[iy]), float(toks[iz]))
        except (IndexError, ValueError) as e:
            raise FormatError(f"bad vertex row: {e}", path=str(path), line=lineno) from e
    faces: list[tuple[int, list[int]]] = []
    for k in range(n_face):
        lineno = i + n_vert + k + 1
        try:
            toks = lines[i + n_vert + k].split()
            cnt = int(toks[0])
            idx = [int(t) for t in toks[1 : 1 + cnt]]
            if len(idx) != cnt or cnt < 3:
                raise ValueError("face vertex count mismatch")
        except (IndexError, ValueError) as e:
            raise FormatError(f"bad face row: {e}", path=str(path), line=lineno) from e
        faces.append((lineno, idx))
    return vertices, faces


def mesh_load(path) -> TriangleMesh:
    """Load an OBJ or ASCII PLY mesh; polygons are fan-triangulated."""
    p = str(path)
    if p.lower().endswith(".obj"):
        vertices, polys = _parse_obj(path)
    elif p.lower().endswith(".ply"):
        vertices, polys = _parse_ply(path)
    else:
        raise FormatError(f"unsupported mesh extension: {p}", path=p)
    tris: list[list[int]] = []
    for lineno, idx in polys:
        for k in idx:
            if k < 0 or k >= len(vertices):
                raise FormatError(
                    f"face references vertex {k + 1} of {len(vertices)}", path=p, line=lineno
                )
        for a, b in zip(idx[1:-1], idx[2:]):
            tris.append([idx[0], a, b])
    return make_mesh(vertices, np.asarray(tris, dtype=np.int64).reshape(-1, 3))


def mesh_save(mesh: TriangleMesh, path) -> None:
    """Write OBJ or ASCII PLY; coordinates keep full float64 precision."""
    from ._io import atomic_write_text

    p = str(path)
    if p.lower().endswith(".obj"):
        out = []
        for v in mesh.vertices:
            out.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
        for f in mesh.faces:
            out.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
        atomic_write_text(path, "\n".join(out) + "\n")
    elif p.lower().endswith(".ply"):
        out = [
            "ply",
            "format ascii 1.0",
            f"element vertex {mesh.num_vertices}",
            "property double x",
            "property double y",
            "property double z",
            f"element face {mesh.num_faces}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        for v in mesh.vertices:
            out.append(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
        for f in mesh.faces:
            out.append(f"3 {f[0]} {f[1]} {f[2]}")
        atomic_write_text(path, "\n".join(out) + "\n")
    else:
        raise FormatError(f"unsupported mesh extension: {p}", path=p)


# ---------------------------------------------------------------------------
# Voxel grids


@dataclass
class VoxelGrid:
    """Cell-centred occupancy over a regular grid.

    ``origin`` is the corner of the grid box; the centre of cell
    ``(i, j, k)`` sits at ``origin + (i+0.5, j+0.5, k+0.5) * spacing``.
    """

    origin: Vec3
    spacing: float
    dims: tuple[int, int, int]
    occupancy: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.origin = as_vec3(self.origin)
        self.spacing = float(self.spacing)
        self.dims = tuple(int(d) for d in self.dims)
        if not self.spacing > 0:
            raise InvalidArgument(f"spacing must be positive, got {self.spacing}")
        if any(d < 2 for d in self.dims):
            raise InvalidArgument(f"dims must be >= 2 per axis, got {self.dims}")
        for name, occ in self.occupancy.items():
            if occ.shape != self.dims:
                raise InvalidArgument(f"occupancy {name!r} shape {occ.shape} != dims {self.dims}")

    def cell_centers(self) -> np.ndarray:
        nx, ny, nz = self.dims
        ii, jj, kk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
        idx = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3).astype(np.float64)
        return self.origin + (idx + 0.5) * self.spacing

    @property
    def voxel_volume_mm3(self) -> float:
        return self.spacing**3

    def same_geometry(self, other: "VoxelGrid") -> bool:
        return (
            self.dims == other.dims
            and abs(self.spacing - other.spacing) < 1e-12
            and bool(np.all(np.abs(self.origin - other.origin) < 1e-9))
        )


def voxelgrid_save(grid: VoxelGrid, path_prefix) -> None:
    """Debug dump: <prefix>.json header plus <prefix>.bin packed occupancy."""
    from ._io import atomic_write_bytes, atomic_write_text

    names = sorted(grid.occupancy)
    header = {
        "dims": list(grid.dims),
        "origin": [float(x) for x in grid.origin],
        "spacing": grid.spacing,
        "structures": names,
        "dtype": "uint8",
        "order": "C",
    }
    atomic_write_text(str(path_prefix) + ".json", json.dumps(header, indent=2) + "\n")
    payload = b"".join(grid.occupancy[n].astype(np.uint8).tobytes(order="C") for n in names)
    atomic_write_bytes(str(path_prefix) + ".bin", payload)


def voxelgrid_load(path_prefix) -> VoxelGrid:
    with open(str(path_prefix) + ".json", "r") as f:
        header = json.load(f)
    dims = tuple(header["dims"])
    count = dims[0] * dims[1] * dims[2]
    raw = np.fromfile(str(path_prefix) + ".bin", dtype=np.uint8)
    names = header["structures"]
    if raw.size != count * len(names):
        raise FormatError(
            f"payload has {raw.size} bytes, expected {count * len(names)}",
            path=str(path_prefix) + ".bin",
        )
    occ = {
        name: raw[i * count : (i + 1) * count].reshape(dims).astype(bool)
        for i, name in enumerate(names)
    }
    return VoxelGrid(header["origin"], header["spacing"], dims, occ)
