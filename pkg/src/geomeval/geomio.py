"""Readers and writers for PLY point clouds, OBJ meshes and scene manifests."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import AxisAlignedBox, PointCloud, RigidPose, TriangleMesh
from .errors import (
    InvalidPose,
    InvalidTransform,
    IoFailure,
    MalformedFace,
    MalformedHeader,
    MalformedRecord,
    NonFiniteValue,
    SchemaViolation,
    TruncatedBody,
)

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
PLY_FORMATS = ("ascii", "binary_little_endian")
DEFAULT_TOLERANCES_MM = (2.0, 5.0)
POSE_TOL = 1e-6


@dataclass
class PlyProperty:
    name: str
    dtype: str
    # (count type, item type) for list properties
    list_types: tuple[str, str] | None = None


@dataclass
class PlyElement:
    name: str
    count: int
    properties: list[PlyProperty] = field(default_factory=list)

    def has_lists(self) -> bool:
        return any(p.list_types for p in self.properties)

    def numpy_dtype(self) -> np.dtype:
        return np.dtype([(p.name, "<" + p.dtype) for p in self.properties])


@dataclass
class PlyHeader:
    format: str
    elements: list[PlyElement]
    # byte offset of the body
    body_offset: int

    def element(self, name: str) -> PlyElement | None:
        for el in self.elements:
            if el.name == name:
                return el
        return None


def _parse_ply_header(f) -> PlyHeader:
    magic = f.readline()
    if magic.strip() != b"ply":
        raise MalformedHeader("file does not start with 'ply'")
    fmt = None
    elements: list[PlyElement] = []
    while True:
        raw = f.readline()
        if not raw:
            raise MalformedHeader("missing end_header")
        try:
            line = raw.decode("ascii").strip()
        except UnicodeDecodeError as e:
            raise MalformedHeader("non-ascii header line") from e
        if line == "end_header":
            break
        tokens = line.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        key = tokens[0]
        if key == "format":
            if len(tokens) < 2 or tokens[1] not in PLY_FORMATS:
                raise MalformedHeader(f"unsupported format line: {line!r}")
            fmt = tokens[1]
        elif key == "element":
            if len(tokens) != 3:
                raise MalformedHeader(f"bad element line: {line!r}")
            try:
                count = int(tokens[2])
            except ValueError:
                raise MalformedHeader(f"bad element count: {line!r}") from None
            if count < 0:
                raise MalformedHeader(f"negative element count: {line!r}")
            elements.append(PlyElement(tokens[1], count))
        elif key == "property":
            if not elements:
                raise MalformedHeader("property before any element")
            if len(tokens) == 5 and tokens[1] == "list":
                if tokens[2] not in PLY_TYPES or tokens[3] not in PLY_TYPES:
                    raise MalformedHeader(f"unknown list types: {line!r}")
                prop = PlyProperty(tokens[4], PLY_TYPES[tokens[3]],
                                   (PLY_TYPES[tokens[2]], PLY_TYPES[tokens[3]]))
            elif len(tokens) == 3:
                if tokens[1] not in PLY_TYPES:
                    raise MalformedHeader(f"unknown property type: {line!r}")
                prop = PlyProperty(tokens[2], PLY_TYPES[tokens[1]])
            else:
                raise MalformedHeader(f"bad property line: {line!r}")
            elements[-1].properties.append(prop)
        else:
            raise MalformedHeader(f"unknown header keyword: {key!r}")
    if fmt is None:
        raise MalformedHeader("missing format line")
    header = PlyHeader(fmt, elements, f.tell())
    vertex = header.element("vertex")
    if vertex is None:
        raise MalformedHeader("no vertex element")
    names = {p.name for p in vertex.properties}
    missing = [c for c in "xyz" if c not in names]
    if missing:
        raise MalformedHeader(f"vertex element lacks properties {missing}")
    for p in vertex.properties:
        if p.name in "xyz" and p.list_types:
            raise MalformedHeader(f"coordinate {p.name} declared as list")
    return header


def read_ply_header(path) -> PlyHeader:
    with open(path, "rb") as f:
        return _parse_ply_header(f)


def _ascii_vertex_table(lines: list[bytes], vertex: PlyElement, start: int) -> np.ndarray:
    n = vertex.count
    nprops = len(vertex.properties)
    rows = lines[start:start + n]
    if len(rows) < n:
        raise TruncatedBody(f"header declares {n} vertices, found {len(rows)}")
    if vertex.has_lists():
        # rare in point clouds: walk records one by one, keep scalar columns
        table = np.empty((n, nprops))
        for i, row in enumerate(rows):
            tokens = row.split()
            pos = 0
            for j, p in enumerate(vertex.properties):
                if p.list_types:
                    k = int(tokens[pos])
                    table[i, j] = np.nan
                    pos += 1 + k
                else:
                    table[i, j] = float(tokens[pos])
                    pos += 1
        return table
    try:
        flat = np.array(b" ".join(rows).split(), dtype=np.float64)
    except ValueError:
        for i, row in enumerate(rows):
            try:
                [float(t) for t in row.split()]
            except ValueError:
                raise MalformedRecord(f"vertex record {i} is not numeric: {row!r}") from None
        raise
    if flat.size != n * nprops:
        for i, row in enumerate(rows):
            if len(row.split()) != nprops:
                raise TruncatedBody(f"vertex record {i} has {len(row.split())} values, expected {nprops}")
    return flat.reshape(n, nprops)


def _skip_binary_element(buf: memoryview, offset: int, el: PlyElement) -> int:
    if el.has_lists():
        raise MalformedHeader(f"cannot skip binary list element {el.name!r} before vertex")
    return offset + el.count * el.numpy_dtype().itemsize


def read_ply_pointcloud(path) -> PointCloud:
    """Load the vertex element of a PLY file as a point cloud.

    Extra vertex properties (normals, opacities, SH coefficients) are skipped.
    ``red``/``green``/``blue`` become colors when all three are present.
    """
    try:
        with open(path, "rb") as f:
            header = _parse_ply_header(f)
            body = f.read()
    except OSError as e:
        raise IoFailure(str(e)) from e

    vertex = header.element("vertex")
    names = [p.name for p in vertex.properties]
    if header.format == "ascii":
        lines = body.splitlines()
        start = 0
        for el in header.elements:
            if el is vertex:
                break
            start += el.count
        table = _ascii_vertex_table(lines, vertex, start)
        cols = {name: table[:, j] for j, name in enumerate(names)}
    else:
        offset = 0
        for el in header.elements:
            if el is vertex:
                break
            offset = _skip_binary_element(memoryview(body), offset, el)
        if vertex.has_lists():
            raise MalformedHeader("binary vertex element with list properties is not supported")
        dt = vertex.numpy_dtype()
        need = vertex.count * dt.itemsize
        if offset + need > len(body):
            have = max(0, (len(body) - offset) // dt.itemsize)
            raise TruncatedBody(f"header declares {vertex.count} vertices, body holds {have}")
        rec = np.frombuffer(body, dtype=dt, count=vertex.count, offset=offset)
        cols = {name: rec[name] for name in names}

    pts = np.column_stack([cols["x"], cols["y"], cols["z"]]).astype(np.float64)
    bad = ~np.isfinite(pts).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonFiniteValue(f"non-finite coordinate in vertex record {i}", record_index=i)
    colors = None
    if all(c in cols for c in ("red", "green", "blue")):
        rgb = np.column_stack([cols["red"], cols["green"], cols["blue"]])
        colors = np.clip(rgb, 0, 255).astype(np.uint8)
    return PointCloud(pts, colors)


def write_ply_pointcloud(cloud: PointCloud, path, format: str = "binary_little_endian",
                         dtype: str | None = None) -> None:
    """Write a point cloud as PLY.

    ASCII output declares ``double`` coordinates printed with ``repr``
    (shortest round-tripping form), so float64 values survive exactly. Binary output uses ``float`` by
    default; pass ``dtype="double"`` for a lossless binary file.
    """
    if format not in PLY_FORMATS:
        raise ValueError(f"unknown PLY format {format!r}")
    if dtype is None:
        dtype = "double" if format == "ascii" else "float"
    if dtype not in ("float", "double"):
        raise ValueError(f"coordinate dtype must be float or double, got {dtype!r}")
    n = len(cloud)
    lines = ["ply", f"format {format} 1.0", f"element vertex {n}"]
    lines += [f"property {dtype} {c}" for c in "xyz"]
    if cloud.colors is not None:
        lines += [f"property uchar {c}" for c in ("red", "green", "blue")]
    lines.append("end_header")
    head = ("\n".join(lines) + "\n").encode("ascii")

    try:
        with open(path, "wb") as f:
            f.write(head)
            if format == "ascii":
                pts = cloud.points
                if cloud.colors is None:
                    body = "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in pts.tolist())
                else:
                    body = "".join(
                        f"{x!r} {y!r} {z!r} {r} {g} {b}\n"
                        for (x, y, z), (r, g, b) in zip(pts.tolist(), cloud.colors.tolist())
                    )
                f.write(body.encode("ascii"))
            else:
                fields = [(c, "<" + PLY_TYPES[dtype]) for c in "xyz"]
                if cloud.colors is not None:
                    fields += [(c, "u1") for c in ("red", "green", "blue")]
                rec = np.empty(n, dtype=fields)
                for j, c in enumerate("xyz"):
                    rec[c] = cloud.points[:, j]
                if cloud.colors is not None:
                    for j, c in enumerate(("red", "green", "blue")):
                        rec[c] = cloud.colors[:, j]
                f.write(rec.tobytes())
    except OSError as e:
        raise IoFailure(str(e)) from e


def read_obj_mesh(path) -> TriangleMesh:
    """Parse ``v`` and ``f`` records of a Wavefront OBJ file.

    Polygons are fan-triangulated around their first vertex. Negative indices
    count back from the vertices defined so far. Everything else is ignored.
    """
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    try:
        with open(path, "r", encoding="utf-8", errors="replace") as f:
            for lineno, line in enumerate(f, 1):
                if line.startswith("v "):
                    parts = line.split()
                    if len(parts) < 4:
                        raise MalformedRecord(f"line {lineno}: vertex needs 3 coordinates")
                    try:
                        verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
                    except ValueError:
                        raise MalformedRecord(f"line {lineno}: bad vertex {line.strip()!r}") from None
                elif line.startswith("f "):
                    idx = []
                    nv = len(verts)
                    for tok in line.split()[1:]:
                        try:
                            k = int(tok.split("/", 1)[0])
                        except ValueError:
                            raise MalformedFace(f"line {lineno}: bad face token {tok!r}") from None
                        if k == 0:
                            raise MalformedFace(f"line {lineno}: face index 0")
                        idx.append(k - 1 if k > 0 else nv + k)
                    if len(idx) < 3:
                        raise MalformedFace(f"line {lineno}: face with fewer than 3 vertices")
                    for i in idx:
                        if i < 0:
                            raise MalformedFace(f"line {lineno}: index out of range")
                    for j in range(1, len(idx) - 1):
                        faces.append((idx[0], idx[j], idx[j + 1]))
    except OSError as e:
        raise IoFailure(str(e)) from e

    vertices = np.array(verts, dtype=np.float64).reshape(-1, 3)
    tris = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if len(tris) and tris.max() >= len(vertices):
        raise MalformedFace(f"face index {int(tris.max()) + 1} exceeds {len(vertices)} vertices")
    bad = ~np.isfinite(vertices).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonFiniteValue(f"non-finite vertex {i}", record_index=i)
    return TriangleMesh(vertices, tris)


def write_obj_mesh(mesh: TriangleMesh, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write("".join(f"v {x!r} {y!r} {z!r}\n" for x, y, z in mesh.vertices.tolist()))
            f.write("".join(f"f {a + 1} {b + 1} {c + 1}\n" for a, b, c in mesh.faces.tolist()))
    except OSError as e:
        raise IoFailure(str(e)) from e


def read_mesh(path) -> TriangleMesh:
    """OBJ by default; ``.ply`` files load their vertices (faces are not read)."""
    if Path(path).suffix.lower() == ".ply":
        return TriangleMesh(read_ply_pointcloud(path).points)
    return read_obj_mesh(path)


# --- scene manifests -------------------------------------------------------

@dataclass(frozen=True)
class ObjectPlacement:
    mesh_path: Path
    pose: RigidPose


@dataclass(frozen=True)
class SceneManifest:
    scene_id: str
    reconstruction_path: Path
    objects: tuple[ObjectPlacement, ...]
    crop_box: AxisAlignedBox
    table_height: float
    marker_correspondences: tuple[tuple[np.ndarray, np.ndarray], ...] | None = None
    tolerances_mm: tuple[float, ...] = DEFAULT_TOLERANCES_MM


def _real(value, fieldname: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(fieldname, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise SchemaViolation(fieldname, "must be finite")
    return float(value)


def _vec3(value, fieldname: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != 3:
        raise SchemaViolation(fieldname, f"expected [x, y, z], got {value!r}")
    return np.array([_real(v, f"{fieldname}[{i}]") for i, v in enumerate(value)])


def _pose(value, fieldname: str) -> RigidPose:
    if (not isinstance(value, list) or len(value) != 4
            or not all(isinstance(r, list) and len(r) == 4 for r in value)):
        raise SchemaViolation(fieldname, "expected a row-major 4x4 matrix")
    m = np.array([[_real(v, fieldname) for v in row] for row in value])
    try:
        return RigidPose.from_matrix(m, tol=POSE_TOL)
    except InvalidTransform as e:
        raise InvalidPose(f"{fieldname}: {e}") from None


def parse_manifest(data: dict, base_dir: Path | str = ".") -> SceneManifest:
    """Validate a decoded manifest; relative paths resolve against ``base_dir``."""
    base = Path(base_dir)
    if not isinstance(data, dict):
        raise SchemaViolation("<root>", "manifest must be a JSON object")
    for key in ("scene_id", "reconstruction_path", "objects", "crop_box", "table_height"):
        if key not in data:
            raise SchemaViolation(key, "missing required field")

    scene_id = data["scene_id"]
    if not isinstance(scene_id, str) or not scene_id:
        raise SchemaViolation("scene_id", "expected a non-empty string")
    if not isinstance(data["reconstruction_path"], str):
        raise SchemaViolation("reconstruction_path", "expected a path string")
    recon = base / data["reconstruction_path"]

    objs = data["objects"]
    if not isinstance(objs, list) or not objs:
        raise SchemaViolation("objects", "expected a non-empty list")
    objects = []
    for i, o in enumerate(objs):
        name = f"objects[{i}]"
        if not isinstance(o, dict) or not isinstance(o.get("mesh_path"), str):
            raise SchemaViolation(f"{name}.mesh_path", "expected a path string")
        if "pose" not in o:
            raise SchemaViolation(f"{name}.pose", "missing required field")
        objects.append(ObjectPlacement(base / o["mesh_path"], _pose(o["pose"], f"{name}.pose")))

    box = data["crop_box"]
    if not isinstance(box, dict) or "min" not in box or "max" not in box:
        raise SchemaViolation("crop_box", "expected {min: [x,y,z], max: [x,y,z]}")
    lo, hi = _vec3(box["min"], "crop_box.min"), _vec3(box["max"], "crop_box.max")
    if np.any(lo > hi):
        raise SchemaViolation("crop_box", "min exceeds max")
    crop = AxisAlignedBox(lo, hi)

    table_height = _real(data["table_height"], "table_height")

    markers = None
    raw = data.get("marker_correspondences")
    if raw is not None:
        if not isinstance(raw, list):
            raise SchemaViolation("marker_correspondences", "expected a list")
        if len(raw) < 3:
            raise SchemaViolation("marker_correspondences", f"need at least 3 pairs, got {len(raw)}")
        pairs = []
        for i, c in enumerate(raw):
            if not isinstance(c, dict):
                raise SchemaViolation(f"marker_correspondences[{i}]", "expected {source, target}")
            pairs.append((_vec3(c.get("source"), f"marker_correspondences[{i}].source"),
                          _vec3(c.get("target"), f"marker_correspondences[{i}].target")))
        markers = tuple(pairs)

    taus = data.get("tolerances_mm")
    if taus is None:
        tolerances = DEFAULT_TOLERANCES_MM
    else:
        if not isinstance(taus, list) or not taus:
            raise SchemaViolation("tolerances_mm", "expected a non-empty list")
        tolerances = tuple(_real(t, "tolerances_mm") for t in taus)
        if tolerances[0] <= 0:
            raise SchemaViolation("tolerances_mm", "tolerances must be positive")
        if any(b <= a for a, b in zip(tolerances, tolerances[1:])):
            raise SchemaViolation("tolerances_mm", "tolerances must be strictly increasing")

    return SceneManifest(scene_id, recon, tuple(objects), crop, table_height, markers, tolerances)


def read_manifest(path) -> SceneManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(str(e)) from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaViolation("<root>", f"invalid JSON: {e}") from None
    return parse_manifest(data, path.parent)


def manifest_to_dict(m: SceneManifest, base_dir: Path | str | None = None) -> dict:
    def rel(p: Path) -> str:
        if base_dir is None:
            return str(p)
        try:
            return str(Path(p).relative_to(base_dir))
        except ValueError:
            return str(p)

    d = {
        "scene_id": m.scene_id,
        "reconstruction_path": rel(m.reconstruction_path),
        "objects": [{"mesh_path": rel(o.mesh_path), "pose": o.pose.as_matrix().tolist()}
                    for o in m.objects],
        "crop_box": {"min": m.crop_box.min.tolist(), "max": m.crop_box.max.tolist()},
        "table_height": m.table_height,
        "tolerances_mm": list(m.tolerances_mm),
    }
    if m.marker_correspondences is not None:
        d["marker_correspondences"] = [{"source": s.tolist(), "target": t.tolist()}
                                       for s, t in m.marker_correspondences]
    return d


def write_manifest(m: SceneManifest, path) -> None:
    path = Path(path)
    data = manifest_to_dict(m, path.parent)
    try:
        path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoFailure(str(e)) from e
