"""Mesh file parsing and writing: the ingestion boundary for triangle soups.

Supported formats: ASCII OBJ (v/f lines), PLY 1.0 ASCII and binary little
endian with float32 vertex positions and int32 face index lists. Normals
stored in files are ignored; face normals are always recomputed from the
vertex winding. Polygons are fan-triangulated from their first vertex.
"""
from __future__ import annotations

import enum
import struct
from pathlib import Path

import numpy as np

from .errors import SoupParseError
from .geometry import TriangleSoup

_PLY_MAGIC = b"ply"

# Fixed-size PLY scalar types we can read or skip over.
_PLY_SCALARS = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class MeshFormat(enum.Enum):
    OBJ_ASCII = "obj"
    PLY_ASCII = "ply_ascii"
    PLY_BINARY_LE = "ply_binary_le"


def detect_format(path) -> MeshFormat:
    """Detect the file format from extension plus magic bytes.

    Extension and content must agree; a conflict is an error, never a guess.
    """
    path = Path(path)
    ext = path.suffix.lower()
    with open(path, "rb") as f:
        head = f.read(512)
    looks_ply = head[:3] == _PLY_MAGIC and (len(head) == 3 or head[3:4] in (b"\n", b"\r"))
    if ext == ".obj":
        if looks_ply:
            raise SoupParseError("extension .obj but file carries a PLY magic header", path=path)
        return MeshFormat.OBJ_ASCII
    if ext == ".ply":
        if not looks_ply:
            raise SoupParseError("extension .ply but missing 'ply' magic header", path=path)
        for line in head.split(b"\n"):
            line = line.strip()
            if line.startswith(b"format"):
                parts = line.split()
                if len(parts) >= 2 and parts[1] == b"ascii":
                    return MeshFormat.PLY_ASCII
                if len(parts) >= 2 and parts[1] == b"binary_little_endian":
                    return MeshFormat.PLY_BINARY_LE
                raise SoupParseError(f"unsupported PLY format line {line!r}", path=path)
        raise SoupParseError("PLY header has no format line in the first 512 bytes", path=path)
    raise SoupParseError(f"unrecognized mesh extension {ext!r} (use .obj or .ply)", path=path)


def _parse_float(token, path, line_no):
    try:
        v = float(token)
    except ValueError:
        raise SoupParseError(f"bad float {token!r}", path=path, line=line_no) from None
    if not np.isfinite(v):
        raise SoupParseError(f"non-finite coordinate {token!r}", path=path, line=line_no)
    return v


def _fan(indices):
    return [(indices[0], indices[k], indices[k + 1]) for k in range(1, len(indices) - 1)]


def _load_obj(path) -> TriangleSoup:
    vertices = []
    faces = []
    with open(path, "r", errors="replace") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise SoupParseError("vertex line needs 3 coordinates", path=path, line=line_no)
                vertices.append([_parse_float(t, path, line_no) for t in parts[1:4]])
            elif tag == "f":
                if len(parts) < 4:
                    raise SoupParseError("face line needs at least 3 indices", path=path, line=line_no)
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise SoupParseError(f"bad face index {tok!r}", path=path, line=line_no) from None
                    if i > 0:
                        i -= 1
                    elif i < 0:
                        i += len(vertices)
                    else:
                        raise SoupParseError("face index 0 is invalid in OBJ", path=path, line=line_no)
                    if i < 0 or i >= len(vertices):
                        raise SoupParseError(f"face index {tok!r} out of range", path=path, line=line_no)
                    idx.append(i)
                faces.extend(_fan(idx))
            # vn/vt/usemtl/mtllib/o/g/s and anything else are ignored.
    if not faces:
        raise SoupParseError("no faces found", path=path)
    return TriangleSoup.from_arrays(np.asarray(vertices, dtype=np.float64), faces)


def _parse_ply_header(data, path):
    """Parse a PLY header; returns (fmt, elements, body_offset).

    elements is a list of (name, count, properties) where properties are
    ('list', count_dtype, item_dtype, name) or ('scalar', dtype, name).
    """
    end = data.find(b"end_header")
    if end < 0:
        raise SoupParseError("missing end_header", path=path)
    nl = data.find(b"\n", end)
    if nl < 0:
        raise SoupParseError("truncated header", path=path)
    body_offset = nl + 1
    header_lines = data[:end].decode("ascii", errors="replace").splitlines()

    fmt = None
    elements = []
    for line_no, line in enumerate(header_lines, start=1):
        parts = line.strip().split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "ply":
            continue
        if parts[0] == "format":
            if len(parts) < 3:
                raise SoupParseError("malformed format line", path=path, line=line_no)
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise SoupParseError("malformed element line", path=path, line=line_no)
            try:
                count = int(parts[2])
            except ValueError:
                raise SoupParseError(f"bad element count {parts[2]!r}", path=path, line=line_no) from None
            if count < 0:
                raise SoupParseError("negative element count", path=path, line=line_no)
            elements.append((parts[1], count, []))
        elif parts[0] == "property":
            if not elements:
                raise SoupParseError("property before any element", path=path, line=line_no)
            if parts[1] == "list":
                if len(parts) != 5:
                    raise SoupParseError("malformed list property", path=path, line=line_no)
                if parts[2] not in _PLY_SCALARS or parts[3] not in _PLY_SCALARS:
                    raise SoupParseError(f"unsupported list property types {parts[2]}/{parts[3]}",
                                         path=path, line=line_no)
                elements[-1][2].append(("list", _PLY_SCALARS[parts[2]], _PLY_SCALARS[parts[3]], parts[4]))
            else:
                if len(parts) != 3:
                    raise SoupParseError("malformed property line", path=path, line=line_no)
                if parts[1] not in _PLY_SCALARS:
                    raise SoupParseError(f"unsupported property type {parts[1]!r}", path=path, line=line_no)
                elements[-1][2].append(("scalar", _PLY_SCALARS[parts[1]], parts[2]))
    if fmt is None:
        raise SoupParseError("header missing format line", path=path)
    return fmt, elements, body_offset


def _vertex_layout(props, path):
    """Locate x, y, z scalar properties; returns (fields, x_i, y_i, z_i)."""
    names = []
    for p in props:
        if p[0] == "list":
            raise SoupParseError("list property in vertex element is unsupported", path=path)
        names.append(p[2])
    try:
        return names.index("x"), names.index("y"), names.index("z")
    except ValueError:
        raise SoupParseError("vertex element missing x/y/z properties", path=path) from None


def _load_ply(path, binary: bool) -> TriangleSoup:
    data = Path(path).read_bytes()
    fmt, elements, body = _parse_ply_header(data, path)
    if binary and fmt != "binary_little_endian":
        raise SoupParseError(f"expected binary_little_endian, header says {fmt!r}", path=path)
    if not binary and fmt != "ascii":
        raise SoupParseError(f"expected ascii, header says {fmt!r}", path=path)

    vertices = None
    faces = []
    if binary:
        off = body
        for name, count, props in elements:
            if name == "vertex":
                xi, yi, zi = _vertex_layout(props, path)
                dt = np.dtype([(f"f{i}", "<" + p[1]) for i, p in enumerate(props)])
                nbytes = dt.itemsize * count
                if off + nbytes > len(data):
                    raise SoupParseError("truncated vertex data", path=path, offset=off)
                rec = np.frombuffer(data, dtype=dt, count=count, offset=off)
                vertices = np.stack(
                    [rec[f"f{xi}"], rec[f"f{yi}"], rec[f"f{zi}"]], axis=1
                ).astype(np.float64)
                off += nbytes
            else:
                for _ in range(count):
                    for p in props:
                        if p[0] == "scalar":
                            off += np.dtype(p[1]).itemsize
                        else:
                            csize = np.dtype(p[1]).itemsize
                            if off + csize > len(data):
                                raise SoupParseError("truncated list count", path=path, offset=off)
                            n = int(np.frombuffer(data, dtype="<" + p[1], count=1, offset=off)[0])
                            if n < 0:
                                raise SoupParseError("negative list count", path=path, offset=off)
                            off += csize
                            isize = np.dtype(p[2]).itemsize
                            if name == "face" and p[3] in ("vertex_indices", "vertex_index"):
                                if off + n * isize > len(data):
                                    raise SoupParseError("truncated face list", path=path, offset=off)
                                idx = np.frombuffer(data, dtype="<" + p[2], count=n, offset=off)
                                if n >= 3:
                                    faces.extend(_fan([int(v) for v in idx]))
                            off += n * isize
    else:
        text = data[body:].decode("ascii", errors="replace").splitlines()
        row = 0
        base_line = data[:body].count(b"\n")
        for name, count, props in elements:
            if name == "vertex":
                xi, yi, zi = _vertex_layout(props, path)
                vertices = np.empty((count, 3), dtype=np.float64)
                for k in range(count):
                    if row >= len(text):
                        raise SoupParseError("truncated vertex data", path=path, line=base_line + row + 1)
                    parts = text[row].split()
                    if len(parts) < len(props):
                        raise SoupParseError("short vertex row", path=path, line=base_line + row + 1)
                    vertices[k, 0] = _parse_float(parts[xi], path, base_line + row + 1)
                    vertices[k, 1] = _parse_float(parts[yi], path, base_line + row + 1)
                    vertices[k, 2] = _parse_float(parts[zi], path, base_line + row + 1)
                    row += 1
            else:
                for _ in range(count):
                    if row >= len(text):
                        raise SoupParseError("truncated element data", path=path, line=base_line + row + 1)
                    parts = text[row].split()
                    if name == "face" and props and props[0][0] == "list":
                        try:
                            n = int(parts[0])
                            idx = [int(v) for v in parts[1:1 + n]]
                        except (ValueError, IndexError):
                            raise SoupParseError("bad face row", path=path, line=base_line + row + 1) from None
                        if len(idx) != n:
                            raise SoupParseError("short face row", path=path, line=base_line + row + 1)
                        if n >= 3:
                            faces.extend(_fan(idx))
                    row += 1

    if vertices is None:
        raise SoupParseError("no vertex element", path=path)
    if not faces:
        raise SoupParseError("no faces found", path=path)
    faces_arr = np.asarray(faces, dtype=np.int64)
    if faces_arr.min() < 0 or faces_arr.max() >= len(vertices):
        raise SoupParseError("face index out of range", path=path)
    return TriangleSoup.from_arrays(vertices, faces_arr)


def load_soup(path, fmt: MeshFormat | None = None) -> TriangleSoup:
    """Load a triangle soup; fmt defaults to detect_format(path)."""
    path = Path(path)
    if not path.exists():
        raise SoupParseError("file does not exist", path=path)
    if fmt is None:
        fmt = detect_format(path)
    try:
        if fmt is MeshFormat.OBJ_ASCII:
            return _load_obj(path)
        if fmt is MeshFormat.PLY_ASCII:
            return _load_ply(path, binary=False)
        return _load_ply(path, binary=True)
    except (UnicodeDecodeError, struct.error) as exc:
        raise SoupParseError(f"undecodable content: {exc}", path=path) from exc


def save_mesh(vertices, faces, path, fmt: MeshFormat | None = None) -> None:
    """Write an indexed triangle mesh (possibly empty) to OBJ or PLY.

    Binary PLY stores float32 positions and int32 indices; ASCII floats are
    printed with 9 significant digits so float32 values round-trip.
    """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
        raise ValueError("face index out of range")
    path = Path(path)
    if fmt is None:
        ext = path.suffix.lower()
        fmt = MeshFormat.OBJ_ASCII if ext == ".obj" else MeshFormat.PLY_BINARY_LE

    if fmt is MeshFormat.OBJ_ASCII:
        with open(path, "w") as f:
            for v in vertices:
                f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
            for tri in faces:
                f.write(f"f {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}\n")
        return

    header = [
        b"ply",
        b"format ascii 1.0" if fmt is MeshFormat.PLY_ASCII else b"format binary_little_endian 1.0",
        b"element vertex %d" % len(vertices),
        b"property float32 x",
        b"property float32 y",
        b"property float32 z",
        b"element face %d" % len(faces),
        b"property list uchar int32 vertex_indices",
        b"end_header",
    ]
    with open(path, "wb") as f:
        f.write(b"\n".join(header) + b"\n")
        if fmt is MeshFormat.PLY_ASCII:
            v32 = vertices.astype(np.float32)
            for v in v32:
                f.write(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n".encode())
            for tri in faces:
                f.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n".encode())
        else:
            f.write(vertices.astype("<f4").tobytes())
            if len(faces):
                rec = np.empty(len(faces), dtype=np.dtype([("n", "u1"), ("idx", "<i4", (3,))]))
                rec["n"] = 3
                rec["idx"] = faces.astype("<i4")
                f.write(rec.tobytes())
