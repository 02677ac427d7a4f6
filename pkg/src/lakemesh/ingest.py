"""Parsers and writers for everything that crosses the pipeline boundary.

Depth logs are UTF-8 text with one ``[timestamp,]lat,lon,depth`` record per
line.  Meshes are PLY (ASCII or little-endian binary) or OBJ; the coordinate
frame travels inside the file as a ``frame: <tag>`` comment.
"""

from __future__ import annotations

import csv
import io
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    EmptyLogError,
    FormatError,
    HeaderError,
    IndexRangeError,
    InputError,
    ParseError,
    TruncatedError,
)
from .mesh import LOCAL, Frame, TriMesh

PLY_FORMATS = ("ply_ascii", "ply_binary_le", "obj")


# --------------------------------------------------------------------------
# depth log


@dataclass(frozen=True, slots=True)
class DepthSample:
    lat: float
    lon: float
    depth: float
    timestamp: float | None = None


@dataclass
class ParseReport:
    lines: int = 0
    accepted: int = 0
    skipped: Counter = field(default_factory=Counter)
    problems: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_skipped(self) -> int:
        return sum(self.skipped.values())

    def skip(self, line_no: int, reason: str) -> None:
        self.skipped[reason] += 1
        self.problems.append((line_no, reason))


def _as_text(source) -> str:
    if isinstance(source, (bytes, bytearray, memoryview)):
        try:
            return bytes(source).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("input is not UTF-8 text", offset=exc.start) from None
    if isinstance(source, str):
        return source
    if isinstance(source, os.PathLike):
        return _as_text(Path(source).read_bytes())
    raise FormatError(f"expected text, got {type(source).__name__}")


def _lines(source) -> Iterable[str]:
    if isinstance(source, (str, bytes, bytearray, memoryview, os.PathLike)):
        text = _as_text(source)
        if "\x00" in text:
            raise FormatError("input contains NUL bytes; not a text log", offset=text.index("\x00"))
        return text.splitlines()
    return (line.rstrip("\r\n") for line in source)


def parse_depth_log(source) -> tuple[list[DepthSample], ParseReport]:
    """Parse a depth log; bad lines are skipped and counted, never fatal.

    ``source`` is text, bytes, a path, or an iterable of lines.
    """
    report = ParseReport()
    samples: list[DepthSample] = []
    for line_no, raw in enumerate(_lines(source), start=1):
        report.lines += 1
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (3, 4):
            report.skip(line_no, "field count")
            continue
        try:
            values = [float(p) for p in parts]
        except ValueError:
            report.skip(line_no, "non-numeric field")
            continue
        if not all(math.isfinite(v) for v in values):
            report.skip(line_no, "non-finite value")
            continue
        ts = values[0] if len(values) == 4 else None
        lat, lon, depth = values[-3:]
        if not -90.0 <= lat <= 90.0:
            report.skip(line_no, "latitude out of range")
            continue
        if not -180.0 <= lon <= 180.0:
            report.skip(line_no, "longitude out of range")
            continue
        if depth < 0:
            report.skip(line_no, "negative depth")
            continue
        samples.append(DepthSample(lat, lon, depth, ts))
    report.accepted = len(samples)
    if not samples:
        raise EmptyLogError(f"depth log has no valid samples ({report.n_skipped} lines skipped)")
    return samples, report


def format_depth_log(samples: Iterable[DepthSample], header: str | None = None) -> str:
    out = io.StringIO()
    if header:
        for h in header.splitlines():
            out.write(f"# {h}\n")
    for s in samples:
        body = f"{s.lat:.10f},{s.lon:.10f},{s.depth:.4f}"
        if s.timestamp is not None:
            body = f"{s.timestamp:.3f}," + body
        out.write(body + "\n")
    return out.getvalue()


# --------------------------------------------------------------------------
# geotags


@dataclass(frozen=True)
class GeoTagRecord:
    image_id: str
    lat: float | None
    lon: float | None
    alt: float | None
    timestamp: float | None = None
    missing: bool = False


def _opt_float(text: str | None) -> float | None:
    if text is None or not text.strip():
        return None
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(text)
    return v


def parse_geotags(source) -> list[GeoTagRecord]:
    """Parse an ``image_id,lat,lon,alt[,timestamp]`` CSV.

    Rows whose coordinates cannot be read are kept and flagged ``missing``;
    intermittent geotagging is an expected field failure, not a parse error.
    """
    lines = list(_lines(source))
    start = 0
    while start < len(lines) and not lines[start].strip():
        start += 1
    if start == len(lines):
        raise FormatError("geotag CSV is empty; header required")
    header = [h.strip().lower() for h in lines[start].split(",")]
    if header[:4] != ["image_id", "lat", "lon", "alt"] or len(header) > 5 or (
        len(header) == 5 and header[4] != "timestamp"
    ):
        raise FormatError("missing geotag header 'image_id,lat,lon,alt[,timestamp]'", line=start + 1)
    records = []
    for row in csv.reader(lines[start + 1 :]):
        if not row or not any(c.strip() for c in row):
            continue
        image_id = row[0].strip()
        cells = row[1:] + [""] * (4 - len(row[1:]))
        try:
            lat, lon = _opt_float(cells[0]), _opt_float(cells[1])
            ok = (
                lat is not None
                and lon is not None
                and -90 <= lat <= 90
                and -180 <= lon <= 180
                and len(row) <= len(header)
            )
        except ValueError:
            lat = lon = None
            ok = False
        try:
            alt = _opt_float(cells[2])
        except ValueError:
            alt = None
        try:
            ts = _opt_float(cells[3]) if len(header) == 5 else None
        except ValueError:
            ts = None
        if ok:
            records.append(GeoTagRecord(image_id, lat, lon, alt, ts, False))
        else:
            records.append(GeoTagRecord(image_id, None, None, alt, ts, True))
    return records


def format_geotags(records: Iterable[GeoTagRecord]) -> str:
    out = io.StringIO()
    out.write("image_id,lat,lon,alt,timestamp\n")
    for r in records:
        lat = "" if r.missing or r.lat is None else f"{r.lat:.10f}"
        lon = "" if r.missing or r.lon is None else f"{r.lon:.10f}"
        alt = "" if r.alt is None else f"{r.alt:.3f}"
        ts = "" if r.timestamp is None else f"{r.timestamp:.3f}"
        out.write(f"{r.image_id},{lat},{lon},{alt},{ts}\n")
    return out.getvalue()


# --------------------------------------------------------------------------
# offsets


def parse_offsets(source) -> tuple[float, float, float]:
    """Read a one-line ``offset_e offset_n offset_z`` file (metres)."""
    rows = [ln.split("#", 1)[0].strip() for ln in _lines(source)]
    rows = [r for r in rows if r]
    if len(rows) != 1:
        raise FormatError(f"offset file must hold exactly one record, found {len(rows)}")
    parts = rows[0].replace(",", " ").split()
    if len(parts) != 3:
        raise FormatError("offset record needs three numbers", line=1)
    try:
        values = tuple(float(p) for p in parts)
    except ValueError:
        raise FormatError("non-numeric offset", line=1) from None
    if not all(math.isfinite(v) for v in values):
        raise FormatError("non-finite offset", line=1)
    return values  # type: ignore[return-value]


def format_offsets(offset) -> str:
    return " ".join(repr(float(v)) for v in offset) + "\n"


# --------------------------------------------------------------------------
# PLY

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


@dataclass
class _PlyProperty:
    name: str
    dtype: str
    count_dtype: str | None = None  # set for list properties


@dataclass
class _PlyElement:
    name: str
    count: int
    properties: list[_PlyProperty] = field(default_factory=list)


@dataclass
class PlyData:
    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None
    frame: Frame
    comments: list[str]


def _parse_ply_header(data: bytes):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise HeaderError("not a PLY file (missing 'ply' magic or 'end_header')", offset=0)
    nl = data.find(b"\n", end)
    if nl < 0:
        raise HeaderError("header not terminated by newline", offset=end)
    body_start = nl + 1
    try:
        header = data[:end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise HeaderError("non-ASCII byte in PLY header", offset=exc.start) from None
    fmt = None
    elements: list[_PlyElement] = []
    comments: list[str] = []
    for line_no, raw in enumerate(header.splitlines(), start=1):
        tok = raw.split()
        if not tok or line_no == 1:
            if line_no == 1 and raw.strip() != "ply":
                raise HeaderError("first line must be 'ply'", line=1)
            continue
        key = tok[0]
        if key == "format":
            if len(tok) != 3 or tok[2] != "1.0":
                raise HeaderError("bad format line", line=line_no)
            if tok[1] == "binary_big_endian":
                raise HeaderError("big-endian PLY is not supported", line=line_no)
            if tok[1] not in ("ascii", "binary_little_endian"):
                raise HeaderError(f"unknown PLY format {tok[1]!r}", line=line_no)
            fmt = tok[1]
        elif key in ("comment", "obj_info"):
            comments.append(raw.split(None, 1)[1] if len(tok) > 1 else "")
        elif key == "element":
            if len(tok) != 3:
                raise HeaderError("bad element line", line=line_no)
            try:
                count = int(tok[2])
            except ValueError:
                raise HeaderError("element count is not an integer", line=line_no) from None
            if count < 0:
                raise HeaderError("negative element count", line=line_no)
            elements.append(_PlyElement(tok[1], count))
        elif key == "property":
            if not elements:
                raise HeaderError("property before any element", line=line_no)
            if len(tok) == 5 and tok[1] == "list":
                if tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise HeaderError("unknown list property type", line=line_no)
                if _PLY_TYPES[tok[2]][0] == "f":
                    raise HeaderError("list count type must be integral", line=line_no)
                elements[-1].properties.append(_PlyProperty(tok[4], _PLY_TYPES[tok[3]], _PLY_TYPES[tok[2]]))
            elif len(tok) == 3 and tok[1] in _PLY_TYPES:
                elements[-1].properties.append(_PlyProperty(tok[2], _PLY_TYPES[tok[1]]))
            else:
                raise HeaderError("bad property line", line=line_no)
        else:
            raise HeaderError(f"unexpected header keyword {key!r}", line=line_no)
    if fmt is None:
        raise HeaderError("missing format line", offset=0)
    return fmt, elements, comments, body_start


def _frame_from_comments(comments: list[str]) -> Frame:
    for c in comments:
        c = c.strip()
        if c.startswith("frame:"):
            try:
                return Frame.parse(c.split(":", 1)[1])
            except InputError as exc:
                raise HeaderError(str(exc)) from None
    return LOCAL


def _triangulate(polys: list[list[int]]) -> list[tuple[int, int, int]]:
    tris = []
    for p in polys:
        for k in range(1, len(p) - 1):
            tris.append((p[0], p[k], p[k + 1]))
    return tris


def _read_binary_element(data: bytes, pos: int, el: _PlyElement):
    """Return (dict name -> array or list-of-lists, new position)."""
    if all(p.count_dtype is None for p in el.properties):
        dt = np.dtype([(f"p{i}", "<" + p.dtype) for i, p in enumerate(el.properties)])
        need = dt.itemsize * el.count
        if pos + need > len(data):
            raise TruncatedError(f"element '{el.name}' truncated", offset=len(data))
        arr = np.frombuffer(data, dtype=dt, count=el.count, offset=pos)
        return {p.name: arr[f"p{i}"] for i, p in enumerate(el.properties)}, pos + need
    # fast path: a single list property of constant length 3
    if len(el.properties) == 1:
        p = el.properties[0]
        cdt = np.dtype("<" + p.count_dtype)
        idt = np.dtype("<" + p.dtype)
        row = np.dtype([("n", cdt), ("i", idt, (3,))])
        need = row.itemsize * el.count
        if pos + need <= len(data):
            arr = np.frombuffer(data, dtype=row, count=el.count, offset=pos)
            if el.count == 0 or np.all(arr["n"] == 3):
                return {p.name: arr["i"].astype(np.int64)}, pos + need
    out: dict[str, list] = {p.name: [] for p in el.properties}
    for _ in range(el.count):
        for p in el.properties:
            if p.count_dtype is None:
                size = np.dtype(p.dtype).itemsize
                if pos + size > len(data):
                    raise TruncatedError(f"element '{el.name}' truncated", offset=pos)
                out[p.name].append(np.frombuffer(data, "<" + p.dtype, 1, pos)[0])
                pos += size
            else:
                csize = np.dtype(p.count_dtype).itemsize
                if pos + csize > len(data):
                    raise TruncatedError(f"element '{el.name}' truncated", offset=pos)
                n = int(np.frombuffer(data, "<" + p.count_dtype, 1, pos)[0])
                pos += csize
                if n < 0:
                    raise ParseError("negative list length", offset=pos - csize)
                isize = np.dtype(p.dtype).itemsize
                if pos + n * isize > len(data):
                    raise TruncatedError(f"element '{el.name}' truncated", offset=pos)
                out[p.name].append(np.frombuffer(data, "<" + p.dtype, n, pos).tolist())
                pos += n * isize
    return out, pos


def _read_ascii_elements(text_lines: list[str], first_line: int, elements: list[_PlyElement]):
    idx = 0
    result = {}
    for el in elements:
        cols: dict[str, list] = {p.name: [] for p in el.properties}
        for _ in range(el.count):
            while idx < len(text_lines) and not text_lines[idx].strip():
                idx += 1
            if idx >= len(text_lines):
                raise TruncatedError(f"element '{el.name}' truncated", line=first_line + idx)
            tok = text_lines[idx].split()
            line_no = first_line + idx
            idx += 1
            k = 0
            try:
                for p in el.properties:
                    if p.count_dtype is None:
                        cols[p.name].append(float(tok[k]) if p.dtype[0] == "f" else int(tok[k]))
                        k += 1
                    else:
                        n = int(tok[k])
                        if n < 0 or k + 1 + n > len(tok):
                            raise ParseError("bad list length", line=line_no)
                        cols[p.name].append([int(t) for t in tok[k + 1 : k + 1 + n]])
                        k += 1 + n
            except (IndexError, ValueError):
                raise ParseError(f"malformed '{el.name}' record", line=line_no) from None
            if k != len(tok):
                raise ParseError(f"extra tokens in '{el.name}' record", line=line_no)
        result[el.name] = cols
    return result


def read_ply(source) -> PlyData:
    data = Path(source).read_bytes() if isinstance(source, (str, os.PathLike)) else bytes(source)
    fmt, elements, comments, pos = _parse_ply_header(data)
    frame = _frame_from_comments(comments)
    if fmt == "ascii":
        try:
            body = data[pos:].decode("ascii")
        except UnicodeDecodeError as exc:
            raise ParseError("non-ASCII byte in ASCII PLY body", offset=pos + exc.start) from None
        header_lines = data[:pos].count(b"\n")
        lines = body.splitlines()
        if sum(el.count for el in elements) > len(lines):
            raise TruncatedError("fewer body lines than declared elements", line=header_lines + len(lines))
        columns = _read_ascii_elements(lines, header_lines + 1, elements)
    else:
        columns = {}
        for el in elements:
            if el.count > len(data):  # every record is at least one byte
                raise TruncatedError(f"element '{el.name}' count exceeds file size", offset=pos)
            columns[el.name], pos = _read_binary_element(data, pos, el)

    vert = columns.get("vertex")
    if vert is None:
        raise HeaderError("PLY has no vertex element")
    for axis in "xyz":
        if axis not in vert:
            raise HeaderError(f"vertex element lacks property '{axis}'")
    vertices = np.column_stack([np.asarray(vert[a], dtype=np.float64) for a in "xyz"]) if len(vert["x"]) else np.zeros((0, 3))
    normals = None
    if all(k in vert for k in ("nx", "ny", "nz")) and len(vert["x"]):
        normals = np.column_stack([np.asarray(vert[a], dtype=np.float64) for a in ("nx", "ny", "nz")])

    faces = np.zeros((0, 3), dtype=np.int64)
    face_cols = columns.get("face")
    if face_cols is not None:
        key = "vertex_indices" if "vertex_indices" in face_cols else "vertex_index" if "vertex_index" in face_cols else None
        if key is None:
            raise HeaderError("face element lacks 'vertex_indices'")
        raw = face_cols[key]
        if isinstance(raw, np.ndarray):
            faces = raw.reshape(-1, 3)
        else:
            for i, poly in enumerate(raw):
                if len(poly) < 3:
                    raise ParseError(f"face {i} has fewer than 3 vertices")
            tris = _triangulate([list(map(int, p)) for p in raw])
            faces = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    if len(faces) and (faces.min() < 0 or faces.max() >= len(vertices)):
        bad = int(np.argmax((faces < 0).any(axis=1) | (faces >= len(vertices)).any(axis=1)))
        raise IndexRangeError(f"face {bad} references a vertex outside 0..{len(vertices) - 1}")
    return PlyData(vertices, faces, normals, frame, comments)


def write_ply(
    path,
    vertices: np.ndarray,
    faces: np.ndarray | None = None,
    *,
    normals: np.ndarray | None = None,
    frame: Frame = LOCAL,
    binary: bool = True,
    comments: Iterable[str] = (),
) -> int:
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.zeros((0, 3), dtype=np.int64) if faces is None else np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    head = ["ply", "format binary_little_endian 1.0" if binary else "format ascii 1.0", f"comment frame: {frame}"]
    head += [f"comment {c}" for c in comments]
    head += [f"element vertex {len(vertices)}", "property double x", "property double y", "property double z"]
    if normals is not None:
        head += ["property double nx", "property double ny", "property double nz"]
    head += [f"element face {len(faces)}", "property list uchar int vertex_indices", "end_header"]
    header = ("\n".join(head) + "\n").encode("ascii")
    cols = vertices if normals is None else np.hstack([vertices, np.asarray(normals, dtype=np.float64)])
    if binary:
        vbytes = np.ascontiguousarray(cols, dtype="<f8").tobytes()
        frec = np.zeros(len(faces), dtype=[("n", "u1"), ("i", "<i4", (3,))])
        frec["n"] = 3
        frec["i"] = faces
        payload = header + vbytes + frec.tobytes()
    else:
        out = io.StringIO()
        for row in cols.tolist():
            out.write(" ".join(repr(v) for v in row) + "\n")
        for a, b, c in faces.tolist():
            out.write(f"3 {a} {b} {c}\n")
        payload = header + out.getvalue().encode("ascii")
    Path(path).write_bytes(payload)
    return len(payload)


# --------------------------------------------------------------------------
# OBJ


def read_obj(source) -> TriMesh:
    data = Path(source).read_bytes() if isinstance(source, (str, os.PathLike)) else bytes(source)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("OBJ is not UTF-8 text", offset=exc.start) from None
    verts: list[tuple[float, float, float]] = []
    polys: list[list[int]] = []
    frame = LOCAL
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("frame:"):
                try:
                    frame = Frame.parse(body.split(":", 1)[1])
                except InputError as exc:
                    raise HeaderError(str(exc), line=line_no) from None
            continue
        tok = line.split()
        if tok[0] == "v":
            if len(tok) < 4:
                raise ParseError("vertex needs 3 coordinates", line=line_no)
            try:
                xyz = tuple(float(t) for t in tok[1:4])
            except ValueError:
                raise ParseError("non-numeric vertex coordinate", line=line_no) from None
            verts.append(xyz)
        elif tok[0] == "f":
            if len(tok) < 4:
                raise ParseError("face needs at least 3 vertices", line=line_no)
            poly = []
            for t in tok[1:]:
                try:
                    k = int(t.split("/", 1)[0])
                except ValueError:
                    raise ParseError("non-integer face index", line=line_no) from None
                if k > 0:
                    idx = k - 1
                elif k < 0:
                    idx = len(verts) + k
                else:
                    raise IndexRangeError("OBJ indices are 1-based; got 0", line=line_no)
                if not 0 <= idx < len(verts):
                    raise IndexRangeError(f"face index {k} out of range", line=line_no)
                poly.append(idx)
            polys.append(poly)
        # vt, vn, o, g, s, usemtl, mtllib: geometry-irrelevant
    vertices = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(_triangulate(polys), dtype=np.int64).reshape(-1, 3)
    return TriMesh(vertices, faces, frame)


def write_obj(mesh: TriMesh, path) -> int:
    out = io.StringIO()
    out.write(f"# frame: {mesh.frame}\n")
    for x, y, z in mesh.vertices.tolist():
        out.write(f"v {x!r} {y!r} {z!r}\n")
    for a, b, c in (mesh.faces + 1).tolist():
        out.write(f"f {a} {b} {c}\n")
    payload = out.getvalue().encode("utf-8")
    Path(path).write_bytes(payload)
    return len(payload)


# --------------------------------------------------------------------------
# mesh dispatch


def guess_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return "obj"
    if suffix == ".ply":
        head = Path(path).read_bytes()[:200] if Path(path).exists() else b""
        return "ply_ascii" if b"format ascii" in head else "ply_binary_le"
    raise InputError(f"cannot infer mesh format from {path}")


def read_mesh(path, format: str | None = None) -> TriMesh:
    format = format or guess_format(path)
    if format == "obj":
        return read_obj(path)
    if format not in PLY_FORMATS:
        raise InputError(f"unknown mesh format {format!r}")
    ply = read_ply(path)
    return TriMesh(ply.vertices, ply.faces, ply.frame)


def write_mesh(mesh: TriMesh, path, format: str | None = None) -> int:
    """Write ``mesh``; returns the number of bytes written."""
    if format is None:
        format = "obj" if Path(path).suffix.lower() == ".obj" else "ply_binary_le"
    if format == "obj":
        return write_obj(mesh, path)
    if format == "ply_ascii":
        return write_ply(path, mesh.vertices, mesh.faces, frame=mesh.frame, binary=False)
    if format == "ply_binary_le":
        return write_ply(path, mesh.vertices, mesh.faces, frame=mesh.frame, binary=True)
    raise InputError(f"unknown mesh format {format!r}")
