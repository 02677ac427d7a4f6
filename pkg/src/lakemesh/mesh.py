"""Core geometry containers shared by every stage."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, IndexRangeError, InputError

_UTM_TAG = re.compile(r"^utm/(\d{1,2})([NS])$")


@dataclass(frozen=True)
class Frame:
    """Coordinate frame a set of vertices lives in.

    ``kind`` is ``"utm"`` (metres, with zone and hemisphere), ``"local"``
    (metres relative to an unknown origin, e.g. a photogrammetry project) or
    ``"wgs84"`` (lon/lat degrees, z metres; export only).
    """

    kind: str = "local"
    zone: int | None = None
    hemisphere: str | None = None

    def __post_init__(self):
        if self.kind == "utm":
            if self.zone is None or not 1 <= self.zone <= 60 or self.hemisphere not in ("N", "S"):
                raise InputError(f"bad UTM frame zone={self.zone} hemisphere={self.hemisphere}")
        elif self.kind in ("local", "wgs84"):
            if self.zone is not None or self.hemisphere is not None:
                raise InputError(f"{self.kind} frame takes no zone")
        else:
            raise InputError(f"unknown frame kind {self.kind!r}")

    @classmethod
    def utm(cls, zone: int, hemisphere: str) -> "Frame":
        return cls("utm", int(zone), hemisphere)

    @classmethod
    def parse(cls, text: str) -> "Frame":
        text = text.strip()
        if text in ("local", "wgs84"):
            return cls(text)
        m = _UTM_TAG.match(text)
        if not m:
            raise InputError(f"unrecognised frame tag {text!r}")
        return cls.utm(int(m.group(1)), m.group(2))

    @property
    def is_utm(self) -> bool:
        return self.kind == "utm"

    def __str__(self) -> str:
        if self.kind == "utm":
            return f"utm/{self.zone}{self.hemisphere}"
        return self.kind


LOCAL = Frame("local")
WGS84 = Frame("wgs84")


@dataclass(eq=False)
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray
    frame: Frame = field(default=LOCAL)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(self.vertices)):
            raise InputError("mesh has non-finite vertex coordinates")
        if len(self.faces):
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise IndexRangeError("face index out of range")
            f = self.faces
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise DegenerateGeometryError("face with repeated vertex index")

    @classmethod
    def empty(cls, frame: Frame = LOCAL) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), frame)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def triangles(self) -> np.ndarray:
        """(m, 3, 3) array of face corner coordinates."""
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        t = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def flipped(self) -> "TriMesh":
        return TriMesh(self.vertices.copy(), self.faces[:, ::-1].copy(), self.frame)

    def translated(self, offset) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(offset, dtype=float), self.faces.copy(), self.frame)

    def with_frame(self, frame: Frame) -> "TriMesh":
        return TriMesh(self.vertices, self.faces, frame)

    def compact(self) -> "TriMesh":
        """Drop unreferenced vertices, keeping the relative vertex order."""
        used = np.zeros(len(self.vertices), dtype=bool)
        used[self.faces.ravel()] = True
        remap = np.cumsum(used) - 1
        return TriMesh(self.vertices[used], remap[self.faces], self.frame)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def edge_keys(faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Directed half-edges ``(a, b)`` of every face, in face order (3 per face)."""
    a = faces[:, [0, 1, 2]].ravel()
    b = faces[:, [1, 2, 0]].ravel()
    return a, b
