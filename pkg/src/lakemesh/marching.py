"""Marching cubes with face-consistent ambiguity resolution.

The 256-case table is not hard-coded; each (case, face-decision) triangulation
is derived on first use by walking the six cube faces.  On every face the
edge crossings are joined into oriented segments (high corners on the left
when the face is seen from outside the cell); ambiguous faces, where the
corners alternate high/low, are split with the asymptotic decider: the high
corners are joined iff the product of the two high values exceeds the product
of the two low values (values taken relative to the isovalue).  A tie keeps
the high corners apart.  Because the decision uses only the four face values,
the two cells sharing a face always make the same choice, so the surface has
no cracks.  Segments chain into closed loops, and each loop is fanned into
triangles.  Loops where every fan would place a diagonal across a cube face
get a centre vertex instead, which keeps every mesh edge shared by at most
two triangles.

Triangles are wound so their normals point toward larger field values.
Corners with value exactly equal to the isovalue count as low.
"""

from __future__ import annotations

import warnings
from functools import lru_cache

import numpy as np

from .mesh import LOCAL, Frame, TriMesh

# corner c has offsets (c & 1, (c >> 1) & 1, (c >> 2) & 1)
CORNERS = np.array([[(c >> 0) & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(8)], dtype=np.int64)


def _edges():
    out = []
    for axis in range(3):
        for c in range(8):
            if not (c >> axis) & 1:
                out.append((c, c | (1 << axis), axis))
    return out


EDGES = _edges()  # (low corner, high corner, axis)
_EDGE_OF = {frozenset((a, b)): k for k, (a, b, _) in enumerate(EDGES)}


def _faces():
    """Each face as 4 corners in counter-clockwise order about its outward normal."""
    out = []
    for axis in range(3):
        u, v = (axis + 1) % 3, (axis + 2) % 3
        for side in (0, 1):
            ring = []
            for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                off = [0, 0, 0]
                off[axis], off[u], off[v] = side, du, dv
                ring.append(off[0] | (off[1] << 1) | (off[2] << 2))
            if side == 0:
                ring = ring[::-1]
            out.append(tuple(ring))
    return out


FACES = _faces()
_EDGE_FACES = [
    {f for f, ring in enumerate(FACES) if a in ring and b in ring} for a, b, _ in EDGES
]
CENTER = 12  # pseudo-edge index: loop centre vertex


def _face_segments(case: int, face: int, high_joined: bool):
    ring = FACES[face]
    hi = [(case >> c) & 1 for c in ring]
    crossings = []  # (position in ring walk, edge, is_entry)
    for k in range(4):
        a, b = ring[k], ring[(k + 1) % 4]
        if hi[k] != hi[(k + 1) % 4]:
            crossings.append((k, _EDGE_OF[frozenset((a, b))], hi[(k + 1) % 4] == 1))
    if not crossings:
        return []
    if len(crossings) == 2:
        exit_ = next(e for _, e, entry in crossings if not entry)
        entry = next(e for _, e, entry in crossings if entry)
        return [(exit_, entry)]
    segs = []
    for i, (_, e, is_entry) in enumerate(crossings):
        if is_entry:
            continue
        # joined highs: cut off the low corner that follows this exit
        j = (i + 1) % 4 if high_joined else (i - 1) % 4
        segs.append((e, crossings[j][1]))
    return segs


def _is_ambiguous(case: int, face: int) -> bool:
    hi = [(case >> c) & 1 for c in FACES[face]]
    return hi[0] == hi[2] and hi[1] == hi[3] and hi[0] != hi[1]


def _share_face(e1: int, e2: int) -> bool:
    return bool(_EDGE_FACES[e1] & _EDGE_FACES[e2])


@lru_cache(maxsize=None)
def triangulation(case: int, decisions: int) -> tuple[tuple[tuple[int, int, int], ...], int]:
    """Triangles for ``case`` (bit c set = corner c high) under face ``decisions``.

    Returns ``(triangles, n_centres)``; triangle entries are local edge indices,
    or ``CENTER + k`` for the centre vertex of loop ``k``.
    """
    nxt: dict[int, int] = {}
    for f in range(6):
        for a, b in _face_segments(case, f, bool((decisions >> f) & 1)):
            nxt[a] = b
    tris: list[tuple[int, int, int]] = []
    n_centres = 0
    seen: set[int] = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = nxt[start]
        while cur != start:
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        if len(loop) == 3:
            tris.append(tuple(loop))
            continue
        for r in range(len(loop)):
            rot = loop[r:] + loop[:r]
            if all(not _share_face(rot[0], rot[i]) for i in range(2, len(rot) - 1)):
                tris.extend((rot[0], rot[i], rot[i + 1]) for i in range(1, len(rot) - 1))
                break
        else:
            c = CENTER + n_centres
            n_centres += 1
            tris.extend((loop[i], loop[(i + 1) % len(loop)], c) for i in range(len(loop)))
    return tuple(tris), n_centres


def marching_cubes(
    values: np.ndarray,
    isovalue: float,
    origin=(0.0, 0.0, 0.0),
    spacing: float = 1.0,
    frame: Frame = LOCAL,
    mask: np.ndarray | None = None,
) -> TriMesh:
    """Extract the ``isovalue`` surface of a node-sampled 3D grid.

    ``mask`` (shape of the cell grid, ``values.shape - 1``) restricts
    extraction to the cells where it is True.
    """
    f = np.asarray(values, dtype=np.float64)
    if f.ndim != 3 or min(f.shape) < 2:
        raise ValueError(f"need a 3D grid with >= 2 nodes per axis, got {f.shape}")
    origin = np.asarray(origin, dtype=np.float64)
    if not (np.nanmin(f) <= isovalue <= np.nanmax(f)) or not np.any(f > isovalue):
        warnings.warn(f"isovalue {isovalue} outside field range; empty mesh", stacklevel=2)
        return TriMesh.empty(frame)

    nx, ny, nz = f.shape
    high = f > isovalue
    cx, cy, cz = nx - 1, ny - 1, nz - 1
    case = np.zeros((cx, cy, cz), dtype=np.int64)
    for c, (dx, dy, dz) in enumerate(CORNERS):
        case |= high[dx : dx + cx, dy : dy + cy, dz : dz + cz].astype(np.int64) << c
    active = (case != 0) & (case != 255)
    if mask is not None:
        active &= np.asarray(mask, dtype=bool)
    cells = np.flatnonzero(active)
    if len(cells) == 0:
        return TriMesh.empty(frame)
    ci, cj, ck = np.unravel_index(cells, (cx, cy, cz))
    case = case.ravel()[cells]

    g = f - isovalue
    corner_vals = np.stack([g[ci + dx, cj + dy, ck + dz] for dx, dy, dz in CORNERS], axis=1)
    decisions = np.zeros(len(cells), dtype=np.int64)
    for fi, ring in enumerate(FACES):
        v = corner_vals[:, list(ring)]
        h = v > 0
        amb = (h[:, 0] == h[:, 2]) & (h[:, 1] == h[:, 3]) & (h[:, 0] != h[:, 1])
        if not amb.any():
            continue
        p02 = v[:, 0] * v[:, 2]
        p13 = v[:, 1] * v[:, 3]
        high_prod = np.where(h[:, 0], p02, p13)
        low_prod = np.where(h[:, 0], p13, p02)
        joined = amb & (high_prod > low_prod)
        decisions |= joined.astype(np.int64) << fi

    n_nodes = nx * ny * nz
    n_edge_ids = 3 * n_nodes
    node_stride = np.array([ny * nz, nz, 1], dtype=np.int64)
    key = case | (decisions << 8)
    ukeys, inverse = np.unique(key, return_inverse=True)

    tri_cell = []
    tri_order = []
    tri_ids = []
    for u, kval in enumerate(ukeys):
        tris, _ = triangulation(int(kval & 255), int(kval >> 8))
        if not tris:
            continue
        members = np.flatnonzero(inverse == u)
        base = np.stack([ci[members], cj[members], ck[members]], axis=1)
        local = np.asarray(tris, dtype=np.int64)  # (t, 3)
        ids = np.empty((len(members), len(tris), 3), dtype=np.int64)
        for e in np.unique(local):
            if e >= CENTER:
                gid = n_edge_ids + cells[members] * 4 + (e - CENTER)
            else:
                lo, _, axis = EDGES[e]
                node = base + CORNERS[lo]
                gid = axis * n_nodes + node @ node_stride
            sel = local == e
            ids[:, sel] = gid[:, None]
        tri_cell.append(np.repeat(members, len(tris)))
        tri_order.append(np.tile(np.arange(len(tris)), len(members)))
        tri_ids.append(ids.reshape(-1, 3))
    if not tri_ids:
        return TriMesh.empty(frame)
    tri_cell = np.concatenate(tri_cell)
    tri_order = np.concatenate(tri_order)
    tri_ids = np.concatenate(tri_ids)
    order = np.lexsort((tri_order, tri_cell))
    tri_ids = tri_ids[order]

    uid, faces = np.unique(tri_ids, return_inverse=True)
    faces = faces.reshape(-1, 3)
    verts = np.empty((len(uid), 3))
    is_edge = uid < n_edge_ids
    eid = uid[is_edge]
    axis = eid // n_nodes
    node = eid % n_nodes
    i0, j0, k0 = np.unravel_index(node, f.shape)
    step = np.zeros((len(eid), 3), dtype=np.int64)
    step[np.arange(len(eid)), axis] = 1
    i1, j1, k1 = i0 + step[:, 0], j0 + step[:, 1], k0 + step[:, 2]
    g0 = g[i0, j0, k0]
    g1 = g[i1, j1, k1]
    t = g0 / (g0 - g1)
    pos = np.stack([i0, j0, k0], axis=1).astype(np.float64) + t[:, None] * step
    verts[is_edge] = origin + spacing * pos

    if not is_edge.all():
        # centre vertex = mean of its loop; each loop vertex shows up in two of the fan triangles
        slot = np.full(len(uid), -1)
        slot[~is_edge] = np.arange(np.count_nonzero(~is_edge))
        tri_slot = slot[faces].max(axis=1)
        acc = np.zeros((np.count_nonzero(~is_edge), 3))
        cnt = np.zeros(len(acc))
        for k in range(3):
            vk = faces[:, k]
            use = (tri_slot >= 0) & is_edge[vk]
            np.add.at(acc, tri_slot[use], verts[vk[use]])
            np.add.at(cnt, tri_slot[use], 1)
        verts[~is_edge] = acc / cnt[:, None]
    return TriMesh(verts, faces, frame)


def field_marching_cubes(field, isovalue: float, frame: Frame = LOCAL, mask=None) -> TriMesh:
    """:func:`marching_cubes` on a :class:`~lakemesh.pointcloud.ScalarField`."""
    return marching_cubes(field.values, isovalue, field.origin, field.spacing, frame, mask)

