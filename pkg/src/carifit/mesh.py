"""Triangle mesh container, adjacency, cotangent edge weights and file I/O.

Everything downstream (deformation extraction, reconstruction, fitting)
shares the types in this module.  Meshes are immutable after construction;
all pipelines assume every mesh in a run has the same face list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

WEIGHT_FLOOR = 1e-6  # lower clamp keeping the per-vertex systems positive definite


class MeshFormatError(ValueError):
    """Raised for malformed mesh or landmark files; message names the line."""


class TriangleMesh:
    """Immutable triangle mesh.

    Parameters
    ----------
    vertices : array_like
        (V, 3) float coordinates in model units.
    faces : array_like
        (F, 3) integer vertex indices, all in [0, V) and distinct per face.
    name : str
        Optional text label carried through pipelines.
    """

    def __init__(self, vertices, faces, name=""):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        f = np.ascontiguousarray(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be (V, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError(f"faces must be (F, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        if f.size and (
            np.any(f[:, 0] == f[:, 1]) or np.any(f[:, 1] == f[:, 2]) or np.any(f[:, 0] == f[:, 2])
        ):
            raise ValueError("face repeats a vertex")
        v.setflags(write=False)
        f.setflags(write=False)
        self.vertices = v
        self.faces = f
        self.name = name
        self._adjacency = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def with_vertices(self, vertices, name=None):
        """New mesh with the same faces and replaced vertex positions."""
        return TriangleMesh(vertices, self.faces, self.name if name is None else name)

    def same_topology(self, other):
        """True if ``other`` has an identical face list."""
        return self.faces.shape == other.faces.shape and bool(np.all(self.faces == other.faces))

    def _adj(self):
        if self._adjacency is None:
            self._adjacency = _build_adjacency(self.faces, self.n_vertices)
        return self._adjacency

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"TriangleMesh({self.n_vertices} vertices, {self.n_faces} faces{label})"


def _build_adjacency(faces, n_vertices):
    """CSR neighbor lists (indptr, indices) from the face list, ascending per vertex."""
    if len(faces) == 0:
        return np.zeros(n_vertices + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    half = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    both = np.concatenate([half, half[:, ::-1]])
    # unique directed edges, sorted by (src, dst)
    both = np.unique(both, axis=0)
    src, dst = both[:, 0], both[:, 1]
    indptr = np.zeros(n_vertices + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, dst.astype(np.int64)


def one_ring(mesh: TriangleMesh, i: int):
    """All vertices sharing an edge with vertex ``i``, ascending index.

    Raises
    ------
    IndexError
        If ``i`` is not a valid vertex index.
    """
    if not 0 <= i < mesh.n_vertices:
        raise IndexError(f"vertex index {i} out of range [0, {mesh.n_vertices})")
    indptr, indices = mesh._adj()
    return indices[indptr[i]:indptr[i + 1]].copy()


def bbox_diagonal(mesh: TriangleMesh) -> float:
    """Euclidean length of the axis-aligned bounding-box diagonal."""
    if mesh.n_vertices < 1:
        raise ValueError("mesh has no vertices")
    ext = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
    return float(np.linalg.norm(ext))


@dataclass(frozen=True)
class EdgeWeights:
    """Symmetric cotangent edge weights of a reference mesh.

    ``edges`` holds each undirected edge once as (i, j) with i < j,
    ``values`` the matching weights.  The directed pair table
    (``pair_src``, ``pair_dst``, ``pair_w``; sorted by (src, dst)) lists every
    ordered pair (i, j in the 1-ring of i) and backs the vectorized
    per-vertex sums used throughout extraction and reconstruction.
    """

    edges: np.ndarray
    values: np.ndarray
    pair_src: np.ndarray
    pair_dst: np.ndarray
    pair_w: np.ndarray
    n_vertices: int
    pair_indptr: np.ndarray = field(repr=False, default=None)

    def weight(self, i: int, j: int) -> float:
        """Weight of the undirected edge (i, j)."""
        a, b = (i, j) if i < j else (j, i)
        pos = np.searchsorted(self._keys(), a * self.n_vertices + b)
        keys = self._keys()
        if pos >= len(keys) or keys[pos] != a * self.n_vertices + b:
            raise KeyError(f"no edge ({i}, {j})")
        return float(self.values[pos])

    def _keys(self):
        return self.edges[:, 0] * self.n_vertices + self.edges[:, 1]

    def as_dict(self):
        """Plain ``{(i, j): w}`` mapping with i < j."""
        return {(int(i), int(j)): float(w) for (i, j), w in zip(self.edges, self.values)}

    def __len__(self):
        return len(self.edges)


def _face_cotangents(vertices, faces):
    """Per-face corner cotangents; raises on zero-area faces, naming them."""
    p0 = vertices[faces[:, 0]]
    p1 = vertices[faces[:, 1]]
    p2 = vertices[faces[:, 2]]
    # corner k is opposite the edge not containing vertex k
    cross = np.cross(p1 - p0, p2 - p0)
    double_area = np.linalg.norm(cross, axis=1)
    scale = np.maximum(
        np.linalg.norm(p1 - p0, axis=1) * np.linalg.norm(p2 - p0, axis=1), 1e-300
    )
    bad = np.nonzero(double_area <= 1e-12 * scale)[0]
    if bad.size:
        raise ValueError(f"degenerate (zero-area) face {int(bad[0])}")
    cots = np.empty((len(faces), 3))
    for k, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        u = vertices[faces[:, a]] - vertices[faces[:, k]]
        v = vertices[faces[:, b]] - vertices[faces[:, k]]
        cots[:, k] = (u * v).sum(axis=1) / double_area
    return cots


def cotangent_weights(reference: TriangleMesh) -> EdgeWeights:
    """Cotangent weights of every edge of the reference mesh.

    Interior edge (i, j) with opposite angles alpha, beta gets
    (cot alpha + cot beta) / 2; a boundary edge the single opposite
    cotangent halved.  Weights are clamped below at ``WEIGHT_FLOOR`` so the
    downstream linear systems stay positive definite on obtuse meshes.
    """
    faces = reference.faces
    cots = _face_cotangents(reference.vertices, faces)
    # edge opposite corner k, oriented (min, max)
    e0 = np.sort(faces[:, [1, 2]], axis=1)
    e1 = np.sort(faces[:, [2, 0]], axis=1)
    e2 = np.sort(faces[:, [0, 1]], axis=1)
    all_edges = np.concatenate([e0, e1, e2])
    all_cots = np.concatenate([cots[:, 0], cots[:, 1], cots[:, 2]])
    edges, inverse = np.unique(all_edges, axis=0, return_inverse=True)
    sums = np.zeros(len(edges))
    np.add.at(sums, inverse.ravel(), all_cots)
    values = np.maximum(sums / 2.0, WEIGHT_FLOOR)

    # directed pair table, sorted by (src, dst)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    w2 = np.concatenate([values, values])
    order = np.lexsort((dst, src))
    n = reference.n_vertices
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src[order] + 1, 1)
    np.cumsum(indptr, out=indptr)
    ew = EdgeWeights(
        edges=edges,
        values=values,
        pair_src=src[order],
        pair_dst=dst[order],
        pair_w=w2[order],
        n_vertices=n,
        pair_indptr=indptr,
    )
    for arr in (ew.edges, ew.values, ew.pair_src, ew.pair_dst, ew.pair_w, ew.pair_indptr):
        arr.setflags(write=False)
    return ew


# ---------------------------------------------------------------------------
# mesh file I/O (v/f polygon text)

def read_mesh(path) -> TriangleMesh:
    """Read a v/f polygon text file.

    Only ``v`` and ``f`` records are honored; every other record is ignored.
    Faces must be triangles; indices are 1-based in the file.
    """
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            tag = tokens[0]
            if tag == "v":
                if len(tokens) < 4:
                    raise MeshFormatError(f"line {lineno}: vertex record needs 3 coordinates")
                try:
                    vertices.append([float(t) for t in tokens[1:4]])
                except ValueError:
                    raise MeshFormatError(f"line {lineno}: bad vertex coordinate") from None
            elif tag == "f":
                refs = tokens[1:]
                if len(refs) != 3:
                    raise MeshFormatError(
                        f"line {lineno}: face has {len(refs)} vertices, only triangles supported"
                    )
                idx = []
                for ref in refs:
                    head = ref.split("/")[0]
                    try:
                        k = int(head)
                    except ValueError:
                        raise MeshFormatError(f"line {lineno}: bad face index {ref!r}") from None
                    if k < 1:
                        raise MeshFormatError(f"line {lineno}: face index {k} must be >= 1")
                    idx.append(k - 1)
                faces.append(idx)
            # anything else: ignored on read
    verts = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    face_arr = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if face_arr.size and face_arr.max() >= len(verts):
        raise MeshFormatError("face references a vertex beyond the vertex count")
    import os

    return TriangleMesh(verts, face_arr, name=os.path.splitext(os.path.basename(str(path)))[0])


def write_mesh(path, mesh: TriangleMesh) -> None:
    """Write ``mesh`` as v/f records, 9 significant digits per coordinate."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


# ---------------------------------------------------------------------------
# landmark specs

LANDMARK_SCHEMA_VERSION = 1
DEFAULT_LANDMARK_COUNT = 68


@dataclass(frozen=True)
class LandmarkSpec:
    """Paired 3D landmark vertex indices and 2D image targets.

    ``indices`` are distinct mesh vertex indices; ``points2d`` the matching
    pixel positions (origin top-left, y down), same length and order.
    """

    indices: np.ndarray
    points2d: np.ndarray

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        pts = np.ascontiguousarray(self.points2d, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points2d must be (k, 2), got {pts.shape}")
        if len(idx) != len(pts):
            raise ValueError(f"{len(idx)} indices but {len(pts)} points")
        if len(np.unique(idx)) != len(idx):
            raise ValueError("landmark indices must be distinct")
        idx.setflags(write=False)
        pts.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "points2d", pts)

    def __len__(self):
        return len(self.indices)

    def validate_for(self, mesh: TriangleMesh):
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= mesh.n_vertices):
            raise ValueError("landmark index out of range for mesh")

    def with_points(self, points2d):
        return LandmarkSpec(self.indices, points2d)

    def to_document(self):
        return {
            "version": LANDMARK_SCHEMA_VERSION,
            "indices": [int(i) for i in self.indices],
            "points": [[float(x), float(y)] for x, y in self.points2d],
        }


def landmark_spec_from_document(doc, expected_count=DEFAULT_LANDMARK_COUNT) -> LandmarkSpec:
    """Build a LandmarkSpec from the shared structured-text document.

    Schema: ``{"version": 1, "indices": [int * k], "points": [[x, y] * k]}``.
    ``expected_count`` of None skips the count check.
    """
    if not isinstance(doc, dict):
        raise MeshFormatError("landmark document must be an object")
    for key in ("indices", "points"):
        if key not in doc:
            raise MeshFormatError(f"landmark document missing field {key!r}")
    indices = doc["indices"]
    points = doc["points"]
    if expected_count is not None:
        if len(indices) != expected_count:
            raise MeshFormatError(
                f"landmark document has {len(indices)} indices, expected {expected_count}"
            )
        if len(points) != expected_count:
            raise MeshFormatError(
                f"landmark document has {len(points)} points, expected {expected_count}"
            )
    try:
        return LandmarkSpec(np.asarray(indices), np.asarray(points, dtype=np.float64))
    except (ValueError, TypeError) as exc:
        raise MeshFormatError(f"bad landmark document: {exc}") from exc


def read_landmarks(path, expected_count=DEFAULT_LANDMARK_COUNT) -> LandmarkSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeshFormatError(f"line {exc.lineno}: invalid landmark file: {exc.msg}") from exc
    return landmark_spec_from_document(doc, expected_count)


def write_landmarks(path, lms: LandmarkSpec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(lms.to_document(), fh, indent=1)
        fh.write("\n")
