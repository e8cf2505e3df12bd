"""Per-vertex deformation representation, bases of examples, and blending.

The representation of a deformed mesh against a reference stores, per
vertex, the rotation log and the symmetric scale/shear offset of the local
deformation gradient.  Zero is "no deformation", weights may leave [0, 1]
(extrapolation), and stacks of representations form the basis that the
reconstruction and fitting modules consume.

All per-vertex work is vectorized over the whole mesh (extraction and
blending are data-parallel by construction).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .mesh import EdgeWeights, TriangleMesh, cotangent_weights
from .rotations import exp_rotvec, log_rotvec_many, polar_decompose_many, skew

GRAM_FLOOR = 1e-9    # Tikhonov floor factor on trace(G) in the gradient solve
GRAM_RANK_TOL = 1e-7  # below this (relative to trace) a 1-ring is flagged as deficient

BASIS_MAGIC = b"DRBF"
BASIS_VERSION = 1


class GramDeficientError(ValueError):
    """A 1-ring does not span 3D beyond what the Tikhonov floor can stabilize."""

    def __init__(self, vertices):
        self.vertices = list(vertices)
        shown = ", ".join(str(v) for v in self.vertices[:8])
        more = "" if len(self.vertices) <= 8 else f" (+{len(self.vertices) - 8} more)"
        super().__init__(f"rank-deficient 1-ring at vertex {shown}{more}")


def _segment_sum(values, indptr, n):
    """Sum ``values`` rows over CSR segments; empty segments give zero."""
    out = np.add.reduceat(values, indptr[:-1], axis=0)
    empty = indptr[:-1] == indptr[1:]
    if empty.any():
        out[empty] = 0.0
        out[indptr[:-1] >= len(values)] = 0.0
    return out


def vertex_grams(reference: TriangleMesh, weights: EdgeWeights):
    """Weighted reference edge Gram matrices G_i = sum_j c_ij e_ij e_ij^T, (V, 3, 3)."""
    e = reference.vertices[weights.pair_src] - reference.vertices[weights.pair_dst]
    outer = weights.pair_w[:, None, None] * (e[:, :, None] * e[:, None, :])
    return _segment_sum(outer, weights.pair_indptr, reference.n_vertices)


def _mixed_grams(reference, deformed_vertices, weights):
    """H_i = sum_j c_ij e'_ij e_ij^T per vertex."""
    e = reference.vertices[weights.pair_src] - reference.vertices[weights.pair_dst]
    ep = deformed_vertices[weights.pair_src] - deformed_vertices[weights.pair_dst]
    outer = weights.pair_w[:, None, None] * (ep[:, :, None] * e[:, None, :])
    return _segment_sum(outer, weights.pair_indptr, reference.n_vertices)


def flag_deficient_vertices(G):
    """Indices whose Gram matrix has near-zero smallest eigenvalue."""
    eigs = np.linalg.eigvalsh(G)
    trace = np.maximum(np.trace(G, axis1=1, axis2=2), 1e-300)
    return np.nonzero(eigs[:, 0] < GRAM_RANK_TOL * trace)[0]


def extract_gradients_all(reference, deformed, weights, G=None):
    """Deformation gradients T_i for every vertex, (V, 3, 3).

    T_i is the closed-form minimizer of the weighted 1-ring edge energy,
    with a Tikhonov floor of ``GRAM_FLOOR * trace(G_i)`` on the Gram matrix.

    Raises
    ------
    GramDeficientError
        If any 1-ring fails to span 3D beyond the floor's reach.
    """
    if G is None:
        G = vertex_grams(reference, weights)
    bad = flag_deficient_vertices(G)
    if bad.size:
        raise GramDeficientError(bad)
    H = _mixed_grams(reference, np.asarray(deformed.vertices, dtype=np.float64), weights)
    delta = GRAM_FLOOR * np.trace(G, axis1=1, axis2=2)
    Greg = G + delta[:, None, None] * np.eye(3)
    # T = H Greg^-1  <=>  Greg T^T = H^T (Greg symmetric)
    return np.linalg.solve(Greg, H.transpose(0, 2, 1)).transpose(0, 2, 1)


def extract_gradient(reference, deformed, weights, i: int):
    """Deformation gradient of the 1-ring of vertex ``i`` alone."""
    if not 0 <= i < reference.n_vertices:
        raise IndexError(f"vertex index {i} out of range")
    indptr = weights.pair_indptr
    sl = slice(indptr[i], indptr[i + 1])
    src, dst, w = weights.pair_src[sl], weights.pair_dst[sl], weights.pair_w[sl]
    e = reference.vertices[src] - reference.vertices[dst]
    ep = deformed.vertices[src] - deformed.vertices[dst]
    G = (w[:, None, None] * (e[:, :, None] * e[:, None, :])).sum(axis=0)
    trace = max(float(np.trace(G)), 1e-300)
    if np.linalg.eigvalsh(G)[0] < GRAM_RANK_TOL * trace:
        raise GramDeficientError([i])
    H = (w[:, None, None] * (ep[:, :, None] * e[:, None, :])).sum(axis=0)
    return H @ np.linalg.inv(G + GRAM_FLOOR * trace * np.eye(3))


SYM6_ROWS = np.array([0, 0, 0, 1, 1, 2])
SYM6_COLS = np.array([0, 1, 2, 1, 2, 2])


def sym_to_six(S):
    """Compact (..., 6) form (xx, xy, xz, yy, yz, zz) of symmetric matrices."""
    S = np.asarray(S, dtype=np.float64)
    return S[..., SYM6_ROWS, SYM6_COLS]


def six_to_sym(s6):
    """Expand (..., 6) compact symmetric storage back to (..., 3, 3)."""
    s6 = np.asarray(s6, dtype=np.float64)
    out = np.empty(s6.shape[:-1] + (3, 3))
    out[..., SYM6_ROWS, SYM6_COLS] = s6
    out[..., SYM6_COLS, SYM6_ROWS] = s6
    return out


@dataclass(frozen=True)
class VertexDeform:
    """Deformation record of one vertex: rotation log and scale/shear offset."""

    logR: np.ndarray   # antisymmetric (3, 3)
    sprime: np.ndarray  # symmetric (3, 3), S - I

    def gradient(self):
        return exp_rotvec(np.array(
            [self.logR[2, 1], self.logR[0, 2], self.logR[1, 0]]
        )) @ (np.eye(3) + self.sprime)


class DeformRep:
    """Per-vertex deformation representation of one deformed mesh.

    Stored compactly: ``rot`` (V, 3) rotation vectors (the dual of log R)
    and ``scale`` (V, 6) symmetric offsets S - I.
    """

    def __init__(self, rot, scale):
        rot = np.ascontiguousarray(rot, dtype=np.float64)
        scale = np.ascontiguousarray(scale, dtype=np.float64)
        if rot.ndim != 2 or rot.shape[1] != 3 or scale.shape != (len(rot), 6):
            raise ValueError("DeformRep needs rot (V, 3) and scale (V, 6)")
        rot.setflags(write=False)
        scale.setflags(write=False)
        self.rot = rot
        self.scale = scale

    def __len__(self):
        return len(self.rot)

    def __getitem__(self, i) -> VertexDeform:
        return VertexDeform(skew(self.rot[i]), six_to_sym(self.scale[i]))

    def gradients(self):
        """Per-vertex gradients R_i S_i implied by the representation, (V, 3, 3)."""
        return exp_rotvec(self.rot) @ (np.eye(3) + six_to_sym(self.scale))

    def max_abs(self):
        return max(
            float(np.abs(self.rot).max(initial=0.0)),
            float(np.abs(self.scale).max(initial=0.0)),
        )


def extract_rep(reference, deformed, weights, G=None) -> DeformRep:
    """Extract the deformation representation of ``deformed`` against ``reference``.

    Per vertex: polar-decompose the deformation gradient, keep the rotation
    log and S - I.  Invariant to global translation of the deformed mesh.
    """
    if not reference.same_topology(deformed):
        raise ValueError("reference and deformed mesh must share topology")
    T = extract_gradients_all(reference, deformed, weights, G=G)
    R, S = polar_decompose_many(T)
    rot = log_rotvec_many(R)
    return DeformRep(rot, sym_to_six(S - np.eye(3)))


@dataclass
class BlendWeights:
    """Rotation and scale/shear blend weights, one pair per basis example."""

    wR: np.ndarray
    wS: np.ndarray

    def __post_init__(self):
        self.wR = np.ascontiguousarray(self.wR, dtype=np.float64).ravel()
        self.wS = np.ascontiguousarray(self.wS, dtype=np.float64).ravel()
        if self.wR.shape != self.wS.shape:
            raise ValueError("wR and wS must have the same length")
        if not (np.all(np.isfinite(self.wR)) and np.all(np.isfinite(self.wS))):
            raise ValueError("blend weights must be finite")

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def one_hot(cls, n, l, rotation=1.0, scale=1.0):
        wR = np.zeros(n)
        wS = np.zeros(n)
        wR[l] = rotation
        wS[l] = scale
        return cls(wR, wS)

    @classmethod
    def from_stacked(cls, w):
        w = np.asarray(w, dtype=np.float64).ravel()
        if len(w) % 2:
            raise ValueError("stacked weight vector must have even length")
        n = len(w) // 2
        return cls(w[:n], w[n:])

    def stacked(self):
        return np.concatenate([self.wR, self.wS])

    def __len__(self):
        return len(self.wR)


class DeformBasis:
    """A reference mesh plus n deformation representations against it."""

    def __init__(self, reference: TriangleMesh, weights: EdgeWeights, reps, labels=None):
        reps = list(reps)
        if not reps:
            raise ValueError("a basis needs at least one representation")
        for rep in reps:
            if len(rep) != reference.n_vertices:
                raise ValueError("representation vertex count differs from reference")
        if labels is None:
            labels = [f"example_{l}" for l in range(len(reps))]
        if len(labels) != len(reps):
            raise ValueError("one label per representation required")
        self.reference = reference
        self.weights = weights
        self.reps = reps
        self.labels = [str(l) for l in labels]
        # stacked views used by the solvers
        self.rot_stack = np.stack([rep.rot for rep in reps])      # (n, V, 3)
        self.scale_stack = np.stack([rep.scale for rep in reps])  # (n, V, 6)
        self.rot_stack.setflags(write=False)
        self.scale_stack.setflags(write=False)

    @property
    def n_examples(self):
        return len(self.reps)

    @property
    def n_vertices(self):
        return self.reference.n_vertices

    def zero_weights(self):
        return BlendWeights.zeros(self.n_examples)

    def blended_rot(self, w: BlendWeights):
        """Summed rotation vectors sum_l wR_l rho_{l,i}, (V, 3)."""
        return np.tensordot(w.wR, self.rot_stack, axes=(0, 0))

    def blended_scale(self, w: BlendWeights):
        """Summed compact scale offsets sum_l wS_l S'_{l,i}, (V, 6)."""
        return np.tensordot(w.wS, self.scale_stack, axes=(0, 0))

    def __repr__(self):
        return f"DeformBasis({self.n_examples} examples, {self.n_vertices} vertices)"


def blend_gradients_all(basis: DeformBasis, w: BlendWeights):
    """Blended gradients T_i(w) = exp(sum wR log R) (I + sum wS S'), (V, 3, 3)."""
    if len(w) != basis.n_examples:
        raise ValueError(f"expected {basis.n_examples} weights, got {len(w)}")
    A = exp_rotvec(basis.blended_rot(w))
    B = np.eye(3) + six_to_sym(basis.blended_scale(w))
    return A @ B


def blend_gradients(basis: DeformBasis, w: BlendWeights, i: int):
    """Blended gradient of one vertex."""
    if len(w) != basis.n_examples:
        raise ValueError(f"expected {basis.n_examples} weights, got {len(w)}")
    A = exp_rotvec(np.tensordot(w.wR, basis.rot_stack[:, i, :], axes=(0, 0)))
    B = np.eye(3) + six_to_sym(np.tensordot(w.wS, basis.scale_stack[:, i, :], axes=(0, 0)))
    return A @ B


def align_rigid(reference: TriangleMesh, model: TriangleMesh, landmark_indices):
    """Rigidly move ``model`` onto ``reference`` by landmark Procrustes.

    Rotation plus translation only; scale is deliberately preserved.  The
    transform minimizes the summed squared distance between corresponding
    landmark vertices.
    """
    idx = np.asarray(landmark_indices, dtype=np.int64)
    if len(idx) < 3:
        raise ValueError("rigid alignment needs at least 3 landmarks")
    X = model.vertices[idx]
    Y = reference.vertices[idx]
    xc = X.mean(axis=0)
    yc = Y.mean(axis=0)
    X0 = X - xc
    sing = np.linalg.svd(X0, compute_uv=False)
    if sing[1] <= 1e-9 * max(sing[0], 1e-300):
        raise ValueError("landmarks are collinear or coincident; alignment is ambiguous")
    C = X0.T @ (Y - yc)
    U, _, Vt = np.linalg.svd(C)
    D = np.diag([1.0, 1.0, float(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    moved = (model.vertices - xc) @ R.T + yc
    return model.with_vertices(moved)


# ---------------------------------------------------------------------------
# basis file format: versioned little-endian binary (.drb)

def save_basis(path, basis: DeformBasis, reference_path) -> None:
    """Write a basis document: header, reference path, labels, per-vertex scalars.

    The reference geometry itself is not embedded; ``reference_path`` is
    stored and re-read on load (relative paths resolve against the basis
    file's directory).
    """
    def put_str(fh, s):
        raw = s.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)

    with open(path, "wb") as fh:
        fh.write(BASIS_MAGIC)
        fh.write(struct.pack("<I", BASIS_VERSION))
        fh.write(struct.pack("<II", basis.n_examples, basis.n_vertices))
        put_str(fh, str(reference_path))
        for label in basis.labels:
            put_str(fh, label)
        for rep in basis.reps:
            fh.write(np.ascontiguousarray(rep.rot, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(rep.scale, dtype="<f8").tobytes())


def load_basis(path) -> DeformBasis:
    """Read a basis document written by :func:`save_basis`."""
    from .mesh import read_mesh

    def get_str(fh):
        (ln,) = struct.unpack("<I", fh.read(4))
        return fh.read(ln).decode("utf-8")

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != BASIS_MAGIC:
            raise ValueError(f"not a basis file (bad magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != BASIS_VERSION:
            raise ValueError(f"unsupported basis version {version}")
        n, V = struct.unpack("<II", fh.read(8))
        ref_path = get_str(fh)
        labels = [get_str(fh) for _ in range(n)]
        reps = []
        for _ in range(n):
            rot = np.frombuffer(fh.read(V * 3 * 8), dtype="<f8").reshape(V, 3)
            scale = np.frombuffer(fh.read(V * 6 * 8), dtype="<f8").reshape(V, 6)
            reps.append(DeformRep(rot, scale))
    if not os.path.isabs(ref_path):
        ref_path = os.path.join(os.path.dirname(os.path.abspath(str(path))), ref_path)
    reference = read_mesh(ref_path)
    if reference.n_vertices != V:
        raise ValueError(
            f"reference at {ref_path} has {reference.n_vertices} vertices, basis expects {V}"
        )
    return DeformBasis(reference, cotangent_weights(reference), reps, labels)
