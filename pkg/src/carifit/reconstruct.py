"""Solve for deformed vertex positions from blended deformation gradients.

The unconstrained solve pins one anchor vertex (the solution is otherwise
determined only up to global translation).  The landmark-augmented solve
adds the projection blocks of the joint objective to landmark rows; those
fix the in-plane translation, and the remaining free direction (translation
along the camera view axis) is pinned exactly through the anchor vertex's
view depth, which does not perturb the minimizer in any other direction.
"""

from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .camera import ProjectionParams
from .deform import BlendWeights, DeformBasis, blend_gradients_all
from .mesh import EdgeWeights, LandmarkSpec, TriangleMesh


class LaplacianSystem:
    """Reusable sparse system over a fixed reference and edge-weight set.

    The base matrix has 2 * sum_j c_ij on the diagonal and -2 c_ij on
    off-diagonals; it depends only on reference topology and weights, so one
    instance serves every reconstruction against that reference.  Anchored
    factorizations are cached per anchor vertex.
    """

    def __init__(self, reference: TriangleMesh, weights: EdgeWeights):
        self.reference = reference
        self.weights = weights
        n = reference.n_vertices
        i = weights.edges[:, 0]
        j = weights.edges[:, 1]
        w = weights.values
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([j, i, i, j])
        vals = np.concatenate([-2.0 * w, -2.0 * w, 2.0 * w, 2.0 * w])
        self.matrix = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
        self._anchored = {}
        self._ref_edges = (
            reference.vertices[weights.pair_src] - reference.vertices[weights.pair_dst]
        )

    def _factor_for(self, anchor_index):
        if anchor_index not in self._anchored:
            n = self.reference.n_vertices
            if not 0 <= anchor_index < n:
                raise IndexError(f"anchor vertex {anchor_index} out of range")
            keep = np.ones(n, dtype=bool)
            keep[anchor_index] = False
            reduced = self.matrix[keep][:, keep].tocsc()
            anchor_col = self.matrix[keep][:, [anchor_index]].toarray().ravel()
            try:
                lu = spla.splu(reduced)
            except RuntimeError as exc:
                raise RuntimeError(
                    f"anchored system is singular (disconnected mesh?): {exc}"
                ) from exc
            self._anchored[anchor_index] = (keep, anchor_col, lu)
        return self._anchored[anchor_index]

    def gradient_rhs(self, T):
        """Right-hand side b_i = sum_j c_ij (T_i + T_j) e_ij, (V, 3)."""
        w = self.weights
        Tsum = T[w.pair_src] + T[w.pair_dst]
        m = w.pair_w[:, None] * np.einsum("kab,kb->ka", Tsum, self._ref_edges)
        from .deform import _segment_sum

        return _segment_sum(m, w.pair_indptr, self.reference.n_vertices)

    def solve_anchored(self, T, anchor):
        """Positions with gradients ``T`` and the anchor vertex pinned exactly."""
        anchor_index, anchor_pos = anchor
        anchor_pos = np.asarray(anchor_pos, dtype=np.float64).reshape(3)
        keep, anchor_col, lu = self._factor_for(int(anchor_index))
        b = self.gradient_rhs(T)
        rhs = b[keep] - anchor_col[:, None] * anchor_pos[None, :]
        x = lu.solve(rhs)
        out = np.empty((self.reference.n_vertices, 3))
        out[keep] = x
        out[int(anchor_index)] = anchor_pos
        return out

    def solve_with_landmarks(self, T, proj: ProjectionParams, lms: LandmarkSpec,
                             lam: float, anchor):
        """Positions minimizing the joint deformation + landmark objective.

        Landmark rows carry the extra lam * R^T Pi^T Pi R diagonal block and
        lam * R^T Pi^T (q - t) on the right-hand side; the anchor pins only
        the view-axis depth (the exact remaining gauge direction).
        """
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        if lam == 0.0:
            return self.solve_anchored(T, anchor)
        if not np.all(np.isfinite(lms.points2d)):
            raise ValueError("landmark targets must be finite")
        n = self.reference.n_vertices
        R = proj.rotation
        s = proj.s
        # lam * R^T Pi^T Pi R = lam s^2 (r0 r0^T + r1 r1^T), rows of R
        block = lam * s * s * (np.outer(R[0], R[0]) + np.outer(R[1], R[1]))
        d = R[2]  # view axis in model coordinates
        anchor_index, anchor_pos = anchor
        anchor_pos = np.asarray(anchor_pos, dtype=np.float64).reshape(3)
        mu = float(self.matrix.diagonal().mean())
        gauge = mu * np.outer(d, d)

        big = sp.kron(self.matrix, sp.identity(3, format="csc"), format="coo")
        idx = np.asarray(lms.indices, dtype=np.int64)
        k = len(idx)
        sub = np.arange(3)
        rows = (3 * idx[:, None, None] + sub[None, :, None]).repeat(3, axis=2)
        cols = (3 * idx[:, None, None] + sub[None, None, :]).repeat(3, axis=1)
        vals = np.broadcast_to(block, (k, 3, 3))
        a_rows = 3 * int(anchor_index) + sub
        extra = sp.coo_matrix(
            (
                np.concatenate([vals.ravel(), gauge.ravel()]),
                (
                    np.concatenate([rows.ravel(), np.add.outer(a_rows, np.zeros(3, int)).ravel()]),
                    np.concatenate([cols.ravel(), np.add.outer(np.zeros(3, int), a_rows).ravel()]),
                ),
            ),
            shape=(3 * n, 3 * n),
        )
        system = (big + extra).tocsc()

        b = self.gradient_rhs(T)
        qt = lms.points2d - proj.t
        b[idx] += lam * s * (qt[:, 0:1] * R[0][None, :] + qt[:, 1:2] * R[1][None, :])
        b[int(anchor_index)] += mu * d * float(d @ anchor_pos)

        lu = spla.splu(system)
        return lu.solve(b.ravel()).reshape(n, 3)


_SYSTEMS: "weakref.WeakKeyDictionary[DeformBasis, LaplacianSystem]" = weakref.WeakKeyDictionary()


def system_for(basis: DeformBasis) -> LaplacianSystem:
    """The (cached) Laplacian system of a basis' reference."""
    sys_ = _SYSTEMS.get(basis)
    if sys_ is None:
        sys_ = LaplacianSystem(basis.reference, basis.weights)
        _SYSTEMS[basis] = sys_
    return sys_


def default_anchor(reference: TriangleMesh):
    """Vertex 0 pinned at its reference position."""
    return 0, reference.vertices[0].copy()


def reconstruct_from_weights(basis: DeformBasis, w: BlendWeights, anchor=None) -> TriangleMesh:
    """Mesh whose per-vertex gradients best match the blended basis gradients.

    Solves the sparse positive-definite system obtained by differentiating
    the deformation energy, with one anchor vertex pinned (the anchor choice
    moves the output only by a global translation).
    """
    if anchor is None:
        anchor = default_anchor(basis.reference)
    T = blend_gradients_all(basis, w)
    positions = system_for(basis).solve_anchored(T, anchor)
    return basis.reference.with_vertices(positions)


def solve_p_step(basis: DeformBasis, w: BlendWeights, proj: ProjectionParams,
                 lms: LandmarkSpec, lam: float, anchor=None) -> TriangleMesh:
    """Landmark-augmented position solve (the P'-step of the fitting loop).

    With ``lam`` = 0 this is exactly :func:`reconstruct_from_weights`.
    """
    if anchor is None:
        anchor = default_anchor(basis.reference)
    lms.validate_for(basis.reference)
    T = blend_gradients_all(basis, w)
    positions = system_for(basis).solve_with_landmarks(T, proj, lms, lam, anchor)
    return basis.reference.with_vertices(positions)
