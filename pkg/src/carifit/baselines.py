"""Comparison fitters: regularized linear (PCA) landmark fit and ARAP touch-up.

The linear baseline spans mesh space by principal components of the
training collection and fits landmark targets by alternating camera
estimation with a closed-form coefficient solve.  ARAP post-deformation
drags landmark vertices exactly onto back-projected targets while keeping
the rest as rigid as possible.  ``compare_methods`` runs every method over
a task list and tabulates the fitting errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .camera import ProjectionParams, estimate_params, fitting_error, landmark_loss
from .deform import DeformBasis
from .mesh import LandmarkSpec, TriangleMesh, cotangent_weights
from .pipeline import FitConfig, fit_caricature
from .reconstruct import LaplacianSystem

LAMBDA_REG_STRONG_BASE = 3000.0   # calibrated against a ~450 px face box
REFERENCE_FACEBOX_PX = 450.0


def facebox_diagonal(points2d) -> float:
    """Diagonal of the 2D bounding box of landmark targets (pixels)."""
    pts = np.asarray(points2d, dtype=np.float64)
    ext = pts.max(axis=0) - pts.min(axis=0)
    return float(np.linalg.norm(ext))


def lambda_reg_strong(points2d) -> float:
    """The strong regularizer preset, rescaled to the task's face-box size."""
    ratio = facebox_diagonal(points2d) / REFERENCE_FACEBOX_PX
    return LAMBDA_REG_STRONG_BASE * ratio * ratio


@dataclass
class LinearModel:
    """Mean shape plus orthonormal principal displacement axes."""

    mean: TriangleMesh
    axes: np.ndarray      # (n_axes, V, 3), orthonormal when flattened
    sigmas: np.ndarray    # per-axis standard deviation, descending

    @property
    def n_axes(self):
        return len(self.axes)

    def synthesize(self, alpha) -> TriangleMesh:
        alpha = np.asarray(alpha, dtype=np.float64)
        disp = np.tensordot(alpha, self.axes, axes=(0, 0))
        return self.mean.with_vertices(self.mean.vertices + disp)


def build_linear_model(meshes, variance_kept=1.0) -> LinearModel:
    """Principal component analysis of a shared-topology mesh collection.

    Keeps the smallest axis count whose cumulative variance reaches
    ``variance_kept`` (of the total).
    """
    meshes = list(meshes)
    if len(meshes) < 2:
        raise ValueError("need at least 2 meshes for a linear model")
    first = meshes[0]
    for m in meshes[1:]:
        if not first.same_topology(m):
            raise ValueError("meshes must share topology")
    data = np.stack([m.vertices.ravel() for m in meshes])
    mean = data.mean(axis=0)
    centered = data - mean
    _, svals, Vt = np.linalg.svd(centered, full_matrices=False)
    keep = svals > 1e-12 * max(svals[0], 1e-300)
    svals, Vt = svals[keep], Vt[keep]
    if variance_kept >= 1.0:
        count = len(svals)
    else:
        var = svals ** 2
        cum = np.cumsum(var) / var.sum()
        count = min(int(np.searchsorted(cum, variance_kept) + 1), len(svals))
    sigmas = svals[:count] / np.sqrt(len(meshes) - 1)
    axes = Vt[:count].reshape(count, -1, 3)
    mean_mesh = first.with_vertices(mean.reshape(-1, 3), name="pca_mean")
    return LinearModel(mean_mesh, axes, sigmas)


def fit_linear(model: LinearModel, lms: LandmarkSpec, lambda_reg: float,
               max_iterations=100, tol=1e-6):
    """Landmark fit of the linear model with a scaled-coefficient regularizer.

    Alternates camera estimation and the closed-form least-squares solve of
    the coefficients minimizing E_lan + lambda_reg * sum (alpha_j/sigma_j)^2,
    until the landmark loss decrease falls under ``tol``.

    Returns (mesh, alpha, ProjectionParams).
    """
    if lambda_reg < 0:
        raise ValueError("lambda_reg must be nonnegative")
    lms.validate_for(model.mean)
    idx = lms.indices
    A_lm = model.axes[:, idx, :]            # (n_axes, k, 3)
    mean_lm = model.mean.vertices[idx]
    q = lms.points2d
    reg = np.diag(lambda_reg / (model.sigmas ** 2))

    alpha = np.zeros(model.n_axes)
    mesh = model.mean
    prev = np.inf
    for _ in range(max_iterations):
        # no keep-best guard here: a better camera can look worse under the
        # current coefficients, and the next alpha solve absorbs the change
        proj = estimate_params(mesh, lms)
        PiR = proj.s * proj.rotation[:2]    # (2, 3)
        B = np.einsum("ab,jkb->jka", PiR, A_lm)      # (n_axes, k, 2)
        B = B.transpose(1, 2, 0).reshape(2 * len(idx), model.n_axes)
        d = (q - (mean_lm @ PiR.T + proj.t)).reshape(-1)
        alpha = np.linalg.solve(B.T @ B + reg, B.T @ d)
        mesh = model.synthesize(alpha)
        e_lan = landmark_loss(proj, mesh, lms)
        if prev - e_lan < tol:
            break
        prev = e_lan
    return mesh, alpha, proj


def back_projected_targets(mesh: TriangleMesh, lms: LandmarkSpec, proj: ProjectionParams):
    """3D landmark targets: keep each vertex's view depth, hit the 2D target."""
    R = proj.rotation
    cam = mesh.vertices[lms.indices] @ R.T
    cam[:, :2] = (lms.points2d - proj.t) / proj.s
    return cam @ R


def arap_deform(mesh: TriangleMesh, lms: LandmarkSpec, proj: ProjectionParams,
                max_iterations=50, tol=1e-6) -> TriangleMesh:
    """As-rigid-as-possible deformation onto back-projected landmark targets.

    Landmark vertices are hard constraints (their view-axis depth is kept,
    the in-plane position replaced by the back-projected target); interior
    vertices follow local-global iterations with cotangent weights.
    """
    lms.validate_for(mesh)
    weights = cotangent_weights(mesh)
    system = LaplacianSystem(mesh, weights)
    targets = back_projected_targets(mesh, lms, proj)
    # boolean-mask assignment follows ascending index order
    order = np.argsort(lms.indices)
    targets = targets[order]

    n = mesh.n_vertices
    fixed = np.zeros(n, dtype=bool)
    fixed[lms.indices] = True
    free = ~fixed
    A = system.matrix
    A_ff = A[free][:, free].tocsc()
    A_fc = A[free][:, fixed]
    lu = spla.splu(A_ff)

    w = weights
    rest = mesh.vertices
    e_rest = rest[w.pair_src] - rest[w.pair_dst]

    # warm start from the rigid landmark fit; when the targets are consistent
    # with a rigid motion this is already the global optimum
    src = rest[lms.indices[order]]
    dst = targets
    sc = src - src.mean(axis=0)
    dc = dst - dst.mean(axis=0)
    U0, _, Vt0 = np.linalg.svd(sc.T @ dc)
    D0 = np.diag([1.0, 1.0, float(np.linalg.det(Vt0.T @ U0.T))])
    R0 = Vt0.T @ D0 @ U0.T
    current = (rest - src.mean(axis=0)) @ R0.T + dst.mean(axis=0)
    current[fixed] = targets
    prev_energy = np.inf
    for _ in range(max_iterations):
        # local step: best per-vertex rotations for the current positions
        e_cur = current[w.pair_src] - current[w.pair_dst]
        outer = w.pair_w[:, None, None] * (e_rest[:, :, None] * e_cur[:, None, :])
        from .deform import _segment_sum

        S = _segment_sum(outer, w.pair_indptr, n)
        U, _, Vt = np.linalg.svd(S)
        det = np.linalg.det(np.swapaxes(Vt, 1, 2) @ np.swapaxes(U, 1, 2))
        flip = np.ones((n, 3))
        flip[:, 2] = det
        R = np.swapaxes(Vt, 1, 2) * flip[:, None, :] @ np.swapaxes(U, 1, 2)

        # global step: positions from the rotated rest edges
        b = system.gradient_rhs(R)
        current = current.copy()
        current[free] = lu.solve(b[free] - A_fc @ targets)

        d = (current[w.pair_src] - current[w.pair_dst]) - np.einsum(
            "kab,kb->ka", R[w.pair_src], e_rest)
        energy = float((w.pair_w * (d * d).sum(axis=1)).sum())
        if prev_energy - energy < tol * max(prev_energy, 1e-300):
            break
        prev_energy = energy
    return mesh.with_vertices(current)


@dataclass
class CompareTask:
    """One comparison task: a name and its landmark targets."""

    name: str
    lms: LandmarkSpec


def compare_methods(basis: DeformBasis, model: LinearModel, tasks,
                    cfg: FitConfig = None, with_arap=True):
    """Fitting error of every method on every task.

    Methods: the deformation-space fit ("ours"), the linear model without
    regularization ("linear_free"), the strongly regularized linear model
    ("linear_reg"), and optionally each linear variant with ARAP touch-up.
    Returns a column table (method -> list of errors) with a "task" column.
    """
    tasks = list(tasks)
    table = {"task": [t.name for t in tasks]}
    columns = ["ours", "linear_free", "linear_reg"]
    if with_arap:
        columns += ["linear_free_arap", "linear_reg_arap"]
    for c in columns:
        table[c] = []

    for task in tasks:
        k = len(task.lms)
        result = fit_caricature(basis, task.lms, cfg)
        table["ours"].append(result.e_error)

        strong = lambda_reg_strong(task.lms.points2d)
        for label, lam in (("linear_free", 0.0), ("linear_reg", strong)):
            mesh, _, proj = fit_linear(model, task.lms, lam)
            table[label].append(fitting_error(landmark_loss(proj, mesh, task.lms), k))
            if with_arap:
                refined = arap_deform(mesh, task.lms, proj)
                table[label + "_arap"].append(
                    fitting_error(landmark_loss(proj, refined, task.lms), k))
    return table
