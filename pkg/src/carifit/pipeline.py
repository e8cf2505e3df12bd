"""Alternating optimization that fits a deformable mesh to 2D landmarks.

One iteration updates the camera from the current mesh, re-solves vertex
positions under the joint deformation + landmark objective, checks the
energy-decrease exit test, and re-optimizes blend weights.  Weights start
at zero; the camera is seeded from the reference mesh's landmark vertices.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .camera import ProjectionParams, estimate_params, fitting_error, landmark_loss
from .deform import BlendWeights, DeformBasis
from .mesh import LandmarkSpec, TriangleMesh, bbox_diagonal
from .reconstruct import default_anchor, solve_p_step
from .weights import LMOptions, energy_def, solve_weights


@dataclass
class FitConfig:
    """Fitting loop settings; defaults are the documented working point."""

    lam: float = 0.01              # landmark term weight
    max_iterations: int = 4
    epsilon: float = 1e-2          # energy-decrease exit threshold, per bbox^2
    tie_weights: bool = False
    anchor: tuple = None           # (vertex index, position); reference vertex 0 if None
    lm_options: LMOptions = field(default_factory=LMOptions)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class IterationTrace:
    """Energies recorded at one outer iteration."""

    iteration: int
    e_def: float                   # after the position step, at the incoming weights
    e_lan: float
    e_error: float
    e_def_post_w: float = None     # after the weight step, when one ran
    lm_iterations: int = 0
    lm_reason: str = ""


@dataclass
class FitResult:
    mesh: TriangleMesh
    weights: BlendWeights
    proj: ProjectionParams
    trace: list
    wall_time: float
    exit_reason: str

    @property
    def e_error(self):
        return self.trace[-1].e_error

    def trace_rows(self):
        header = ["iteration", "E_def", "E_lan", "E_error", "E_def_post_w",
                  "lm_iterations", "lm_reason"]
        rows = [header]
        for t in self.trace:
            rows.append([
                t.iteration, f"{t.e_def:.12g}", f"{t.e_lan:.12g}", f"{t.e_error:.12g}",
                "" if t.e_def_post_w is None else f"{t.e_def_post_w:.12g}",
                t.lm_iterations, t.lm_reason,
            ])
        return rows


def fit_caricature(basis: DeformBasis, lms: LandmarkSpec, cfg: FitConfig = None) -> FitResult:
    """Fit the deformation space to 2D landmark targets.

    Alternates camera update, position solve, and weight optimization,
    exiting when the deformation energy settles (absolute decrease below
    epsilon, normalized by the squared reference bounding-box diagonal) or
    at the iteration cap.  The final weight step is skipped on the exit
    iteration; both pre- and post-step energies are recorded in the trace.
    Deterministic for fixed inputs and config.
    """
    cfg = cfg or FitConfig()
    lms.validate_for(basis.reference)
    start = time.perf_counter()
    anchor = cfg.anchor if cfg.anchor is not None else default_anchor(basis.reference)
    scale2 = bbox_diagonal(basis.reference) ** 2

    w = basis.zero_weights()
    mesh = basis.reference
    proj = None
    prev_e_def = energy_def(basis, w, mesh)
    trace = []
    exit_reason = "max_iterations"

    for iteration in range(1, cfg.max_iterations + 1):
        candidate = estimate_params(mesh, lms)
        if proj is None or landmark_loss(candidate, mesh, lms) <= landmark_loss(proj, mesh, lms):
            proj = candidate
        mesh = solve_p_step(basis, w, proj, lms, cfg.lam, anchor)
        e_def = energy_def(basis, w, mesh)
        e_lan = landmark_loss(proj, mesh, lms)
        entry = IterationTrace(iteration, e_def, e_lan,
                               fitting_error(e_lan, len(lms)))
        trace.append(entry)

        if iteration > 1 and abs(prev_e_def - e_def) < cfg.epsilon * scale2:
            exit_reason = "energy_settled"
            break
        prev_e_def = e_def
        if iteration == cfg.max_iterations:
            break

        opts = cfg.lm_options
        if cfg.tie_weights != opts.tie_weights:
            opts = LMOptions(**{**opts.__dict__, "tie_weights": cfg.tie_weights})
        state = solve_weights(basis, mesh, w, opts)
        w = state.weights
        entry.e_def_post_w = state.energy
        entry.lm_iterations = state.iterations
        entry.lm_reason = state.reason

    return FitResult(
        mesh=mesh,
        weights=w,
        proj=proj,
        trace=trace,
        wall_time=time.perf_counter() - start,
        exit_reason=exit_reason,
    )


def reprojected_landmarks(result: FitResult, lms: LandmarkSpec):
    """Model landmark pixel positions under the fitted camera, (k, 2)."""
    from .camera import project

    return project(result.proj, result.mesh.vertices[lms.indices])


def render_overlay(result: FitResult, lms: LandmarkSpec, image_path, out_path):
    """Write the target-vs-reprojected landmark overlay; see carifit.report."""
    from .report import render_overlay as _render

    return _render(result, lms, image_path, out_path)
