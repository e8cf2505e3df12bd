"""Deformation energy in the blend weights and its Levenberg-Marquardt solver.

The energy is a nonlinear least-squares in w through the blended gradients
T_i(w).  The Jacobian uses product-rule blocks that treat the rotation
exponential's argument as if its terms commuted; they are exact when the
weighted rotation logs commute (e.g. a single example) and otherwise act as
a Gauss-Newton-style inexact Jacobian whose steps are guarded by the LM
acceptance test, so accepted iterates always strictly decrease the energy.

The normal equations are assembled per vertex: with G_i the reference edge
Gram matrix and L_i its Cholesky factor, the rotation factor of T_i drops
out of J^T J (it is orthogonal), which makes the scale/shear half of the
system constant across iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.blas import dsyrk

from .deform import (
    BlendWeights,
    DeformBasis,
    _segment_sum,
    blend_gradients_all,
    six_to_sym,
    vertex_grams,
)
from .mesh import TriangleMesh
from .rotations import exp_rotvec, skew

SYM6_WEIGHTS = np.array([1.0, 2.0, 2.0, 1.0, 2.0, 1.0])  # multiplicity of compact entries


class EnergyDivergedError(RuntimeError):
    """The energy became non-finite during a Levenberg-Marquardt trial step."""


def _pair_arrays(basis: DeformBasis, deformed: TriangleMesh):
    w = basis.weights
    e = basis.reference.vertices[w.pair_src] - basis.reference.vertices[w.pair_dst]
    ep = deformed.vertices[w.pair_src] - deformed.vertices[w.pair_dst]
    return e, ep, w.pair_w, w.pair_src


def energy_def(basis: DeformBasis, w: BlendWeights, deformed: TriangleMesh) -> float:
    """Deformation energy sum_i sum_{j in N_i} c_ij || e'_ij - T_i(w) e_ij ||^2."""
    if not basis.reference.same_topology(deformed):
        raise ValueError("deformed mesh must share the reference topology")
    e, ep, c, src = _pair_arrays(basis, deformed)
    T = blend_gradients_all(basis, w)
    d = ep - np.einsum("kab,kb->ka", T[src], e)
    return float((c * (d * d).sum(axis=1)).sum())


def residual_vector(basis: DeformBasis, w: BlendWeights, deformed: TriangleMesh):
    """Stacked per-pair residuals sqrt(c_ij) (e'_ij - T_i(w) e_ij).

    Pairs are ordered by (i, j); the squared norm equals :func:`energy_def`.
    """
    e, ep, c, src = _pair_arrays(basis, deformed)
    T = blend_gradients_all(basis, w)
    d = ep - np.einsum("kab,kb->ka", T[src], e)
    return (np.sqrt(c)[:, None] * d).ravel()


def jacobian_blocks(basis: DeformBasis, w: BlendWeights, i: int):
    """The 2n gradient derivative blocks dT_i/dw at one vertex, (2n, 3, 3).

    First the n rotation-weight blocks exp(sum wR log R) log R_l (I + sum wS S'),
    then the n scale-weight blocks exp(sum wR log R) S'_l.
    """
    n = basis.n_examples
    A = exp_rotvec(np.tensordot(w.wR, basis.rot_stack[:, i, :], axes=(0, 0)))
    B = np.eye(3) + six_to_sym(np.tensordot(w.wS, basis.scale_stack[:, i, :], axes=(0, 0)))
    out = np.empty((2 * n, 3, 3))
    out[:n] = A @ skew(basis.rot_stack[:, i, :]) @ B
    out[n:] = A @ six_to_sym(basis.scale_stack[:, i, :])
    return out


@dataclass
class LMOptions:
    """Inner-solver knobs; defaults match the documented solver contract."""

    max_iterations: int = 100
    energy_rel_tol: float = 1e-8
    grad_tol: float = 1e-10
    ridge: float = 0.0            # optional lambda_w ||w||^2 term, off by default
    tie_weights: bool = False     # optimize a single weight per example (wR = wS)
    mu_init_factor: float = 1e-3
    mu_accept: float = 0.3
    mu_reject: float = 2.0
    max_rejects: int = 40


@dataclass
class LMState:
    """Outcome of one Levenberg-Marquardt run."""

    weights: BlendWeights
    mu: float
    iterations: int
    energy_history: list = field(default_factory=list)
    reason: str = ""

    @property
    def energy(self):
        return self.energy_history[-1]


class _EnergyModel:
    """Per-basis precomputation backing fast energy / normal-equation evaluation."""

    def __init__(self, basis: DeformBasis):
        self.basis = basis
        self.G = vertex_grams(basis.reference, basis.weights)
        self.L = np.linalg.cholesky(self.G)
        n = basis.n_examples
        V = basis.n_vertices
        # scale-derivative factors S'_l L_i are weight-independent
        self.KS = np.empty((n, V * 9))
        for l in range(n):
            self.KS[l] = (six_to_sym(basis.scale_stack[l]) @ self.L).reshape(-1)
        self.SS = _syrk(self.KS)

    def set_target(self, deformed: TriangleMesh):
        basis = self.basis
        if not basis.reference.same_topology(deformed):
            raise ValueError("deformed mesh must share the reference topology")
        w = basis.weights
        e = basis.reference.vertices[w.pair_src] - basis.reference.vertices[w.pair_dst]
        ep = deformed.vertices[w.pair_src] - deformed.vertices[w.pair_dst]
        outer = w.pair_w[:, None, None] * (ep[:, :, None] * e[:, None, :])
        self.H = _segment_sum(outer, w.pair_indptr, basis.n_vertices)
        self.const = float((w.pair_w * (ep * ep).sum(axis=1)).sum())

    def _factors(self, w: BlendWeights):
        A = exp_rotvec(self.basis.blended_rot(w))
        B = np.eye(3) + six_to_sym(self.basis.blended_scale(w))
        return A, B

    def energy(self, w: BlendWeights) -> float:
        A, B = self._factors(w)
        T = A @ B
        TL = T @ self.L
        return self.const - 2.0 * float(np.einsum("iab,iab->", T, self.H)) + float(
            np.einsum("iab,iab->", TL, TL)
        )

    def normal_system(self, w: BlendWeights):
        """(J^T J, J^T r) of the stacked-pair least squares at w."""
        basis = self.basis
        n = basis.n_examples
        V = basis.n_vertices
        A, B = self._factors(w)
        # N_i = A_i^T H_i - B_i G_i; J^T r entries are -<X_l, N> per block
        N = np.swapaxes(A, 1, 2) @ self.H - B @ self.G
        C = N @ np.swapaxes(B, 1, 2)
        cvec = np.stack(
            [C[:, 2, 1] - C[:, 1, 2], C[:, 0, 2] - C[:, 2, 0], C[:, 1, 0] - C[:, 0, 1]],
            axis=1,
        )
        jtr = np.empty(2 * n)
        jtr[:n] = -np.einsum("lia,ia->l", basis.rot_stack, cvec)
        Nsym6 = (N + np.swapaxes(N, 1, 2))[:, [0, 0, 0, 1, 1, 2], [0, 1, 2, 1, 2, 2]] / 2.0
        jtr[n:] = -np.einsum("lik,ik->l", basis.scale_stack, Nsym6 * SYM6_WEIGHTS)

        BL = B @ self.L
        KR = np.empty((n, V * 9))
        for l in range(n):
            rho = basis.rot_stack[l]
            KR[l] = np.cross(rho[:, None, :], BL.transpose(0, 2, 1)).transpose(0, 2, 1).reshape(-1)
        jtj = np.empty((2 * n, 2 * n))
        jtj[:n, :n] = _syrk(KR)
        jtj[:n, n:] = KR @ self.KS.T
        jtj[n:, :n] = jtj[:n, n:].T
        jtj[n:, n:] = self.SS
        return jtj, jtr


def _syrk(K):
    """Symmetric K @ K.T via BLAS syrk."""
    out = dsyrk(1.0, K, lower=0)
    return out + np.triu(out, 1).T


def _model_for(basis: DeformBasis) -> _EnergyModel:
    model = getattr(basis, "_energy_model", None)
    if model is None:
        model = _EnergyModel(basis)
        basis._energy_model = model
    return model


def solve_weights(basis: DeformBasis, deformed: TriangleMesh,
                  w0: BlendWeights = None, opts: LMOptions = None) -> LMState:
    """Minimize the deformation energy over blend weights by Levenberg-Marquardt.

    Accepted steps strictly decrease the energy; termination on relative
    energy decrease, gradient norm, or the iteration cap.  Deterministic for
    fixed inputs.
    """
    opts = opts or LMOptions()
    if w0 is None:
        w0 = basis.zero_weights()
    if len(w0) != basis.n_examples:
        raise ValueError("w0 length does not match basis")
    if not (np.all(np.isfinite(w0.wR)) and np.all(np.isfinite(w0.wS))):
        raise ValueError("w0 must be finite")
    model = _model_for(basis)
    model.set_target(deformed)

    def reduce_tied(jtj, jtr, n):
        blk = jtj[:n, :n] + jtj[:n, n:] + jtj[n:, :n] + jtj[n:, n:]
        return blk, jtr[:n] + jtr[n:]

    n = basis.n_examples

    def objective(stacked):
        value = model.energy(BlendWeights.from_stacked(stacked))
        if opts.ridge > 0.0:
            value += opts.ridge * float((stacked * stacked).sum())
        return value

    w = w0.stacked().copy()
    energy = objective(w)
    if not np.isfinite(energy):
        raise EnergyDivergedError(f"energy non-finite at the initial weights: {energy}")
    history = [energy]
    mu = None
    reason = "max_iterations"
    iterations = 0

    for iterations in range(1, opts.max_iterations + 1):
        jtj, jtr = model.normal_system(BlendWeights.from_stacked(w))
        if opts.tie_weights:
            jtj, jtr = reduce_tied(jtj, jtr, n)
        if opts.ridge > 0.0:
            factor = 2.0 if opts.tie_weights else 1.0
            jtj = jtj + factor * opts.ridge * np.eye(len(jtj))
            jtr = jtr + factor * opts.ridge * (w[:n] if opts.tie_weights else w)
        grad_norm = 2.0 * float(np.linalg.norm(jtr))
        if grad_norm < opts.grad_tol:
            reason = "gradient"
            break
        if mu is None:
            mu = opts.mu_init_factor * max(float(np.trace(jtj)) / len(jtj), 1e-300)

        accepted = False
        for _ in range(opts.max_rejects):
            try:
                delta = np.linalg.solve(jtj + mu * np.eye(len(jtj)), -jtr)
            except np.linalg.LinAlgError:
                mu *= opts.mu_reject
                continue
            if opts.tie_weights:
                trial = w + np.concatenate([delta, delta])
            else:
                trial = w + delta
            trial_energy = objective(trial)
            if not np.isfinite(trial_energy):
                raise EnergyDivergedError(
                    f"energy non-finite at LM iteration {iterations} (mu={mu:.3g})"
                )
            if trial_energy < history[-1]:
                w = trial
                mu *= opts.mu_accept
                history.append(trial_energy)
                accepted = True
                break
            mu *= opts.mu_reject
        if not accepted:
            reason = "stalled"
            break
        if history[-2] - history[-1] < opts.energy_rel_tol * max(history[-2], 1e-300):
            reason = "energy"
            break

    return LMState(
        weights=BlendWeights.from_stacked(w),
        mu=mu if mu is not None else 0.0,
        iterations=iterations,
        energy_history=history,
        reason=reason,
    )


def optimize_weights(basis: DeformBasis, deformed: TriangleMesh,
                     w0: BlendWeights = None, opts: LMOptions = None) -> BlendWeights:
    """Best blend weights for a deformed mesh; see :func:`solve_weights`."""
    return solve_weights(basis, deformed, w0, opts).weights
