import numpy as np
import pytest

from carifit.deform import BlendWeights, DeformBasis, DeformRep, extract_rep
from carifit.mesh import bbox_diagonal, one_ring
from carifit.rotations import rotation_about
from carifit.reconstruct import reconstruct_from_weights
from carifit.weights import (
    LMOptions,
    energy_def,
    jacobian_blocks,
    optimize_weights,
    residual_vector,
    solve_weights,
)


def brute_force_energy(basis, w, deformed):
    """Independent double-loop evaluation of the deformation energy."""
    from carifit.deform import blend_gradients

    total = 0.0
    ref = basis.reference
    for i in range(ref.n_vertices):
        T = blend_gradients(basis, w, i)
        for j in one_ring(ref, i):
            c = basis.weights.weight(i, int(j))
            e = ref.vertices[i] - ref.vertices[int(j)]
            ep = deformed.vertices[i] - deformed.vertices[int(j)]
            d = ep - T @ e
            total += c * float(d @ d)
    return total


def smooth_field_rep(mesh, seed, rot_scale=0.25, scale_scale=0.2):
    """A smooth synthetic deformation record with both rotation and scale content."""
    rng = np.random.default_rng(seed)
    p = mesh.vertices
    freq = rng.uniform(0.8, 1.6, size=3)
    phase = rng.uniform(0, 2 * np.pi, size=3)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    waves = np.sin(p @ freq[:, None] * 2.0 + phase[0]).ravel()
    rot = rot_scale * waves[:, None] * axis
    s6 = np.zeros((mesh.n_vertices, 6))
    s6[:, 0] = scale_scale * np.sin(p[:, 1] * freq[1] * 3 + phase[1])
    s6[:, 3] = scale_scale * np.cos(p[:, 0] * freq[2] * 3 + phase[2])
    s6[:, 5] = scale_scale * 0.5 * waves
    return DeformRep(rot, s6)


@pytest.fixture(scope="module")
def mixed_basis(small_face, small_face_weights):
    reps = [smooth_field_rep(small_face, seed) for seed in range(5)]
    return DeformBasis(small_face, small_face_weights, reps)


@pytest.fixture(scope="module")
def calibration():
    from carifit.collection import well_separated_basis

    return well_separated_basis()


class TestEnergy:
    def test_reference_zero(self, mixed_basis, small_face):
        assert energy_def(mixed_basis, BlendWeights.zeros(5), small_face) == 0.0

    def test_exactly_representable_example(self, small_face, small_face_weights):
        # a global rotation-plus-scale example is exactly representable:
        # the energy at its own one-hot weights is numerically zero
        R = rotation_about([0.2, 1.0, 0.1], 0.5)
        affine = small_face.with_vertices(small_face.vertices @ R.T * 1.3)
        rep = extract_rep(small_face, affine, small_face_weights)
        basis = DeformBasis(small_face, small_face_weights, [rep])
        e = energy_def(basis, BlendWeights.one_hot(1, 0), affine)
        scale = bbox_diagonal(small_face)
        assert e <= 1e-12 * scale * scale

    def test_reconstruction_minimizes_energy(self, mixed_basis):
        w = BlendWeights.one_hot(5, 2)
        target = reconstruct_from_weights(mixed_basis, w)
        best = energy_def(mixed_basis, w, target)
        rng = np.random.default_rng(0)
        for _ in range(3):
            noise = 1e-3 * rng.normal(size=target.vertices.shape)
            poked = target.with_vertices(target.vertices + noise)
            assert energy_def(mixed_basis, w, poked) >= best

    def test_matches_brute_force(self, mixed_basis, small_face):
        rng = np.random.default_rng(1)
        noisy = small_face.with_vertices(
            small_face.vertices + 0.3 * rng.normal(size=small_face.vertices.shape))
        w = BlendWeights(rng.normal(size=5) * 0.3, rng.normal(size=5) * 0.3)
        got = energy_def(mixed_basis, w, noisy)
        want = brute_force_energy(mixed_basis, w, noisy)
        assert got == pytest.approx(want, rel=1e-10)

    def test_residual_norm_equals_energy(self, mixed_basis, small_face):
        rng = np.random.default_rng(2)
        for seed in range(5):
            noisy = small_face.with_vertices(
                small_face.vertices + 0.1 * rng.normal(size=small_face.vertices.shape))
            w = BlendWeights(rng.normal(size=5) * 0.5, rng.normal(size=5) * 0.5)
            r = residual_vector(mixed_basis, w, noisy)
            e = energy_def(mixed_basis, w, noisy)
            assert float(r @ r) == pytest.approx(e, rel=1e-12)

    def test_model_energy_matches_pairwise(self, mixed_basis, small_face):
        # the solver's contracted evaluation agrees with the direct sum
        from carifit.weights import _model_for

        rng = np.random.default_rng(3)
        noisy = small_face.with_vertices(
            small_face.vertices + 0.2 * rng.normal(size=small_face.vertices.shape))
        model = _model_for(mixed_basis)
        model.set_target(noisy)
        w = BlendWeights(rng.normal(size=5), rng.normal(size=5))
        scale = bbox_diagonal(small_face) ** 2
        assert model.energy(w) == pytest.approx(
            energy_def(mixed_basis, w, noisy), rel=1e-9, abs=1e-10 * scale)


class TestJacobian:
    def test_zero_weights_scale_block(self, small_face, small_face_weights):
        rep = smooth_field_rep(small_face, 11)
        basis = DeformBasis(small_face, small_face_weights, [rep])
        blocks = jacobian_blocks(basis, BlendWeights.zeros(1), 7)
        from carifit.deform import six_to_sym

        assert np.abs(blocks[1] - six_to_sym(rep.scale[7])).max() <= 1e-12

    def finite_difference_blocks(self, basis, w, i, h=1e-5):
        from carifit.deform import blend_gradients

        n = basis.n_examples
        out = np.empty((2 * n, 3, 3))
        stacked = w.stacked()
        for k in range(2 * n):
            plus = stacked.copy()
            plus[k] += h
            minus = stacked.copy()
            minus[k] -= h
            out[k] = (blend_gradients(basis, BlendWeights.from_stacked(plus), i)
                      - blend_gradients(basis, BlendWeights.from_stacked(minus), i)) / (2 * h)
        return out

    def test_single_example_matches_finite_differences(self, small_face, small_face_weights):
        # one example: the weighted log commutes with itself, the formula is exact
        rep = smooth_field_rep(small_face, 12)
        basis = DeformBasis(small_face, small_face_weights, [rep])
        w = BlendWeights(np.array([0.8]), np.array([-0.4]))
        rng = np.random.default_rng(4)
        for i in rng.integers(0, small_face.n_vertices, size=8):
            got = jacobian_blocks(basis, w, int(i))
            want = self.finite_difference_blocks(basis, w, int(i))
            denom = max(1.0, np.abs(want).max())
            assert np.abs(got - want).max() / denom <= 1e-5

    def test_three_examples_inexact_but_descends(self, small_face, small_face_weights):
        # non-commuting logs: record the gap, then check LM still reduces energy
        reps = [smooth_field_rep(small_face, 20 + k) for k in range(3)]
        basis = DeformBasis(small_face, small_face_weights, reps)
        w = BlendWeights(np.array([0.5, -0.3, 0.4]), np.array([0.2, 0.1, -0.2]))
        gaps = []
        rng = np.random.default_rng(5)
        for i in rng.integers(0, small_face.n_vertices, size=5):
            got = jacobian_blocks(basis, w, int(i))
            want = self.finite_difference_blocks(basis, w, int(i))
            gaps.append(np.abs(got - want).max())
        assert max(gaps) > 0  # the product-rule formula is not the exact derivative

        target = reconstruct_from_weights(basis, w)
        state = solve_weights(basis, target,
                              BlendWeights(np.zeros(3), np.zeros(3)))
        assert state.energy < energy_def(basis, BlendWeights.zeros(3), target)

    def test_scale_jacobian_exact_any_weights(self, small_face, small_face_weights):
        reps = [smooth_field_rep(small_face, 30 + k) for k in range(2)]
        basis = DeformBasis(small_face, small_face_weights, reps)
        w = BlendWeights(np.array([0.3, -0.2]), np.array([0.5, 0.25]))
        for i in (3, 100):
            got = jacobian_blocks(basis, w, i)[2:]
            want = self.finite_difference_blocks(basis, w, i)[2:]
            assert np.abs(got - want).max() <= 1e-9


class TestOptimize:
    def test_reference_returns_zero_energy(self, mixed_basis, small_face):
        state = solve_weights(mixed_basis, small_face)
        assert state.energy <= 1e-12
        assert np.abs(state.weights.stacked()).max() <= 1e-6

    def test_one_hot_recovery(self, calibration):
        # a raw warp realizes its own extracted record exactly, so the
        # energy over weights bottoms out at one-hot
        basis, _, raws = calibration
        for l in (0, 3):
            state = solve_weights(basis, raws[l])
            expected = BlendWeights.one_hot(5, l).stacked()
            assert np.abs(state.weights.stacked() - expected).max() <= 1e-3

    def test_known_weights_reference_energy(self, calibration):
        basis, _, _ = calibration
        w_star = BlendWeights(np.array([1.7, -0.3, 0.4, 0.0, 0.6]),
                              np.array([0.9, 0.2, -0.5, 0.3, 0.0]))
        target = reconstruct_from_weights(basis, w_star)
        state = solve_weights(basis, target)
        assert state.energy <= energy_def(basis, w_star, target) + 1e-10

    def test_descends_on_rough_basis(self, mixed_basis):
        # overlapping non-commuting fields: the inexact Jacobian may stop
        # early, but the result never worsens the starting energy
        target = reconstruct_from_weights(mixed_basis, BlendWeights.one_hot(5, 0))
        state = solve_weights(mixed_basis, target)
        start = energy_def(mixed_basis, BlendWeights.zeros(5), target)
        assert state.energy < start

    def test_monotone_descent(self, mixed_basis):
        rng = np.random.default_rng(7)
        target = reconstruct_from_weights(
            mixed_basis, BlendWeights(rng.normal(size=5), rng.normal(size=5)))
        state = solve_weights(mixed_basis, target)
        history = np.array(state.energy_history)
        assert (np.diff(history) < 0).all()

    def test_translation_invariance(self, mixed_basis):
        target = reconstruct_from_weights(mixed_basis, BlendWeights.one_hot(5, 1))
        moved = target.with_vertices(target.vertices + [10.0, -4.0, 2.0])
        a = solve_weights(mixed_basis, target).weights.stacked()
        b = solve_weights(mixed_basis, moved).weights.stacked()
        assert np.abs(a - b).max() <= 1e-9

    def test_determinism(self, mixed_basis):
        target = reconstruct_from_weights(mixed_basis, BlendWeights.one_hot(5, 4))
        a = solve_weights(mixed_basis, target)
        b = solve_weights(mixed_basis, target)
        assert np.array_equal(a.weights.stacked(), b.weights.stacked())
        assert a.energy_history == b.energy_history

    def test_tie_weights(self, mixed_basis):
        w_star = BlendWeights(np.full(5, 0.4), np.full(5, 0.4))
        target = reconstruct_from_weights(mixed_basis, w_star)
        state = solve_weights(mixed_basis, target, opts=LMOptions(tie_weights=True))
        assert np.abs(state.weights.wR - state.weights.wS).max() == 0.0
        assert state.energy <= energy_def(mixed_basis, w_star, target) + 1e-8

    def test_ridge_shrinks_weights(self, mixed_basis):
        target = reconstruct_from_weights(
            mixed_basis, BlendWeights(np.full(5, 1.0), np.full(5, 1.0)))
        free = solve_weights(mixed_basis, target).weights.stacked()
        ridged = solve_weights(mixed_basis, target,
                               opts=LMOptions(ridge=1e3)).weights.stacked()
        assert np.linalg.norm(ridged) < np.linalg.norm(free)

    def test_nonfinite_initial_rejected(self, mixed_basis, small_face):
        bad = BlendWeights(np.full(5, 1.0), np.full(5, 1.0))
        bad.wR = bad.wR.copy()
        with pytest.raises(ValueError):
            solve_weights(mixed_basis, small_face,
                          BlendWeights(np.array([np.inf] * 5), np.zeros(5)))

    def test_optimize_weights_wrapper(self, mixed_basis):
        target = reconstruct_from_weights(mixed_basis, BlendWeights.one_hot(5, 0))
        w = optimize_weights(mixed_basis, target)
        assert isinstance(w, BlendWeights)
