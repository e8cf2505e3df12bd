"""Synthetic face-like shape collection and deformation-basis construction.

The collection stands in for a lab-scale face dataset: a ~2.4k-vertex
icosphere-based template with nose/brow/chin bumps and an open neck
boundary, deformed by parameterized recipes (jaw hinge, regional scaling,
smooth bumps) with ground truth recorded alongside each mesh.

Each canonical example records the deformation extracted from its raw
position warp and ships the reconstruction of that record as its mesh, so
the collection is exactly self-consistent: a one-hot blend plus
reconstruction reproduces every example to solver precision.  Recipes are
built from warp families that stay tame under extraction, so scaled
weights extrapolate them meaningfully.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .deform import (
    DeformBasis,
    DeformRep,
    align_rigid,
    extract_rep,
    vertex_grams,
)
from .mesh import TriangleMesh, cotangent_weights
from .reconstruct import LaplacianSystem
from .rotations import exp_rotvec, rotation_about

TEMPLATE_AXES = (0.78, 1.0, 0.74)   # width, height, depth
TEMPLATE_NECK_CUT = np.deg2rad(152.0)
TEMPLATE_SUBDIVISIONS = 4

EXPRESSION_COUNT = 23
IDENTITY_COUNT = 75


def _unit_dir(theta, phi):
    """Unit direction: theta from the +y pole, phi = 0 facing +z (the front)."""
    st = np.sin(theta)
    return np.stack([st * np.sin(phi), np.cos(theta), st * np.cos(phi)], axis=-1)


def _angular_distance(u, center):
    dots = np.clip(u @ np.asarray(center), -1.0, 1.0)
    return np.arccos(dots)


def _gauss_bump(u, center_dir, sigma, amplitude):
    d = _angular_distance(u, center_dir)
    return amplitude * np.exp(-0.5 * (d / sigma) ** 2)


def _geodesic_sphere(frequency):
    """Icosahedron subdivided at an arbitrary frequency (V = 10 f^2 + 2)."""
    corners, faces20 = _icosahedron()
    f = int(frequency)
    points = list(corners)
    corner_index = {i: i for i in range(len(corners))}
    edge_points = {}

    def edge_point(a, b, k):
        # k of f steps from a to b, exclusive
        key = (a, b, k) if a < b else (b, a, f - k)
        if key not in edge_points:
            p = (corners[a] * (f - k) + corners[b] * k) / f
            p = p / np.linalg.norm(p)
            edge_points[key] = len(points)
            points.append(p)
        return edge_points[key]

    faces = []
    for a, b, c in faces20:
        # barycentric lattice: rows i from corner a toward edge bc
        grid = {}
        for i in range(f + 1):
            for j in range(f + 1 - i):
                k = f - i - j
                if (i, j, k).count(f) == 1:
                    idx = {f == i: a, f == j: b, f == k: c}[True]
                    grid[(i, j)] = corner_index[idx]
                elif i == 0:
                    grid[(i, j)] = edge_point(b, c, k)
                elif j == 0:
                    grid[(i, j)] = edge_point(a, c, k)
                elif k == 0:
                    grid[(i, j)] = edge_point(a, b, j)
                else:
                    p = (corners[a] * i + corners[b] * j + corners[c] * k) / f
                    p = p / np.linalg.norm(p)
                    grid[(i, j)] = len(points)
                    points.append(p)
        for i in range(f):
            for j in range(f - i):
                faces.append((grid[(i, j)], grid[(i + 1, j)], grid[(i, j + 1)]))
                if i + j < f - 1:
                    faces.append((grid[(i + 1, j)], grid[(i + 1, j + 1)], grid[(i, j + 1)]))
    return np.array(points), np.array(faces, dtype=np.int64)


def _icosahedron():
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ], dtype=np.int64)
    return verts, faces


def _icosphere(subdivisions):
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ], dtype=np.int64)
    for _ in range(subdivisions):
        points = list(verts)
        cache = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = points[a] + points[b]
                m /= np.linalg.norm(m)
                cache[key] = len(points)
                points.append(m)
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        verts = np.array(points)
        faces = np.array(new_faces, dtype=np.int64)
    return verts, faces


def face_template(subdivisions=TEMPLATE_SUBDIVISIONS, axes=TEMPLATE_AXES,
                  frequency=None) -> TriangleMesh:
    """The face-like template: bumped ellipsoid, open boundary at the neck.

    Built on an icosphere so triangle quality stays high everywhere (no
    clamped cotangent weights, well-conditioned vertex 1-rings).  Passing a
    geodesic ``frequency`` instead gives fine control over the vertex count
    (V = 10 f^2 + 2 before the neck cut).
    """
    if frequency is not None:
        u, faces = _geodesic_sphere(frequency)
    else:
        u, faces = _icosphere(subdivisions)
    theta = np.arccos(np.clip(u[:, 1], -1.0, 1.0))
    keep = theta <= TEMPLATE_NECK_CUT
    remap = -np.ones(len(u), dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    faces = remap[faces[keep[faces].all(axis=1)]]
    u = u[keep]

    r = np.ones(len(u))
    r += _gauss_bump(u, _unit_dir(np.deg2rad(95), 0.0), np.deg2rad(11), 0.28)    # nose
    for side in (-1, 1):
        r += _gauss_bump(u, _unit_dir(np.deg2rad(72), side * np.deg2rad(20)),
                         np.deg2rad(10), 0.07)                                    # brows
    r += _gauss_bump(u, _unit_dir(np.deg2rad(136), 0.0), np.deg2rad(13), 0.12)   # chin

    return TriangleMesh(u * r[:, None] * np.array(axes), faces, name="template")


def template_chart(mesh: TriangleMesh):
    """(theta, phi, unit direction) of each vertex of a template-shaped mesh."""
    p = mesh.vertices / np.array(TEMPLATE_AXES)
    u = p / np.linalg.norm(p, axis=1, keepdims=True)
    theta = np.arccos(np.clip(u[:, 1], -1.0, 1.0))
    phi = np.arctan2(u[:, 0], u[:, 2])
    return theta, phi, u


def smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


# ---------------------------------------------------------------------------
# deformation recipe primitives
#
# Recipes must stay tame under extraction: local rotations bounded well away
# from pi so that scaled blend weights extrapolate them meaningfully.  The
# hinge therefore blends by azimuth around its own axis (the lever-arm
# coupling between blend gradient and rotation then cancels identically and
# the transition band carries only a bounded tangential stretch).

@dataclass(frozen=True)
class HingeOp:
    """Swing a region about an axis by an exact twist.

    The rotation angle is a smoothstep of the azimuth around ``axis_dir``
    alone, which makes the warp an exact twist map: its pointwise Jacobian
    is already a rotation times a symmetric tangential stretch, so the
    extracted deformation record stays bounded by the hinge angle and
    scaled blend weights reproduce the correspondingly scaled twist almost
    exactly.  The axis must stay clear of the surface (the default jaw axis
    runs through the open neck boundary); 1-rings of vertices near the axis
    would straddle a large azimuth range and extract garbage.
    """

    angle: float
    axis_point: tuple
    axis_dir: tuple
    ramp_on: float = np.deg2rad(-80.0)
    full_on: float = np.deg2rad(-36.0)

    def _azimuth(self, mesh):
        point = np.asarray(self.axis_point, dtype=np.float64)
        direction = np.asarray(self.axis_dir, dtype=np.float64)
        direction = direction / np.linalg.norm(direction)
        v = mesh.vertices - point
        perp = v - (v @ direction)[:, None] * direction[None, :]
        fwd = np.array([0.0, 0.0, 1.0])
        fwd = fwd - (fwd @ direction) * direction
        fwd /= np.linalg.norm(fwd)
        up = np.cross(fwd, direction)
        return np.arctan2(-(perp @ up), perp @ fwd)

    def _blend(self, mesh):
        zeta = self._azimuth(mesh)
        return smoothstep((zeta - self.ramp_on) / (self.full_on - self.ramp_on))

    def apply(self, mesh, chart):
        blend = self._blend(mesh)
        point = np.asarray(self.axis_point, dtype=np.float64)
        direction = np.asarray(self.axis_dir, dtype=np.float64)
        direction = direction / np.linalg.norm(direction)
        R = exp_rotvec(direction * (self.angle * blend)[:, None])
        return np.einsum("vab,vb->va", R, mesh.vertices - point) + point

    def core_mask(self, mesh, chart):
        """Vertices rotated by exactly the full angle."""
        return self._blend(mesh) >= 1.0


@dataclass(frozen=True)
class ScaleOp:
    """Isotropic scaling about a region center with a smooth radial falloff."""

    factor: float
    center_theta: float
    center_phi: float
    radius: float
    band: float

    def _blend(self, chart):
        _, _, u = chart
        d = _angular_distance(u, _unit_dir(self.center_theta, self.center_phi))
        return 1.0 - smoothstep((d - self.radius) / self.band)

    def apply(self, mesh, chart):
        blend = self._blend(chart)
        center = _unit_dir(self.center_theta, self.center_phi) * np.array(TEMPLATE_AXES)
        scale = 1.0 + (self.factor - 1.0) * blend
        return center + scale[:, None] * (mesh.vertices - center)

    def core_mask(self, mesh, chart):
        _, _, u = chart
        d = _angular_distance(u, _unit_dir(self.center_theta, self.center_phi))
        return d <= self.radius


@dataclass(frozen=True)
class BumpOp:
    """Smooth displacement along the radial direction."""

    amplitude: float
    center_theta: float
    center_phi: float
    sigma: float

    def apply(self, mesh, chart):
        _, _, u = chart
        g = _gauss_bump(u, _unit_dir(self.center_theta, self.center_phi),
                        self.sigma, self.amplitude)
        return mesh.vertices + g[:, None] * u


@dataclass(frozen=True)
class AxisScaleOp:
    """Global anisotropic scaling about the origin (an exact affine map)."""

    factors: tuple

    def apply(self, mesh, chart):
        return mesh.vertices * np.asarray(self.factors)


@dataclass
class SynthExample:
    """One generated mesh, its deformation record, and its ground truth."""

    name: str
    kind: str                      # "expression" | "identity"
    ops: list
    rep: DeformRep                 # the recorded per-vertex deformation
    mesh: TriangleMesh             # reconstruction of ``rep`` (the canonical example)
    raw_mesh: TriangleMesh         # the direct position warp, kept for ground truth
    masks: dict = field(default_factory=dict)

    def describe(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "ops": [repr(op) for op in self.ops],
        }


def apply_ops(template: TriangleMesh, ops, chart=None) -> TriangleMesh:
    chart = chart if chart is not None else template_chart(template)
    mesh = template
    for op in ops:
        mesh = mesh.with_vertices(op.apply(mesh, chart))
    return mesh


def fit_rotation(source_points, target_points):
    """Best rotation mapping centered source points onto centered targets."""
    a = source_points - source_points.mean(axis=0)
    b = target_points - target_points.mean(axis=0)
    C = a.T @ b
    U, _, Vt = np.linalg.svd(C)
    D = np.diag([1.0, 1.0, float(np.linalg.det(Vt.T @ U.T))])
    return Vt.T @ D @ U.T


def relative_rotation_angle(reference: TriangleMesh, deformed: TriangleMesh,
                            mask, base_mask=None) -> float:
    """Rotation angle (radians) of region ``mask`` relative to ``base_mask``.

    Each region's rotation against the reference comes from a rigid
    Procrustes fit; with no base region the absolute rotation is returned.
    """
    from .rotations import axis_angle

    R = fit_rotation(reference.vertices[mask], deformed.vertices[mask])
    if base_mask is not None:
        R = R @ fit_rotation(reference.vertices[base_mask],
                             deformed.vertices[base_mask]).T
    return axis_angle(R)[1]


def jaw_hinge_axis():
    """The jaw hinge line: (point, direction).

    Runs left-right through the open neck boundary, below every surface
    vertex, so twist recipes about it extract cleanly (see HingeOp).
    """
    return (0.0, -1.10, 0.05), (1.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# hinged sheet: the canonical pure-rotation hinge test object
#
# A closed head admits no clean sharp hinge (the swing must be carried by a
# stretch band somewhere), so hinge-extrapolation semantics are exercised on
# an open, gently curved sheet folded along a straight on-surface axis: both
# halves deform by exact rigid rotations and the reconstructed dihedral
# angle tracks the scaled weight almost exactly.

def sheet_template(rings=12, radius=1.0, jitter=0.022) -> TriangleMesh:
    """Open round sheet: a jittered disk in the xy-plane.

    A polar vertex layout triangulated by Delaunay in 2D, with deterministic
    z jitter so every 1-ring (boundary included) spans 3D.  The fold axis of
    :func:`sheet_hinge_example` is the y-axis, which lies inside the sheet:
    displacement of a fold about it vanishes toward the axis, so the fold
    never tears the surface.
    """
    from scipy.spatial import Delaunay

    points = [(0.0, 0.0)]
    for k in range(1, rings + 1):
        r = radius * k / rings
        for m in range(6 * k):
            ang = 2.0 * np.pi * m / (6 * k) + (0.5 * np.pi * (k % 2)) / (6 * k)
            points.append((r * np.cos(ang), r * np.sin(ang)))
    points = np.array(points)
    tri = Delaunay(points)
    rng = np.random.default_rng(11)
    zz = jitter * rng.uniform(-1.0, 1.0, size=len(points))
    verts = np.concatenate([points, zz[:, None]], axis=1)
    return TriangleMesh(verts, tri.simplices.astype(np.int64), name="sheet")


def sheet_hinge_example(angle, template=None):
    """Fold the sheet about the y-axis by ``angle``.

    Both halves move rigidly (the moving half exactly by the recorded
    rotation), so the extracted record is a pure-rotation basis away from
    the fold strip.  Masks mark the halves and their interiors.
    """
    template = template or sheet_template()
    v = template.vertices
    moving = v[:, 0] > 0.0
    warped = v.copy()
    R = rotation_about((0.0, 1.0, 0.0), angle)
    warped[moving] = v[moving] @ R.T
    raw = template.with_vertices(warped, name=f"sheet_hinge_{np.rad2deg(angle):.0f}")

    weights = cotangent_weights(template)
    rep = extract_rep(template, raw, weights)
    system = LaplacianSystem(template, weights)
    mesh = template.with_vertices(
        system.solve_anchored(rep.gradients(), (0, raw.vertices[0])), name=raw.name
    )
    margin = 2.5 * (v[:, 0].max() - v[:, 0].min()) / 24
    masks = {
        "moving": moving,
        "fixed": ~moving,
        "moving_interior": v[:, 0] > margin,
        "fixed_interior": v[:, 0] < -margin,
    }
    return SynthExample(raw.name, "expression", [("fold_y", float(angle))],
                        rep, mesh, raw_mesh=raw, masks=masks)


def standard_recipes(seed: int):
    """The canonical 23 expression-type and 75 identity-type recipes."""
    rng = np.random.default_rng(seed)
    point, direction = jaw_hinge_axis()
    recipes = []

    # expression-type: jaw opening, brow raises, cheek puffs, mouth-corner pulls
    jaw_angles = np.deg2rad(np.linspace(6.0, 26.0, 8))
    for k, ang in enumerate(jaw_angles):
        recipes.append((f"exp_jaw_{k}", "expression", [
            HingeOp(float(ang), point, direction)]))
    for k in range(5):
        amp = 0.035 + 0.02 * rng.random()
        side = (-1) ** k
        recipes.append((f"exp_brow_{k}", "expression", [
            BumpOp(amp, np.deg2rad(68.0), side * np.deg2rad(20.0), np.deg2rad(14.0))]))
    for k in range(5):
        f = 1.06 + 0.08 * rng.random()
        recipes.append((f"exp_cheek_{k}", "expression", [
            ScaleOp(float(f), np.deg2rad(100.0), (-1) ** k * np.deg2rad(38.0),
                    np.deg2rad(10.0), np.deg2rad(12.0))]))
    for k in range(5):
        amp = 0.025 + 0.02 * rng.random()
        recipes.append((f"exp_mouth_{k}", "expression", [
            BumpOp(amp * (-1) ** k, np.deg2rad(120.0), (-1) ** (k // 2) * np.deg2rad(12.0),
                   np.deg2rad(12.0))]))
    assert len(recipes) == EXPRESSION_COUNT

    # identity-type: nose/brow/chin/eye-region proportions and global face shape
    for k in range(25):
        f = 0.85 + 0.42 * rng.random()
        recipes.append((f"id_nose_{k}", "identity", [
            ScaleOp(float(f), np.deg2rad(95.0), 0.0, np.deg2rad(12.0), np.deg2rad(14.0))]))
    for k in range(20):
        fx = 0.85 + 0.3 * rng.random()
        fy = 0.85 + 0.3 * rng.random()
        recipes.append((f"id_shape_{k}", "identity", [
            AxisScaleOp((float(fx), float(fy), 1.0))]))
    for k in range(15):
        f = 0.86 + 0.32 * rng.random()
        recipes.append((f"id_chin_{k}", "identity", [
            ScaleOp(float(f), np.deg2rad(136.0), 0.0, np.deg2rad(12.0), np.deg2rad(14.0))]))
    for k in range(15):
        amp = 0.025 + 0.04 * rng.random()
        recipes.append((f"id_forehead_{k}", "identity", [
            BumpOp(float(amp), np.deg2rad(45.0), 0.0, np.deg2rad(22.0))]))
    assert len(recipes) == EXPRESSION_COUNT + IDENTITY_COUNT
    return recipes


def synth_collection(seed: int, recipes=None, template=None):
    """Generate the deterministic synthetic collection for one seed.

    Every example records the deformation extracted from its raw position
    warp and ships the reconstruction of that record as its canonical mesh
    (anchored at the raw warp), so the collection is exactly self-consistent
    under one-hot blending.
    """
    template = template or face_template()
    chart = template_chart(template)
    recipes = recipes if recipes is not None else standard_recipes(seed)
    weights = cotangent_weights(template)
    system = LaplacianSystem(template, weights)
    G = vertex_grams(template, weights)

    out = []
    for name, kind, ops in recipes:
        raw = apply_ops(template, ops, chart)
        raw.name = name
        masks = {}
        for op in ops:
            if hasattr(op, "core_mask"):
                masks[op.__class__.__name__.lower()] = op.core_mask(template, chart)
        rep = extract_rep(template, raw, weights, G=G)
        positions = system.solve_anchored(rep.gradients(), (0, raw.vertices[0]))
        mesh = template.with_vertices(positions, name=name)
        out.append(SynthExample(name, kind, list(ops), rep, mesh, raw_mesh=raw,
                                masks=masks))
    return out


def basis_from_examples(template: TriangleMesh, examples, weights=None) -> DeformBasis:
    """DeformBasis over the recorded deformation records of a collection."""
    weights = weights or cotangent_weights(template)
    return DeformBasis(template, weights, [ex.rep for ex in examples],
                       [ex.name for ex in examples])


def _well_separated_specs():
    """Ramp-fold centers, angles, and symmetric scale factors per example.

    The five scale matrices span five independent symmetric directions so
    the scale-weight block of the normal equations is well-conditioned.
    """
    def sym(xx=1.0, yy=1.0, zz=1.0, xz=0.0, xy=0.0):
        return np.array([[xx, xy, xz], [xy, yy, 0.0], [xz, 0.0, zz]])

    return (
        (-0.65, 0.25, sym(xx=1.15)),
        (-0.33, -0.18, sym(yy=0.88)),
        (0.0, 0.30, sym(zz=1.15)),
        (0.33, -0.22, sym(xz=0.12)),
        (0.65, 0.20, sym(xy=0.10)),
    )


def well_separated_basis(sheet=None, rings=12, ramp_width=0.45):
    """A well-conditioned calibration basis of gentle sheet warps.

    Each example composes a distinct global symmetric scale with a smooth
    fold of the sheet (rotation angle ramping in x around the example's own
    center; near-common axis direction, so blended rotation logs commute).
    A raw warp is the exact realization of its own extracted record, so the
    energy over weights is minimized exactly at one-hot for these targets;
    reconstructions of blended weights carry a small intrinsic residual
    instead.

    Returns (basis, sheet, raw warp meshes).
    """
    sheet = sheet if sheet is not None else sheet_template(rings=rings)
    weights = cotangent_weights(sheet)
    G = vertex_grams(sheet, weights)
    reps = []
    raws = []
    labels = []
    for x0, angle, D in _well_separated_specs():
        v = sheet.vertices @ D.T
        axis_dir = D[:, 1] / np.linalg.norm(D[:, 1])
        ramp = smoothstep((sheet.vertices[:, 0] - x0) / ramp_width + 0.5)
        pivot = x0 * D[:, 0]
        R = exp_rotvec(axis_dir[None, :] * (angle * ramp)[:, None])
        raw = sheet.with_vertices(np.einsum("vab,vb->va", R, v - pivot) + pivot,
                                  name=f"fold_{x0:+.2f}")
        reps.append(extract_rep(sheet, raw, weights, G=G))
        raws.append(raw)
        labels.append(raw.name)
    return DeformBasis(sheet, weights, reps, labels), sheet, raws


# ---------------------------------------------------------------------------
# collection -> basis from plain meshes

def mean_shape(meshes) -> TriangleMesh:
    """Per-vertex arithmetic mean of a shared-topology collection."""
    meshes = list(meshes)
    if not meshes:
        raise ValueError("empty collection")
    first = meshes[0]
    for m in meshes[1:]:
        if not first.same_topology(m):
            raise ValueError("mean_shape needs identical topology")
    stack = np.stack([m.vertices for m in meshes])
    return first.with_vertices(stack.mean(axis=0), name="mean")


def _rms_distance(a, b):
    d = a - b
    return float(np.sqrt((d * d).sum(axis=1).mean()))


def select_diverse(meshes, reference: TriangleMesh, k: int):
    """Greedy farthest-point subset of ``k`` meshes.

    The metric is RMS vertex distance; each pick maximizes the minimum
    distance to the reference and all previously selected meshes.
    Deterministic (ties resolve to the lowest index).
    """
    meshes = list(meshes)
    if k > len(meshes):
        raise ValueError(f"asked for {k} of {len(meshes)} meshes")
    chosen = []
    min_dist = np.array([_rms_distance(m.vertices, reference.vertices) for m in meshes])
    available = np.ones(len(meshes), dtype=bool)
    for _ in range(k):
        masked = np.where(available, min_dist, -np.inf)
        pick = int(np.argmax(masked))
        chosen.append(pick)
        available[pick] = False
        picked_vertices = meshes[pick].vertices
        for idx in np.nonzero(available)[0]:
            min_dist[idx] = min(min_dist[idx],
                                _rms_distance(meshes[idx].vertices, picked_vertices))
    return [meshes[i] for i in chosen]


def build_basis(reference: TriangleMesh, deformed, labels=None,
                landmark_indices=None) -> DeformBasis:
    """Rigidly align each deformed mesh to the reference and extract the basis.

    ``landmark_indices`` picks the alignment vertices (all vertices when
    omitted, which is the stable choice for shared-topology collections).
    """
    deformed = list(deformed)
    weights = cotangent_weights(reference)
    if landmark_indices is None:
        landmark_indices = np.arange(reference.n_vertices)
    G = vertex_grams(reference, weights)
    reps = []
    for mesh in deformed:
        aligned = align_rigid(reference, mesh, landmark_indices)
        reps.append(extract_rep(reference, aligned, weights, G=G))
    if labels is None:
        labels = [m.name or f"example_{i}" for i, m in enumerate(deformed)]
    return DeformBasis(reference, weights, reps, labels)


# ---------------------------------------------------------------------------
# the template's 68-landmark vertex indices

def _nearest_vertices(mesh, dirs):
    _, _, u = template_chart(mesh)
    chosen = []
    taken = set()
    for d in dirs:
        order = np.argsort(-(u @ d))
        for idx in order:
            if int(idx) not in taken:
                taken.add(int(idx))
                chosen.append(int(idx))
                break
    return chosen


def landmark_indices_68(mesh: TriangleMesh = None):
    """The template's 68 landmark vertices, canonical ordering.

    Groups follow the usual 68-point convention: jaw (17), brows (2x5),
    nose (9), eyes (2x6), mouth (20).  The selection is this toolkit's own;
    consumers should treat the identity of each index as opaque but stable.
    """
    mesh = mesh or face_template()
    dirs = []
    # jaw line, left ear to right ear through the chin
    phis = np.linspace(-np.deg2rad(80), np.deg2rad(80), 17)
    for phi in phis:
        theta = np.deg2rad(104.0) + np.deg2rad(34.0) * (1.0 - (phi / np.deg2rad(80)) ** 2)
        dirs.append(_unit_dir(theta, phi))
    # brows
    for side in (-1, 1):
        for f in np.linspace(0.0, 1.0, 5):
            phi = side * (np.deg2rad(8) + f * np.deg2rad(26))
            dirs.append(_unit_dir(np.deg2rad(70.0) - np.sin(f * np.pi) * np.deg2rad(4), phi))
    # nose bridge and base
    for theta in np.linspace(np.deg2rad(80), np.deg2rad(98), 4):
        dirs.append(_unit_dir(theta, 0.0))
    for phi in np.linspace(-np.deg2rad(9), np.deg2rad(9), 5):
        dirs.append(_unit_dir(np.deg2rad(106.0), phi))
    # eyes, hexagon each
    for side in (-1, 1):
        c_theta, c_phi = np.deg2rad(82.0), side * np.deg2rad(22.0)
        for k in range(6):
            ang = 2 * np.pi * k / 6
            dirs.append(_unit_dir(c_theta + np.deg2rad(5) * np.sin(ang),
                                  c_phi + np.deg2rad(7) * np.cos(ang)))
    # mouth, outer ring of 12 and inner ring of 8
    c_theta = np.deg2rad(120.0)
    for k in range(12):
        ang = 2 * np.pi * k / 12
        dirs.append(_unit_dir(c_theta + np.deg2rad(6) * np.sin(ang),
                              np.deg2rad(15) * np.cos(ang)))
    for k in range(8):
        ang = 2 * np.pi * k / 8
        dirs.append(_unit_dir(c_theta + np.deg2rad(3.5) * np.sin(ang),
                              np.deg2rad(9) * np.cos(ang)))
    idx = _nearest_vertices(mesh, dirs)
    assert len(idx) == 68 and len(set(idx)) == 68
    return np.array(idx, dtype=np.int64)
