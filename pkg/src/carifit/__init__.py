"""carifit: data-driven 3D mesh deformation and caricature fitting.

A reference mesh plus example meshes define a deformation space through
per-vertex rotation logs and scale/shear offsets.  Blending those records
(including outside the example hull) and solving a sparse linear system
produces new meshes; the fitting pipeline matches a mesh to 2D landmarks
under an orthographic camera by alternating optimization.
"""

from .mesh import (
    EdgeWeights,
    LandmarkSpec,
    MeshFormatError,
    TriangleMesh,
    bbox_diagonal,
    cotangent_weights,
    one_ring,
    read_landmarks,
    read_mesh,
    write_landmarks,
    write_mesh,
)
from .rotations import (
    AxisAmbiguityError,
    axis_angle,
    exp_skew,
    log_rotation,
    polar_decompose,
    rotation_about,
)
from .deform import (
    BlendWeights,
    DeformBasis,
    DeformRep,
    GramDeficientError,
    VertexDeform,
    align_rigid,
    blend_gradients,
    blend_gradients_all,
    extract_gradient,
    extract_rep,
    load_basis,
    save_basis,
)
from .camera import (
    ProjectionParams,
    estimate_params,
    fitting_error,
    landmark_loss,
    project,
)
from .reconstruct import LaplacianSystem, reconstruct_from_weights, solve_p_step
from .weights import (
    LMOptions,
    LMState,
    energy_def,
    jacobian_blocks,
    optimize_weights,
    residual_vector,
    solve_weights,
)
from .pipeline import FitConfig, FitResult, fit_caricature, render_overlay
from .collection import (
    build_basis,
    face_template,
    landmark_indices_68,
    mean_shape,
    select_diverse,
    synth_collection,
)
from .baselines import (
    LinearModel,
    arap_deform,
    build_linear_model,
    compare_methods,
    fit_linear,
)

__version__ = "0.1.0"
