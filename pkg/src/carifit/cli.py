"""Command-line interface.

Subcommands cover the full workflow: generate the synthetic collection,
build deformation bases and linear models, reconstruct meshes from weight
vectors, fit weights to a target mesh, fit a caricature to 2D landmarks
(figures and delimited traces land next to the mesh), compare methods, and
serve the landmark-editor HTTP API.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import baselines, collection, report
from .camera import ProjectionParams, write_camera
from .deform import BlendWeights, load_basis, save_basis
from .mesh import (
    read_landmarks,
    read_mesh,
    write_landmarks,
    write_mesh,
    LandmarkSpec,
)
from .pipeline import FitConfig, fit_caricature
from .reconstruct import reconstruct_from_weights
from .weights import LMOptions, solve_weights

DEMO_CAMERA = ProjectionParams(180.0, (np.pi, 0.0, 0.0), np.array([256.0, 256.0]))
DEMO_IMAGE_SIZE = 512


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate the synthetic shape collection")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=None,
                   help="keep only the first N examples")
    p.set_defaults(func=cmd_synth)


def cmd_synth(args):
    os.makedirs(args.out, exist_ok=True)
    template = collection.face_template()
    examples = collection.synth_collection(args.seed, template=template)
    if args.count is not None:
        examples = examples[: args.count]
    write_mesh(os.path.join(args.out, "template.obj"), template)
    mesh_dir = os.path.join(args.out, "examples")
    os.makedirs(mesh_dir, exist_ok=True)
    manifest = []
    for ex in examples:
        write_mesh(os.path.join(mesh_dir, f"{ex.name}.obj"), ex.mesh)
        manifest.append(ex.describe())
    with open(os.path.join(args.out, "params.json"), "w", encoding="utf-8") as fh:
        json.dump({"seed": args.seed, "examples": manifest}, fh, indent=1)

    indices = collection.landmark_indices_68(template)
    from .camera import project

    points = project(DEMO_CAMERA, template.vertices[indices])
    write_landmarks(os.path.join(args.out, "landmarks_template.json"),
                    LandmarkSpec(indices, points))
    from PIL import Image

    img = Image.new("RGB", (DEMO_IMAGE_SIZE, DEMO_IMAGE_SIZE), (200, 200, 200))
    img.save(os.path.join(args.out, "canvas.png"))
    print(f"wrote template, {len(examples)} examples, landmarks to {args.out}")


def _add_extract_basis(sub):
    for name in ("extract-basis", "build-basis"):
        p = sub.add_parser(name, help="extract a deformation basis from example meshes")
        p.add_argument("--reference", required=True)
        p.add_argument("--examples", required=True, help="directory of mesh files")
        p.add_argument("--out", required=True)
        p.set_defaults(func=cmd_extract_basis)


def cmd_extract_basis(args):
    reference = read_mesh(args.reference)
    names = sorted(f for f in os.listdir(args.examples) if f.endswith(".obj"))
    if not names:
        sys.exit(f"no .obj meshes in {args.examples}")
    meshes = [read_mesh(os.path.join(args.examples, f)) for f in names]
    basis = collection.build_basis(reference, meshes)
    ref_path = os.path.relpath(os.path.abspath(args.reference),
                               os.path.dirname(os.path.abspath(args.out)) or ".")
    save_basis(args.out, basis, ref_path)
    print(f"basis with {basis.n_examples} examples -> {args.out}")


def _add_reconstruct(sub):
    p = sub.add_parser("reconstruct", help="reconstruct a mesh from blend weights")
    p.add_argument("--basis", required=True)
    p.add_argument("--weights", required=True,
                   help="text file with 2n scalars: rotation then scale weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)


def read_weights_file(path, n):
    values = np.loadtxt(path).ravel()
    if len(values) != 2 * n:
        sys.exit(f"weights file has {len(values)} values, expected {2 * n}")
    return BlendWeights.from_stacked(values)


def write_weights_file(path, w: BlendWeights):
    np.savetxt(path, w.stacked()[None], fmt="%.17g")


def cmd_reconstruct(args):
    basis = load_basis(args.basis)
    w = read_weights_file(args.weights, basis.n_examples)
    mesh = reconstruct_from_weights(basis, w)
    write_mesh(args.out, mesh)
    print(f"reconstructed mesh -> {args.out}")


def _add_fit_weights(sub):
    p = sub.add_parser("fit-weights", help="optimize blend weights for a target mesh")
    p.add_argument("--basis", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tie-weights", action="store_true")
    p.set_defaults(func=cmd_fit_weights)


def cmd_fit_weights(args):
    basis = load_basis(args.basis)
    target = read_mesh(args.target)
    state = solve_weights(basis, target, opts=LMOptions(tie_weights=args.tie_weights))
    write_weights_file(args.out, state.weights)
    print(f"energy {state.energy:.6g} after {state.iterations} iterations "
          f"({state.reason}) -> {args.out}")


def _add_fit(sub):
    p = sub.add_parser("fit", help="fit a caricature to 2D landmarks")
    p.add_argument("--basis", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.01)
    p.add_argument("--iters", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=1e-2)
    p.add_argument("--tie-weights", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_fit)


def cmd_fit(args):
    basis = load_basis(args.basis)
    lms = read_landmarks(args.landmarks)
    cfg = FitConfig(lam=args.lam, max_iterations=args.iters, epsilon=args.epsilon,
                    tie_weights=args.tie_weights)
    result = fit_caricature(basis, lms, cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    write_mesh(os.path.join(args.out_dir, "mesh.obj"), result.mesh)
    write_weights_file(os.path.join(args.out_dir, "w.txt"), result.weights)
    write_camera(os.path.join(args.out_dir, "camera.json"), result.proj)
    report.write_trace_csv(result, os.path.join(args.out_dir, "energy_trace.csv"))
    report.render_trace_figure(result, os.path.join(args.out_dir, "energy_trace.png"))
    report.render_overlay(result, lms, args.image,
                          os.path.join(args.out_dir, "overlay.png"))
    print(f"fit done in {result.wall_time:.2f}s, E_error {result.e_error:.4g} px "
          f"({result.exit_reason}) -> {args.out_dir}")


def _add_pca(sub):
    p = sub.add_parser("pca", help="build a linear (PCA) model from example meshes")
    p.add_argument("--meshes", required=True, help="directory of mesh files")
    p.add_argument("--variance", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pca)


def save_linear_model(path, model: baselines.LinearModel):
    np.savez(path, vertices=model.mean.vertices, faces=model.mean.faces,
             axes=model.axes, sigmas=model.sigmas)


def load_linear_model(path) -> baselines.LinearModel:
    from .mesh import TriangleMesh

    data = np.load(path)
    mean = TriangleMesh(data["vertices"], data["faces"], name="pca_mean")
    return baselines.LinearModel(mean, data["axes"], data["sigmas"])


def cmd_pca(args):
    names = sorted(f for f in os.listdir(args.meshes) if f.endswith(".obj"))
    meshes = [read_mesh(os.path.join(args.meshes, f)) for f in names]
    model = baselines.build_linear_model(meshes, args.variance)
    save_linear_model(args.out, model)
    print(f"linear model with {model.n_axes} axes -> {args.out}")


def _add_compare(sub):
    p = sub.add_parser("compare", help="compare fitting methods over a task set")
    p.add_argument("--basis", required=True)
    p.add_argument("--linear-model", required=True)
    p.add_argument("--tasks", required=True,
                   help="directory of landmark JSON files, one task each")
    p.add_argument("--out", required=True)
    p.add_argument("--no-arap", action="store_true")
    p.set_defaults(func=cmd_compare)


def cmd_compare(args):
    basis = load_basis(args.basis)
    model = load_linear_model(args.linear_model)
    names = sorted(f for f in os.listdir(args.tasks) if f.endswith(".json"))
    if not names:
        sys.exit(f"no task files in {args.tasks}")
    tasks = [baselines.CompareTask(os.path.splitext(f)[0],
                                   read_landmarks(os.path.join(args.tasks, f)))
             for f in names]
    table = baselines.compare_methods(basis, model, tasks, with_arap=not args.no_arap)
    report.write_comparison_csv(table, args.out)
    figure = os.path.splitext(args.out)[0] + ".png"
    report.render_comparison_figure(table, figure)
    print(f"comparison over {len(tasks)} tasks -> {args.out}, {figure}")


def _add_serve(sub):
    p = sub.add_parser("serve", help="run the landmark-studio HTTP service")
    p.add_argument("--basis", required=True)
    p.add_argument("--root", required=True, help="session storage directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8077)
    p.set_defaults(func=cmd_serve)


def cmd_serve(args):
    from .service import run_server

    basis = load_basis(args.basis)
    run_server(basis, args.root, host=args.host, port=args.port)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="carifit",
                                     description="3D caricature fitting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_extract_basis(sub)
    _add_reconstruct(sub)
    _add_fit_weights(sub)
    _add_fit(sub)
    _add_pca(sub)
    _add_compare(sub)
    _add_serve(sub)
    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
