import numpy as np
import pytest

from carifit.collection import (
    basis_from_examples,
    face_template,
    landmark_indices_68,
    sheet_hinge_example,
    sheet_template,
    synth_collection,
)
from carifit.mesh import TriangleMesh, cotangent_weights

SEED = 7


def tetrahedron():
    verts = np.array([
        [1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0],
    ])
    faces = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriangleMesh(verts, faces, name="tetra")


def triangle_fan(n=6):
    """A center vertex surrounded by n rim vertices, slightly coned."""
    center = np.array([[0.0, 0.0, 0.25]])
    angles = 2 * np.pi * np.arange(n) / n
    rim = np.stack([np.cos(angles), np.sin(angles), np.zeros(n)], axis=1)
    verts = np.concatenate([center, rim])
    faces = np.array([[0, 1 + i, 1 + (i + 1) % n] for i in range(n)])
    return TriangleMesh(verts, faces, name="fan")


@pytest.fixture(scope="session")
def small_face():
    """A coarse face template for fast unit tests."""
    return face_template(subdivisions=3)


@pytest.fixture(scope="session")
def small_face_weights(small_face):
    return cotangent_weights(small_face)


@pytest.fixture(scope="session")
def template():
    return face_template()


@pytest.fixture(scope="session")
def template_landmarks(template):
    return landmark_indices_68(template)


@pytest.fixture(scope="session")
def collection98(template):
    return synth_collection(SEED, template=template)


@pytest.fixture(scope="session")
def basis98(template, collection98):
    return basis_from_examples(template, collection98)


@pytest.fixture(scope="session")
def sheet():
    return sheet_template()


@pytest.fixture(scope="session")
def hinge20(sheet):
    return sheet_hinge_example(np.deg2rad(20.0), sheet)
