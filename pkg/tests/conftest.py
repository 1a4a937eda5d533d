import numpy as np
import pytest

from parafosls.mesh import refine_uniform, unit_square_initial_mesh
from parafosls.spaces import build_dof_map


@pytest.fixture(scope="session")
def mesh_chain():
    """Meshes for levels 0..5, shared across the whole run."""
    meshes = [unit_square_initial_mesh()]
    for _ in range(5):
        meshes.append(refine_uniform(meshes[-1]))
    return meshes


@pytest.fixture(scope="session")
def dofmaps(mesh_chain):
    return [build_dof_map(m) for m in mesh_chain]


@pytest.fixture
def rng():
    return np.random.default_rng(42)
