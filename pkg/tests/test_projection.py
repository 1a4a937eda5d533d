import math

import numpy as np
import pytest

from parafosls.analysis import decaying_sine_problem, field_error_norms
from parafosls.evolution import SystemState
from parafosls.forms import FormAssembler
from parafosls.projection import elliptic_project
from parafosls.spaces import eval_discrete_function


def discrete_pair_as_callables(u_coeffs, sigma_coeffs, mesh, dofmap):
    """Wrap a discrete pair as pointwise-exact vectorized fields."""
    state = SystemState(u_coeffs, sigma_coeffs, 0.0)

    def evaluate(x, y):
        xs = np.broadcast_to(np.asarray(x, dtype=float), np.broadcast(x, y).shape)
        ys = np.broadcast_to(np.asarray(y, dtype=float), np.broadcast(x, y).shape)
        us = np.empty(xs.shape)
        grads = np.empty((2,) + xs.shape)
        sigs = np.empty((2,) + xs.shape)
        divs = np.empty(xs.shape)
        for idx in np.ndindex(xs.shape):
            u, g, s, d = eval_discrete_function(
                state, mesh, dofmap, (xs[idx], ys[idx])
            )
            us[idx] = u
            grads[(0,) + idx], grads[(1,) + idx] = g
            sigs[(0,) + idx], sigs[(1,) + idx] = s
            divs[idx] = d
        return us, grads, sigs, divs

    return (
        lambda x, y: evaluate(x, y)[0],
        lambda x, y: evaluate(x, y)[1],
        lambda x, y: evaluate(x, y)[2],
        lambda x, y: evaluate(x, y)[3],
    )


@pytest.mark.parametrize("variant", ["primary", "alternative"])
def test_projection_is_identity_on_discrete_pairs(mesh_chain, dofmaps, variant, rng):
    """Projecting a function that already lives in the discrete space
    reproduces its coefficients, exercising the full quadrature path."""
    m, dm = mesh_chain[1], dofmaps[1]
    problem = decaying_sine_problem(variant)
    c = rng.standard_normal(dm.total)
    fields = discrete_pair_as_callables(c[: dm.n_u], c[dm.n_u :], m, dm)
    result = elliptic_project(*fields, m, dm, problem.coeffs, 0.05, variant)
    assert np.abs(result.u_coeffs - c[: dm.n_u]).max() <= 1e-10
    assert np.abs(result.sigma_coeffs - c[dm.n_u :]).max() <= 1e-10


def test_projection_identity_algebraic(mesh_chain, dofmaps, rng):
    """Same statement at the linear-algebra level: B c as data returns c."""
    from parafosls.solver import solve_general

    m, dm = mesh_chain[2], dofmaps[2]
    problem = decaying_sine_problem("primary")
    asm = FormAssembler(m, dm, problem.coeffs, 1e-3, "primary")
    B = asm.nonsymmetric_matrix()
    c = rng.standard_normal(dm.total)
    sol = solve_general(B, B @ c).solution
    assert np.abs(sol - c).max() <= 1e-10 * max(1.0, np.abs(c).max())


@pytest.mark.parametrize("variant", ["primary", "alternative"])
def test_defining_equation_residual(mesh_chain, dofmaps, variant):
    """b(projection, basis_i) matches b(exact, basis_i) for every i."""
    m, dm = mesh_chain[2], dofmaps[2]
    problem = decaying_sine_problem(variant)
    fields = problem.fields_at(0.1)
    k = 0.01
    result = elliptic_project(*fields, m, dm, problem.coeffs, k, variant)
    asm = FormAssembler(m, dm, problem.coeffs, k, variant)
    lhs = asm.nonsymmetric_matrix() @ np.concatenate(
        [result.u_coeffs, result.sigma_coeffs]
    )
    rhs = asm.nonsymmetric_load_from_fields(*fields)
    scale = max(np.abs(rhs).max(), 1.0)
    assert np.abs(lhs - rhs).max() <= 1e-9 * scale


def projection_errors(problem, mesh, dofmap, k):
    fields = problem.fields_at(0.1)
    res = elliptic_project(
        *fields, mesh, dofmap, problem.coeffs, k, problem.variant
    )
    eu, eg, es, ed = field_error_norms(
        *fields, res.u_coeffs, res.sigma_coeffs, mesh, dofmap
    )
    natural = math.sqrt(eg**2 + es**2 + k * ed**2)
    return eu, natural


@pytest.mark.parametrize("k", [1e-1, 1e-3, 1e-5])
def test_projection_rates(mesh_chain, dofmaps, k):
    """First order in the natural norm, second order for the scalar in L2."""
    problem = decaying_sine_problem("primary")
    errors = [
        projection_errors(problem, mesh_chain[L], dofmaps[L], k) for L in (2, 3, 4)
    ]
    for (eu_c, nat_c), (eu_f, nat_f) in zip(errors[:-1], errors[1:]):
        assert 1.7 <= math.log2(eu_c / eu_f) <= 2.3
        assert 0.8 <= math.log2(nat_c / nat_f) <= 1.2


def test_projection_rates_alternative_variant(mesh_chain, dofmaps):
    problem = decaying_sine_problem("alternative")
    errors = [
        projection_errors(problem, mesh_chain[L], dofmaps[L], 1e-3) for L in (2, 3, 4)
    ]
    for (eu_c, nat_c), (eu_f, nat_f) in zip(errors[:-1], errors[1:]):
        assert 1.7 <= math.log2(eu_c / eu_f) <= 2.3
        assert 0.8 <= math.log2(nat_c / nat_f) <= 1.2


def test_scalar_superconvergence_against_natural_norm(mesh_chain, dofmaps):
    """The scalar L2 error is one order better than the natural-norm error."""
    problem = decaying_sine_problem("primary")
    k = 1e-3
    pairs = [projection_errors(problem, mesh_chain[L], dofmaps[L], k) for L in (3, 4)]
    (eu_c, nat_c), (eu_f, nat_f) = pairs
    # consistent with ||u - proj_u|| <= C h ||pair - proj||_k
    assert eu_f / nat_f <= 0.6 * (eu_c / nat_c)


def test_result_records_inputs(mesh_chain, dofmaps):
    problem = decaying_sine_problem("primary")
    res = elliptic_project(
        *problem.fields_at(0.1),
        mesh_chain[1],
        dofmaps[1],
        problem.coeffs,
        0.05,
        "primary",
    )
    assert res.k == 0.05
    assert res.relative_residual <= 1e-10
    assert res.u_coeffs.shape == (dofmaps[1].n_u,)
    assert res.sigma_coeffs.shape == (dofmaps[1].n_sigma,)
