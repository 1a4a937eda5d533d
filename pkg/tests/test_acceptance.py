"""End-to-end acceptance checks at their stated tolerances.

Each numbered test prints exactly one pass/fail line. The convergence
runs (both variants, both step couplings, full depth) execute once in
a module fixture and are shared by the rate and stability checks.
"""

import math
import time

import numpy as np
import pytest

from parafosls.analysis import decaying_sine_problem, field_error_norms, observed_rates
from parafosls.driver import (
    ExperimentConfig,
    conformity_jumps,
    mesh_hierarchy,
    run_level,
)
from parafosls.evolution import (
    SystemState,
    TimePartition,
    backward_euler_run,
    check_stability_bound,
    galerkin_be_reference,
    l2_project_initial,
)
from parafosls.forms import (
    Coefficients,
    FormAssembler,
    ProblemVariant,
    evaluate_lsq_functional,
)
from parafosls.projection import elliptic_project
from parafosls.quadrature import triangle_rule
from parafosls.spaces import build_dof_map

L2_RATE_BAND = (1.7, 2.3)
ENERGY_RATE_BAND = (0.8, 1.2)
RUN_SETUPS = {
    ("primary", "h2"): 5,
    ("primary", "h"): 6,
    ("alternative", "h2"): 5,
    ("alternative", "h"): 6,
}


def record(name, ok, detail=""):
    line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'}: {name}"
    if detail:
        line += f"  [{detail}]"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def experiment_data():
    """All four full-depth convergence runs, with trajectories."""
    data = {}
    for (variant, coupling), max_level in RUN_SETUPS.items():
        cfg = ExperimentConfig(variant=variant, coupling=coupling, max_level=max_level)
        meshes = mesh_hierarchy(max_level)
        t0 = time.time()
        levels = [run_level(cfg, L, mesh=meshes[L]) for L in range(max_level + 1)]
        data[(variant, coupling)] = {
            "config": cfg,
            "levels": levels,
            "reports": [entry[0] for entry in levels],
            "seconds": time.time() - t0,
        }
    return data


def in_band(value, band):
    return band[0] <= value <= band[1]


def check_h2_rates(run):
    rates = observed_rates(run["reports"])
    ok = (
        in_band(rates["err_u"][-1], L2_RATE_BAND)
        and in_band(rates["err_grad_u"][-1], ENERGY_RATE_BAND)
        and in_band(rates["err_sigma"][-1], ENERGY_RATE_BAND)
    )
    detail = (
        f"err_u {rates['err_u'][-1]:.3f}, grad {rates['err_grad_u'][-1]:.3f}, "
        f"sigma {rates['err_sigma'][-1]:.3f}, {run['seconds']:.0f}s"
    )
    return ok and run["seconds"] <= 300.0, detail


def check_h_rates(run):
    rates = observed_rates(run["reports"])
    finals = {q: rates[q][-1] for q in rates}
    ok = all(in_band(v, ENERGY_RATE_BAND) for v in finals.values())
    detail = ", ".join(f"{q} {v:.3f}" for q, v in finals.items())
    return ok and run["seconds"] <= 180.0, detail + f", {run['seconds']:.0f}s"


def test_criterion_1_l2_coupling_rates(experiment_data):
    ok, detail = check_h2_rates(experiment_data[("primary", "h2")])
    record("1 primary variant, k ~ h^2: second-order scalar error", ok, detail)


def test_criterion_2_energy_coupling_rates(experiment_data):
    ok, detail = check_h_rates(experiment_data[("primary", "h")])
    record("2 primary variant, k ~ h: first order in all quantities", ok, detail)


def test_criterion_3_alternative_variant(experiment_data):
    ok_h2, detail_h2 = check_h2_rates(experiment_data[("alternative", "h2")])
    ok_h, detail_h = check_h_rates(experiment_data[("alternative", "h")])
    record(
        "3 alternative variant reproduces both couplings",
        ok_h2 and ok_h,
        f"h2: {detail_h2} | h: {detail_h}",
    )


def test_criterion_4_stability_every_step(experiment_data):
    worst_margin = -np.inf
    ok = True
    for (variant, coupling), run in experiment_data.items():
        problem = decaying_sine_problem(variant)
        for report, states, mesh, dofmap, partition in run["levels"]:
            try:
                lhs, rhs = check_stability_bound(
                    states, problem.f, partition, mesh, dofmap, slack=1e-10
                )
            except AssertionError:
                ok = False
                break
            worst_margin = max(worst_margin, float(((lhs - rhs) / rhs).max()))
    record(
        "4 per-step stability bound on every run",
        ok,
        f"worst relative margin {worst_margin:.2e}",
    )


def test_criterion_5_decoupling_oracle(mesh_chain, dofmaps):
    mesh, dofmap = mesh_chain[3], dofmaps[3]
    partition = TimePartition.uniform(0.1, 16)
    heat = Coefficients.constant()

    def source(t, x, y):
        return (1.0 + 2.0 * np.pi**2 * t) * np.sin(np.pi * x) * np.sin(np.pi * y)

    initial = l2_project_initial(
        lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y), mesh, dofmap
    )
    ls_states = backward_euler_run(
        source, partition, mesh, dofmap, coeffs=heat, variant="primary",
        initial=initial,
    )
    reference = galerkin_be_reference(source, partition, mesh, dofmap, initial=initial)
    worst = max(
        np.abs(s.u_coeffs - g).max() / np.abs(g).max()
        for s, g in zip(ls_states[1:], reference[1:])
    )
    record(
        "5 zero-convection runs match the Galerkin reference",
        worst <= 1e-8,
        f"max relative coefficient difference {worst:.2e}",
    )


def test_criterion_6_projection_rates(mesh_chain, dofmaps):
    problem = decaying_sine_problem("primary")
    fields = problem.fields_at(0.1)
    ok = True
    details = []
    for k in (1e-1, 1e-3, 1e-5):
        err_u, err_nat = [], []
        for level in (2, 3, 4, 5):
            mesh, dofmap = mesh_chain[level], dofmaps[level]
            res = elliptic_project(
                *fields, mesh, dofmap, problem.coeffs, k, problem.variant
            )
            eu, eg, es, ed = field_error_norms(
                *fields, res.u_coeffs, res.sigma_coeffs, mesh, dofmap
            )
            err_u.append(eu)
            err_nat.append(math.sqrt(eg**2 + es**2 + k * ed**2))
        # slopes over the 3->4 and 4->5 transitions
        for coarse, fine in zip(err_nat[1:-1], err_nat[2:]):
            ok &= in_band(math.log2(coarse / fine), ENERGY_RATE_BAND)
        for coarse, fine in zip(err_u[1:-1], err_u[2:]):
            ok &= in_band(math.log2(coarse / fine), L2_RATE_BAND)
        details.append(
            f"k={k:g}: nat {math.log2(err_nat[-2] / err_nat[-1]):.3f}, "
            f"L2 {math.log2(err_u[-2] / err_u[-1]):.3f}"
        )
    record("6 elliptic projection rates, k-robust", ok, "; ".join(details))


def test_criterion_7_structural_properties(mesh_chain, dofmaps, rng):
    ok = True
    details = []

    # symmetry and SPD across variants and step sizes
    convection = Coefficients.constant(beta=(1.0, 1.0))
    mesh, dofmap = mesh_chain[2], dofmaps[2]
    for variant in ProblemVariant:
        for k in (0.1, 1e-3, 1e-6):
            dense = FormAssembler(
                mesh, dofmap, convection, k, variant
            ).total_matrix().toarray()
            if np.abs(dense - dense.T).max() > 1e-12 * np.abs(dense).max():
                ok = False
                details.append(f"asymmetric {variant.value} k={k}")
            try:
                np.linalg.cholesky(dense)
            except np.linalg.LinAlgError:
                ok = False
                details.append(f"not SPD {variant.value} k={k}")

    # minimizer property against random competitors
    problem = decaying_sine_problem("primary")
    initial = l2_project_initial(
        lambda x, y: problem.u(0.0, x, y), mesh, dofmap
    )
    step = backward_euler_run(
        problem, TimePartition.uniform(0.1, 1), mesh, dofmap, initial=initial
    )[-1]
    g = lambda x, y: problem.f(0.1, x, y)
    j_best = evaluate_lsq_functional(
        step, mesh, dofmap, problem.coeffs, 0.1, g, initial, "primary"
    )
    for _ in range(20):
        v = rng.standard_normal(dofmap.total)
        competitor = SystemState(v[: dofmap.n_u], v[dofmap.n_u :], 0.1)
        j_other = evaluate_lsq_functional(
            competitor, mesh, dofmap, problem.coeffs, 0.1, g, initial, "primary"
        )
        if j_best > j_other * (1.0 + 1e-12):
            ok = False
            details.append("minimizer beaten by a random competitor")
            break

    # conformity of both spaces
    jump_u, jump_flux = conformity_jumps(mesh, dofmap, seed=11)
    if jump_u > 1e-12 or jump_flux > 1e-12:
        ok = False
        details.append(f"conformity jumps {jump_u:.1e}/{jump_flux:.1e}")

    # mesh invariants through level 4
    for level, m in enumerate(mesh_chain[:5]):
        euler = m.num_vertices - m.num_edges + m.num_triangles
        if m.num_triangles != 4 * 4**level or euler != 1:
            ok = False
            details.append(f"mesh counts broken at level {level}")

    record(
        "7 structural properties (symmetry, SPD, minimizer, conformity, counts)",
        ok,
        "; ".join(details) if details else "all satisfied",
    )


def test_criterion_8_quadrature_exactness():
    worst = 0.0
    for degree in (4, 6):
        rule = triangle_rule(degree)
        x, y = rule.points[:, 1], rule.points[:, 2]
        for a in range(rule.exactness_degree + 1):
            for b in range(rule.exactness_degree + 1 - a):
                exact = (
                    math.factorial(a)
                    * math.factorial(b)
                    / math.factorial(a + b + 2)
                )
                worst = max(
                    worst, abs(float(np.sum(rule.weights * x**a * y**b)) - exact)
                )
    record(
        "8 quadrature rules reproduce the factorial-formula oracle",
        worst <= 1e-13,
        f"worst monomial error {worst:.2e}",
    )


def test_observation_div_flux_rate_under_l2_coupling(experiment_data):
    """Not a pass/fail criterion of the scheme's analysis: the flux
    divergence is observed to converge like the flux itself under the
    quartered-step coupling; recorded with a wide band."""
    for variant in ("primary", "alternative"):
        rates = observed_rates(experiment_data[(variant, "h2")]["reports"])
        observed = rates["err_div_sigma"][-1]
        assert 0.7 <= observed <= 1.3, f"{variant}: div-flux rate {observed:.3f}"
        assert abs(observed - rates["err_sigma"][-1]) <= 0.3
