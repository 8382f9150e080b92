import math

import numpy as np
import pytest
from pydantic import ValidationError

from vortexmf.core.errors import ConfigurationError, DomainError
from vortexmf.domain import (
    DISK,
    GRID,
    ScalarField,
    build_disk_mesh,
    build_grid_mesh,
    green_vortex,
    mass_in_ball,
    poisson_solve,
    power_log_integrals,
    regularized_green,
    weight_field,
    weight_moments,
)
from vortexmf.mvp import e0_uniform
from vortexmf.schemas.physics import WeightSpec
from vortexmf.schemas.run import MeshSpec


def test_disk_mesh_layout(coarse_disk_mesh):
    mesh = coarse_disk_mesh
    assert mesh.kind == DISK
    assert mesh.n_nodes == 257
    assert mesh.origin_index == 0
    assert mesh.r[0] == 0.0 and mesh.r[-1] == 1.0
    assert mesh.boundary_nodes.tolist() == [256]
    assert math.isclose(mesh.weights.sum(), math.pi, rel_tol=1e-13)
    assert mesh.outer_radius == 1.0


def test_log_graded_disk_mesh():
    mesh = build_disk_mesh(129, grading="log-near-origin", r_min=1e-8)
    assert mesh.grading == "log-near-origin"
    assert math.isclose(mesh.radii[1], 1e-8)
    assert np.all(np.diff(mesh.radii) > 0)
    assert math.isclose(mesh.weights.sum(), math.pi, rel_tol=1e-13)


def test_disk_mesh_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        build_disk_mesh(8)
    with pytest.raises(ConfigurationError):
        build_disk_mesh(64, grading="spiral")
    with pytest.raises(ConfigurationError):
        build_disk_mesh(64, grading="log", r_min=0.5)


def test_grid_mesh_layout(grid_mesh):
    mesh = grid_mesh
    assert mesh.kind == GRID
    assert mesh.shape == (33, 33)
    assert math.isclose(mesh.weights.sum(), 4.0, rel_tol=1e-13)
    assert mesh.x[mesh.origin_index] == 0.0 and mesh.y[mesh.origin_index] == 0.0
    assert mesh.boundary.sum() == 4 * 32


def test_grid_mesh_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        build_grid_mesh(1.0, 1.0, 0.3)
    with pytest.raises(ConfigurationError):
        build_grid_mesh(1.0, 1.0, 0.25, origin_offset=(0.1, 0.0))
    with pytest.raises(ConfigurationError):
        build_grid_mesh(1.0, 1.0, 0.25, origin_offset=(0.5, 0.0))


def test_poisson_constant_source_is_exact_on_disk(coarse_disk_mesh):
    mesh = coarse_disk_mesh
    psi = poisson_solve(mesh, ScalarField(mesh, np.ones(mesh.n_nodes)))
    assert np.max(np.abs(psi.values - (1.0 - mesh.r ** 2) / 4.0)) < 1e-10


def test_poisson_rejects_non_finite(coarse_disk_mesh):
    values = np.ones(coarse_disk_mesh.n_nodes)
    values[0] = np.inf
    with pytest.raises(DomainError):
        poisson_solve(coarse_disk_mesh, ScalarField(coarse_disk_mesh, values))


def test_green_vortex_on_disk(coarse_disk_mesh):
    g = green_vortex(coarse_disk_mesh).values
    assert np.isinf(g[0])
    assert g[-1] == 0.0
    r = coarse_disk_mesh.r[1:-1]
    assert np.allclose(g[1:-1], -np.log(r) / (2.0 * math.pi))


def test_green_vortex_on_grid_vanishes_on_boundary(grid_mesh):
    g = green_vortex(grid_mesh).values
    assert np.all(g[grid_mesh.boundary] == 0.0)
    assert np.isinf(g[grid_mesh.origin_index])


def test_regularized_green(coarse_disk_mesh):
    g = regularized_green(coarse_disk_mesh, 0.1).values
    assert math.isclose(g[0], math.log(1.01 / 0.01) / (4.0 * math.pi))
    assert g[-1] == 0.0
    with pytest.raises(ConfigurationError):
        regularized_green(coarse_disk_mesh, 0.0)


def test_weight_integrability(coarse_disk_mesh):
    with pytest.raises(DomainError):
        weight_field(coarse_disk_mesh, WeightSpec(sigma=-1.0, lam=4.0 * math.pi))
    h = weight_field(coarse_disk_mesh, WeightSpec(sigma=-1.0, lam=2.0 * math.pi)).values
    assert np.isinf(h[0])
    assert math.isclose(h[-1], 1.0)


def test_weight_moments_are_exact_on_disk(coarse_disk_mesh):
    # integral of |x|^(2a) over the unit disk is pi / (1 + a)
    spec = WeightSpec(sigma=-1.0, lam=2.0 * math.pi)
    assert math.isclose(weight_moments(coarse_disk_mesh, spec).sum(), math.pi / (1.0 + spec.exponent), rel_tol=1e-12)
    scaled = spec.model_copy(update={"scale": 3.0})
    assert math.isclose(weight_moments(coarse_disk_mesh, scaled).sum(), 3.0 * math.pi / 0.5, rel_tol=1e-12)


def test_power_log_integrals():
    d0, d1 = power_log_integrals(np.array([0.0]), np.array([1.0]), -0.5)
    assert math.isclose(d0[0], 2.0)
    assert math.isclose(d1[0], -4.0)
    d0, _ = power_log_integrals(np.array([1.0]), np.array([2.0]), 1.0)
    assert math.isclose(d0[0], 1.5)


def test_mass_in_ball(coarse_disk_mesh):
    mesh = coarse_disk_mesh
    assert math.isclose(mass_in_ball(mesh, mesh.weights, 1.0), math.pi)
    inside = mass_in_ball(mesh, mesh.weights, 0.5)
    assert inside <= math.pi * 0.25 + 1e-12
    assert inside > math.pi * 0.24


def test_mesh_spec_strings():
    disk = MeshSpec.model_validate("disk:257:log")
    assert disk.kind == "disk" and disk.n_nodes == 257 and disk.grading == "log-near-origin"
    assert disk.label() == "disk:257:log"
    grid = MeshSpec.model_validate("grid:2x2:1/16@0.25,0")
    assert grid.h == 1.0 / 16.0 and grid.center == (0.25, 0.0)
    mesh = grid.build()
    assert mesh.kind == GRID and mesh.center == (0.25, 0.0)
    with pytest.raises(ValidationError):
        MeshSpec.model_validate("torus:12")


def test_green_vortex_value_at_half_radius():
    mesh = build_disk_mesh(17)
    assert math.isclose(green_vortex(mesh).values[8], math.log(2.0) / (2.0 * math.pi))


def test_weight_with_unit_exponent_is_r_squared(coarse_disk_mesh):
    h = weight_field(coarse_disk_mesh, WeightSpec(sigma=0.5, lam=8.0 * math.pi)).values
    assert np.allclose(h, coarse_disk_mesh.r ** 2)
    assert np.all(weight_field(coarse_disk_mesh, WeightSpec(sigma=0.0, lam=3.0)).values == 1.0)


@pytest.mark.parametrize("use_grid", [False, True])
def test_green_operator_is_symmetric_and_positive(coarse_disk_mesh, grid_mesh, use_grid):
    mesh = grid_mesh if use_grid else coarse_disk_mesh
    rng = np.random.default_rng(3)
    f, g = rng.random(mesh.n_nodes), rng.random(mesh.n_nodes)
    fg = float(np.dot(f, mesh.solve_masses(g)))
    gf = float(np.dot(g, mesh.solve_masses(f)))
    assert math.isclose(fg, gf, rel_tol=1e-10)
    assert np.all(mesh.solve_masses(f) >= -1e-14)


def test_grid_poisson_is_exact_for_separable_quadratics():
    for h in (1.0 / 8.0, 1.0 / 16.0):
        mesh = build_grid_mesh(2.0, 1.0, h)
        x, y = mesh.x, mesh.y
        exact = (1.0 - x ** 2) * (0.25 - y ** 2)
        rhs = 2.0 * (0.25 - y ** 2) + 2.0 * (1.0 - x ** 2)
        psi = poisson_solve(mesh, ScalarField(mesh, rhs))
        assert np.max(np.abs(psi.values - exact)) < 1e-10


def test_grid_poisson_converges_at_second_order():
    def max_error(h):
        mesh = build_grid_mesh(1.0, 1.0, h)
        sx, cx = np.sin(math.pi * (mesh.x + 0.5)), np.cos(math.pi * (mesh.x + 0.5))
        sy = np.sin(math.pi * (mesh.y + 0.5))
        exact = sx * sy * np.exp(mesh.x)
        rhs = sy * np.exp(mesh.x) * ((2.0 * math.pi ** 2 - 1.0) * sx - 2.0 * math.pi * cx)
        psi = poisson_solve(mesh, ScalarField(mesh, rhs))
        return float(np.max(np.abs(psi.values - exact)))

    errors = [max_error(h) for h in (1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0)]
    slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(np.abs(slopes - 2.0) < 0.3), slopes


def test_green_vortex_on_grid_matches_refined_reference():
    def value_at(h):
        mesh = build_grid_mesh(1.0, 1.0, h)
        i = int(np.argmin(np.hypot(mesh.x - 0.1, mesh.y)))
        assert abs(mesh.x[i] - 0.1) < 1e-12 and abs(mesh.y[i]) < 1e-12
        return green_vortex(mesh).values[i]

    reference = value_at(1.0 / 160.0)
    assert abs(value_at(1.0 / 40.0) - reference) < 1e-4
    # the regular part stays above the smallest boundary value (1/2 pi) log(1/2)
    assert reference > -math.log(0.1) / (2.0 * math.pi) - math.log(2.0) / (2.0 * math.pi)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.3])
def test_regularized_green_on_grid_is_bounded_by_the_vortex_green(grid_mesh, eps):
    g_n = regularized_green(grid_mesh, eps).values
    g = green_vortex(grid_mesh).values
    assert np.all(g_n >= -1e-12)
    off = np.arange(grid_mesh.n_nodes) != grid_mesh.origin_index
    # boundary nodes of the 2x2 square sit at |x| >= 1
    assert np.all(g_n[off] - g[off] <= eps ** 2 / (4.0 * math.pi) + 1e-12)
    assert np.all(g_n[grid_mesh.boundary] == 0.0)


@pytest.mark.parametrize("use_grid", [False, True])
@pytest.mark.parametrize("sigma", [0.3, -0.3])
def test_weight_is_monotone_in_eps(coarse_disk_mesh, grid_mesh, use_grid, sigma):
    mesh = grid_mesh if use_grid else coarse_disk_mesh
    # grids are compared inside the inscribed disk, where G_n is decreasing in eps
    inside = (mesh.r > 0.0) & (mesh.r <= mesh.outer_radius)
    ladder = [weight_field(mesh, WeightSpec(sigma=sigma, lam=4.0 * math.pi, eps=eps)).values[inside]
              for eps in (1e-3, 1e-2, 1e-1, 0.5)]
    for smaller, larger in zip(ladder, ladder[1:]):
        step = np.sign(sigma) * (larger - smaller)
        assert np.all(step >= -1e-12 * np.abs(smaller))
        assert np.any(step > 0.0)


@pytest.mark.parametrize("sigma", [0.3, -0.3])
def test_regularized_uniform_energy_is_monotone_in_eps(coarse_disk_mesh, sigma):
    energies = [e0_uniform(coarse_disk_mesh, sigma, eps) for eps in (1e-3, 1e-2, 1e-1, 0.5)]
    assert np.all(np.sign(sigma) * np.diff(energies) > 0.0)
