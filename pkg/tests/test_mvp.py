import math

import numpy as np
import pytest

from vortexmf.analytic import disk_total_energy
from vortexmf.core.errors import ConfigurationError, EnergyBelowUniformError
from vortexmf.cvp import solve_cvp, sweep_lambda
from vortexmf.mvp import (
    FOUND,
    NOT_FOUND,
    TYPE_I,
    UNIFORM,
    classify_domain_type,
    default_bracket,
    e0_uniform,
    entropy_stationarity,
    euler_lagrange_spread,
    legendre_entropy,
    mvp_regularization_limit,
    regularized_energy,
    solve_mvp,
)
from vortexmf.schemas.physics import WeightSpec
from vortexmf.schemas.run import SolverOptions

NEWTON = SolverOptions(method="newton")


def _energy_at(mesh, sigma, lam, eps=0.0):
    return solve_cvp(mesh, WeightSpec(sigma=sigma, lam=lam, eps=eps), NEWTON).total_energy


def test_uniform_energy(disk_mesh):
    assert abs(e0_uniform(disk_mesh, 0.0, 0.0) - 1.0 / (16.0 * math.pi)) < 1e-7


def test_default_bracket():
    lo, hi, saturated = default_bracket(-0.5)
    assert lo == 0.0 and math.isclose(hi, 6.0 * math.pi) and not saturated
    assert default_bracket(0.6)[2]
    assert default_bracket(0.0, extended=True)[1] > 8.0 * math.pi


def test_energy_below_uniform_is_an_error(coarse_disk_mesh):
    with pytest.raises(EnergyBelowUniformError) as exc:
        solve_mvp(coarse_disk_mesh, 0.0, 0.0, 0.0, NEWTON)
    assert exc.value.exit_code == 2


def test_uniform_energy_target(coarse_disk_mesh):
    e0 = e0_uniform(coarse_disk_mesh, 0.0, 0.0)
    result = solve_mvp(coarse_disk_mesh, 0.0, 0.0, e0, NEWTON)
    assert result.status == UNIFORM
    assert result.lam == 0.0


def test_recovers_lambda_on_the_same_mesh(coarse_disk_mesh):
    lam_star = 3.0 * math.pi
    target = _energy_at(coarse_disk_mesh, 0.0, lam_star)
    result = solve_mvp(coarse_disk_mesh, 0.0, 0.0, target, NEWTON, scan_points=16)
    assert result.status == FOUND
    assert math.isclose(result.lam, lam_star, rel_tol=1e-8)
    assert abs(result.achieved_energy - target) < 1e-8
    assert result.summary()["status"] == FOUND


def test_maximizer_is_stationary(coarse_disk_mesh):
    target = _energy_at(coarse_disk_mesh, -0.5, 2.0 * math.pi)
    result = solve_mvp(coarse_disk_mesh, -0.5, 0.0, target, NEWTON, scan_points=16)
    assert result.status == FOUND
    assert euler_lagrange_spread(result) < 1e-8
    assert entropy_stationarity(result) <= 1e-6


def test_unreachable_energy_is_not_found(coarse_disk_mesh):
    result = solve_mvp(coarse_disk_mesh, 0.0, 0.0, 1.0, NEWTON, lam_max=2.0 * math.pi, scan_points=8)
    assert result.status == NOT_FOUND
    assert result.lam is None
    assert result.energy_range[1] < 1.0


@pytest.mark.slow
def test_regularized_mvp_recovers_disk_lambda(disk_mesh):
    sigma, lam_star = -0.5, 2.0 * math.pi
    energy = disk_total_energy(sigma, lam_star)
    result = solve_mvp(disk_mesh, sigma, 1e-3, energy, NEWTON)
    assert result.status == FOUND
    assert abs(result.lam - lam_star) / lam_star < 1e-3
    assert abs(result.achieved_energy - energy) < 1e-8


def test_disk_is_type_one(coarse_disk_mesh):
    energies = [_energy_at(coarse_disk_mesh, 0.0, lam) for lam in (2.0 * math.pi, 4.0 * math.pi)]
    report = classify_domain_type(coarse_disk_mesh, 0.0, 0.0, energies, NEWTON, scan_points=24)
    assert report.verdict == TYPE_I
    assert all(row["below_threshold"] for row in report.rows)
    with pytest.raises(ConfigurationError):
        classify_domain_type(coarse_disk_mesh, 0.0, 0.0, energies[::-1], NEWTON)


def test_regularization_limit(coarse_disk_mesh):
    target = disk_total_energy(-0.5, 2.0 * math.pi)
    report = mvp_regularization_limit(coarse_disk_mesh, -0.5, target, [0.1, 0.05, 0.025], NEWTON, scan_points=16)
    assert [row["eps"] for row in report.rows] == [0.1, 0.05, 0.025]
    assert all(row["status"] == FOUND for row in report.rows)
    assert len(report.lam_differences) == 2
    with pytest.raises(ConfigurationError):
        mvp_regularization_limit(coarse_disk_mesh, -0.5, target, [0.05, 0.1])
    with pytest.raises(ConfigurationError):
        mvp_regularization_limit(coarse_disk_mesh, -0.5, target, [0.1, 1e-4])


def test_canonical_and_microcanonical_entropies_agree(coarse_disk_mesh):
    curve = sweep_lambda(coarse_disk_mesh, 0.0, 0.0, np.linspace(0.1 * math.pi, 7.0 * math.pi, 48), NEWTON)
    target = _energy_at(coarse_disk_mesh, 0.0, 4.0 * math.pi)
    result = solve_mvp(coarse_disk_mesh, 0.0, 0.0, target, NEWTON, scan_points=16)
    assert abs(result.entropy - legendre_entropy(curve, target)) < 1e-4


@pytest.mark.slow
def test_regularization_limit_converges_at_eps_squared(disk_mesh):
    sigma = 0.3
    target = _energy_at(disk_mesh, sigma, 4.0 * math.pi, eps=1e-2)
    ladder = [1e-1, 3e-2, 1e-2, 3e-3]
    report = mvp_regularization_limit(disk_mesh, sigma, target, ladder, NEWTON, scan_points=16)
    assert all(row["status"] == FOUND for row in report.rows)
    assert report.cauchy
    assert report.observed_rate is not None
    assert abs(report.observed_rate - 2.0) < 0.4


def test_regularized_energy_matches_solver_cells(coarse_disk_mesh):
    spec = WeightSpec(sigma=-0.5, lam=2.0 * math.pi)
    solution = solve_cvp(coarse_disk_mesh, spec, NEWTON)
    shaped = regularized_energy(solution.rho, spec.sigma, spec.eps, lam=spec.lam)
    assert math.isclose(shaped, solution.total_energy, rel_tol=1e-9, abs_tol=1e-9)
    assert regularized_energy(solution.rho, 0.0, 0.0) == regularized_energy(solution.rho, 0.0, 0.0, lam=spec.lam)
