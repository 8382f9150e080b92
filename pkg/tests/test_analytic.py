import math

import numpy as np
import pytest
from scipy.integrate import quad

from vortexmf.analytic import (
    EIGHT_PI,
    bubble_center_for_mass,
    bubble_identity_residual,
    bubble_mass_window,
    bubble_solve,
    disk_branch_by_gap,
    disk_energy,
    disk_entropy,
    disk_entropy_asymptote,
    disk_lambda_for_energy,
    disk_solution,
    disk_total_energy,
    disk_vortex_energy,
    lambda_sigma,
)
from vortexmf.core.errors import DomainError


def test_lambda_sigma():
    assert lambda_sigma(0.0) == EIGHT_PI
    assert lambda_sigma(0.3) == EIGHT_PI
    assert math.isclose(lambda_sigma(-0.5), 4.0 * math.pi)


def test_disk_solution_closed_form():
    sol = disk_solution(0.0, 4.0 * math.pi)
    assert math.isclose(sol.gamma2, 1.0)
    assert math.isclose(float(sol.mass_in_ball(1.0)), 1.0)
    assert float(sol.psi(1.0)) == pytest.approx(0.0, abs=1e-15)


def test_disk_normalizer_and_density_by_quadrature():
    sigma = -0.25
    lam = 0.5 * lambda_sigma(sigma)
    sol = disk_solution(sigma, lam)
    z, _ = quad(lambda r: 2.0 * math.pi * r ** (1.0 + 2.0 * sol.a) * math.exp(float(sol.lam_psi(r))), 0.0, 1.0,
                epsabs=1e-13, epsrel=1e-12)
    assert math.isclose(z, sol.normalizer, rel_tol=1e-9)
    total, _ = quad(lambda r: 2.0 * math.pi * r * float(sol.rho(r)), 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)
    assert math.isclose(total, 1.0, rel_tol=1e-9)


def test_liouville_form_carries_mass_lambda():
    sigma, lam = -0.5, 3.0 * math.pi
    sol = disk_solution(sigma, lam)
    mass, _ = quad(lambda r: 2.0 * math.pi * r ** (1.0 + 2.0 * sol.a) * math.exp(float(sol.v(r))), 0.0, 1.0,
                   epsabs=1e-12, epsrel=1e-11)
    assert math.isclose(mass, lam, rel_tol=1e-8)
    assert math.isclose(sol.delta ** (2.0 * (1.0 + sol.a)), math.exp(-float(sol.v(0.0))))


def test_pinned_energy_and_entropy():
    assert math.isclose(disk_energy(0.0, 4.0 * math.pi), (2.0 * math.log(2.0) - 1.0) / (4.0 * math.pi), rel_tol=1e-12)
    assert math.isclose(disk_entropy(0.0, 4.0 * math.pi), 2.0 + math.log(math.pi) - 3.0 * math.log(2.0), rel_tol=1e-12)


def test_uniform_limit():
    assert math.isclose(disk_energy(0.0, 0.0), 1.0 / (16.0 * math.pi), rel_tol=1e-12)
    assert math.isclose(disk_entropy(0.0, 0.0), math.log(math.pi), rel_tol=1e-12)
    assert abs(disk_energy(-0.5, 1e-9) - 1.0 / (16.0 * math.pi)) < 1e-9


def test_total_energy_subtracts_vortex_term():
    sigma, lam = -0.5, 2.0 * math.pi
    assert math.isclose(disk_total_energy(sigma, lam), disk_energy(sigma, lam) - disk_vortex_energy(sigma, lam))
    assert disk_vortex_energy(0.0, lam) == 0.0


def test_disk_branch_limits():
    with pytest.raises(DomainError):
        disk_solution(-0.5, 4.0 * math.pi)
    with pytest.raises(DomainError):
        disk_solution(0.2, 1.0)
    with pytest.raises(DomainError):
        disk_energy(0.0, -1.0)


@pytest.mark.parametrize("sigma,lam", [(0.0, 5.0 * math.pi), (-0.5, 3.0 * math.pi), (-0.25, 1.0)])
def test_lambda_for_energy_inverts_energy(sigma, lam):
    assert math.isclose(disk_lambda_for_energy(sigma, disk_energy(sigma, lam)), lam, rel_tol=1e-9)
    total = disk_total_energy(sigma, lam)
    assert math.isclose(disk_lambda_for_energy(sigma, total, total=True), lam, rel_tol=1e-9)


def test_lambda_for_energy_below_uniform():
    with pytest.raises(DomainError):
        disk_lambda_for_energy(0.0, 0.0)


def test_branch_by_gap_matches_lambda_parametrization():
    s = 0.5
    scalars = disk_branch_by_gap(0.0, math.log1p(-s))
    assert math.isclose(scalars.lam, 4.0 * math.pi, rel_tol=1e-12)
    assert math.isclose(scalars.energy, disk_energy(0.0, 4.0 * math.pi), rel_tol=1e-10)
    with pytest.raises(DomainError):
        disk_branch_by_gap(0.0, 0.5)


def test_entropy_asymptote_at_high_energy():
    scalars = disk_branch_by_gap(0.0, -30.0)
    assert abs(scalars.entropy - disk_entropy_asymptote(0.0, scalars.energy)) < 1e-8
    with pytest.raises(DomainError):
        disk_entropy_asymptote(0.1, 1.0)


def test_explicit_bubble():
    b = bubble_solve(0.0, 0.0, math.log(8.0))
    assert math.isclose(b.mass, EIGHT_PI, rel_tol=1e-6)
    assert math.isclose(b.beta, 4.0, rel_tol=1e-6)
    assert bubble_identity_residual(b) < 1e-6
    r = np.array([0.5, 1.0, 2.0])
    assert np.allclose(b.profile(r), np.log(8.0 / (1.0 + r ** 2) ** 2), atol=1e-6)


@pytest.mark.parametrize("alpha", [-0.5, 0.5])
def test_bubble_mass_lies_in_window(alpha):
    b = bubble_solve(alpha, 0.5, math.log(8.0 * (1.0 + alpha) ** 2))
    lo, hi = bubble_mass_window(alpha, 0.5)
    assert lo < b.mass < hi
    assert b.decay_exponent > 0
    assert bubble_identity_residual(b) < 1e-6


def test_bubble_mass_window_degenerates_at_t0_zero():
    assert bubble_mass_window(0.5, 0.0) == (12.0 * math.pi, 12.0 * math.pi)
    assert bubble_mass_window(-0.5, 1.0) == (4.0 * math.pi, 8.0 * math.pi)


def test_bubble_center_for_mass():
    c = bubble_center_for_mass(0.5, 0.5, 10.0 * math.pi)
    assert math.isclose(bubble_solve(0.5, 0.5, c).mass, 10.0 * math.pi, rel_tol=1e-7)
    with pytest.raises(DomainError):
        bubble_center_for_mass(0.5, 0.5, 20.0 * math.pi)


def test_bubble_rejects_bad_exponent():
    with pytest.raises(DomainError):
        bubble_solve(-1.5, 0.0, 0.0)
    with pytest.raises(DomainError):
        bubble_solve(0.5, -1.0, 0.0)


def test_bubble_profile_continues_logarithmically():
    b = bubble_solve(0.0, 0.0, math.log(8.0))
    far = np.array([10.0, 100.0]) * b.r_max
    values = b.profile(far)
    assert math.isclose(values[0] - values[1], b.beta * math.log(10.0), rel_tol=1e-12)


@pytest.mark.parametrize("energy", [1.0, 2.0])
def test_entropy_asymptote_constants(energy):
    tail = math.exp(-1.0 - 8.0 * math.pi * energy)
    expected = -8.0 * math.pi * energy + 1.0 + math.log(math.pi) - tail
    assert math.isclose(disk_entropy_asymptote(0.0, energy), expected, abs_tol=1e-13)
    # sigma = -1/2: exponent -1/2, constant log(2 pi)
    leading = disk_entropy_asymptote(-0.5, energy) + 8.0 * math.pi * energy
    assert abs(leading - math.log(2.0 * math.pi)) < 1e-4
