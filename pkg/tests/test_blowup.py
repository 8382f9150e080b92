import math

import numpy as np
import pytest

from vortexmf.analytic import EIGHT_PI, disk_solution, lambda_sigma
from vortexmf.blowup import (
    CASE_I,
    CASE_II,
    CASE_III,
    NO_BLOWUP,
    NO_CASE,
    OUTSIDE_HYPOTHESES,
    FamilyMember,
    SolutionFamily,
    case_three_window,
    classify_profile,
    concentration_mass,
    extrapolate_lambda,
    high_energy_divergence,
    homogeneous_quantized_mass,
    ls_decay_check,
    pohozaev_residual,
    quantization_window,
    sup_plus_cinf_check,
    sup_plus_cinf_floor,
)
from vortexmf.core.errors import ConfigurationError, DomainError, HypothesisViolationError
from vortexmf.domain import ScalarField, build_disk_mesh
from vortexmf.families import (
    case_one_family,
    case_three_family,
    case_two_family,
    disk_family,
    flat_family,
    scaled_bubble_family,
)

FOUR_PI = 4.0 * math.pi


def _disk_member(mesh, sigma=-0.25, frac=0.5):
    sol = disk_solution(sigma, frac * lambda_sigma(sigma))
    return FamilyMember(mesh=mesh, v=ScalarField(mesh, sol.v(mesh.r)), eps=0.0, sigma=sigma, alpha=sol.a)


@pytest.fixture(scope="module")
def bubble_family():
    return scaled_bubble_family(0.5)


def test_member_from_disk_solution(disk_mesh):
    member = _disk_member(disk_mesh)
    lam = 0.5 * lambda_sigma(-0.25)
    assert math.isclose(member.lam, lam, rel_tol=1e-4)
    assert member.peak_index == 0
    assert member.peak_distance == 0.0
    assert math.isclose(member.delta, disk_solution(-0.25, lam).delta)
    assert member.t == member.delta
    assert math.isclose(member.density().integral(), 1.0, rel_tol=1e-12)


def test_member_rejects_non_integrable_weight(coarse_disk_mesh):
    with pytest.raises(DomainError):
        FamilyMember(mesh=coarse_disk_mesh, v=ScalarField(coarse_disk_mesh, np.zeros(257)), eps=0.0,
                     sigma=-1.0, alpha=-1.5)


def test_empty_family_is_rejected():
    with pytest.raises(ConfigurationError):
        SolutionFamily((), sigma=0.0)


def test_quantization_windows():
    lo, hi = quantization_window(-0.5)
    assert math.isclose(lo, FOUR_PI) and math.isclose(hi, EIGHT_PI)
    assert quantization_window(0.0) == (EIGHT_PI, EIGHT_PI)
    lo, hi = quantization_window(0.3)
    assert lo == EIGHT_PI and math.isclose(hi, FOUR_PI / 0.3)
    lo, hi = quantization_window(0.1)
    assert math.isclose(hi, EIGHT_PI / 0.8)
    with pytest.raises(HypothesisViolationError):
        quantization_window(0.6)
    with pytest.raises(HypothesisViolationError):
        quantization_window(-0.5, lam_inf=9.0 * math.pi)


def test_case_three_windows():
    lo, hi, closed = case_three_window(0.1)
    assert lo == EIGHT_PI and math.isclose(hi, EIGHT_PI / 0.8) and closed
    lo, hi, closed = case_three_window(0.3)
    assert math.isclose(hi, FOUR_PI / 0.3) and not closed
    with pytest.raises(HypothesisViolationError):
        case_three_window(0.5)


def test_homogeneous_quantized_mass():
    q = homogeneous_quantized_mass(0.25)
    assert math.isclose(q.lam_inf, 16.0 * math.pi)
    assert math.isclose(q.point_mass, 16.0 * math.pi)
    assert not q.bounded_above
    assert math.isclose(homogeneous_quantized_mass(0.0, m=2).lam_inf, 16.0 * math.pi)
    assert homogeneous_quantized_mass(0.5).bounded_above
    with pytest.raises(ConfigurationError):
        homogeneous_quantized_mass(0.1, m=0)


def test_pohozaev_identity_on_disk_solution(disk_mesh):
    member = _disk_member(disk_mesh)
    for r in (0.25, 0.5, 0.75):
        assert pohozaev_residual(member, r) < 1e-5
    with pytest.raises(ConfigurationError):
        pohozaev_residual(member, 1.0)


def test_pohozaev_residual_shrinks_under_refinement():
    coarse = pohozaev_residual(_disk_member(build_disk_mesh(65)), 0.5)
    fine = pohozaev_residual(_disk_member(build_disk_mesh(257)), 0.5)
    assert fine < coarse


def test_concentration_mass_on_disk_family():
    family = disk_family(-0.5)
    profile = concentration_mass(family.last)
    assert profile.masses == sorted(profile.masses)
    assert profile.estimate is not None
    assert FOUR_PI * 0.97 <= profile.beta <= family.last.lam * (1.0 + 1e-9)
    with pytest.raises(ConfigurationError):
        concentration_mass(family.last, radii=[0.5, 2.0])


def test_disk_family_lambda_in_window():
    family = disk_family(-0.5)
    assert math.isclose(extrapolate_lambda(family), FOUR_PI, rel_tol=1e-4)
    report = classify_profile(family)
    assert report.regime == OUTSIDE_HYPOTHESES
    assert report.case == NO_CASE
    assert report.lambda_in_window
    assert report.beta_in_window


def test_flat_family_does_not_blow_up():
    family = flat_family(mesh="disk:257")
    report = classify_profile(family)
    assert not report.blowing_up
    assert report.case == NO_CASE and report.regime == NO_BLOWUP
    assert extrapolate_lambda(family) == family.last.lam


def test_sup_plus_cinf_floor():
    assert sup_plus_cinf_floor(0.5) == 3.0
    assert sup_plus_cinf_floor(-0.5) == 1.0
    with pytest.raises(HypothesisViolationError):
        sup_plus_cinf_floor(1.0)


def test_sup_plus_cinf_on_families(bubble_family):
    flat = sup_plus_cinf_check(flat_family(mesh="disk:257"), c0=1.01)
    assert flat.bounded and flat.growth == 0.0 and flat.spread == 0.0
    report = sup_plus_cinf_check(bubble_family, c0=3.1)
    assert report.bounded
    assert len(report.values) == len(bubble_family)
    with pytest.raises(HypothesisViolationError):
        sup_plus_cinf_check(bubble_family, c0=2.9)


def test_ls_decay_on_scaled_bubble(bubble_family):
    member = bubble_family.last
    d = 16.0 * member.delta
    result = ls_decay_check(member, d)
    assert math.isfinite(result.max_excess)
    assert result.outer_fraction < 0.05
    assert ls_decay_check(member, d, c=result.max_excess).passed


def test_scaled_bubble_family_is_case_three(bubble_family):
    assert math.isclose(bubble_family.last.delta, 1e-6, rel_tol=1e-9)
    report = classify_profile(bubble_family)
    assert report.blowing_up
    assert report.case == CASE_III
    assert report.in_case_three_window
    assert math.isclose(report.lambda_inf, 10.0 * math.pi, rel_tol=0.02)
    assert report.fit_residual is not None


def test_high_energy_needs_sigma_below_half(bubble_family):
    with pytest.raises(HypothesisViolationError):
        high_energy_divergence(bubble_family, sigma=0.5)


@pytest.mark.slow
@pytest.mark.parametrize("builder,label", [(case_one_family, CASE_I), (case_two_family, CASE_II),
                                           (case_three_family, CASE_III)])
def test_planted_profiles_are_recovered(builder, label):
    family = builder(0.3)
    report = classify_profile(family)
    assert report.case == label
    assert report.lambda_in_window
    if label == CASE_III:
        lo, hi, _ = case_three_window(0.3)
        assert math.isclose(report.lambda_inf, 0.5 * (lo + hi), rel_tol=0.02)
    else:
        assert math.isclose(report.lambda_inf, EIGHT_PI, rel_tol=0.02)


@pytest.mark.slow
def test_energy_diverges_along_case_one():
    trend = high_energy_divergence(case_one_family(0.3))
    assert trend.increasing
    assert trend.ratio > 10.0
    assert trend.unbounded
