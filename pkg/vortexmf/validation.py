"""Acceptance suite behind ``vortexmf validate``.

Each group checks solver output against the closed forms in ``vortexmf.analytic`` or against a
property the theory guarantees, and yields one CriterionResult per check.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np

from vortexmf.analytic import (
    EIGHT_PI,
    bubble_identity_residual,
    bubble_solve,
    disk_branch_by_gap,
    disk_energy,
    disk_entropy,
    disk_entropy_asymptote,
    disk_solution,
    disk_total_energy,
    lambda_sigma,
)
from vortexmf.blowup import (
    CASE_I,
    CASE_II,
    CASE_III,
    FamilyMember,
    case_three_window,
    classify_profile,
    high_energy_divergence,
    pohozaev_residual,
    sup_plus_cinf_check,
)
from vortexmf.core.errors import ConfigurationError, VortexMFError
from vortexmf.cvp import duality_gap, free_energy_convexity, solve_cvp, sweep_lambda
from vortexmf.domain import ScalarField, build_disk_mesh, build_grid_mesh
from vortexmf.families import case_one_family, case_three_family, case_two_family, disk_family, scaled_bubble_family
from vortexmf.io import write_rows_csv
from vortexmf.mvp import legendre_entropy, solve_mvp
from vortexmf.schemas.physics import WeightSpec
from vortexmf.schemas.results import CriterionResult, ValidationMatrix
from vortexmf.schemas.run import SolverOptions

logger = logging.getLogger(__name__)

NEWTON = SolverOptions(method="newton")


@dataclass
class SuiteContext:
    quick: bool = False
    seed: int = 0
    threads: int = 1
    plot_dir: Optional[Path] = None
    plot_files: List[str] = field(default_factory=list)
    cache: Dict[object, object] = field(default_factory=dict)

    def cached(self, key, build: Callable[[], object]):
        if key not in self.cache:
            self.cache[key] = build()
        return self.cache[key]

    def emit(self, name: str, rows: Iterable[dict]) -> None:
        if self.plot_dir is None:
            return
        path = write_rows_csv(self.plot_dir / name, rows)
        self.plot_files.append(str(path))


# Helper Functions
def _check(group: str, name: str, value: float, tolerance: float, detail: Optional[str] = None) -> CriterionResult:
    passed = bool(np.isfinite(value) and value <= tolerance)
    return CriterionResult(group=group, name=name, passed=passed, value=float(value), tolerance=tolerance,
                           detail=detail)


def _flag(group: str, name: str, passed: bool, detail: Optional[str] = None,
          value: Optional[float] = None) -> CriterionResult:
    return CriterionResult(group=group, name=name, passed=bool(passed), value=value, detail=detail)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def _radial_mesh(ctx: SuiteContext, n: int = 4096):
    return ctx.cached(("disk", n), lambda: build_disk_mesh(n))


def _disk_solves(ctx: SuiteContext):
    """Converged CVP solves against the disk oracle, shared by several groups"""
    def build():
        mesh = _radial_mesh(ctx)
        sigmas = (-0.5,) if ctx.quick else (-0.5, -0.25, 0.0)
        fractions = (0.5,) if ctx.quick else (0.25, 0.5, 0.9)
        out = []
        for sigma in sigmas:
            for frac in fractions:
                lam = frac * lambda_sigma(sigma)
                start = time.perf_counter()
                solution = solve_cvp(mesh, WeightSpec(sigma=sigma, lam=lam), NEWTON)
                out.append((sigma, frac, lam, solution, time.perf_counter() - start))
        return out
    return ctx.cached("disk_solves", build)


# Groups
def check_disk_oracle(ctx: SuiteContext) -> List[CriterionResult]:
    results = []
    mesh = _radial_mesh(ctx)
    for sigma, frac, lam, solution, seconds in _disk_solves(ctx):
        exact = disk_solution(sigma, lam)
        tag = f"sigma={sigma:g} lam={frac:g}*lambda_sigma"
        results.append(_flag("disk_oracle", f"{tag} converged", solution.converged))
        results.append(_check("disk_oracle", f"{tag} psi sup error",
                              float(np.max(np.abs(solution.psi.values - exact.psi(mesh.r)))), 1e-6))
        results.append(_check("disk_oracle", f"{tag} normalizer",
                              _rel(math.exp(solution.log_partition), exact.normalizer), 1e-6))
        results.append(_check("disk_oracle", f"{tag} runtime [s]", seconds, 5.0))
    return results


def check_closed_forms(ctx: SuiteContext) -> List[CriterionResult]:
    results = []
    for sigma, frac, lam, solution, _ in _disk_solves(ctx):
        tag = f"sigma={sigma:g} lam={frac:g}*lambda_sigma"
        results.append(_check("closed_forms", f"{tag} energy", abs(solution.energy - disk_energy(sigma, lam)), 1e-6))
        results.append(_check("closed_forms", f"{tag} entropy", abs(solution.entropy - disk_entropy(sigma, lam)), 1e-6))
    pinned_e = (2.0 * math.log(2.0) - 1.0) / (4.0 * math.pi)
    pinned_s = 2.0 + math.log(math.pi) - 3.0 * math.log(2.0)
    results.append(_check("closed_forms", "E(0, 4 pi)", _rel(disk_energy(0.0, 4.0 * math.pi), pinned_e), 1e-6))
    results.append(_check("closed_forms", "S(0, 4 pi)", _rel(disk_entropy(0.0, 4.0 * math.pi), pinned_s), 1e-6))
    return results


def check_uniform_limit(ctx: SuiteContext) -> List[CriterionResult]:
    mesh = _radial_mesh(ctx)
    e0, s0 = 1.0 / (16.0 * math.pi), math.log(math.pi)
    uniform = solve_cvp(mesh, WeightSpec(sigma=0.0, lam=0.0))
    return [
        _check("uniform_limit", "series E(lam -> 0)", abs(disk_energy(0.0, 1e-9) - e0), 1e-7),
        _check("uniform_limit", "series S(lam -> 0)", abs(disk_entropy(0.0, 1e-9) - s0), 1e-7),
        _check("uniform_limit", "quadrature E(0)", abs(uniform.energy - e0), 1e-7),
        _check("uniform_limit", "quadrature S(0)", abs(uniform.entropy - s0), 1e-7),
    ]


def check_duality(ctx: SuiteContext) -> List[CriterionResult]:
    results = []
    for sigma, frac, lam, solution, _ in _disk_solves(ctx):
        if solution.converged:
            results.append(_check("duality", f"F - J at sigma={sigma:g} lam={frac:g}*lambda_sigma",
                                  solution.free_energy - solution.j_value, 1e-7))
    rng = np.random.default_rng(ctx.seed)
    meshes = [(_radial_mesh(ctx), WeightSpec(sigma=-0.5, lam=math.pi)),
              (build_grid_mesh(2.0, 2.0, 1.0 / 16.0), WeightSpec(sigma=-0.5, lam=math.pi, eps=0.05))]
    for mesh, spec in meshes:
        worst = math.inf
        for _ in range(100):
            b = rng.random(mesh.n_nodes) * mesh.weights + 1e-12
            b /= b.sum()
            worst = min(worst, duality_gap(ScalarField(mesh, b / mesh.weights, masses=b), spec))
        results.append(_check("duality", f"min duality gap on {mesh.kind} (100 random densities)", -worst, 1e-12))
    return results


def check_mvp(ctx: SuiteContext) -> List[CriterionResult]:
    results = []
    mesh = _radial_mesh(ctx)
    sigma, eps = -0.5, 1e-3
    targets = (2.0 * math.pi,) if ctx.quick else (math.pi, 2.0 * math.pi, 3.0 * math.pi)
    for lam_star in targets:
        energy = disk_total_energy(sigma, lam_star)
        start = time.perf_counter()
        result = solve_mvp(mesh, sigma, eps, energy, NEWTON)
        seconds = time.perf_counter() - start
        tag = f"lam*={lam_star / math.pi:g} pi"
        if result.lam is None:
            results.append(_flag("mvp", f"{tag} root found", False, detail=result.status))
            continue
        results.append(_check("mvp", f"{tag} recovered lam", abs(result.lam - lam_star) / lam_star, 1e-3))
        results.append(_check("mvp", f"{tag} achieved energy", abs(result.achieved_energy - energy), 1e-8))
        results.append(_check("mvp", f"{tag} runtime [s]", seconds, 60.0))
    return results


def check_equivalence(ctx: SuiteContext) -> List[CriterionResult]:
    mesh = _radial_mesh(ctx)
    sigma = 0.0
    grid = np.linspace(0.1 * math.pi, 7.0 * math.pi, 24 if ctx.quick else 48)
    curve = sweep_lambda(mesh, sigma, 0.0, grid, NEWTON, threads=ctx.threads)
    ctx.emit("E_lambda.csv", curve.rows())
    results = [_check("equivalence", "F convexity (min second difference of -F)",
                      -free_energy_convexity(curve), 1e-8)]
    energies = curve.column("energy") - curve.column("vortex_energy")
    shared = np.linspace(energies[2], energies[-3], 4 if ctx.quick else 10)
    rows = []
    for energy in shared:
        result = solve_mvp(mesh, sigma, 0.0, float(energy), NEWTON)
        canonical = legendre_entropy(curve, float(energy))
        rows.append({"E": float(energy), "S_mvp": result.entropy, "S_legendre": canonical})
        if result.entropy is None:
            results.append(_flag("equivalence", f"S(E={energy:.5g}) solved", False, detail=result.status))
            continue
        results.append(_check("equivalence", f"S(E={energy:.5g}) vs Legendre transform",
                              abs(result.entropy - canonical), 1e-4))
    ctx.emit("S_E.csv", rows)
    return results


def check_asymptote(ctx: SuiteContext) -> List[CriterionResult]:
    results = []
    rows = []
    for sigma in (0.0, -0.5):
        a_lim = -2.0 * abs(sigma) / (1.0 + 2.0 * abs(sigma))
        gaps = -EIGHT_PI * (1.0 + a_lim) * np.geomspace(10.0, 100.0, 40)
        branch = [disk_branch_by_gap(sigma, float(g)) for g in gaps]
        e = np.array([b.energy for b in branch])
        s = np.array([b.entropy for b in branch])
        top = e >= e.max() / 10.0
        slope = float(np.polyfit(e[top], s[top], 1)[0])
        results.append(_check("asymptote", f"sigma={sigma:g} slope of S(E)", _rel(slope, -EIGHT_PI), 0.01))
        results.append(_check("asymptote", f"sigma={sigma:g} constant",
                              abs(s[-1] - disk_entropy_asymptote(sigma, float(e[-1]))), 5e-2))
        rows.extend({"sigma": sigma, "E": float(ei), "S": float(si)} for ei, si in zip(e, s))
    ctx.emit("S_E_asymptote.csv", rows)
    return results


def _planted(ctx: SuiteContext, kind: str, sigma: float):
    builders = {"case1": case_one_family, "case2": case_two_family, "case3": case_three_family}

    def build():
        family = builders[kind](sigma)
        return family, classify_profile(family, threads=ctx.threads)
    return ctx.cached((kind, sigma), build)


def check_windows(ctx: SuiteContext) -> List[CriterionResult]:
    results = []
    disk = ctx.cached(("disk_family", -0.5), lambda: disk_family(-0.5))
    report = classify_profile(disk, threads=ctx.threads)
    results.append(_flag("windows", "disk sigma=-0.5 lam_inf in [4 pi, 8 pi]", report.lambda_in_window,
                         value=report.lambda_inf))
    results.append(_flag("windows", "disk sigma=-0.5 beta in [4 pi, 8 pi]", report.beta_in_window is True,
                         value=report.beta))
    sigmas = (0.3,) if ctx.quick else (0.1, 0.3)
    for sigma in sigmas:
        for kind in ("case1", "case2", "case3"):
            _, rep = _planted(ctx, kind, sigma)
            tag = f"{kind} sigma={sigma:g}"
            results.append(_flag("windows", f"{tag} lam_inf in window", bool(rep.lambda_in_window),
                                 value=rep.lambda_inf))
            results.append(_flag("windows", f"{tag} beta in window", rep.beta_in_window is not False,
                                 value=rep.beta, detail=None if rep.beta is not None else "no plateau"))
    return results


def check_bubbles(ctx: SuiteContext) -> List[CriterionResult]:
    results = []
    start = time.perf_counter()
    alphas = (-0.5, 0.5) if ctx.quick else (-0.5, -0.25, 0.25, 0.5, 1.0)
    for alpha in alphas:
        for t0 in (0.0, 0.5, 1.0):
            tag = f"alpha={alpha:g} t0={t0:g}"
            b = bubble_solve(alpha, t0, math.log(8.0 * (1.0 + alpha) ** 2))
            results.append(_check("bubbles", f"{tag} identity", bubble_identity_residual(b), 1e-6))
            upper = EIGHT_PI * (1.0 + alpha)
            if t0 == 0.0:
                bound = abs(b.mass - upper) / upper <= 1e-6
            elif alpha < 0:
                bound = upper < b.mass < EIGHT_PI
            else:
                bound = EIGHT_PI < b.mass < upper
            results.append(_flag("bubbles", f"{tag} mass bounds", bound, value=b.mass))
            results.append(_check("bubbles", f"{tag} decay slope", _rel(b.decay_slope, -b.beta), 0.02))
    results.append(_check("bubbles", "runtime [s]", time.perf_counter() - start, 10.0))
    return results


def _analytic_member(n: int, sigma: float, frac: float) -> FamilyMember:
    mesh = build_disk_mesh(n)
    sol = disk_solution(sigma, frac * lambda_sigma(sigma))
    return FamilyMember(mesh=mesh, v=ScalarField(mesh, sol.v(mesh.r)), eps=0.0, sigma=sigma, alpha=sol.a)


def check_pohozaev(ctx: SuiteContext) -> List[CriterionResult]:
    results = []
    member = _analytic_member(4096, -0.25, 0.5)
    for r in (0.25, 0.5, 0.75):
        results.append(_check("pohozaev", f"disk solution r={r:g}", pohozaev_residual(member, r), 1e-5))
    residuals = [pohozaev_residual(_analytic_member(n, -0.25, 0.5), 0.5) for n in (65, 129, 257)]
    orders = [math.log2(residuals[k] / residuals[k + 1]) for k in range(2) if residuals[k + 1] > 0]
    results.append(_flag("pohozaev", "observed order under refinement >= 1",
                         bool(orders) and min(orders) >= 1.0, value=min(orders) if orders else None))
    return results


def check_profiles(ctx: SuiteContext) -> List[CriterionResult]:
    results = []
    labels = {"case1": CASE_I, "case2": CASE_II, "case3": CASE_III}
    sigmas = (0.3,) if ctx.quick else (0.1, 0.2, 0.3)
    for sigma in sigmas:
        for kind, label in labels.items():
            family, report = _planted(ctx, kind, sigma)
            tag = f"{kind} sigma={sigma:g}"
            results.append(_flag("profiles", f"{tag} label", report.case == label, detail=report.case))
            if kind == "case3":
                lo, hi, _ = case_three_window(sigma)
                expected = 0.5 * (lo + hi)
            else:
                expected = EIGHT_PI
            results.append(_check("profiles", f"{tag} lam_inf", _rel(report.lambda_inf, expected), 0.02))
            if kind == "case1" and ctx.plot_dir is not None:
                member = family.last
                rows = [{"r": float(r), "v": float(v)} for r, v in zip(member.mesh.r, member.v.values)]
                ctx.emit(f"profile_{kind}_sigma{sigma:g}.csv", rows)
    return results


def check_high_energy(ctx: SuiteContext) -> List[CriterionResult]:
    results = []
    for kind in ("case1", "case3"):
        family, _ = _planted(ctx, kind, 0.3)
        trend = high_energy_divergence(family)
        results.append(_flag("high_energy", f"{kind} E_n increasing", trend.increasing))
        results.append(_flag("high_energy", f"{kind} last/first ratio > 10", trend.ratio > 10.0, value=trend.ratio))
    return results


def check_sup_inf(ctx: SuiteContext) -> List[CriterionResult]:
    disk = ctx.cached(("disk_family", 0.0), lambda: disk_family(0.0))
    flat = sup_plus_cinf_check(disk, c0=1.01)
    bubble = sup_plus_cinf_check(scaled_bubble_family(0.5), c0=3.1)
    return [
        _flag("sup_inf", "sigma=0 disk family bounded (C0 = 1.01)", flat.bounded, value=flat.growth),
        _check("sup_inf", "sigma=0 disk family spread", flat.spread, 0.2),
        _flag("sup_inf", "alpha=1/2 bubble family bounded (C0 = 3.1)", bubble.bounded, value=bubble.growth),
    ]


GROUPS: Dict[str, Callable[[SuiteContext], List[CriterionResult]]] = {
    "disk_oracle": check_disk_oracle,
    "closed_forms": check_closed_forms,
    "uniform_limit": check_uniform_limit,
    "duality": check_duality,
    "mvp": check_mvp,
    "equivalence": check_equivalence,
    "asymptote": check_asymptote,
    "windows": check_windows,
    "bubbles": check_bubbles,
    "pohozaev": check_pohozaev,
    "profiles": check_profiles,
    "high_energy": check_high_energy,
    "sup_inf": check_sup_inf,
}


def run_suite(only: Optional[List[str]] = None, quick: bool = False, seed: int = 0, threads: int = 1,
              plot_dir: Optional[Path] = None) -> ValidationMatrix:
    """Run the selected groups (all by default); errors inside a group fail that group"""
    selected = list(GROUPS) if not only else only
    unknown = [g for g in selected if g not in GROUPS]
    if unknown:
        raise ConfigurationError(f"unknown validation groups {unknown}; choose from {list(GROUPS)}")
    ctx = SuiteContext(quick=quick, seed=seed, threads=threads, plot_dir=plot_dir)
    matrix = ValidationMatrix()
    for group in selected:
        start = time.perf_counter()
        try:
            matrix.results.extend(GROUPS[group](ctx))
        except VortexMFError as e:
            logger.warning(f"Validation group {group} failed: {e.detail}")
            matrix.results.append(_flag(group, "completed", False, detail=e.detail))
        logger.info(f"Validation group {group} finished in {time.perf_counter() - start:.1f} s")
    if plot_dir is not None:
        logger.info(f"Plot data written: {ctx.plot_files}")
    return matrix
