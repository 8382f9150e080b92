"""Microcanonical ensemble: entropy maximization at fixed regularized energy.

The multiplier lam(E) is recovered by scanning the canonical branch, which gives the
energy map lam -> E(lam), and root-finding E(lam) = E_target inside each sign change.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import rel_entr

from vortexmf.analytic import lambda_sigma
from vortexmf.core.config import settings
from vortexmf.core.errors import ConfigurationError, EnergyBelowUniformError, VortexMFError
from vortexmf.cvp import (
    CONVERGED,
    EnsembleCurve,
    MeanFieldSolution,
    cell_moments,
    solve_cvp,
    uniform_density,
)
from vortexmf.domain import DomainMesh, ScalarField
from vortexmf.schemas.physics import WeightSpec
from vortexmf.schemas.run import SolverOptions

logger = logging.getLogger(__name__)

FOUND = "found"
NOT_FOUND = "not_found"
UNIFORM = "uniform"

TYPE_I = "TypeI"
TYPE_II = "TypeII"
INCONCLUSIVE = "inconclusive"

BRACKET_MARGIN = 1e-3


@dataclass
class MvpResult:
    energy_target: float
    sigma: float
    eps: float
    status: str
    lam: Optional[float] = None
    roots: List[float] = field(default_factory=list)
    solution: Optional[MeanFieldSolution] = None
    entropy: Optional[float] = None
    achieved_energy: Optional[float] = None
    bracket: Tuple[float, float] = (0.0, 0.0)
    scan: List[Tuple[float, float, str]] = field(default_factory=list)
    saturated: bool = False

    @property
    def energy_range(self) -> Tuple[float, float]:
        energies = [e for _, e, status in self.scan if status == CONVERGED]
        if not energies:
            return (float("nan"), float("nan"))
        return (min(energies), max(energies))

    def summary(self) -> Dict[str, object]:
        return {
            "energy_target": self.energy_target,
            "sigma": self.sigma,
            "eps": self.eps,
            "lambda": self.lam,
            "entropy": self.entropy,
            "achieved_energy": self.achieved_energy,
            "roots": list(self.roots),
            "status": self.status,
            "bracket": list(self.bracket),
            "energy_range": list(self.energy_range),
            "saturated": self.saturated,
        }


@dataclass
class DomainTypeReport:
    verdict: str
    lambda_sigma: float
    rows: List[Dict[str, object]]


@dataclass
class RegularizationReport:
    sigma: float
    energy_target: float
    rows: List[Dict[str, object]]
    lam_differences: List[float]
    entropy_differences: List[float]
    l1_distances: List[float]
    observed_rate: Optional[float]
    cauchy: bool


# Energies
def regularized_energy(rho: ScalarField, sigma: float, eps: float, mesh: Optional[DomainMesh] = None,
                       lam: float = 0.0) -> float:
    """E(rho) - E_sigma,n(rho) = 1/2 int rho G[rho] - sigma int rho G_n.

    Inside each cell the density is taken proportional to the weight H for (sigma, lam, eps), as
    solve_cvp represents its densities; lam = 0 takes it constant in each cell.
    """
    mesh = mesh or rho.mesh
    b = np.clip(rho.cell_masses(), 0.0, None)
    e = 0.5 * float(np.dot(b, mesh.solve_masses(b)))
    if sigma == 0.0:
        return e
    m0, m1 = cell_moments(mesh, WeightSpec(sigma=sigma, lam=lam, eps=eps))
    ratio = np.divide(m1, m0, out=np.zeros_like(m1), where=m0 > 0)
    return e - sigma * float(np.dot(b, ratio))


def e0_uniform(mesh: DomainMesh, sigma: float, eps: float) -> float:
    """Regularized energy of the uniform density 1/|Omega|"""
    return regularized_energy(uniform_density(mesh), sigma, eps, mesh)


def default_bracket(sigma: float, extended: bool = False) -> Tuple[float, float, bool]:
    """(0, upper, saturated) scan range for lam; extended brackets reach past lambda_sigma"""
    limit = lambda_sigma(sigma)
    if sigma < 0:
        upper = min(1.5 * limit, 4.0 * math.pi / abs(sigma) * (1.0 - BRACKET_MARGIN))
        return 0.0, upper, False
    if sigma == 0:
        return 0.0, limit * ((1.5) if extended else (1.0 - BRACKET_MARGIN)), False
    if sigma < 0.5:
        upper = min(8.0 * math.pi / (1.0 - 2.0 * sigma), 4.0 * math.pi / sigma)
        return 0.0, upper * (1.0 - BRACKET_MARGIN), False
    return 0.0, 4.0 * math.pi / sigma * (1.0 - BRACKET_MARGIN), True


# Solvers
def solve_mvp(mesh: DomainMesh, sigma: float, eps: float, energy_target: float,
              opts: Optional[SolverOptions] = None, lam_max: Optional[float] = None,
              scan_points: int = 48, energy_tol: Optional[float] = None,
              extended: bool = False) -> MvpResult:
    """Entropy maximizer at fixed energy, through the multiplier lam(E)"""
    opts = opts or SolverOptions()
    energy_tol = settings.ENERGY_TOL if energy_tol is None else energy_tol
    base = WeightSpec(sigma=sigma, lam=0.0, eps=eps)

    uniform = solve_cvp(mesh, base, opts)
    e0 = uniform.total_energy
    if energy_target < e0 - energy_tol:
        raise EnergyBelowUniformError(
            f"target energy {energy_target:.10g} is below the uniform-state energy {e0:.10g}"
        )
    if abs(energy_target - e0) <= energy_tol:
        return MvpResult(
            energy_target=energy_target, sigma=sigma, eps=eps, status=UNIFORM, lam=0.0, roots=[0.0],
            solution=uniform, entropy=uniform.entropy, achieved_energy=e0, scan=[(0.0, e0, CONVERGED)],
        )

    lo, hi, saturated = default_bracket(sigma, extended)
    if lam_max is not None:
        hi = lam_max
    if saturated:
        logger.warning(f"lam bracket for sigma = {sigma} capped at {hi:.6g}")

    grid = np.linspace(lo, hi, scan_points)
    scan: List[Tuple[float, float, str]] = [(0.0, e0, CONVERGED)]
    states: Dict[float, np.ndarray] = {0.0: uniform.psi.values}
    psi = uniform.psi.values
    for lam in grid[1:]:
        solution = solve_cvp(mesh, base.with_lambda(float(lam)), opts, initial=psi)
        scan.append((float(lam), solution.total_energy, solution.status))
        if not solution.converged:
            logger.info(f"Energy scan for sigma = {sigma} stopped at lam = {lam:.6g} ({solution.status})")
            break
        psi = solution.psi.values
        states[float(lam)] = psi

    def nearest_state(lam):
        key = min(states, key=lambda k: abs(k - lam))
        return states[key]

    def gap(lam):
        solution = solve_cvp(mesh, base.with_lambda(lam), opts, initial=nearest_state(lam))
        if not solution.converged:
            raise VortexMFError(f"CVP solve failed inside the root bracket at lam = {lam:.6g}")
        return solution.total_energy - energy_target

    roots = []
    for (l0, e_left, s0), (l1, e_right, s1) in zip(scan[:-1], scan[1:]):
        if s0 != CONVERGED or s1 != CONVERGED:
            continue
        if (e_left - energy_target) * (e_right - energy_target) <= 0.0 and e_left != e_right:
            try:
                roots.append(brentq(gap, l0, l1, xtol=1e-13 * max(1.0, l1), rtol=1e-14, maxiter=200))
            except VortexMFError as e:
                logger.warning(f"Root refinement failed in [{l0:.6g}, {l1:.6g}]: {e.detail}")

    result = MvpResult(energy_target=energy_target, sigma=sigma, eps=eps, status=NOT_FOUND,
                       bracket=(lo, hi), scan=scan, saturated=saturated)
    if not roots:
        e_min, e_max = result.energy_range
        logger.warning(f"No lam found for E = {energy_target:.8g}; scanned energies [{e_min:.8g}, {e_max:.8g}]")
        return result

    primary = min(roots)
    solution = solve_cvp(mesh, base.with_lambda(primary), opts, initial=nearest_state(primary))
    result.status = FOUND
    result.lam = primary
    result.roots = sorted(roots)
    result.solution = solution
    result.entropy = solution.entropy
    result.achieved_energy = solution.total_energy
    if abs(solution.total_energy - energy_target) > energy_tol:
        logger.warning(f"Achieved energy misses the target by {abs(solution.total_energy - energy_target):.3e}")
    return result


def classify_domain_type(mesh: DomainMesh, sigma: float, eps: float, energy_grid: Sequence[float],
                         opts: Optional[SolverOptions] = None, lam_max: Optional[float] = None,
                         scan_points: int = 48) -> DomainTypeReport:
    """Empirical Type I / Type II verdict from lam(E) on an energy grid"""
    grid = np.asarray(energy_grid, dtype=float)
    if np.any(np.diff(grid) <= 0) or not np.all(np.isfinite(grid)):
        raise ConfigurationError("energy grid must be finite and increasing")
    limit = lambda_sigma(sigma)
    rows = []
    verdict = TYPE_I
    for energy_target in grid:
        try:
            result = solve_mvp(mesh, sigma, eps, float(energy_target), opts, lam_max=lam_max,
                               scan_points=scan_points, extended=True)
        except VortexMFError as e:
            rows.append({"energy": float(energy_target), "status": "error", "detail": e.detail})
            verdict = INCONCLUSIVE
            continue
        below = [lam for lam in result.roots if lam < limit]
        rows.append({
            "energy": float(energy_target),
            "status": result.status,
            "lambda": result.lam,
            "roots": result.roots,
            "below_threshold": bool(below),
        })
        if result.status == NOT_FOUND:
            verdict = INCONCLUSIVE
        elif not below and verdict == TYPE_I:
            verdict = TYPE_II
    logger.info(f"Domain classified as {verdict} for sigma = {sigma} over {grid.size} energies")
    return DomainTypeReport(verdict=verdict, lambda_sigma=limit, rows=rows)


def mvp_regularization_limit(mesh: DomainMesh, sigma: float, energy_target: float,
                             eps_sequence: Sequence[float], opts: Optional[SolverOptions] = None,
                             scan_points: int = 48) -> RegularizationReport:
    """Solve the regularized MVP along a decreasing eps sequence and measure the Cauchy behaviour"""
    eps_values = [float(e) for e in eps_sequence]
    if len(eps_values) < 2 or any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise ConfigurationError("eps sequence must be strictly decreasing with at least two members")
    floor = 2.0 * mesh.min_cell_size
    if eps_values[-1] < floor:
        raise ConfigurationError(f"eps = {eps_values[-1]} is below the mesh floor 2*min cell = {floor:.3g}")

    rows, masses = [], []
    for eps in eps_values:
        try:
            result = solve_mvp(mesh, sigma, eps, energy_target, opts, scan_points=scan_points)
        except VortexMFError as e:
            logger.warning(f"Regularized MVP failed at eps = {eps}: {e.detail}")
            rows.append({"eps": eps, "status": "error", "detail": e.detail})
            masses.append(None)
            continue
        rows.append({"eps": eps, "status": result.status, "lambda": result.lam, "entropy": result.entropy})
        masses.append(result.solution.masses if result.solution is not None else None)

    d_lam, d_s, d_l1, pairs = [], [], [], []
    for k in range(len(rows) - 1):
        a, b = rows[k], rows[k + 1]
        if a.get("lambda") is None or b.get("lambda") is None:
            continue
        d_lam.append(abs(a["lambda"] - b["lambda"]))
        d_s.append(abs(a["entropy"] - b["entropy"]))
        d_l1.append(float(np.sum(np.abs(masses[k] - masses[k + 1]))))
        pairs.append(0.5 * (a["eps"] + b["eps"]))

    rate = None
    usable = [(e, d) for e, d in zip(pairs, d_lam) if d > 1e-12]
    if len(usable) >= 2:
        logs = np.log(np.array(usable))
        rate = float(np.polyfit(logs[:, 0], logs[:, 1], 1)[0])
    cauchy = len(d_lam) == len(rows) - 1 and all(
        later <= earlier + 1e-9 for earlier, later in zip(d_lam, d_lam[1:])
    )
    if not cauchy:
        logger.warning(f"lam(E) is not Cauchy along eps = {eps_values}")
    return RegularizationReport(
        sigma=sigma, energy_target=energy_target, rows=rows, lam_differences=d_lam,
        entropy_differences=d_s, l1_distances=d_l1, observed_rate=rate, cauchy=cauchy,
    )


# Ensemble equivalence and optimality
def legendre_entropy(curve: EnsembleCurve, energy_value: float) -> float:
    """inf over lam of (-F(lam) - lam E): the canonical prediction for S(E).

    The sampled minimum is refined inside the interval where E(lam) crosses the
    requested energy by integrating E(lam) - E linearly.
    """
    samples = curve.converged()
    if not samples:
        raise ConfigurationError("no converged samples on the curve")
    values = [-s.free_energy - s.lam * energy_value for s in samples]
    best = min(values)
    for left, right, g_left in zip(samples[:-1], samples[1:], values[:-1]):
        d_left = left.total_energy - energy_value
        d_right = right.total_energy - energy_value
        if d_left <= 0.0 <= d_right and d_left != d_right:
            t = -d_left / (d_right - d_left)
            lam_star = left.lam + t * (right.lam - left.lam)
            best = min(best, g_left + 0.5 * (lam_star - left.lam) * d_left)
    return best


def _constraint_gradients(solution: MeanFieldSolution) -> Tuple[np.ndarray, np.ndarray]:
    m0, m1 = cell_moments(solution.mesh, solution.spec)
    ratio = np.divide(m1, m0, out=np.zeros_like(m1), where=m0 > 0)
    return np.ones_like(m0), solution.psi.values - solution.spec.sigma * ratio


def _discrete_state(solution: MeanFieldSolution, b: np.ndarray) -> Tuple[float, float]:
    """(entropy, total energy) of cell masses b, H-shaped inside cells"""
    spec = solution.spec
    m0, m1 = cell_moments(solution.mesh, spec)
    ratio = np.divide(b, m0, out=np.zeros_like(b), where=m0 > 0)
    vortex = spec.sigma * float(np.dot(ratio, m1))
    s = -float(np.sum(rel_entr(b, m0))) - math.log(spec.scale) + spec.lam * vortex
    e = 0.5 * float(np.dot(b, solution.mesh.solve_masses(b)))
    return s, e - vortex


def entropy_stationarity(result: MvpResult, n_directions: int = 8, t_max: float = 1e-3,
                         seed: int = 0) -> float:
    """Largest entropy gain over random constraint-preserving perturbations (should be <= 1e-6)"""
    solution = result.solution
    if solution is None:
        raise ConfigurationError("stationarity check needs a solved MVP")
    rng = np.random.default_rng(seed)
    b = solution.masses
    ones, grad_e = _constraint_gradients(solution)
    basis, _ = np.linalg.qr(np.column_stack([ones, grad_e]))
    s_ref, e_ref = _discrete_state(solution, b)

    # energy direction that keeps the mass fixed
    g = grad_e - ones * np.dot(grad_e, ones) / np.dot(ones, ones)
    g_slope = float(np.dot(grad_e, g))
    g_curv = float(np.dot(g, solution.mesh.solve_masses(g)))

    worst = -np.inf
    for _ in range(n_directions):
        xi = np.clip(rng.standard_normal(b.size), -1.0, 1.0)
        delta = b * xi
        delta -= basis @ (basis.T @ delta)
        for t in (-t_max, -0.5 * t_max, 0.5 * t_max, t_max):
            trial = b + t * delta
            _, e_trial = _discrete_state(solution, trial)
            # E(trial + s g) = e_trial + slope s + g_curv s^2 / 2; take the root of smallest size
            slope = float(np.dot(trial - b, solution.mesh.solve_masses(g))) + g_slope
            disc = slope ** 2 - 2.0 * g_curv * (e_trial - e_ref)
            if disc < 0:
                continue
            q = -0.5 * (slope + math.copysign(math.sqrt(disc), slope))
            trial = trial + ((e_trial - e_ref) / q) * g
            if np.any(trial < 0):
                continue
            s_trial, _ = _discrete_state(solution, trial)
            worst = max(worst, s_trial - s_ref)
    return float(worst)


def euler_lagrange_spread(result: MvpResult) -> float:
    """Relative spread of log(rho/H) - lam psi across cells; zero for an exact maximizer"""
    solution = result.solution
    if solution is None:
        raise ConfigurationError("spread check needs a solved MVP")
    m0, _ = cell_moments(solution.mesh, solution.spec)
    b = solution.masses
    mask = (b > 0) & (m0 > 0)
    values = np.log(b[mask] / m0[mask]) - solution.lam * solution.psi.values[mask]
    return float(np.std(values) / (1.0 + abs(np.mean(values))))
