"""Canonical ensemble: the singular mean field equation at fixed lam.

The discrete problem works with cell masses. For a stream function psi the Gibbs
density has masses

    b_i = m0_i * exp(lam * psi_i) / Z,     m0_i = integral of H over cell i,

so the density is taken H-shaped inside every cell, which keeps the vortex singularity
out of the quadrature. A solution is a fixed point psi = G[b(psi)].
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu
from scipy.special import logsumexp, rel_entr

from vortexmf.analytic import lambda_sigma
from vortexmf.core.config import settings
from vortexmf.core.errors import ConfigurationError, DomainError
from vortexmf.domain import (
    DISK,
    DomainMesh,
    ScalarField,
    green_moments,
    mass_in_ball,
    weight_field,
    weight_moments,
)
from vortexmf.schemas.physics import WeightSpec
from vortexmf.schemas.run import SolverOptions

logger = logging.getLogger(__name__)

CONVERGED = "converged"
DIVERGED = "diverged"
MAX_ITER = "max_iter"
SKIPPED = "skipped"

MIN_DAMPING = 1.0 / 64.0
DEFAULT_RADII = (0.1, 0.01)


@dataclass(frozen=True, eq=False)
class MeanFieldSolution:
    mesh: DomainMesh
    spec: WeightSpec
    psi: ScalarField
    rho: ScalarField
    log_partition: float
    mass: float
    energy: float
    vortex_energy: float
    entropy: float
    free_energy: float
    j_value: float
    iterations: int
    update_norm: float
    status: str
    method: str = "picard"
    above_threshold: bool = False

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def lam(self) -> float:
        return self.spec.lam

    @property
    def total_energy(self) -> float:
        """Microcanonical energy: energy minus the vortex interaction"""
        return self.energy - self.vortex_energy

    @property
    def masses(self) -> np.ndarray:
        return self.rho.masses

    def mass_in_ball(self, radius: float) -> float:
        return mass_in_ball(self.mesh, self.masses, radius)

    def summary(self) -> Dict[str, object]:
        return {
            "lambda": self.lam,
            "sigma": self.spec.sigma,
            "eps": self.spec.eps,
            "mass": self.mass,
            "energy": self.energy,
            "vortex_energy": self.vortex_energy,
            "total_energy": self.total_energy,
            "entropy": self.entropy,
            "free_energy": self.free_energy,
            "j_value": self.j_value,
            "sup_psi": self.psi.sup(),
            "iterations": self.iterations,
            "update_norm": self.update_norm,
            "status": self.status,
            "method": self.method,
            "above_threshold": self.above_threshold,
        }


# Helper Functions
@lru_cache(maxsize=64)
def cell_moments(mesh: DomainMesh, spec: WeightSpec) -> Tuple[np.ndarray, np.ndarray]:
    """(integral of H, integral of H*G) per cell; G is the vortex Green function"""
    m0 = weight_moments(mesh, spec)
    m1 = green_moments(mesh, spec) if spec.sigma != 0.0 else np.zeros(mesh.n_nodes)
    return m0, m1


def _gibbs(m0: np.ndarray, lam_psi: np.ndarray) -> Tuple[np.ndarray, float]:
    """Normalized masses m0 e^(lam psi) / Z and log Z, in max-shifted form"""
    log_z = float(logsumexp(lam_psi, b=m0))
    return m0 * np.exp(lam_psi - log_z), log_z


def _checked_masses(rho: ScalarField) -> np.ndarray:
    if np.any(rho.values < -1e-12):
        raise DomainError("density has negative values")
    b = rho.cell_masses()
    if np.any(b < -1e-12):
        raise DomainError("density has negative cell masses")
    return np.clip(b, 0.0, None)


def _entropy_terms(b: np.ndarray, m0: np.ndarray, m1: np.ndarray, spec: WeightSpec) -> Tuple[float, float]:
    """(entropy, vortex energy) for masses that are H-shaped inside each cell"""
    ratio = np.divide(b, m0, out=np.zeros_like(b), where=m0 > 0)
    vortex = spec.sigma * float(np.dot(ratio, m1)) if spec.sigma != 0.0 else 0.0
    s = -float(np.sum(rel_entr(b, m0))) - np.log(spec.scale) + spec.lam * vortex
    return s, vortex


def uniform_density(mesh: DomainMesh) -> ScalarField:
    return ScalarField(mesh, np.full(mesh.n_nodes, 1.0 / mesh.area), masses=mesh.weights / mesh.area)


def gibbs_density(psi: ScalarField, spec: WeightSpec) -> ScalarField:
    """rho_psi = H e^(lam psi) / integral of H e^(lam psi)"""
    m0, _ = cell_moments(psi.mesh, spec)
    b, log_z = _gibbs(m0, spec.lam * psi.values)
    h = weight_field(psi.mesh, spec).values
    with np.errstate(invalid="ignore", over="ignore"):
        values = h * np.exp(spec.lam * psi.values - log_z)
    return ScalarField(psi.mesh, values, masses=b)


# Functionals
def entropy(rho: ScalarField, spec: Optional[WeightSpec] = None) -> float:
    """S(rho) = -integral of rho log rho, with 0 log 0 = 0.

    Without a weight the density is taken constant inside every cell; with one it is
    taken H-shaped, which is how solver densities are represented.
    """
    b = _checked_masses(rho)
    if spec is None:
        return -float(np.sum(rel_entr(b, rho.mesh.weights)))
    m0, m1 = cell_moments(rho.mesh, spec)
    return _entropy_terms(b, m0, m1, spec)[0]


def energy(rho: ScalarField) -> float:
    """1/2 integral of rho G[rho]"""
    b = _checked_masses(rho)
    return 0.5 * float(np.dot(b, rho.mesh.solve_masses(b)))


def vortex_energy(rho: ScalarField, spec: WeightSpec) -> float:
    """sigma * integral of rho G(., 0), or with G_n when spec.eps > 0"""
    b = _checked_masses(rho)
    m0, m1 = cell_moments(rho.mesh, spec)
    return _entropy_terms(b, m0, m1, spec)[1]


def free_energy(rho: ScalarField, spec: WeightSpec) -> float:
    """F(rho) = integral rho log rho - (lam/2) integral rho G[rho] + sigma lam integral rho G"""
    b = _checked_masses(rho)
    m0, m1 = cell_moments(rho.mesh, spec)
    s, vortex = _entropy_terms(b, m0, m1, spec)
    e = 0.5 * float(np.dot(b, rho.mesh.solve_masses(b)))
    return -s - spec.lam * (e - vortex)


def j_functional(psi: ScalarField, spec: WeightSpec) -> float:
    """J(psi) = (lam/2) integral |grad psi|^2 - log integral H e^(lam psi)"""
    mesh = psi.mesh
    if np.any(np.abs(psi.values[mesh.boundary]) > 1e-12):
        raise DomainError("psi must vanish on the boundary")
    m0, _ = cell_moments(mesh, spec)
    return 0.5 * spec.lam * mesh.dirichlet_form(psi.values) - float(logsumexp(spec.lam * psi.values, b=m0))


def duality_gap(rho: ScalarField, spec: WeightSpec) -> float:
    """F(rho) - J(G[rho]) written as the relative entropy of rho against rho_psi"""
    mesh = rho.mesh
    b = _checked_masses(rho)
    m0, _ = cell_moments(mesh, spec)
    psi = mesh.solve_masses(b)
    q, _ = _gibbs(m0, spec.lam * psi)
    return float(np.sum(rel_entr(b, q)))


def fixed_point_residual(solution: MeanFieldSolution) -> float:
    """sup |G[rho_psi] - psi| for the returned stream function"""
    m0, _ = cell_moments(solution.mesh, solution.spec)
    b, _ = _gibbs(m0, solution.lam * solution.psi.values)
    return float(np.max(np.abs(solution.mesh.solve_masses(b) - solution.psi.values)))


def legendre_check(solution: MeanFieldSolution) -> float:
    """|F - (-S - lam (E - E_sigma))| recomputed from the stored scalars"""
    rebuilt = -solution.entropy - solution.lam * (solution.energy - solution.vortex_energy)
    return abs(solution.free_energy - rebuilt)


# Solvers
def _picard(mesh, m0, lam, psi, opts, tol):
    omega = opts.damping
    previous = np.inf
    status, res = MAX_ITER, np.inf
    for it in range(1, opts.max_iter + 1):
        b, _ = _gibbs(m0, lam * psi)
        target = mesh.solve_masses(b)
        res = float(np.max(np.abs(target - psi)))
        if not np.isfinite(res) or lam * float(np.max(target)) > opts.psi_ceiling:
            status = DIVERGED
            break
        if res < tol:
            psi, status = target, CONVERGED
            break
        if res > previous and omega > MIN_DAMPING:
            omega = max(0.5 * omega, MIN_DAMPING)
            logger.debug(f"Picard update grew at iteration {it}, damping reduced to {omega}")
        previous = res
        psi = psi + omega * (target - psi)
        if it % 500 == 0:
            logger.debug(f"Picard iteration {it}: update {res:.3e}")
    return psi, it, res, status


def _newton(mesh, m0, lam, psi, opts, tol):
    """Newton on A psi = b(psi) with Jacobian A - lam diag(b) + lam b b^T (Sherman-Morrison)"""
    idx = mesh.interior
    a_int = mesh.stiffness

    def residual(p):
        b, _ = _gibbs(m0, lam * p)
        return a_int @ p[idx] - b[idx], b

    status, res = MAX_ITER, np.inf
    for it in range(1, opts.max_iter + 1):
        f, b = residual(psi)
        target = mesh.solve_masses(b)
        res = float(np.max(np.abs(target - psi)))
        if not np.isfinite(res) or lam * float(np.max(psi)) > opts.psi_ceiling:
            status = DIVERGED
            break
        if res < tol:
            psi, status = target, CONVERGED
            break
        bi = b[idx]
        try:
            lu = splu((a_int - lam * sparse.diags(bi)).tocsc())
        except RuntimeError:
            logger.warning(f"Singular Newton matrix at lam = {lam:.6g}")
            status = DIVERGED
            break
        x1 = lu.solve(-f)
        x2 = lu.solve(lam * bi)
        step = x1 - x2 * (bi @ x1) / (1.0 + bi @ x2)

        norm0 = float(np.linalg.norm(f))
        t = 1.0
        while True:
            trial = psi.copy()
            trial[idx] += t * step
            if float(np.linalg.norm(residual(trial)[0])) < (1.0 - 1e-4 * t) * norm0 or t <= MIN_DAMPING:
                break
            t *= 0.5
        psi = trial
        logger.debug(f"Newton iteration {it}: update {res:.3e}, step {t}")
    return psi, it, res, status


def solve_cvp(mesh: DomainMesh, spec: WeightSpec, opts: Optional[SolverOptions] = None,
              initial: Optional[np.ndarray] = None) -> MeanFieldSolution:
    """Solve -Laplace(psi) = H e^(lam psi) / integral H e^(lam psi), psi = 0 on the boundary"""
    opts = opts or SolverOptions()
    lam = spec.lam
    m0, m1 = cell_moments(mesh, spec)
    tol = opts.tol if opts.tol is not None else (settings.RADIAL_TOL if mesh.kind == DISK else settings.GRID_TOL)

    above = spec.eps == 0.0 and lam >= lambda_sigma(spec.sigma)
    if above:
        logger.warning(f"lam = {lam:.6g} is at or above lambda_sigma = {lambda_sigma(spec.sigma):.6g}")

    if lam == 0.0:
        psi, iterations, res, status = mesh.solve_masses(m0 / m0.sum()), 0, 0.0, CONVERGED
    else:
        psi = np.zeros(mesh.n_nodes) if initial is None else np.array(initial, dtype=float)
        psi[mesh.boundary] = 0.0
        solver = _newton if opts.method == "newton" else _picard
        psi, iterations, res, status = solver(mesh, m0, lam, psi, opts, tol)
        if status != CONVERGED:
            logger.warning(f"CVP solve at lam = {lam:.6g} ended with status {status} after {iterations} iterations")

    b, log_z = _gibbs(m0, lam * psi)
    s, vortex = _entropy_terms(b, m0, m1, spec)
    e = 0.5 * float(np.dot(b, psi))
    h = weight_field(mesh, spec).values
    with np.errstate(invalid="ignore", over="ignore"):
        rho_values = h * np.exp(lam * psi - log_z)
    psi_field = ScalarField(mesh, psi)
    j_value = 0.5 * lam * mesh.dirichlet_form(psi) - log_z
    return MeanFieldSolution(
        mesh=mesh,
        spec=spec,
        psi=psi_field,
        rho=ScalarField(mesh, rho_values, masses=b),
        log_partition=log_z,
        mass=float(np.sum(b)),
        energy=e,
        vortex_energy=vortex,
        entropy=s,
        free_energy=-s - lam * (e - vortex),
        j_value=j_value,
        iterations=iterations,
        update_norm=res,
        status=status,
        method=opts.method,
        above_threshold=above,
    )


# Sweeps
@dataclass
class EnsembleSample:
    lam: float
    status: str
    energy: float = float("nan")
    vortex_energy: float = float("nan")
    entropy: float = float("nan")
    free_energy: float = float("nan")
    j_value: float = float("nan")
    sup_psi: float = float("nan")
    ball_masses: Dict[float, float] = field(default_factory=dict)
    iterations: int = 0

    @property
    def total_energy(self) -> float:
        return self.energy - self.vortex_energy

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


@dataclass
class EnsembleCurve:
    sigma: float
    eps: float
    radii: Tuple[float, ...]
    samples: List[EnsembleSample]

    @property
    def branch_end(self) -> Optional[float]:
        """First lam whose solve did not converge"""
        for sample in self.samples:
            if sample.status != CONVERGED:
                return sample.lam
        return None

    def converged(self) -> List[EnsembleSample]:
        return [s for s in self.samples if s.converged]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.converged()], dtype=float)

    def rows(self) -> List[Dict[str, object]]:
        rows = []
        for s in self.samples:
            row = {
                "lambda": s.lam,
                "E": s.total_energy,
                "S": s.entropy,
                "F": s.free_energy,
                "J": s.j_value,
                "sup_psi": s.sup_psi,
            }
            for radius in self.radii:
                row[f"mass_b{str(radius).replace('0.', '0')}"] = s.ball_masses.get(radius, float("nan"))
            row["status"] = s.status
            rows.append(row)
        return rows


def _sample(solution: MeanFieldSolution, radii: Sequence[float]) -> EnsembleSample:
    return EnsembleSample(
        lam=solution.lam,
        status=solution.status,
        energy=solution.energy,
        vortex_energy=solution.vortex_energy,
        entropy=solution.entropy,
        free_energy=solution.free_energy,
        j_value=solution.j_value,
        sup_psi=solution.psi.sup(),
        ball_masses={r: solution.mass_in_ball(r) for r in radii},
        iterations=solution.iterations,
    )


def sweep_lambda(mesh: DomainMesh, sigma: float, eps: float, lam_grid: Sequence[float],
                 opts: Optional[SolverOptions] = None, radii: Sequence[float] = DEFAULT_RADII,
                 threads: Optional[int] = None) -> EnsembleCurve:
    """Solve along an increasing lam grid; the first failed solve marks the branch end"""
    opts = opts or SolverOptions()
    grid = np.asarray(lam_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ConfigurationError("lam grid must be a non-empty list")
    if np.any(grid < 0):
        raise DomainError("negative lam (positive temperature) is not supported")
    if np.any(np.diff(grid) <= 0):
        raise ConfigurationError("lam grid must be strictly increasing")
    radii = tuple(radii)
    base = WeightSpec(sigma=sigma, lam=0.0, eps=eps)
    samples: List[EnsembleSample] = []

    if opts.warm_start:
        psi = None
        for lam in grid:
            if samples and samples[-1].status != CONVERGED:
                samples.append(EnsembleSample(lam=float(lam), status=SKIPPED))
                continue
            solution = solve_cvp(mesh, base.with_lambda(float(lam)), opts, initial=psi)
            samples.append(_sample(solution, radii))
            psi = solution.psi.values
    else:
        workers = threads or settings.THREADS
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solutions = list(pool.map(lambda lam: solve_cvp(mesh, base.with_lambda(float(lam)), opts), grid))
        samples = [_sample(s, radii) for s in solutions]

    curve = EnsembleCurve(sigma=sigma, eps=eps, radii=radii, samples=samples)
    if curve.branch_end is not None:
        logger.warning(f"Branch for sigma = {sigma} ended at lam = {curve.branch_end:.6g}")
    logger.info(f"Swept {len(samples)} values of lam for sigma = {sigma}, eps = {eps}")
    return curve


def free_energy_convexity(curve: EnsembleCurve) -> float:
    """Smallest second divided difference of -f(lam) over converged samples (>= 0 when convex)"""
    lam = curve.column("lam")
    g = -curve.column("free_energy")
    if lam.size < 3:
        raise ConfigurationError("convexity check needs at least three converged samples")
    slopes = np.diff(g) / np.diff(lam)
    second = np.diff(slopes) / (0.5 * (lam[2:] - lam[:-2]))
    return float(np.min(second))
