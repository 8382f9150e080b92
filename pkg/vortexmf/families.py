"""Planted solution families and family manifests.

Every planted member is an exact or constructed solution of -Laplace(v) = K (eps^2+|x|^2)^alpha e^v
near its concentration point, so the diagnostics in ``vortexmf.blowup`` can be checked by
construct-then-recover round trips.
"""
import logging
import math
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from vortexmf.analytic import EIGHT_PI, bubble_center_for_mass, bubble_solve, disk_solution, lambda_sigma
from vortexmf.blowup import FamilyMember, SolutionFamily, case_three_window
from vortexmf.core.errors import ConfigurationError, DomainError
from vortexmf.domain import FOUR_PI, DISK, DomainMesh, ScalarField
from vortexmf.io import read_field_csv, read_json, write_field_csv, write_json
from vortexmf.schemas.run import MeshSpec

logger = logging.getLogger(__name__)

MANIFEST_NAME = "family_manifest.json"

RADIAL_MESH = {"kind": "disk", "n_nodes": 4096, "grading": "log-near-origin", "r_min": 1e-12}
OFFSET_GRID = {"kind": "grid", "width": 1.0, "height": 1.0, "h": 1.0 / 512.0}


# Helper Functions
def _mesh(spec: Optional[Union[MeshSpec, dict, str]], default: dict):
    spec = MeshSpec.model_validate(default if spec is None else spec)
    return spec, spec.build()


def _self_consistent_lambda(mass_of: Callable[[float], float], guess: float = EIGHT_PI) -> float:
    """Root of mass(lam) = lam closest to the guess; mass(guess) when there is none"""
    grid = np.linspace(0.5 * guess, 1.5 * guess, 33)
    gaps = np.array([mass_of(lam) - lam for lam in grid])
    roots = [
        brentq(lambda lam: mass_of(lam) - lam, grid[i], grid[i + 1], xtol=1e-12)
        for i in range(grid.size - 1)
        if gaps[i] * gaps[i + 1] < 0
    ]
    if not roots:
        logger.debug(f"No self-consistent mass near {guess:.6g}, using mass({guess:.6g})")
        return mass_of(guess)
    return min(roots, key=lambda lam: abs(lam - guess))


def _masses(mesh: DomainMesh, v: np.ndarray, eps: float, alpha: float, scale: float = 1.0) -> np.ndarray:
    probe = FamilyMember(mesh=mesh, v=ScalarField(mesh, v), eps=eps, sigma=0.0, alpha=alpha, scale=scale)
    return probe.cell_masses


def _bubble_like(log_dist: np.ndarray, peak: float, log_coeff: float, kappa: float) -> np.ndarray:
    """peak - 2 log(1 + exp(log_coeff) |x - x_n|^kappa), with log_dist = -inf at x_n"""
    return peak - 2.0 * np.logaddexp(0.0, log_coeff + kappa * log_dist)


# Oracle families
def disk_family(sigma: float = -0.5, lam_values: Optional[Sequence[float]] = None,
                mesh: Optional[MeshSpec] = None) -> SolutionFamily:
    """Closed-form disk solutions v = lam psi + log(lam/Z) with lam increasing to lambda_sigma"""
    spec, m = _mesh(mesh, RADIAL_MESH)
    if lam_values is None:
        lam_values = [lambda_sigma(sigma) * (1.0 - 10.0 ** -k) for k in range(1, 8)]
    members = []
    for lam in lam_values:
        sol = disk_solution(sigma, lam)
        members.append(FamilyMember(
            mesh=m, v=ScalarField(m, sol.v(m.r)), eps=0.0, sigma=sigma, alpha=sol.a,
            param=lam, masses=lam * sol.cell_masses(m),
        ))
    return SolutionFamily(tuple(members), sigma=sigma, name=f"disk(sigma={sigma:g})", parameter="lam",
                          mesh_spec=spec.model_dump())


def flat_family(lam: float = 1.0, sigma: float = 0.0, count: int = 4,
                mesh: Optional[MeshSpec] = None) -> SolutionFamily:
    """The same bounded disk solution repeated: a family without blow-up"""
    spec, m = _mesh(mesh, RADIAL_MESH)
    sol = disk_solution(sigma, lam)
    member_v = ScalarField(m, sol.v(m.r))
    masses = lam * sol.cell_masses(m)
    members = [
        FamilyMember(mesh=m, v=member_v, eps=0.0, sigma=sigma, alpha=sol.a, param=float(n), masses=masses)
        for n in range(1, count + 1)
    ]
    return SolutionFamily(tuple(members), sigma=sigma, name=f"flat(lam={lam:g})", mesh_spec=spec.model_dump())


# Planted blow-up families
def case_one_family(sigma: float, n_values: Sequence[int] = (1, 2, 4, 8, 16, 32, 64, 128),
                    gamma: float = 0.125, mesh: Optional[MeshSpec] = None) -> SolutionFamily:
    """eps_n = n^(-1/2), delta_n = n^(-2), concentration at the vortex:

    v_n = v_n(0) - 2 log(1 + gamma theta^(2(1+alpha)) eps^(-kappa) |x|^kappa), theta = eps/delta,
    kappa = lam_n/(4 pi), with lam_n the self-consistent mass.
    """
    spec, m = _mesh(mesh, RADIAL_MESH)
    if m.kind != DISK:
        raise ConfigurationError("Case I families are planted on radial meshes")
    with np.errstate(divide="ignore"):
        log_r = np.log(m.r)

    members = []
    for n in n_values:
        eps, delta = n ** -0.5, float(n) ** -2.0

        def field(lam, eps=eps, delta=delta):
            alpha, kappa = sigma * lam / FOUR_PI, lam / FOUR_PI
            peak = -2.0 * (1.0 + alpha) * math.log(delta)
            log_coeff = math.log(gamma) + 2.0 * (1.0 + alpha) * math.log(eps / delta) - kappa * math.log(eps)
            return _bubble_like(log_r, peak, log_coeff, kappa), alpha

        def mass_of(lam, eps=eps, field=field):
            v, alpha = field(lam)
            return float(np.sum(_masses(m, v, eps, alpha)))

        lam = _self_consistent_lambda(mass_of)
        v, alpha = field(lam)
        members.append(FamilyMember(mesh=m, v=ScalarField(m, v), eps=eps, sigma=sigma, alpha=alpha, param=n))
    return SolutionFamily(tuple(members), sigma=sigma, name=f"case1(sigma={sigma:g})",
                          mesh_spec=spec.model_dump())


def case_two_family(sigma: float, deltas: Sequence[float] = (0.1, 0.05, 0.03, 0.02),
                    peak_at: tuple = (0.25, 0.0), eps: float = 0.05,
                    mesh: Optional[MeshSpec] = None) -> SolutionFamily:
    """Off-centre concentration at x_n with eps_n/|x_n| fixed and |x_n|/delta_n growing:

    v_n = v_n(x_n) - 2 log(1 + gammabar thetabar^(2(1+alpha)) |x_n|^(-kappa) |x - x_n|^kappa),
    thetabar = |x_n|/delta_n and 8 gammabar = ((eps/|x_n|)^2 + 1)^alpha.
    """
    spec, m = _mesh(mesh, OFFSET_GRID)
    dist_n = math.hypot(*peak_at)
    if dist_n == 0:
        raise ConfigurationError("Case II needs a concentration point away from the vortex")
    with np.errstate(divide="ignore"):
        log_d = np.log(np.hypot(m.x - peak_at[0], m.y - peak_at[1]))
    if not np.isneginf(log_d).any():
        raise ConfigurationError(f"concentration point {peak_at} is not a mesh node")

    members = []
    for delta in deltas:
        def field(lam, delta=delta):
            alpha, kappa = sigma * lam / FOUR_PI, lam / FOUR_PI
            gamma_bar = ((eps / dist_n) ** 2 + 1.0) ** alpha / 8.0
            peak = -2.0 * (1.0 + alpha) * math.log(delta)
            log_coeff = (math.log(gamma_bar) + 2.0 * (1.0 + alpha) * math.log(dist_n / delta)
                         - kappa * math.log(dist_n))
            return _bubble_like(log_d, peak, log_coeff, kappa), alpha

        def mass_of(lam, field=field):
            v, alpha = field(lam)
            return float(np.sum(_masses(m, v, eps, alpha)))

        lam = _self_consistent_lambda(mass_of)
        v, alpha = field(lam)
        members.append(FamilyMember(mesh=m, v=ScalarField(m, v), eps=eps, sigma=sigma, alpha=alpha, param=delta))
    return SolutionFamily(tuple(members), sigma=sigma, name=f"case2(sigma={sigma:g})", parameter="delta",
                          mesh_spec=spec.model_dump())


def scaled_bubble_family(alpha: float, eps0: float = 0.5, mass: Optional[float] = None,
                         deltas: Optional[Sequence[float]] = None, sigma: Optional[float] = None,
                         mesh: Optional[MeshSpec] = None) -> SolutionFamily:
    """v_n(x) = phi(|x|/delta_n) - c - 2(1+alpha) log delta_n with K = e^c and eps_n = eps0 delta_n.

    phi is the entire bubble with t0 = eps0 and phi(0) = c, so each member solves the
    equation exactly and sup v_n = -2(1+alpha) log delta_n. Without a mass, eps0 = 0 uses the
    explicit bubble and eps0 > 0 the middle of its mass window.
    """
    spec, m = _mesh(mesh, RADIAL_MESH)
    if eps0 == 0.0:
        c = math.log(8.0 * (1.0 + alpha) ** 2)
    else:
        if mass is None:
            mass = 0.5 * (EIGHT_PI + EIGHT_PI * (1.0 + alpha))
        c = bubble_center_for_mass(alpha, eps0, mass)
    bubble = bubble_solve(alpha, eps0, c)
    mass = bubble.mass
    sigma = FOUR_PI * alpha / mass if sigma is None else sigma
    deltas = np.geomspace(1.0, 1e-6, 7) if deltas is None else deltas

    members = []
    for delta in deltas:
        v = bubble.profile(m.r / delta) - c - 2.0 * (1.0 + alpha) * math.log(delta)
        members.append(FamilyMember(mesh=m, v=ScalarField(m, v), eps=eps0 * delta, sigma=sigma,
                                    alpha=alpha, scale=math.exp(c), param=float(delta)))
    logger.debug(f"Scaled bubble family alpha={alpha} eps0={eps0}: mass {mass:.8g}, c = {c:.6g}")
    return SolutionFamily(tuple(members), sigma=sigma, name=f"bubble(alpha={alpha:g}, eps0={eps0:g})",
                          parameter="delta", mesh_spec=spec.model_dump())


def case_three_family(sigma: float, eps0: float = 0.5, lam_star: Optional[float] = None,
                      deltas: Optional[Sequence[float]] = None,
                      mesh: Optional[MeshSpec] = None) -> SolutionFamily:
    """Scaled bubbles with eps_n/delta_n = eps0 whose mass lam_star lies in the Case III window"""
    lo, hi, _ = case_three_window(sigma)
    lam_star = 0.5 * (lo + hi) if lam_star is None else lam_star
    if not lo < lam_star < hi:
        raise DomainError(f"lam_star = {lam_star:.6g} outside the Case III window ({lo:.6g}, {hi:.6g})")
    alpha = sigma * lam_star / FOUR_PI
    family = scaled_bubble_family(alpha, eps0=eps0, mass=lam_star, deltas=deltas, sigma=sigma, mesh=mesh)
    return SolutionFamily(family.members, sigma=sigma, name=f"case3(sigma={sigma:g})", parameter="delta",
                          mesh_spec=family.mesh_spec)


def planted_family(kind: str, sigma: Optional[float] = None, alpha: float = 0.5) -> SolutionFamily:
    """Named planted families used by the command line and the acceptance suite"""
    if kind == "disk":
        return disk_family(-0.5 if sigma is None else sigma)
    if kind == "flat":
        return flat_family(sigma=0.0 if sigma is None else sigma)
    if kind == "case1":
        return case_one_family(0.3 if sigma is None else sigma)
    if kind == "case2":
        return case_two_family(0.3 if sigma is None else sigma)
    if kind == "case3":
        return case_three_family(0.3 if sigma is None else sigma)
    if kind == "bubble":
        return scaled_bubble_family(alpha, sigma=sigma)
    raise ConfigurationError(f"unknown planted family '{kind}'")


# Manifests
def write_manifest(family: SolutionFamily, directory: Union[str, Path]) -> Path:
    """Write one field CSV per member plus family_manifest.json into the directory"""
    if family.mesh_spec is None:
        raise ConfigurationError("family has no mesh description and cannot be written")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, member in enumerate(family):
        name = f"member_{i:03d}.csv"
        write_field_csv(directory / name, member.v)
        entries.append({
            "file": name,
            "eps": member.eps,
            "lam": member.lam,
            "alpha": member.alpha,
            "scale": member.scale,
            "param": member.param,
        })
    manifest = {
        "name": family.name,
        "sigma": family.sigma,
        "parameter": family.parameter,
        "mesh": family.mesh_spec,
        "members": entries,
    }
    path = write_json(directory / MANIFEST_NAME, manifest)
    logger.info(f"Wrote family '{family.name}' ({len(family)} members) to {directory}")
    return path


def load_manifest(path: Union[str, Path]) -> SolutionFamily:
    """Read a manifest; alpha defaults to sigma lam_n / (4 pi) and the scale to 1"""
    path = Path(path)
    data = read_json(path)
    entries = data.get("members") or []
    if not entries:
        raise ConfigurationError(f"manifest {path} lists no members")
    if "sigma" not in data or "mesh" not in data:
        raise ConfigurationError(f"manifest {path} needs 'sigma' and 'mesh'")
    sigma = float(data["sigma"])
    try:
        spec = MeshSpec.model_validate(data["mesh"])
    except ValueError as e:
        raise ConfigurationError(f"invalid mesh in {path}: {str(e)}") from e
    mesh = spec.build()

    members = []
    for i, entry in enumerate(entries):
        if "file" not in entry or "eps" not in entry:
            raise ConfigurationError(f"member {i} of {path} needs 'file' and 'eps'")
        v = read_field_csv(path.parent / entry["file"], mesh)
        lam_listed = entry.get("lam")
        alpha = entry.get("alpha")
        if alpha is None:
            if lam_listed is None:
                raise ConfigurationError(f"member {i} of {path} needs 'alpha' or 'lam'")
            alpha = sigma * float(lam_listed) / FOUR_PI
        member = FamilyMember(mesh=mesh, v=v, eps=float(entry["eps"]), sigma=sigma, alpha=float(alpha),
                              scale=float(entry.get("scale", 1.0)), param=float(entry.get("param", i)))
        if lam_listed is not None and abs(member.lam - float(lam_listed)) > 1e-6 * abs(float(lam_listed)):
            logger.warning(f"Member {i}: listed lam {float(lam_listed):.10g}, recomputed {member.lam:.10g}")
        members.append(member)
    return SolutionFamily(tuple(members), sigma=sigma, name=data.get("name", path.stem),
                          parameter=data.get("parameter", "n"), mesh_spec=spec.model_dump())
