"""Diagnostics on families of solutions of -Laplace(v_n) = W_n e^(v_n).

Members carry the weight W_n = K_n (eps_n^2 + |x|^2)^alpha_n with alpha_n = sigma lam_n / (4 pi),
the field v_n on a mesh and lam_n = integral of W_n e^(v_n). From the maximum v_n(x_n) the
concentration scale is delta_n^(2(1+alpha_n)) = exp(-v_n(x_n)) and t_n = max(|x_n|, delta_n).
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.optimize import least_squares

from vortexmf.analytic import EIGHT_PI, bubble_center_for_mass, bubble_solve
from vortexmf.core.config import settings
from vortexmf.core.errors import (
    ConfigurationError,
    DomainError,
    HypothesisViolationError,
    NonConvergenceError,
)
from vortexmf.domain import DISK, FOUR_PI, DomainMesh, ScalarField, power_log_integrals, radial_power_moments
from vortexmf.mvp import e0_uniform, regularized_energy

logger = logging.getLogger(__name__)

CASE_I = "I"
CASE_II = "II"
CASE_III = "III"
NO_CASE = "none"

CONCENTRATION = "concentration"
OPEN_REGIME = "open-regime"
NO_CONCENTRATION = "no-concentration"
NO_BLOWUP = "no-blowup"
OUTSIDE_HYPOTHESES = "outside-hypotheses"

WINDOW_TOL = 0.03
LS_OUTER_FRACTION = 0.05
GROWTH_TOL = 0.2
FIT_MAX_POINTS = 20000


# Families
@dataclass(frozen=True, eq=False)
class FamilyMember:
    mesh: DomainMesh
    v: ScalarField
    eps: float
    sigma: float
    alpha: float
    scale: float = 1.0
    param: float = math.nan
    masses: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.alpha <= -1.0:
            raise DomainError(f"weight exponent {self.alpha:.6g} must be > -1")
        if self.scale < 0:
            raise DomainError(f"weight scale must be nonnegative, got {self.scale}")

    @cached_property
    def weight(self) -> np.ndarray:
        """Nodal W = K (eps^2 + |x|^2)^alpha"""
        with np.errstate(divide="ignore"):
            return self.scale * (self.eps ** 2 + self.mesh.r ** 2) ** self.alpha

    @cached_property
    def cell_masses(self) -> np.ndarray:
        """Per-cell integrals of W e^v (weight integrated exactly on radial meshes)"""
        if self.masses is not None:
            return np.asarray(self.masses, dtype=float)
        ev = np.exp(self.v.values)
        if self.mesh.kind == DISK:
            p0, _ = radial_power_moments(self.mesh, self.eps, self.alpha)
            return self.scale * p0 * ev
        if self.eps == 0.0 and self.alpha < 0:
            raise DomainError("singular weights on grids require eps > 0")
        return self.weight * ev * self.mesh.weights

    @cached_property
    def lam(self) -> float:
        return float(np.sum(self.cell_masses))

    @cached_property
    def peak_index(self) -> int:
        return int(np.argmax(self.v.values))

    @property
    def peak_value(self) -> float:
        return float(self.v.values[self.peak_index])

    @property
    def peak(self) -> Tuple[float, float]:
        i = self.peak_index
        return float(self.mesh.x[i]), float(self.mesh.y[i])

    @property
    def peak_distance(self) -> float:
        return float(math.hypot(*self.peak))

    @property
    def delta(self) -> float:
        return math.exp(-self.peak_value / (2.0 * (1.0 + self.alpha)))

    @property
    def t(self) -> float:
        return max(self.peak_distance, self.delta)

    @property
    def boundary_oscillation(self) -> float:
        vb = self.v.values[self.mesh.boundary]
        return float(np.max(vb) - np.min(vb))

    def density(self) -> ScalarField:
        """rho_n = W e^v / lam_n"""
        with np.errstate(over="ignore", invalid="ignore"):
            values = self.weight * np.exp(self.v.values) / self.lam
        return ScalarField(self.mesh, values, masses=self.cell_masses / self.lam)


@dataclass(frozen=True, eq=False)
class SolutionFamily:
    members: Tuple[FamilyMember, ...]
    sigma: float
    name: str = "family"
    parameter: str = "n"
    mesh_spec: Optional[Dict[str, object]] = None

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ConfigurationError("solution family has no members")
        for i, member in enumerate(self.members):
            if not (math.isfinite(member.lam) and member.lam > 0):
                raise DomainError(f"member {i} has mass {member.lam}; lam_n must be positive and finite")

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[FamilyMember]:
        return iter(self.members)

    @property
    def last(self) -> FamilyMember:
        return self.members[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.members], dtype=float)


# Helper Functions
def _default_radii(member: FamilyMember) -> List[float]:
    top = member.mesh.outer_radius
    floor = 4.0 * member.mesh.min_cell_size
    radii = [top * 0.5 ** k for k in range(48) if top * 0.5 ** k >= floor]
    return sorted(radii)


def _tends_to_infinity(seq: np.ndarray, threshold: float) -> bool:
    if seq.size < 2 or np.isnan(seq).any():
        return False
    return bool(seq[-1] > threshold and seq[-1] > seq[0] and np.all(np.diff(seq) >= -1e-9 * np.abs(seq[1:])))


def _bounded(seq: np.ndarray, threshold: float) -> bool:
    return bool(np.all(np.isfinite(seq)) and np.max(seq) <= threshold)


def extrapolate_lambda(family: SolutionFamily) -> float:
    """Richardson step of lam_n toward p = exp(-sup v_n) = 0 from the last two members"""
    lams = family.column("lam")
    if len(family) < 2:
        return float(lams[-1])
    p = np.exp(-family.column("peak_value"))
    step = lams[-1] - lams[-2]
    if p[-2] == p[-1]:
        return float(lams[-1])
    correction = step * p[-1] / (p[-2] - p[-1])
    if not math.isfinite(correction) or abs(correction) > 10.0 * abs(step):
        logger.debug(f"Richardson correction {correction:.3g} rejected, using the last member")
        return float(lams[-1])
    return float(lams[-1] + correction)


# Concentration and quantization
@dataclass(frozen=True)
class ConcentrationProfile:
    radii: List[float]
    masses: List[float]
    lam: float
    estimate: Optional[float]
    plateau_radius: Optional[float]

    @property
    def interval(self) -> Tuple[float, float]:
        return self.masses[0], self.masses[-1]

    @property
    def beta(self) -> float:
        """Plateau estimate, or the upper end of the interval when there is no plateau"""
        return self.estimate if self.estimate is not None else self.interval[1]


def concentration_mass(member: FamilyMember, radii: Optional[Sequence[float]] = None,
                       plateau_tol: Optional[float] = None) -> ConcentrationProfile:
    """beta_r = integral over B_r(0) of W e^v, with a plateau estimate of the concentrated mass.

    Walking down from the largest radius, the plateau is the run of consecutive radii whose
    masses differ by less than plateau_tol * lam_n; the estimate is the mass at its smallest radius.
    """
    plateau_tol = settings.PLATEAU_TOL if plateau_tol is None else plateau_tol
    radii = sorted(_default_radii(member) if radii is None else (float(r) for r in radii))
    if not radii:
        raise ConfigurationError("no radii to evaluate")
    limit = member.mesh.outer_radius * (1.0 + 1e-12)
    if radii[0] <= 0 or radii[-1] > limit:
        raise ConfigurationError(f"radii must lie in (0, {member.mesh.outer_radius:g}]")

    masses = np.array([float(np.sum(member.cell_masses[member.mesh.ball_mask(r)])) for r in radii])
    masses = np.maximum.accumulate(masses)
    lam = member.lam

    plateau = None
    for k in range(len(radii) - 1, 0, -1):
        if masses[k] - masses[k - 1] >= plateau_tol * lam:
            break
        plateau = k - 1
    if plateau is None:
        logger.debug(f"No mass plateau over radii [{radii[0]:.3g}, {radii[-1]:.3g}]")
        return ConcentrationProfile(radii, masses.tolist(), lam, None, None)
    return ConcentrationProfile(radii, masses.tolist(), lam, float(masses[plateau]), radii[plateau])


def quantization_window(sigma: float, lam_inf: Optional[float] = None) -> Tuple[float, float]:
    """Interval that contains lam_inf for a family concentrating at the vortex"""
    if sigma < 0:
        if lam_inf is not None and lam_inf >= FOUR_PI / abs(sigma):
            raise HypothesisViolationError(
                f"sigma = {sigma} needs lam_inf < 4 pi/|sigma| = {FOUR_PI / abs(sigma):.6g}, got {lam_inf:.6g}"
            )
        return EIGHT_PI / (1.0 + 2.0 * abs(sigma)), EIGHT_PI
    if sigma == 0:
        return EIGHT_PI, EIGHT_PI
    if sigma > 0.5:
        raise HypothesisViolationError(f"quantization windows need sigma <= 1/2, got {sigma}")
    if lam_inf is not None and lam_inf > FOUR_PI / sigma:
        raise HypothesisViolationError(
            f"sigma = {sigma} needs lam_inf <= 4 pi/sigma = {FOUR_PI / sigma:.6g}, got {lam_inf:.6g}"
        )
    upper = FOUR_PI / sigma if sigma == 0.5 else min(EIGHT_PI / (1.0 - 2.0 * sigma), FOUR_PI / sigma)
    return EIGHT_PI, upper


def case_three_window(sigma: float) -> Tuple[float, float, bool]:
    """(lower, upper, upper_closed) for the limit mass of a Case III family"""
    if not 0.0 < sigma < 0.5:
        raise HypothesisViolationError(f"Case III needs sigma in (0, 1/2), got {sigma}")
    if sigma < 0.25:
        return EIGHT_PI, EIGHT_PI / (1.0 - 2.0 * sigma), True
    return EIGHT_PI, FOUR_PI / sigma, False


@dataclass(frozen=True)
class QuantizedMass:
    sigma: float
    points: int
    lam_inf: Optional[float]
    point_mass: Optional[float]
    bounded_above: bool


def homogeneous_quantized_mass(sigma: float, lam_inf: Optional[float] = None, m: int = 1) -> QuantizedMass:
    """Per-point mass 8 pi (1 + lam_inf sigma / 4 pi) and lam_inf = 8 pi m / (1 - 2 sigma)"""
    if m < 1 or int(m) != m:
        raise ConfigurationError(f"number of blow-up points must be a positive integer, got {m}")
    if sigma >= 0.5:
        logger.info(f"sigma = {sigma} >= 1/2: solutions stay bounded above near the vortex")
        return QuantizedMass(sigma=sigma, points=int(m), lam_inf=None, point_mass=None, bounded_above=True)
    closed = EIGHT_PI * m / (1.0 - 2.0 * sigma)
    lam = closed if lam_inf is None else lam_inf
    return QuantizedMass(
        sigma=sigma,
        points=int(m),
        lam_inf=closed,
        point_mass=EIGHT_PI * (1.0 + lam * sigma / FOUR_PI),
        bounded_above=False,
    )


# Pohozaev identity
def _pohozaev_terms_disk(member: FamilyMember, r: float) -> Tuple[float, float, float]:
    mesh = member.mesh
    radii, v = mesh.radii, member.v.values
    k = int(np.searchsorted(radii, r))
    if k < 8:
        logger.warning(f"Pohozaev radius {r:g} spans only {k} nodes; the residual is not resolved")
    spline = CubicSpline(radii, v, bc_type=((1, 0.0), "not-a-knot"))
    eps2, alpha, scale = member.eps ** 2, member.alpha, member.scale

    dv = float(spline(r, 1))
    lhs = -math.pi * r * r * dv * dv
    boundary = 2.0 * math.pi * r * r * scale * (eps2 + r * r) ** alpha * math.exp(float(spline(r)))

    # (2W + x.grad W) = K q^(alpha-1) (2q + 2 alpha r^2) with q = eps^2 + r^2
    def bulk_density(s):
        q = eps2 + s * s
        return 2.0 * math.pi * s * scale * q ** (alpha - 1.0) * (2.0 * q + 2.0 * alpha * s * s) * np.exp(spline(s))

    edges = np.append(radii[radii < r], r)
    nodes, gl_weights = np.polynomial.legendre.leggauss(4)
    bulk = 0.0
    if edges.size > 1:
        # first segment: weight integrated exactly, e^v at the midpoint
        r1 = edges[1]
        q_lo, q_hi = eps2, eps2 + r1 * r1
        w0, _ = power_log_integrals(np.array([q_lo]), np.array([q_hi]), alpha)
        bulk += math.pi * scale * (2.0 + 2.0 * alpha) * float(w0[0]) * math.exp(float(spline(0.5 * r1)))
        if eps2 > 0 and alpha != 0.0:
            w1, _ = power_log_integrals(np.array([q_lo]), np.array([q_hi]), alpha - 1.0)
            bulk -= math.pi * scale * 2.0 * alpha * eps2 * float(w1[0]) * math.exp(float(spline(0.5 * r1)))
        lo, hi = edges[1:-1], edges[2:]
        if lo.size:
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            s = mid[:, None] + half[:, None] * nodes[None, :]
            bulk += float(np.sum(half * (bulk_density(s) @ gl_weights)))
    return lhs, boundary, bulk


def _pohozaev_terms_grid(member: FamilyMember, r: float) -> Tuple[float, float, float]:
    mesh = member.mesh
    ny, nx = mesh.shape
    xs = mesh.x.reshape(ny, nx)[0, :]
    ys = mesh.y.reshape(ny, nx)[:, 0]
    if r < 4.0 * mesh.h:
        logger.warning(f"Pohozaev radius {r:g} is below four grid spacings; the residual is not resolved")
    V = member.v.values.reshape(ny, nx)
    gy, gx = np.gradient(V, ys, xs)

    n_theta = max(256, int(4.0 * math.pi * r / mesh.h))
    theta = np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False)
    nu = np.column_stack([np.cos(theta), np.sin(theta)])
    pts = np.column_stack([r * nu[:, 1], r * nu[:, 0]])
    ux = RegularGridInterpolator((ys, xs), gx)(pts)
    uy = RegularGridInterpolator((ys, xs), gy)(pts)
    vals = RegularGridInterpolator((ys, xs), V)(pts)
    ds = 2.0 * math.pi * r / n_theta

    normal = ux * nu[:, 0] + uy * nu[:, 1]
    lhs = r * float(np.sum(0.5 * (ux ** 2 + uy ** 2) - normal ** 2) * ds)
    w_r = member.scale * (member.eps ** 2 + r * r) ** member.alpha
    boundary = r * w_r * float(np.sum(np.exp(vals)) * ds)

    inside = mesh.r <= r
    q = member.eps ** 2 + mesh.r[inside] ** 2
    radial = member.scale * q ** (member.alpha - 1.0) * (2.0 * q + 2.0 * member.alpha * mesh.r[inside] ** 2)
    bulk = float(np.sum(radial * np.exp(member.v.values[inside]) * mesh.weights[inside]))
    return lhs, boundary, bulk


def pohozaev_residual(member: FamilyMember, r: float) -> float:
    """|LHS - RHS| / (1 + |RHS|) for the Pohozaev identity on B_r(0):

    r int_{dB_r} (|grad v|^2/2 - v_nu^2) = r int_{dB_r} W e^v - int_{B_r} (2W + x.grad W) e^v
    """
    if not 0.0 < r < member.mesh.outer_radius:
        raise ConfigurationError(f"Pohozaev radius must lie in (0, {member.mesh.outer_radius:g}), got {r}")
    if member.mesh.kind == DISK:
        lhs, boundary, bulk = _pohozaev_terms_disk(member, r)
    else:
        lhs, boundary, bulk = _pohozaev_terms_grid(member, r)
    rhs = boundary - bulk
    return abs(lhs - rhs) / (1.0 + abs(rhs))


# sup + C inf
@dataclass(frozen=True)
class SupInfReport:
    values: List[float]
    c0: float
    floor: float
    alpha_inf: float
    compact_radius: float
    growth: float = 0.0

    @property
    def maximum(self) -> float:
        return max(self.values)

    @property
    def spread(self) -> float:
        mean = float(np.mean(self.values))
        return (max(self.values) - min(self.values)) / abs(mean) if mean != 0 else math.inf

    @property
    def bounded(self) -> bool:
        return self.growth <= GROWTH_TOL


def sup_plus_cinf_floor(alpha_inf: float) -> float:
    if not -1.0 < alpha_inf < 1.0:
        raise HypothesisViolationError(f"sup + C inf needs alpha_inf in (-1, 1), got {alpha_inf:.6g}")
    return max(1.0, (1.0 + alpha_inf) / (1.0 - alpha_inf))


def sup_plus_cinf_check(family: SolutionFamily, compact_radius: float = 0.5, c0: Optional[float] = None,
                        alpha_inf: Optional[float] = None) -> SupInfReport:
    """sup over B_r'(0) of v_n plus C0 times inf over the domain of v_n, per member.

    The family is uniformly bounded when the combination does not grow with sup v_n: growth is
    (max_n value_n - value_1) / (sup v_N - sup v_1).
    """
    alpha_inf = family.last.alpha if alpha_inf is None else alpha_inf
    floor = sup_plus_cinf_floor(alpha_inf)
    c0 = 1.01 * floor if c0 is None else c0
    if c0 <= floor:
        raise HypothesisViolationError(f"C0 = {c0:g} must exceed max(1, (1+alpha)/(1-alpha)) = {floor:.6g}")
    if not 0.0 < compact_radius < family.last.mesh.outer_radius:
        raise ConfigurationError(f"compact set radius must lie inside the domain, got {compact_radius}")

    values = []
    for member in family:
        inner = member.mesh.r <= compact_radius
        values.append(float(np.max(member.v.values[inner]) + c0 * np.min(member.v.values)))
    peaks = family.column("peak_value")
    rise = peaks[-1] - peaks[0]
    growth = (max(values) - values[0]) / rise if rise > 0 else 0.0
    return SupInfReport(values=values, c0=c0, floor=floor, alpha_inf=alpha_inf,
                        compact_radius=compact_radius, growth=float(growth))


# Local decay outside the bubble core
@dataclass(frozen=True)
class LsDecayResult:
    hypothesis_holds: bool
    max_excess: float
    outer_fraction: float
    max_fraction: float

    @property
    def passed(self) -> bool:
        return self.hypothesis_holds and self.outer_fraction <= self.max_fraction

    def __bool__(self) -> bool:
        return self.passed


def ls_decay_check(member: FamilyMember, d: float, c: float = 0.0,
                   max_fraction: float = LS_OUTER_FRACTION) -> LsDecayResult:
    """Check v + 2(1+alpha) log|x| <= C on 4d <= |x| <= 1 and measure the mass outside B_4d"""
    mesh = member.mesh
    annulus = (mesh.r >= 4.0 * d) & (mesh.r <= 1.0)
    if not annulus.any():
        excess = -math.inf
    else:
        decay = member.v.values[annulus] + 2.0 * (1.0 + member.alpha) * np.log(mesh.r[annulus])
        excess = float(np.max(decay) - c)
    outer = float(np.sum(member.cell_masses[~mesh.ball_mask(4.0 * d)])) / member.lam
    return LsDecayResult(hypothesis_holds=excess <= 0.0, max_excess=excess,
                         outer_fraction=outer, max_fraction=max_fraction)


# High energy
@dataclass(frozen=True)
class EnergyTrend:
    energies: List[float]
    excess: List[float]
    peaks: List[float]
    increasing: bool
    ratio: float
    slope: Optional[float]
    threshold: float

    @property
    def unbounded(self) -> bool:
        return self.increasing and self.ratio > self.threshold


def high_energy_divergence(family: SolutionFamily, sigma: Optional[float] = None,
                           ratio_threshold: Optional[float] = None) -> EnergyTrend:
    """E_n = E(rho_n) - E_sigma,n(rho_n) for rho_n = W_n e^(v_n) / lam_n.

    The ratio compares the energy above the uniform state of the last and first members.
    """
    sigma = family.sigma if sigma is None else sigma
    threshold = settings.RATIO_THRESHOLD if ratio_threshold is None else ratio_threshold
    if sigma >= 0.5:
        raise HypothesisViolationError(f"energy divergence is stated for sigma < 1/2, got {sigma}")

    energies, excess = [], []
    for member in family:
        shape = max(0.0, FOUR_PI * member.alpha / sigma) if sigma != 0.0 else 0.0
        e = regularized_energy(member.density(), sigma, member.eps, member.mesh, lam=shape)
        energies.append(e)
        excess.append(e - e0_uniform(member.mesh, sigma, member.eps))
    peaks = family.column("peak_value").tolist()

    increasing = len(energies) > 1 and bool(np.all(np.diff(energies) > 0))
    if excess[0] > 0:
        ratio = excess[-1] / excess[0]
    else:
        ratio = math.inf if excess[-1] > 0 else 0.0
    slope = float(np.polyfit(peaks, energies, 1)[0]) if len(energies) > 1 and np.ptp(peaks) > 0 else None
    return EnergyTrend(energies=energies, excess=excess, peaks=peaks, increasing=increasing,
                       ratio=float(ratio), slope=slope, threshold=threshold)


# Profile classification
@dataclass
class BlowupReport:
    sigma: float
    members: int
    case: str
    regime: str
    blowing_up: bool
    beta: Optional[float]
    beta_interval: Tuple[float, float]
    lambda_inf: float
    lambdas: List[float]
    peaks: List[float]
    deltas: List[float]
    eps_ratios: List[float]
    x_ratios: List[float]
    oscillations: List[float]
    pohozaev: List[float]
    window: Optional[Tuple[float, float]] = None
    lambda_in_window: Optional[bool] = None
    beta_in_window: Optional[bool] = None
    case_three_window: Optional[Tuple[float, float, bool]] = None
    in_case_three_window: Optional[bool] = None
    fit: Dict[str, float] = field(default_factory=dict)
    fit_residual: Optional[float] = None
    energy_trend: Optional[EnergyTrend] = None
    notes: List[str] = field(default_factory=list)

    @property
    def high_energy(self) -> Optional[bool]:
        return None if self.energy_trend is None else self.energy_trend.unbounded


def _fit_nodes(member: FamilyMember) -> np.ndarray:
    mesh = member.mesh
    cx, cy = member.peak
    dist = np.hypot(mesh.x - cx, mesh.y - cy)
    # innermost two cells excluded
    inner = dist > (1.5 * mesh.h if mesh.kind != DISK else mesh.radii[1] * (1.0 + 1e-9))
    outer = mesh.r <= 0.9 * mesh.outer_radius
    idx = np.flatnonzero(inner & outer & ~mesh.boundary)
    if idx.size > FIT_MAX_POINTS:
        idx = idx[:: int(math.ceil(idx.size / FIT_MAX_POINTS))]
    return idx


def _fit_bubble_like(member: FamilyMember, theta: float, length: float) -> Tuple[Dict[str, float], float]:
    """Fit v(x_n) + c - 2 log(1 + gamma theta^(2(1+alpha)) length^(-kappa) |x - x_n|^kappa)"""
    idx = _fit_nodes(member)
    if idx.size < 4:
        raise NonConvergenceError("too few nodes in the fitting annulus")
    cx, cy = member.peak
    log_d = np.log(np.hypot(member.mesh.x[idx] - cx, member.mesh.y[idx] - cy))
    kappa = member.lam / FOUR_PI
    base = 2.0 * (1.0 + member.alpha) * math.log(theta) - kappa * math.log(length)
    target = member.v.values[idx] - member.peak_value

    def model(p):
        return p[1] - 2.0 * np.logaddexp(0.0, p[0] + base + kappa * log_d)

    fit = least_squares(lambda p: model(p) - target, x0=[math.log(0.125), 0.0], x_scale="jac")
    residual = float(np.max(np.abs(model(fit.x) - target)))
    params = {"theta": theta, "gamma": math.exp(fit.x[0]), "offset": float(fit.x[1]),
              "kappa": kappa, "length": length}
    return params, residual


def _match_bubble(member: FamilyMember, lam_inf: float) -> Tuple[Dict[str, float], float]:
    """Compare v_n - v_n(x_n) with the entire bubble (t0 = eps_n/delta_n) of mass lam_inf"""
    eps0 = member.eps / member.delta
    c = bubble_center_for_mass(member.alpha, eps0, lam_inf)
    bubble = bubble_solve(member.alpha, eps0, c)
    idx = _fit_nodes(member)
    cx, cy = member.peak
    y = np.hypot(member.mesh.x[idx] - cx, member.mesh.y[idx] - cy) / member.delta
    predicted = bubble.profile(y) - c
    residual = float(np.max(np.abs(member.v.values[idx] - member.peak_value - predicted)))
    params = {"eps0": eps0, "beta_tilde": bubble.beta, "c": c, "alpha": member.alpha}
    return params, residual


def _regime(sigma: float, lam_inf: float) -> str:
    if not 0.0 < sigma < 0.5:
        return OUTSIDE_HYPOTHESES
    limit = FOUR_PI / sigma
    if lam_inf > limit * (1.0 + WINDOW_TOL):
        return NO_CONCENTRATION
    if sigma >= 0.25 and abs(lam_inf - limit) <= WINDOW_TOL * limit:
        return OPEN_REGIME
    return CONCENTRATION


def _in_window(value: Optional[float], window: Tuple[float, float]) -> Optional[bool]:
    if value is None:
        return None
    return bool(window[0] * (1.0 - WINDOW_TOL) <= value <= window[1] * (1.0 + WINDOW_TOL))


def classify_profile(family: SolutionFamily, ratio_threshold: Optional[float] = None,
                     pohozaev_radius: Optional[float] = None, threads: int = 1) -> BlowupReport:
    """Ratio tests eps_n/t_n and |x_n|/delta_n, profile fit of the last member and windows.

    Case I: eps_n/t_n -> infinity. Case II: eps_n/t_n bounded and |x_n|/delta_n -> infinity.
    Case III: both bounded. "-> infinity" means increasing and above the threshold at the last
    member; "bounded" means below it throughout.
    """
    threshold = settings.RATIO_THRESHOLD if ratio_threshold is None else ratio_threshold
    sigma = family.sigma
    last = family.last

    peaks = family.column("peak_value")
    deltas = family.column("delta")
    eps_ratios = family.column("eps") / family.column("t")
    x_ratios = family.column("peak_distance") / deltas
    blowing_up = bool(len(family) > 1 and np.all(np.diff(peaks) > 0)
                      and peaks[-1] - peaks[0] > math.log(threshold))

    radius = 0.5 * last.mesh.outer_radius if pohozaev_radius is None else pohozaev_radius
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        pohozaev = list(pool.map(lambda m: pohozaev_residual(m, radius), family.members))

    lam_inf = extrapolate_lambda(family)
    profile = concentration_mass(last)
    report = BlowupReport(
        sigma=sigma,
        members=len(family),
        case=NO_CASE,
        regime=NO_BLOWUP,
        blowing_up=blowing_up,
        beta=profile.estimate,
        beta_interval=profile.interval,
        lambda_inf=lam_inf,
        lambdas=family.column("lam").tolist(),
        peaks=peaks.tolist(),
        deltas=deltas.tolist(),
        eps_ratios=eps_ratios.tolist(),
        x_ratios=x_ratios.tolist(),
        oscillations=family.column("boundary_oscillation").tolist(),
        pohozaev=pohozaev,
    )
    if profile.estimate is not None and profile.estimate > lam_inf + 1e-6 * max(1.0, lam_inf):
        report.notes.append("beta estimate exceeds the lam_inf estimate")
        logger.warning(f"beta = {profile.estimate:.6g} exceeds lam_inf = {lam_inf:.6g}")

    try:
        report.window = quantization_window(sigma)
        report.lambda_in_window = _in_window(lam_inf, report.window)
        report.beta_in_window = _in_window(profile.estimate, report.window)
    except HypothesisViolationError as e:
        report.notes.append(e.detail)

    if sigma < 0.5:
        try:
            report.energy_trend = high_energy_divergence(family, sigma, threshold)
        except DomainError as e:
            report.notes.append(f"energy trend unavailable: {e.detail}")

    if not blowing_up:
        logger.info(f"Family '{family.name}' shows no blow-up (sup v from {peaks[0]:.3g} to {peaks[-1]:.3g})")
        return report

    report.regime = _regime(sigma, lam_inf)
    if report.regime != CONCENTRATION:
        if report.regime == NO_CONCENTRATION:
            report.notes.append("lam_inf above 4 pi/sigma: blow-up without concentration is flagged, not fitted")
        elif report.regime == OPEN_REGIME:
            report.notes.append("lam_inf at 4 pi/sigma with sigma in [1/4, 1/2]: outside the range the profile classification covers")
        return report

    if _tends_to_infinity(eps_ratios, threshold):
        report.case = CASE_I
    elif _bounded(eps_ratios, threshold):
        if _tends_to_infinity(x_ratios, threshold):
            report.case = CASE_II
        elif _bounded(x_ratios, threshold):
            report.case = CASE_III
    if report.case == NO_CASE:
        report.notes.append("ratio tests are indeterminate")
        return report

    try:
        if report.case == CASE_I:
            report.fit, report.fit_residual = _fit_bubble_like(last, last.eps / last.delta, last.eps)
        elif report.case == CASE_II:
            report.fit, report.fit_residual = _fit_bubble_like(
                last, last.peak_distance / last.delta, last.peak_distance)
        else:
            report.case_three_window = case_three_window(sigma)
            lo, hi, closed = report.case_three_window
            report.in_case_three_window = bool(
                lo * (1.0 - WINDOW_TOL) < lam_inf and (lam_inf <= hi * (1.0 + WINDOW_TOL) if closed
                                                      else lam_inf < hi * (1.0 + WINDOW_TOL)))
            report.fit, report.fit_residual = _match_bubble(last, lam_inf)
    except (DomainError, NonConvergenceError) as e:
        logger.warning(f"Profile fit for Case {report.case} failed: {e.detail}")
        report.notes.append(f"profile fit failed: {e.detail}")

    logger.info(f"Family '{family.name}': Case {report.case}, lam_inf = {lam_inf:.6g}")
    return report
