"""Exact oracles: radial solutions on the unit disk and entire Liouville bubbles.

Disk branch (sigma <= 0, 0 <= lam < lambda_sigma), with a = sigma*lam/(4 pi) and
s = lam / (8 pi (1 + a)):

    gamma^2     = s / (1 - s)
    lam * psi   = 2 log((1 + gamma^2) / (1 + gamma^2 r^(2(1+a))))
    rho         = (1+a)(1+gamma^2) r^(2a) / (pi (1 + gamma^2 r^(2(1+a)))^2)
    int H e^(lam psi) = pi (1 + gamma^2) / (1 + a)

Bubbles solve -Laplace(phi) = (t0^2 + |x|^2)^alpha e^phi on the whole plane and are
integrated radially in s = log r.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from vortexmf.core.errors import BubbleDivergenceError, DomainError, NonConvergenceError
from vortexmf.domain import DISK, DomainMesh, ScalarField

logger = logging.getLogger(__name__)

EIGHT_PI = 8.0 * math.pi
SERIES_BELOW = 1e-4


def lambda_sigma(sigma: float) -> float:
    """Sharp existence threshold: 8 pi / (1 + 2|sigma|) for sigma < 0, else 8 pi"""
    if sigma < 0:
        return EIGHT_PI / (1.0 + 2.0 * abs(sigma))
    return EIGHT_PI


# Helper Functions
def _log_ratio(s: float, log_gap: float) -> Tuple[float, float]:
    """Return (L/s, (1 + L/s)/s) with L = log(1 - s), by series for small s"""
    if s < SERIES_BELOW:
        q2 = -(0.5 + s / 3.0 + s ** 2 / 4.0 + s ** 3 / 5.0)
        return -1.0 + s * q2, q2
    q1 = log_gap / s
    return q1, (1.0 + q1) / s


def _check_branch(sigma: float, lam: float) -> None:
    if sigma > 0:
        raise DomainError(f"closed-form disk solutions are for sigma <= 0, got {sigma}")
    if lam < 0:
        raise DomainError(f"lam must be nonnegative, got {lam}")
    limit = lambda_sigma(sigma)
    if lam >= limit:
        raise DomainError(f"no solution on the disk for lam >= lambda_sigma = {limit:.6g} (got {lam:.6g})")


@dataclass(frozen=True)
class DiskScalars:
    sigma: float
    lam: float
    a: float
    s: float
    log_gap: float

    @property
    def gamma2(self) -> float:
        return self.s * math.exp(-self.log_gap)

    @property
    def energy(self) -> float:
        _, q2 = _log_ratio(self.s, self.log_gap)
        return -q2 / (EIGHT_PI * (1.0 + self.a))

    @property
    def vortex_energy(self) -> float:
        q1, _ = _log_ratio(self.s, self.log_gap)
        return -2.0 * self.sigma * q1 / (EIGHT_PI * (1.0 + self.a))

    @property
    def total_energy(self) -> float:
        return self.energy - self.vortex_energy

    @property
    def entropy(self) -> float:
        q1, _ = _log_ratio(self.s, self.log_gap)
        a = self.a
        return 2.0 + math.log(math.pi / (1.0 + a)) + (2.0 - a / (1.0 + a)) * q1 - self.log_gap


def _scalars(sigma: float, lam: float) -> DiskScalars:
    _check_branch(sigma, lam)
    denom = EIGHT_PI + 2.0 * sigma * lam
    s = lam / denom
    log_gap = math.log((EIGHT_PI + (2.0 * sigma - 1.0) * lam) / denom)
    return DiskScalars(sigma=sigma, lam=lam, a=sigma * lam / (4.0 * math.pi), s=s, log_gap=log_gap)


def disk_branch_by_gap(sigma: float, log_gap: float) -> DiskScalars:
    """Branch point with log(1 - s) = log_gap; reaches arbitrarily large energies"""
    if sigma > 0:
        raise DomainError(f"closed-form disk solutions are for sigma <= 0, got {sigma}")
    if log_gap >= 0:
        raise DomainError(f"log_gap must be negative, got {log_gap}")
    s = -math.expm1(log_gap)
    lam = EIGHT_PI * s / (1.0 - 2.0 * sigma * s)
    return DiskScalars(sigma=sigma, lam=lam, a=sigma * lam / (4.0 * math.pi), s=s, log_gap=log_gap)


# Disk branch
@dataclass(frozen=True)
class DiskSolution:
    sigma: float
    lam: float
    a: float
    gamma2: float

    @property
    def normalizer(self) -> float:
        """Integral of H e^(lam psi) over the unit disk"""
        return math.pi * (1.0 + self.gamma2) / (1.0 + self.a)

    def _t(self, r):
        return np.asarray(r, dtype=float) ** (2.0 * (1.0 + self.a))

    def lam_psi(self, r) -> np.ndarray:
        return 2.0 * (math.log1p(self.gamma2) - np.log1p(self.gamma2 * self._t(r)))

    def psi(self, r) -> np.ndarray:
        if self.lam == 0.0:
            return (1.0 - np.asarray(r, dtype=float) ** 2) / (4.0 * math.pi)
        return self.lam_psi(r) / self.lam

    def rho(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            weight = r ** (2.0 * self.a)
        return (1.0 + self.a) * (1.0 + self.gamma2) * weight / (math.pi * (1.0 + self.gamma2 * self._t(r)) ** 2)

    def mass_in_ball(self, r) -> np.ndarray:
        t = self._t(r)
        return (1.0 + self.gamma2) * t / (1.0 + self.gamma2 * t)

    def cell_masses(self, mesh: DomainMesh) -> np.ndarray:
        """Exact integral of rho over every control volume of a radial mesh"""
        if mesh.kind != DISK:
            raise DomainError("closed-form cell masses need a radial disk mesh")
        return np.diff(self.mass_in_ball(mesh.faces))

    def density(self, mesh: DomainMesh) -> ScalarField:
        return ScalarField(mesh, self.rho(mesh.r), masses=self.cell_masses(mesh))

    def stream(self, mesh: DomainMesh) -> ScalarField:
        return ScalarField(mesh, self.psi(mesh.r))

    def v(self, r) -> np.ndarray:
        """Liouville form v = lam*psi + log(lam/Z), solving -Laplace(v) = |x|^(2a) e^v"""
        if self.lam == 0.0:
            raise DomainError("the Liouville form needs lam > 0")
        return self.lam_psi(r) + math.log(self.lam / self.normalizer)

    @property
    def delta(self) -> float:
        """Concentration scale: delta^(2(1+a)) = exp(-v(0))"""
        return math.exp(-float(self.v(0.0)) / (2.0 * (1.0 + self.a)))


def disk_solution(sigma: float, lam: float) -> DiskSolution:
    scalars = _scalars(sigma, lam)
    return DiskSolution(sigma=sigma, lam=lam, a=scalars.a, gamma2=lam / (EIGHT_PI + (2.0 * sigma - 1.0) * lam))


def disk_energy(sigma: float, lam: float) -> float:
    """Energy 1/2 int rho G[rho] of the disk solution"""
    return _scalars(sigma, lam).energy


def disk_vortex_energy(sigma: float, lam: float) -> float:
    """sigma * int rho G(., 0) of the disk solution"""
    return _scalars(sigma, lam).vortex_energy


def disk_total_energy(sigma: float, lam: float) -> float:
    """Microcanonical energy: disk_energy minus the vortex interaction"""
    return _scalars(sigma, lam).total_energy


def disk_entropy(sigma: float, lam: float) -> float:
    return _scalars(sigma, lam).entropy


def disk_lambda_for_energy(sigma: float, energy: float, total: bool = False) -> float:
    """Invert the (monotone) energy map of the disk branch"""
    def at(lam):
        sc = _scalars(sigma, lam)
        return sc.total_energy if total else sc.energy

    e_min = at(0.0)
    if energy < e_min:
        raise DomainError(f"energy {energy:.6g} below the uniform-state value {e_min:.6g}")
    if energy == e_min:
        return 0.0
    hi = lambda_sigma(sigma)
    upper = hi * (1.0 - 1e-15)
    if at(upper) < energy:
        raise DomainError(f"energy {energy:.6g} out of double-precision reach of the branch")
    return brentq(lambda lam: at(lam) - energy, 0.0, upper, xtol=1e-14, rtol=1e-15, maxiter=500)


def disk_entropy_asymptote(sigma: float, energy: float) -> float:
    """Large-energy expansion of the entropy along the disk branch.

    S(E) = -8 pi E + 2 - c + log(pi c) + e^(-L) (-b L + b/c - b - c),
    c = 1/(1+a), b = 1 - c, L = 8 pi (1+a) E + 1, with a the limiting exponent
    -2|sigma|/(1+2|sigma|). The expansion is meaningful for E >= 1.

    The constant follows from the closed-form E and S of the branch: for sigma = 0 it is
    1 + log pi (S = -8 pi E + 1 + log pi - e^(-1 - 8 pi E)), two less than the 3 + log pi
    sometimes quoted for this expansion.
    """
    if sigma > 0:
        raise DomainError(f"the disk branch is defined for sigma <= 0, got {sigma}")
    a = -2.0 * abs(sigma) / (1.0 + 2.0 * abs(sigma))
    c = 1.0 / (1.0 + a)
    b = 1.0 - c
    big_l = EIGHT_PI * (1.0 + a) * energy + 1.0
    correction = math.exp(-big_l) * (-b * big_l + b / c - b - c)
    return -EIGHT_PI * energy + 2.0 - c + math.log(math.pi * c) + correction


# Bubbles
@dataclass(frozen=True, eq=False)
class BubbleSolution:
    alpha: float
    t0: float
    c: float
    r_max: float
    r: np.ndarray
    phi: np.ndarray
    mass: float
    tail_mass: float
    identity_lhs: float
    decay_slope: float
    shell_fraction: float

    @property
    def beta(self) -> float:
        return self.mass / (2.0 * math.pi)

    @property
    def identity_rhs(self) -> float:
        return math.pi * self.beta * (self.beta - 4.0)

    @property
    def decay_exponent(self) -> float:
        """beta - 2(1 + alpha): the weighted density decays like r^-(2 + this)"""
        return self.beta - 2.0 * (1.0 + self.alpha)

    def weight(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return (self.t0 ** 2 + r ** 2) ** self.alpha

    @cached_property
    def _spline(self) -> CubicSpline:
        return CubicSpline(np.log(self.r), self.phi)

    def profile(self, r) -> np.ndarray:
        """phi(r), continued by phi(R) - beta log(r/R) past the integration range"""
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inner = r <= self.r[0]
        outer = r >= self.r[-1]
        mid = ~(inner | outer)
        out[inner] = self.c
        out[mid] = self._spline(np.log(r[mid]))
        out[outer] = self.phi[-1] - self.beta * np.log(r[outer] / self.r[-1])
        return out


def bubble_mass_window(alpha: float, t0: float) -> Tuple[float, float]:
    """Admissible total masses; both ends equal 8 pi (1 + alpha) when t0 = 0"""
    if t0 == 0.0:
        return EIGHT_PI * (1.0 + alpha), EIGHT_PI * (1.0 + alpha)
    return tuple(sorted((EIGHT_PI * (1.0 + alpha), EIGHT_PI)))


def _core_scale(alpha: float, t0: float, c: float) -> float:
    scales = [math.exp(-c / (2.0 * (1.0 + alpha)))]
    if t0 > 0:
        scales.append(math.exp(-0.5 * c) * t0 ** (-alpha))
        scales.append(t0)
    return min(scales)


def _integrate_bubble(alpha, t0, c, r0, r_max, rtol, atol):
    q0 = t0 ** 2
    e1 = alpha + 1.0
    if t0 > 0:
        m0 = math.pi * math.exp(c) * t0 ** (2.0 * e1) * math.expm1(e1 * math.log1p(r0 ** 2 / q0)) / e1
    else:
        m0 = math.pi * math.exp(c) * r0 ** (2.0 * e1) / e1
    p0 = -m0 / (2.0 * math.pi)
    phi0 = c + (p0 / (2.0 * e1) if t0 == 0 else 0.5 * p0)

    def rhs(s, y):
        r = math.exp(s)
        q = q0 + r * r
        source = r * r * q ** alpha * math.exp(y[0])
        return [y[1], -source, 4.0 * math.pi * alpha * source * r * r / q]

    sol = solve_ivp(rhs, (math.log(r0), math.log(r_max)), [phi0, p0, 0.0],
                    method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise NonConvergenceError(f"bubble integration failed: {sol.message}")
    return sol


def bubble_solve(alpha: float, t0: float, c: float, r_max: Optional[float] = None,
                 rtol: float = 1e-10, atol: float = 1e-12, n_samples: int = 4001) -> BubbleSolution:
    """Radial shooting for -phi'' - phi'/r = (t0^2 + r^2)^alpha e^phi, phi(0) = c, phi'(0) = 0"""
    if alpha <= -1.0:
        raise DomainError(f"bubble exponent alpha must be > -1, got {alpha}")
    if t0 < 0:
        raise DomainError(f"t0 must be nonnegative, got {t0}")
    scale = _core_scale(alpha, t0, c)
    r0 = 1e-7 * min(scale, 1.0)
    r_max = 1e8 * max(1.0, t0, math.exp(-c / (2.0 * (1.0 + alpha)))) if r_max is None else r_max
    if r_max <= 10.0 * r0:
        raise DomainError(f"r_max = {r_max} is too small")

    for attempt in range(4):
        sol = _integrate_bubble(alpha, t0, c, r0, r_max, rtol, atol)
        s_end = math.log(r_max)
        phi_end, p_end, lhs_end = sol.y[:, -1]
        m_end = -2.0 * math.pi * p_end
        m_half = -2.0 * math.pi * float(sol.sol(s_end - math.log(2.0))[1])
        shell = (m_end - m_half) / m_end
        if shell < 1e-8:
            break
        logger.debug(f"Bubble alpha={alpha} t0={t0}: shell mass fraction {shell:.2e}, extending r_max")
        r_max *= 1e4
    else:
        logger.warning(f"Bubble alpha={alpha} t0={t0} c={c}: shell mass fraction {shell:.2e} at r_max={r_max:.3g}")

    q_end = t0 ** 2 + r_max ** 2
    alpha_eff = alpha * r_max ** 2 / q_end
    flux = 2.0 * math.pi * r_max ** 2 * q_end ** alpha * math.exp(phi_end)
    b = m_end - 4.0 * math.pi * (1.0 + alpha_eff)
    disc = b * b + 8.0 * math.pi * flux
    tail = (2.0 * math.pi * flux) * 2.0 / (b + math.sqrt(disc)) if b > 0 else 0.5 * (-b + math.sqrt(disc))
    mass = m_end + tail
    exponent = mass / (2.0 * math.pi) - 2.0 * (1.0 + alpha)
    if exponent <= 0.0 or tail > 1e-3 * mass:
        raise BubbleDivergenceError(
            f"bubble mass does not converge (alpha={alpha}, t0={t0}, c={c}): "
            f"decay exponent {exponent:.4g}, tail {tail:.3g}"
        )

    s_fit = np.linspace(math.log(r_max / 4.0), s_end, 64)
    r_fit = np.exp(s_fit)
    slope = float(np.polyfit(np.log(r_fit + 1.0), sol.sol(s_fit)[0], 1)[0])

    s_grid = np.linspace(math.log(r0), s_end, n_samples)
    profile = sol.sol(s_grid)[0]
    return BubbleSolution(
        alpha=alpha,
        t0=t0,
        c=c,
        r_max=r_max,
        r=np.exp(s_grid),
        phi=profile,
        mass=mass,
        tail_mass=tail,
        identity_lhs=lhs_end + 2.0 * alpha_eff * tail,
        decay_slope=slope,
        shell_fraction=shell,
    )


def bubble_identity_residual(b: BubbleSolution) -> float:
    """|LHS - RHS| / (1 + |RHS|) for 2 alpha int |x|^2 (t0^2+|x|^2)^(alpha-1) e^phi = pi beta (beta - 4)"""
    rhs = b.identity_rhs
    return abs(b.identity_lhs - rhs) / (1.0 + abs(rhs))


def bubble_center_for_mass(alpha: float, t0: float, target_mass: float) -> float:
    """Center value c whose bubble has the requested total mass (t0 > 0)"""
    lo, hi = bubble_mass_window(alpha, t0)
    if t0 <= 0 or not lo < target_mass < hi:
        raise DomainError(f"mass {target_mass:.6g} outside the open window ({lo:.6g}, {hi:.6g})")

    def gap(c):
        return bubble_solve(alpha, t0, c).mass - target_mass

    left, right = -4.0, 4.0
    for _ in range(20):
        g_left, g_right = gap(left), gap(right)
        if g_left * g_right < 0:
            return brentq(gap, left, right, xtol=1e-10)
        left, right = left - 4.0, right + 4.0
    raise NonConvergenceError(f"no bubble center found for mass {target_mass:.6g}")
