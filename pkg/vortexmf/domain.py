"""Meshes, Dirichlet Poisson solves, Green functions and the singular vortex weight.

Two discretizations are supported:

* ``disk-radial``: radial finite volumes on the unit disk. Node 0 sits at the origin,
  node N on the boundary, and cell i spans the annulus between the arithmetic
  midpoints of its neighbours. Fluxes are 2*pi*r_face/dr, which makes the scheme
  exact for constant sources.
* ``grid-2d``: the 5-point Laplacian on a rectangle with trapezoid (cell-area)
  quadrature weights, so that weights sum to the rectangle area exactly.

Densities are passed around as cell masses ``b_i = integral of rho over cell i``;
the stiffness matrix then satisfies ``A psi = b`` on interior nodes.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from vortexmf.core.config import settings
from vortexmf.core.errors import ConfigurationError, DomainError, InternalError
from vortexmf.schemas.physics import WeightSpec

logger = logging.getLogger(__name__)

DISK = "disk-radial"
GRID = "grid-2d"

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True, eq=False)
class DomainMesh:
    kind: str
    x: np.ndarray
    y: np.ndarray
    boundary: np.ndarray
    weights: np.ndarray
    area: float
    origin_index: int
    stiffness_full: sparse.csr_matrix
    radii: Optional[np.ndarray] = None
    faces: Optional[np.ndarray] = None
    shape: Optional[Tuple[int, int]] = None
    h: Optional[float] = None
    grading: Optional[str] = None
    center: Tuple[float, float] = (0.0, 0.0)

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]

    @cached_property
    def r(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @cached_property
    def stiffness(self) -> sparse.csc_matrix:
        """Interior-interior block of the stiffness matrix"""
        idx = self.interior
        return self.stiffness_full[idx][:, idx].tocsc()

    @cached_property
    def _coupling(self) -> sparse.csr_matrix:
        return self.stiffness_full[self.interior][:, self.boundary_nodes].tocsr()

    @cached_property
    def _lu(self):
        try:
            return splu(self.stiffness)
        except RuntimeError as e:
            logger.error(f"Stiffness factorization failed: {str(e)}", exc_info=True)
            raise InternalError(f"singular stiffness matrix on {self.kind} mesh") from e

    @cached_property
    def min_cell_size(self) -> float:
        if self.kind == DISK:
            return float(np.min(np.diff(self.radii)))
        return float(self.h)

    @cached_property
    def outer_radius(self) -> float:
        """Distance from the origin to the closest boundary node"""
        return float(np.min(self.r[self.boundary]))

    def solve_masses(self, masses: np.ndarray) -> np.ndarray:
        """Dirichlet solve with the source given as cell masses; boundary values are 0."""
        masses = np.asarray(masses, dtype=float)
        psi = np.zeros(self.n_nodes)
        psi[self.interior] = self._lu.solve(masses[self.interior])
        return psi

    def harmonic_extension(self, boundary_values: np.ndarray) -> np.ndarray:
        """Discrete harmonic function with the given values on boundary nodes"""
        u = np.zeros(self.n_nodes)
        ub = np.asarray(boundary_values, dtype=float)
        u[self.boundary_nodes] = ub
        u[self.interior] = self._lu.solve(-(self._coupling @ ub))
        return u

    def dirichlet_form(self, psi: np.ndarray) -> float:
        """Discrete integral of |grad psi|^2 for psi vanishing on the boundary"""
        p = np.asarray(psi, dtype=float)[self.interior]
        return float(p @ (self.stiffness @ p))

    def ball_mask(self, radius: float, center: Tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
        """Nodes whose control volume lies in the closed ball of the given radius.

        On the radial mesh this means the outer face of the cell is inside the ball;
        on grids it is the node itself.
        """
        if self.kind == DISK and center == (0.0, 0.0):
            return self.faces[1:] <= radius * (1.0 + 1e-12)
        dist = np.hypot(self.x - center[0], self.y - center[1])
        return dist <= radius * (1.0 + 1e-12)


@dataclass(frozen=True, eq=False)
class ScalarField:
    mesh: DomainMesh
    values: np.ndarray
    masses: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (self.mesh.n_nodes,):
            raise ConfigurationError(
                f"field has {values.size} values, mesh has {self.mesh.n_nodes} nodes"
            )
        bad = ~np.isfinite(values)
        # +inf / 0 sentinels are allowed at the vortex only
        bad[self.mesh.origin_index] = np.isnan(values[self.mesh.origin_index])
        if bad.any():
            raise InternalError(f"non-finite values at {int(bad.sum())} nodes")
        if self.masses is not None and np.shape(self.masses) != values.shape:
            raise ConfigurationError("cell masses do not match the mesh")

    def cell_masses(self) -> np.ndarray:
        """Per-cell integrals; nodal quadrature unless exact masses were attached"""
        if self.masses is not None:
            return np.asarray(self.masses, dtype=float)
        return self.mesh.weights * self.values

    def integral(self) -> float:
        if self.masses is not None:
            return float(np.sum(self.masses))
        return float(np.sum(self.mesh.weights * self.values))

    def sup(self) -> float:
        return float(np.max(self.values))


# Mesh construction
def build_disk_mesh(n_nodes: int, grading: str = "uniform", r_min: Optional[float] = None) -> DomainMesh:
    """Radial mesh on the unit disk with node 0 at the origin and node N on the boundary"""
    if n_nodes < 16:
        raise ConfigurationError(f"disk mesh needs at least 16 nodes, got {n_nodes}")
    n = n_nodes - 1
    if grading == "uniform":
        radii = np.linspace(0.0, 1.0, n + 1)
    elif grading in ("log-near-origin", "log"):
        r_min = settings.LOG_MESH_RMIN if r_min is None else r_min
        if not 0.0 < r_min < 1.0 / n:
            raise ConfigurationError(f"log grading needs 0 < r_min < 1/N, got {r_min}")
        radii = np.concatenate([[0.0], np.geomspace(r_min, 1.0, n)])
        grading = "log-near-origin"
    else:
        raise ConfigurationError(f"unknown disk grading '{grading}'")
    radii[-1] = 1.0

    faces = np.empty(n + 2)
    faces[0] = 0.0
    faces[1:-1] = 0.5 * (radii[:-1] + radii[1:])
    faces[-1] = 1.0
    weights = math.pi * (faces[1:] ** 2 - faces[:-1] ** 2)

    flux = 2.0 * math.pi * faces[1:-1] / np.diff(radii)
    diag = np.zeros(n + 1)
    diag[:-1] += flux
    diag[1:] += flux
    stiffness = sparse.diags([-flux, diag, -flux], [-1, 0, 1], format="csr")

    boundary = np.zeros(n + 1, dtype=bool)
    boundary[-1] = True
    logger.debug(f"Built {grading} disk mesh with {n_nodes} nodes, min dr {np.min(np.diff(radii)):.3e}")
    return DomainMesh(
        kind=DISK,
        x=radii.copy(),
        y=np.zeros(n + 1),
        boundary=boundary,
        weights=weights,
        area=math.pi,
        origin_index=0,
        stiffness_full=stiffness,
        radii=radii,
        faces=faces,
        grading=grading,
    )


def _cells(length: float, h: float, name: str) -> int:
    count = length / h
    rounded = int(round(count))
    if rounded < 2 or abs(count - rounded) > 1e-9 * max(1.0, count):
        raise ConfigurationError(f"{name} {length} is not a multiple of h = {h}")
    return rounded


def build_grid_mesh(width: float, height: float, h: float,
                    origin_offset: Union[str, Tuple[float, float]] = "centered") -> DomainMesh:
    """Uniform grid on a rectangle centred at origin_offset; the origin must be an interior node."""
    if h <= 0:
        raise ConfigurationError(f"grid spacing must be positive, got {h}")
    if origin_offset in ("centered", None):
        cx, cy = 0.0, 0.0
    else:
        cx, cy = (float(c) for c in origin_offset)
    mx, my = _cells(width, h, "width"), _cells(height, h, "height")
    x0, y0 = cx - 0.5 * width, cy - 0.5 * height

    ix0, iy0 = -x0 / h, -y0 / h
    if abs(ix0 - round(ix0)) > 1e-9 or abs(iy0 - round(iy0)) > 1e-9:
        raise ConfigurationError("origin does not fall on a grid node")
    ix0, iy0 = int(round(ix0)), int(round(iy0))
    if not (0 < ix0 < mx and 0 < iy0 < my):
        raise ConfigurationError("origin must lie strictly inside the rectangle")

    nx, ny = mx + 1, my + 1
    xs = x0 + h * np.arange(nx)
    ys = y0 + h * np.arange(ny)
    xx, yy = np.meshgrid(xs, ys)
    xx.flat[iy0 * nx + ix0] = 0.0
    yy.flat[iy0 * nx + ix0] = 0.0

    wx = np.full(nx, h)
    wx[[0, -1]] = 0.5 * h
    wy = np.full(ny, h)
    wy[[0, -1]] = 0.5 * h
    weights = np.outer(wy, wx).ravel()

    boundary = np.zeros((ny, nx), dtype=bool)
    boundary[[0, -1], :] = True
    boundary[:, [0, -1]] = True

    def second_difference(m):
        return sparse.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])

    stiffness = (sparse.kron(sparse.identity(ny), second_difference(nx))
                 + sparse.kron(second_difference(ny), sparse.identity(nx))).tocsr()

    logger.debug(f"Built {nx}x{ny} grid mesh, h = {h}")
    return DomainMesh(
        kind=GRID,
        x=xx.ravel(),
        y=yy.ravel(),
        boundary=boundary.ravel(),
        weights=weights,
        area=float(width * height),
        origin_index=iy0 * nx + ix0,
        stiffness_full=stiffness,
        shape=(ny, nx),
        h=float(h),
        center=(cx, cy),
    )


# Poisson and Green operators
def green_operator(mesh: DomainMesh, masses: np.ndarray) -> ScalarField:
    """psi = G[mu] for a measure given by its cell masses"""
    masses = np.asarray(masses, dtype=float)
    if not np.all(np.isfinite(masses)):
        raise DomainError("source masses must be finite")
    return ScalarField(mesh, mesh.solve_masses(masses))


def poisson_solve(mesh: DomainMesh, rhs: ScalarField) -> ScalarField:
    """Solve -Laplace(psi) = rhs with psi = 0 on the boundary"""
    if not np.all(np.isfinite(rhs.values)):
        raise DomainError("Poisson right-hand side must be finite")
    return green_operator(mesh, mesh.weights * rhs.values)


def _log_h(mesh: DomainMesh, eps: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 0.5 * np.log(eps ** 2 + mesh.r ** 2)


def green_vortex(mesh: DomainMesh) -> ScalarField:
    """x -> G(x, 0); +inf at the origin"""
    log_r = _log_h(mesh, 0.0)
    singular = -log_r / (2.0 * math.pi)
    if mesh.kind == DISK:
        values = singular
    else:
        regular = mesh.harmonic_extension(log_r[mesh.boundary] / (2.0 * math.pi))
        values = singular + regular
    values[mesh.boundary] = 0.0
    values[mesh.origin_index] = np.inf
    return ScalarField(mesh, values)


def regularized_green(mesh: DomainMesh, eps: float) -> ScalarField:
    """G_n = -(1/2pi) log h_n + R_n with R_n harmonic and equal to (1/2pi) log h_n on the boundary"""
    if eps <= 0:
        raise ConfigurationError(f"regularization eps must be positive, got {eps}")
    if mesh.kind == DISK:
        values = np.log((1.0 + eps ** 2) / (eps ** 2 + mesh.r ** 2)) / FOUR_PI
    else:
        log_h = _log_h(mesh, eps)
        values = (mesh.harmonic_extension(log_h[mesh.boundary]) - log_h) / (2.0 * math.pi)
    values[mesh.boundary] = 0.0
    return ScalarField(mesh, values)


def _vortex_green(mesh: DomainMesh, eps: float) -> ScalarField:
    return regularized_green(mesh, eps) if eps > 0 else green_vortex(mesh)


# Singular weight
def check_weight(spec: WeightSpec) -> None:
    """Integrability: the exponent sigma*lam/(4 pi) must stay above -1"""
    if spec.exponent <= -1.0:
        if spec.sigma < 0 and spec.eps == 0:
            raise DomainError(
                f"weight not integrable: sigma = {spec.sigma} needs lam < 4*pi/|sigma| = "
                f"{FOUR_PI / abs(spec.sigma):.6g}, got {spec.lam:.6g}"
            )
        raise DomainError(f"weight exponent {spec.exponent:.6g} must be > -1")


def weight_field(mesh: DomainMesh, spec: WeightSpec) -> ScalarField:
    """Nodal H = exp(-sigma * lam * G) with G exact (eps = 0) or regularized"""
    check_weight(spec)
    a = spec.exponent
    if a == 0.0:
        return ScalarField(mesh, np.full(mesh.n_nodes, spec.scale))
    if mesh.kind == DISK:
        c = 1.0 + spec.eps ** 2
        with np.errstate(divide="ignore"):
            values = ((spec.eps ** 2 + mesh.r ** 2) / c) ** a
    else:
        g = _vortex_green(mesh, spec.eps).values
        with np.errstate(over="ignore"):
            values = np.exp(-spec.sigma * spec.lam * g)
    return ScalarField(mesh, spec.scale * values)


def power_log_integrals(q_lo: np.ndarray, q_hi: np.ndarray, p: float) -> Tuple[np.ndarray, np.ndarray]:
    """Integrals of q^p and q^p log q over [q_lo, q_hi] for p > -1 (q = 0 allowed)"""
    q_lo = np.asarray(q_lo, dtype=float)
    q_hi = np.asarray(q_hi, dtype=float)
    e = p + 1.0
    if e == 0.0:
        lo, hi = np.log(q_lo), np.log(q_hi)
        return hi - lo, 0.5 * (hi ** 2 - lo ** 2)

    def q0(q):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(q > 0, q ** e / e, 0.0)

    def q1(q):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(q > 0, q ** e / e * (np.log(np.where(q > 0, q, 1.0)) - 1.0 / e), 0.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(q_lo > 0, (q_hi - q_lo) / np.where(q_lo > 0, q_lo, 1.0), 0.0)
        d0 = np.where(q_lo > 0, q0(q_lo) * np.expm1(e * np.log1p(ratio)), q0(q_hi))
    d1 = q1(q_hi) - q1(q_lo)
    return d0, d1


def radial_power_moments(mesh: DomainMesh, eps: float, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    """Per-cell integrals of (eps^2+|x|^2)^alpha and (eps^2+|x|^2)^alpha * log(eps^2+|x|^2)."""
    if alpha <= -1.0 and eps == 0.0:
        raise DomainError(f"|x|^(2*{alpha}) is not integrable at the origin")
    if mesh.kind == DISK:
        q = eps ** 2 + mesh.faces ** 2
        d0, d1 = power_log_integrals(q[:-1], q[1:], alpha)
        return math.pi * d0, math.pi * d1
    q = eps ** 2 + mesh.r ** 2
    if eps == 0.0:
        raise DomainError("exact singular moments on grids require eps > 0")
    return (q ** alpha) * mesh.weights, (q ** alpha) * np.log(q) * mesh.weights


def weight_moments(mesh: DomainMesh, spec: WeightSpec) -> np.ndarray:
    """Per-cell integral of H; the density is taken H-shaped inside each cell"""
    check_weight(spec)
    a = spec.exponent
    if a == 0.0:
        return spec.scale * mesh.weights
    if mesh.kind == DISK:
        c = 1.0 + spec.eps ** 2
        p0, _ = radial_power_moments(mesh, spec.eps, a)
        return spec.scale * c ** (-a) * p0
    if spec.eps == 0.0:
        raise DomainError("exact singular weights on grids require eps > 0")
    return weight_field(mesh, spec).values * mesh.weights


def green_moments(mesh: DomainMesh, spec: WeightSpec) -> np.ndarray:
    """Per-cell integral of H * G with G the (regularized) vortex Green function"""
    check_weight(spec)
    a = spec.exponent
    if mesh.kind == DISK:
        c = 1.0 + spec.eps ** 2
        p0, p1 = radial_power_moments(mesh, spec.eps, a)
        return spec.scale * c ** (-a) * (math.log(c) * p0 - p1) / FOUR_PI
    if spec.eps == 0.0:
        raise DomainError("vortex energy on grids requires eps > 0")
    g = regularized_green(mesh, spec.eps).values
    return weight_field(mesh, spec).values * g * mesh.weights


def mass_in_ball(mesh: DomainMesh, masses: np.ndarray, radius: float,
                 center: Tuple[float, float] = (0.0, 0.0)) -> float:
    return float(np.sum(np.asarray(masses)[mesh.ball_mask(radius, center)]))
