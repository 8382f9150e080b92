import math
import re
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from vortexmf.core.config import settings
from vortexmf.domain import DomainMesh, build_disk_mesh, build_grid_mesh

_DISK_RE = re.compile(r"^disk:(\d+)(?::(uniform|log|log-near-origin))?$")
_GRID_RE = re.compile(r"^grid:([0-9.eE+-]+)x([0-9.eE+-]+):([0-9.eE+-/]+)(?:@([0-9.eE+-]+),([0-9.eE+-]+))?$")


# Helper Functions
def parse_float_list(value) -> Optional[List[float]]:
    """Comma list ("1,2,3") or range ("start:stop:count") of floats"""
    if value is None or isinstance(value, (list, tuple)):
        return value
    text = str(value).strip()
    if not text:
        return None
    if text.count(":") == 2:
        start, stop, count = text.split(":")
        n = int(count)
        if n < 2:
            return [float(start)]
        step = (float(stop) - float(start)) / (n - 1)
        return [float(start) + i * step for i in range(n)]
    return [float(part) for part in text.split(",") if part.strip()]


def _number(text: str) -> float:
    if "/" in text:
        num, den = text.split("/")
        return float(num) / float(den)
    return float(text)


# Mesh Schemas
class MeshSpec(BaseModel):
    """Mesh description; accepts disk:N, disk:N:log, grid:WxH:h and grid:WxH:h@cx,cy"""
    kind: str = Field(..., pattern="^(disk|grid)$")
    n_nodes: Optional[int] = Field(None, ge=16)
    grading: str = Field("uniform", pattern="^(uniform|log-near-origin)$")
    r_min: Optional[float] = Field(None, gt=0)
    width: Optional[float] = Field(None, gt=0)
    height: Optional[float] = Field(None, gt=0)
    h: Optional[float] = Field(None, gt=0)
    center: Tuple[float, float] = (0.0, 0.0)

    class Config:
        frozen = True

    @model_validator(mode="before")
    @classmethod
    def parse_mesh_string(cls, v):
        if not isinstance(v, str):
            return v
        text = v.strip().lower()
        disk = _DISK_RE.match(text)
        if disk:
            grading = "log-near-origin" if disk.group(2) in ("log", "log-near-origin") else "uniform"
            return {"kind": "disk", "n_nodes": int(disk.group(1)), "grading": grading}
        grid = _GRID_RE.match(text)
        if grid:
            center = (0.0, 0.0)
            if grid.group(4) is not None:
                center = (float(grid.group(4)), float(grid.group(5)))
            return {
                "kind": "grid",
                "width": float(grid.group(1)),
                "height": float(grid.group(2)),
                "h": _number(grid.group(3)),
                "center": center,
            }
        raise ValueError(f"unrecognized mesh spec '{v}' (expected disk:N[:log] or grid:WxH:h[@cx,cy])")

    @model_validator(mode="after")
    def check_fields(self):
        if self.kind == "disk" and self.n_nodes is None:
            raise ValueError("disk meshes need n_nodes")
        if self.kind == "grid" and None in (self.width, self.height, self.h):
            raise ValueError("grid meshes need width, height and h")
        return self

    def build(self) -> DomainMesh:
        if self.kind == "disk":
            return build_disk_mesh(self.n_nodes, self.grading, self.r_min)
        return build_grid_mesh(self.width, self.height, self.h, self.center)

    def label(self) -> str:
        if self.kind == "disk":
            return f"disk:{self.n_nodes}" + (":log" if self.grading != "uniform" else "")
        label = f"grid:{self.width:g}x{self.height:g}:{self.h:g}"
        if self.center != (0.0, 0.0):
            label += f"@{self.center[0]:g},{self.center[1]:g}"
        return label


# Solver Schemas
class SolverOptions(BaseModel):
    method: str = Field("picard", pattern="^(picard|newton)$")
    damping: float = Field(default_factory=lambda: settings.DEFAULT_DAMPING, gt=0.0, le=1.0)
    tol: Optional[float] = Field(None, gt=0.0)
    max_iter: int = Field(default_factory=lambda: settings.MAX_ITER, ge=1)
    psi_ceiling: float = Field(default_factory=lambda: settings.PSI_CEILING, gt=0.0)
    warm_start: bool = True

    class Config:
        frozen = True


# Run Config Schemas
class RunOptions(BaseModel):
    out: Optional[str] = None
    threads: int = Field(default_factory=lambda: settings.THREADS, ge=1)
    seed: int = 0
    store: bool = Field(default_factory=lambda: settings.RUN_STORE_ENABLED)


class CvpConfig(BaseModel):
    mesh: MeshSpec
    sigma: float = 0.0
    lam: Optional[float] = Field(None, ge=0.0)
    lam_grid: Optional[List[float]] = None
    eps: float = Field(0.0, ge=0.0)
    radii: List[float] = [0.1, 0.01]
    solver: SolverOptions = Field(default_factory=SolverOptions)

    @field_validator("lam_grid", "radii", mode="before")
    @classmethod
    def split_lists(cls, v):
        return parse_float_list(v)

    @model_validator(mode="after")
    def need_lambda(self):
        if self.lam is None and not self.lam_grid:
            raise ValueError("give either lam or lam_grid")
        if self.lam_grid and min(self.lam_grid) < 0:
            raise ValueError("lam must be nonnegative (positive temperature is not supported)")
        return self


class MvpConfig(BaseModel):
    mesh: MeshSpec
    sigma: float = 0.0
    eps: float = Field(0.0, ge=0.0)
    energy: Optional[float] = None
    energy_grid: Optional[List[float]] = None
    eps_seq: Optional[List[float]] = None
    classify: bool = False
    lam_max: Optional[float] = Field(None, gt=0.0)
    scan_points: int = Field(48, ge=4)
    energy_tol: float = Field(default_factory=lambda: settings.ENERGY_TOL, gt=0.0)
    solver: SolverOptions = Field(default_factory=SolverOptions)

    @field_validator("energy_grid", "eps_seq", mode="before")
    @classmethod
    def split_lists(cls, v):
        return parse_float_list(v)

    @model_validator(mode="after")
    def need_energy(self):
        if self.classify:
            if not self.energy_grid:
                raise ValueError("classification needs an energy grid")
        elif self.energy is None:
            raise ValueError("give a target energy")
        return self


class DiagnoseConfig(BaseModel):
    family: Optional[str] = None
    plant: Optional[str] = Field(None, pattern="^(disk|case1|case2|case3|bubble|flat)$")
    sigma: Optional[float] = None
    alpha: float = 0.5
    write_manifest: Optional[str] = None
    c0: Optional[float] = Field(None, gt=0.0)

    @model_validator(mode="after")
    def need_source(self):
        if (self.family is None) == (self.plant is None):
            raise ValueError("give exactly one of a family manifest or a planted family")
        return self


class BubbleConfig(BaseModel):
    alpha: float = Field(..., gt=-1.0)
    t0: float = Field(0.0, ge=0.0)
    c: Optional[float] = None
    mass: Optional[float] = Field(None, gt=0.0)
    r_max: Optional[float] = Field(None, gt=0.0)
    samples: int = Field(201, ge=2)

    @model_validator(mode="after")
    def need_center(self):
        if self.c is None and self.mass is None:
            # the exact t0 = 0 bubble with phi(0) = log(8 (1 + alpha)^2)
            self.c = math.log(8.0 * (1.0 + self.alpha) ** 2)
        return self


class MeshConfig(BaseModel):
    mesh: MeshSpec
    field: str = Field("weights", pattern="^(weights|green|regularized_green|weight)$")
    sigma: float = 0.0
    lam: float = Field(0.0, ge=0.0)
    eps: float = Field(0.0, ge=0.0)


class ValidateConfig(BaseModel):
    only: Optional[List[str]] = None
    emit_plot_data: bool = False
    artifact: Optional[str] = None
    quick: bool = False

    @field_validator("only", mode="before")
    @classmethod
    def split_groups(cls, v):
        if isinstance(v, str):
            return [part.strip() for part in v.split(",") if part.strip()]
        return v
