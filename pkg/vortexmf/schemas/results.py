import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import BaseModel, Field

from vortexmf import __version__
from vortexmf.io import to_jsonable


# Artifact Schemas
class RunArtifact(BaseModel):
    command: str = Field(..., pattern="^(cvp|mvp|diagnose|bubble|validate|mesh)$")
    status: str
    exit_code: int = Field(0, ge=0, le=3)
    tool_version: str = __version__
    config: Dict[str, Any]
    payload: Dict[str, Any] = {}
    provenance: Optional[str] = None
    wall_time: Optional[float] = None

    class Config:
        from_attributes = True

    def to_json(self, include_wall_time: bool = True) -> str:
        """Sorted, indented JSON; identical inputs give identical bytes apart from wall_time"""
        data = to_jsonable(self.model_dump())
        if not include_wall_time:
            data.pop("wall_time", None)
        return json.dumps(data, sort_keys=True, indent=2) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "RunArtifact":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))


# Validation Schemas
class CriterionResult(BaseModel):
    group: str
    name: str
    passed: bool
    value: Optional[float] = None
    tolerance: Optional[float] = None
    detail: Optional[str] = None


class ValidationMatrix(BaseModel):
    results: List[CriterionResult] = []

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def groups(self) -> Dict[str, bool]:
        out: Dict[str, bool] = {}
        for r in self.results:
            out[r.group] = out.get(r.group, True) and r.passed
        return out


# Helper Functions
def provenance_hash(paths: Sequence[Path]) -> Optional[str]:
    """sha256 over the bytes of the input files, in the given order"""
    if not paths:
        return None
    digest = hashlib.sha256()
    for path in paths:
        digest.update(Path(path).read_bytes())
    return digest.hexdigest()
