import math
from pydantic import BaseModel, Field


# Weight Schemas
class WeightSpec(BaseModel):
    """Singular weight H = scale * exp(-sigma * lam * G) with G exact (eps = 0) or regularized"""
    sigma: float = 0.0
    lam: float = Field(0.0, ge=0.0)
    eps: float = Field(0.0, ge=0.0)
    scale: float = Field(1.0, gt=0.0)

    class Config:
        frozen = True

    @property
    def exponent(self) -> float:
        return self.sigma * self.lam / (4.0 * math.pi)

    @property
    def is_regularized(self) -> bool:
        return self.eps > 0.0

    def with_lambda(self, lam: float) -> "WeightSpec":
        return self.model_copy(update={"lam": lam})
