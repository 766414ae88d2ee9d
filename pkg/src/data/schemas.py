"""Pydantic models for coefficient containers."""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, model_validator


class ArrayRecord(BaseModel):
    """One little-endian float64 array, inline or in the binary sidecar."""
    name: str = Field(..., description="Array name, e.g. v3 or K2")
    shape: List[int] = Field(..., description="Array shape")
    dtype: Literal["<f8"] = Field("<f8", description="Element type")
    encoding: Literal["base64", "sidecar"] = Field(..., description="Where the bytes live")
    data: Optional[str] = Field(None, description="Base64 payload for inline arrays")
    offset: Optional[int] = Field(None, ge=0, description="Byte offset into the sidecar")
    length: Optional[int] = Field(None, ge=0, description="Byte length in the sidecar")

    @model_validator(mode="after")
    def payload_matches_encoding(self):
        """Inline arrays carry data, sidecar arrays carry offset and length."""
        if self.encoding == "base64" and self.data is None:
            raise ValueError(f"Array '{self.name}' is base64-encoded but has no data")
        if self.encoding == "sidecar" and (self.offset is None or self.length is None):
            raise ValueError(f"Array '{self.name}' lives in the sidecar but has no offset/length")
        return self


class DegreeStatsRecord(BaseModel):
    degree: int = Field(..., ge=2)
    residual: float
    seconds: float


class CoefficientFile(BaseModel):
    """Serialized value function or polynomial controller."""
    kind: Literal["value", "controller"] = Field(..., description="Container content")
    n: int = Field(..., ge=1, description="State dimension")
    m: Optional[int] = Field(None, ge=1, description="Input dimension (controllers)")
    d: int = Field(..., ge=1, description="Value degree or controller degree")
    version: str = Field(..., description="Software version that wrote the file")
    created_at: str = Field(..., description="Write timestamp (ISO format)")
    sidecar: Optional[str] = Field(None, description="Sidecar file name, relative to this file")
    arrays: List[ArrayRecord] = Field(..., description="Coefficient arrays in degree order")
    stats: List[DegreeStatsRecord] = Field(default=[], description="Per-degree synthesis diagnostics")
    meta: Dict[str, Any] = Field(default_factory=dict, description="Free-form metadata")
