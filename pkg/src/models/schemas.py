"""Pydantic models for model files and benchmark configuration."""

from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator


class MatrixBlock(BaseModel):
    """A polynomial coefficient block F_p or G_p."""
    coords: Optional[List[Tuple[int, int, float]]] = Field(
        None,
        description="Nonzeros as [row, column, value] against the global multi-index convention"
    )
    dense: Optional[List[List[float]]] = Field(None, description="Row-major dense block")

    @model_validator(mode="after")
    def exactly_one_form(self):
        """Exactly one of coords and dense must be given."""
        if (self.coords is None) == (self.dense is None):
            raise ValueError("Give exactly one of 'coords' or 'dense'")
        return self


class VectorBlock(BaseModel):
    """A polynomial state-cost coefficient q_p."""
    coords: Optional[List[Tuple[int, float]]] = Field(None, description="Nonzeros as [index, value]")
    dense: Optional[List[float]] = Field(None, description="Dense coefficient of length n^p")

    @model_validator(mode="after")
    def exactly_one_form(self):
        """Exactly one of coords and dense must be given."""
        if (self.coords is None) == (self.dense is None):
            raise ValueError("Give exactly one of 'coords' or 'dense'")
        return self


def _degree_keys(value: Dict[str, Any], minimum: int) -> Dict[str, Any]:
    for key in value:
        if not str(key).isdigit() or int(key) < minimum:
            raise ValueError(f"Degree keys must be integers >= {minimum}, got '{key}'")
    return value


class ModelFile(BaseModel):
    """On-disk polynomial control problem."""
    n: int = Field(..., ge=1, description="State dimension")
    m: int = Field(..., ge=1, description="Input dimension")
    A: List[List[float]] = Field(..., description="State matrix, row-major")
    B: List[List[float]] = Field(..., description="Input matrix, row-major")
    F: Dict[str, MatrixBlock] = Field(default_factory=dict, description="Drift blocks by degree")
    G: Dict[str, MatrixBlock] = Field(default_factory=dict, description="Input blocks by degree")
    Q: List[List[float]] = Field(..., description="State weight")
    R: List[List[float]] = Field(..., description="Input weight")
    q: Dict[str, VectorBlock] = Field(default_factory=dict, description="Polynomial state cost by degree")
    meta: Dict[str, Any] = Field(default_factory=dict, description="Free-form metadata")

    @field_validator("F")
    @classmethod
    def drift_degrees(cls, v):
        return _degree_keys(v, 2)

    @field_validator("G")
    @classmethod
    def input_degrees(cls, v):
        return _degree_keys(v, 1)

    @field_validator("q")
    @classmethod
    def cost_degrees(cls, v):
        return _degree_keys(v, 3)


class AllenCahnConfig(BaseModel):
    """Discretization and target of the controlled Allen–Cahn benchmark."""
    n: int = Field(129, description="Number of Chebyshev nodes, boundary nodes included")
    epsilon: float = Field(0.01, gt=0, description="Diffusion coefficient")
    z0: float = Field(0.5, gt=-1, lt=1, description="Target interface location")
    control_nodes: Optional[List[int]] = Field(
        None,
        description="1-based actuator node indices over all nodes; defaults to the nodes nearest z = ±cos(π/4) and 0"
    )

    @field_validator("n")
    @classmethod
    def odd_node_count(cls, v):
        """Node count must be odd and at least 9."""
        if v < 9 or v % 2 == 0:
            raise ValueError(f"Node count must be odd and >= 9, got {v}")
        return v

    @model_validator(mode="after")
    def interior_controls(self):
        """Actuators must sit on distinct interior nodes."""
        if self.control_nodes is not None:
            if not self.control_nodes:
                raise ValueError("At least one control node is required")
            if len(set(self.control_nodes)) != len(self.control_nodes):
                raise ValueError("Control nodes must be distinct")
            for node in self.control_nodes:
                if not 2 <= node <= self.n - 1:
                    raise ValueError(f"Control node {node} is not interior (valid: 2..{self.n - 1})")
        return self
