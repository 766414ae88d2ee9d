"""Pydantic models for the documents the command line writes."""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class RunManifest(BaseModel):
    """Everything needed to repeat a command."""
    command: str = Field(..., description="Subcommand name")
    argv: List[str] = Field(..., description="Full argument vector, replayable with `rerun`")
    model: Dict[str, Any] = Field(..., description="Model source and parameters")
    degree: Optional[int] = Field(None, description="Value-function degree d")
    horizon: Optional[float] = Field(None, description="Simulation horizon T")
    tolerances: Dict[str, float] = Field(default_factory=dict, description="Solver and integrator tolerances")
    outputs: List[str] = Field(default=[], description="Files written by the run")
    timestamp: str = Field(..., description="Start time (ISO format)")
    version: str = Field(..., description="Software version")


class DegreeReport(BaseModel):
    degree: int = Field(..., ge=2)
    solve_residual: float = Field(..., description="Riccati residual (d=2) or k-way backward error")
    hjb_residual: Optional[float] = Field(None, description="Relative degree-k HJB residual")
    seconds: float = Field(..., description="Wall time of the degree")


class SynthesisReport(BaseModel):
    """Outcome of `synthesize`."""
    model: Dict[str, Any]
    n: int
    m: int
    degree: int
    controller_degree: int
    degrees: List[DegreeReport]
    linear_gain: List[List[float]] = Field(..., description="K^[1]")
    lqr_gain_defect: float = Field(..., description="max |K^[1] − K_LQR|")
    truncation_slope: Optional[float] = Field(None, description="Log-log slope of the HJB residual vs ‖x‖")
    total_seconds: float


class VerificationReport(BaseModel):
    """Outcome of `verify`."""
    degree: int
    threshold: float
    relative: bool
    residuals: Dict[str, float] = Field(..., description="Degree-k HJB residual by degree")
    failed_degrees: List[int] = Field(default=[])
    truncation_slope: Optional[float] = None
    value_model: Optional[Dict[str, Any]] = Field(default=None, description="Model recorded in the value file")
    model_matches: Optional[bool] = None
    passed: bool


class SimulationSummary(BaseModel):
    """Outcome of `simulate`."""
    horizon: float
    t_final: float
    samples: int
    final_state_norm: float
    total_cost: Optional[float] = Field(None, description="½∫ running cost over [0, t_final]")
    diverged: bool
    message: str
    interfaces: Optional[int] = Field(None, description="Interface count of the final Allen–Cahn profile")


class TableRow(BaseModel):
    """One cell of a benchmark sweep."""
    bench: str
    controller: str
    controller_degree: int
    value_degree: int
    alpha0_deg: Optional[float] = None
    epsilon: Optional[float] = None
    n: int
    cost: Optional[float] = None
    reference_cost: Optional[float] = Field(None, description="Published cost for this cell, never used as input")
    delta_abs: Optional[float] = None
    delta_rel: Optional[float] = None
    diverged: Optional[bool] = None
    recovered: Optional[bool] = None
    final_state_norm: Optional[float] = None
    error: Optional[str] = None
