"""Closed- and open-loop integration with the running cost carried as an extra state."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson, solve_ivp

from src.config.settings import settings
from src.core.control import PolyController
from src.core.problem import PolyCost, PolyDynamics, _as_state
from src.sim.rosenbrock import Rosenbrock23
from src.utils.exceptions import DimensionError
from src.utils.logger import logger

METHODS = ("auto", "RK45", "Rosenbrock23")
STIFF_STATE_DIMENSION = 20


@dataclass
class SimOptions:
    """Integrator settings; defaults suit small non-stiff models."""

    rtol: float = 1e-8
    atol: float = 1e-10
    method: str = "auto"
    max_step: float = np.inf
    samples: Optional[int] = None
    divergence_norm: Optional[float] = None
    min_step_fraction: Optional[float] = None

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise DimensionError(f"Tolerances must be positive, got rtol={self.rtol}, atol={self.atol}")
        if self.method not in METHODS:
            raise DimensionError(f"Unknown method '{self.method}' (choose from {', '.join(METHODS)})")

    @classmethod
    def stiff(cls, **overrides) -> "SimOptions":
        """Looser tolerances and the Rosenbrock pair, for the Allen–Cahn model."""
        return cls(**{"rtol": 1e-6, "atol": 1e-8, "method": "Rosenbrock23", **overrides})


@dataclass
class Trajectory:
    """Sampled solution; accumulated_cost is NaN when no cost was given."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    accumulated_cost: np.ndarray
    diverged: bool = False
    message: str = ""
    nfev: int = 0
    interpolant: Optional[Callable] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def total_cost(self) -> float:
        return float(self.accumulated_cost[-1])


def _feedback(ctrl: Optional[PolyController], m: int, u_offset: Optional[np.ndarray]):
    offset = np.zeros(m) if u_offset is None else np.asarray(u_offset, dtype=float).reshape(-1)
    if offset.size != m:
        raise DimensionError(f"Input offset must have length {m}, got {offset.size}")
    if ctrl is None:
        return (lambda x: offset.copy()), (lambda x: None)
    return (lambda x: ctrl(x) + offset), ctrl.jacobian


def closed_loop_jacobian(
    dyn: PolyDynamics,
    x: np.ndarray,
    u: np.ndarray,
    du: Optional[np.ndarray],
) -> np.ndarray:
    """∂/∂x of f(x) + g(x) u(x), given u = u(x) and du = ∂u/∂x (None for constant u)."""
    J = dyn.jacobian(x, u)
    if du is not None:
        J = J + dyn.input_map(x) @ du
    return J


def simulate(
    dyn: PolyDynamics,
    ctrl: Optional[PolyController],
    x0,
    T: float,
    opts: Optional[SimOptions] = None,
    cost: Optional[PolyCost] = None,
    u_offset=None,
) -> Trajectory:
    """
    Integrate x' = f(x) + g(x)(u(x) + u_offset) from x0 over [0, T].

    Args:
        dyn: Polynomial dynamics
        ctrl: Feedback law, or None for zero feedback
        x0: Initial state
        T: Horizon, T > 0
        opts: Integrator settings
        cost: When given, ½∫ running cost is integrated as an extra state
        u_offset: Constant input added to the feedback

    Returns:
        Trajectory sampled at the solver steps, or at least opts.samples
        equispaced times when the solver takes fewer steps.  A blow-up or
        step-size underflow ends the run with ``diverged`` set.
    """
    opts = opts or SimOptions()
    if T <= 0:
        raise DimensionError(f"Horizon must be positive, got {T}")
    n, m = dyn.n, dyn.m
    x0 = _as_state(x0, n).astype(float)
    if ctrl is not None and (ctrl.n != n or ctrl.m != m):
        raise DimensionError(f"Controller is for (n={ctrl.n}, m={ctrl.m}), dynamics are (n={n}, m={m})")
    if cost is not None and (cost.n != n or cost.m != m):
        raise DimensionError(f"Cost is for (n={cost.n}, m={cost.m}), dynamics are (n={n}, m={m})")

    law, law_jacobian = _feedback(ctrl, m, u_offset)
    blowup_norm = opts.divergence_norm or settings.divergence_norm
    samples = opts.samples or settings.min_output_samples
    min_step = (opts.min_step_fraction or settings.min_step_fraction) * T
    method = opts.method
    if method == "auto":
        method = "Rosenbrock23" if n >= STIFF_STATE_DIMENSION else "RK45"

    def rhs(t, y):
        x = y[:n]
        u = law(x)
        dx = dyn.rhs(x, u)
        if cost is None:
            return dx
        return np.append(dx, cost.running_cost(x, u))

    def jac(t, y):
        x = y[:n]
        u = law(x)
        du = law_jacobian(x)
        Jx = closed_loop_jacobian(dyn, x, u, du)
        if cost is None:
            return Jx
        grad = cost.state_cost_gradient(x)
        if du is not None:
            grad = grad + du.T @ (cost.R @ u)
        J = np.zeros((n + 1, n + 1))
        J[:n, :n] = Jx
        J[n, :n] = grad
        return J

    def blowup(t, y):
        return np.linalg.norm(y[:n]) - blowup_norm
    blowup.terminal = True
    blowup.direction = 1

    y0 = x0 if cost is None else np.append(x0, 0.0)
    kwargs = dict(rtol=opts.rtol, atol=opts.atol, max_step=opts.max_step)
    if method == "Rosenbrock23":
        kwargs.update(jac=jac, min_step=min_step)
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(
            rhs, (0.0, T), y0,
            method=Rosenbrock23 if method == "Rosenbrock23" else method,
            dense_output=True, events=blowup, **kwargs,
        )

    diverged = sol.status != 0 or (sol.t_events is not None and sol.t_events[0].size > 0)
    message = sol.message
    if sol.status == 1:
        message = f"State norm reached {blowup_norm:g} at t = {sol.t[-1]:.6g}"
    if diverged:
        logger.warning(f"Simulation diverged: {message}")

    t_end = sol.t[-1]
    if sol.t.size >= samples or sol.t.size < 2 or sol.sol is None:
        times, Y = sol.t, sol.y.T
    else:
        times = np.union1d(sol.t, np.linspace(0.0, t_end, samples))
        Y = sol.sol(times).T
    states = Y[:, :n]
    inputs = np.array([law(x) for x in states]).reshape(len(times), m)
    accumulated = Y[:, n] if cost is not None else np.full(len(times), np.nan)
    logger.info(
        f"Simulated {method} to t = {t_end:.6g}: {sol.t.size} steps, {sol.nfev} evaluations"
        + (f", cost {accumulated[-1]:.6g}" if cost is not None else "")
    )
    return Trajectory(
        times=times,
        states=states,
        inputs=inputs,
        accumulated_cost=accumulated,
        diverged=bool(diverged),
        message=message,
        nfev=sol.nfev,
        interpolant=sol.sol,
    )


def running_cost_integral(
    traj: Trajectory,
    cost: PolyCost,
    feedback: Optional[Callable] = None,
    rtol: float = 1e-6,
    max_level: int = 8,
) -> float:
    """
    ½∫ (xᵀQx + uᵀRu + Σ q_pᵀx^⊗p) dt over the trajectory.

    With a feedback law and an interpolant the integral is refined by composite
    Simpson on successively doubled grids until the relative change is at most
    rtol; otherwise Simpson's rule is applied to the stored samples.
    """
    if traj.times.size == 0:
        raise DimensionError("Empty trajectory")
    if traj.times.size == 1:
        return 0.0

    def integrand(X, U):
        return np.array([cost.running_cost(x, u) for x, u in zip(X, U)])

    if feedback is None or traj.interpolant is None:
        return float(simpson(integrand(traj.states, traj.inputs), x=traj.times))

    n = traj.n
    grid = traj.times
    previous = None
    for level in range(max_level):
        X = traj.interpolant(grid)[:n].T
        U = np.array([feedback(x) for x in X]).reshape(len(grid), traj.m)
        total = float(simpson(integrand(X, U), x=grid))
        if previous is not None and abs(total - previous) <= rtol * max(abs(total), np.finfo(float).tiny):
            return total
        previous = total
        grid = np.sort(np.concatenate([grid, 0.5 * (grid[1:] + grid[:-1])]))
    logger.warning(f"Cost quadrature stopped at {len(grid)} points without reaching rtol={rtol}")
    return previous
