"""
Linearly implicit Rosenbrock 2(3) pair for stiff autonomous systems.

The scheme is the one behind MATLAB's ode23s: one LU factorization of
W = I − h d J per step, three stages, an embedded third-order error estimate
and a free C¹ interpolant.  Plugs into scipy.integrate.solve_ivp as
``method=Rosenbrock23`` and needs an analytic Jacobian.
"""

import warnings

import numpy as np
from scipy.integrate import DenseOutput, OdeSolver
from scipy.linalg import lu_factor, lu_solve

D = 1.0 / (2.0 + np.sqrt(2.0))
E32 = 6.0 + np.sqrt(2.0)

FAC_MIN = 0.2
FAC_MAX = 6.0
FAC_SAFE = 0.9


def _rms(x: np.ndarray) -> float:
    return float(np.linalg.norm(x) / np.sqrt(x.size))


class Rosenbrock23(OdeSolver):
    """
    Rosenbrock 2(3) with step-size control.

    Parameters follow scipy's solvers.  ``jac`` is required: a callable
    jac(t, y) returning a dense (n, n) array, or a constant array.  The right
    hand side is assumed not to depend on t explicitly.

    Parameters
    ----------
    fun, t0, y0, t_bound, vectorized
        As for any scipy OdeSolver.
    jac : callable or array_like
        Jacobian of fun with respect to y.
    rtol, atol : float or array_like
        Local error tolerances.
    max_step : float
        Largest allowed step.
    min_step : float
        Smallest allowed step; below it the step fails.
    first_step : float or None
        Initial step; chosen from the initial slope when None.
    """

    def __init__(self, fun, t0, y0, t_bound, jac=None, max_step=np.inf,
                 rtol=1e-3, atol=1e-6, first_step=None, min_step=0.0,
                 vectorized=False, **extraneous):
        if extraneous:
            warnings.warn(f"The following arguments have no effect for Rosenbrock23: "
                          f"{', '.join(f'`{x}`' for x in extraneous)}.", stacklevel=2)
        super().__init__(fun, t0, y0, t_bound, vectorized)
        if jac is None:
            raise ValueError("Rosenbrock23 needs an analytic Jacobian `jac`")
        if callable(jac):
            self._jac = lambda t, y: np.asarray(jac(t, y), dtype=float)
        else:
            J = np.asarray(jac, dtype=float)
            self._jac = lambda t, y: J
        if max_step <= 0:
            raise ValueError("`max_step` must be positive.")
        self.max_step = max_step
        self.min_step = float(min_step)
        self.rtol = max(float(rtol), 100 * np.finfo(float).eps)
        self.atol = np.asarray(atol, dtype=float)
        if np.any(self.atol < 0):
            raise ValueError("`atol` must be positive.")

        self.f = self.fun(self.t, self.y)
        if first_step is None:
            self.h_abs = self._initial_step()
        else:
            if first_step <= 0 or first_step > abs(t_bound - t0):
                raise ValueError("`first_step` must be positive and inside the interval.")
            self.h_abs = float(first_step)
        self.I = np.eye(self.n)
        self._k1 = self._k2 = None
        self._h_last = None

    def _initial_step(self) -> float:
        span = abs(self.t_bound - self.t)
        h = min(self.max_step, span)
        threshold = np.maximum(self.atol / self.rtol, np.finfo(float).tiny)
        rh = 1.25 * np.max(np.abs(self.f) / np.maximum(np.abs(self.y), threshold)) / self.rtol ** (1 / 3)
        if h * rh > 1:
            h = 1.0 / rh
        return max(h, self.min_step, 10 * np.finfo(float).eps * max(abs(self.t), 1.0))

    def _step_impl(self):
        t, y, f0 = self.t, self.y, self.f
        J = self._jac(t, y)
        self.njev += 1

        floor = max(self.min_step, 10 * abs(np.nextafter(t, self.direction * np.inf) - t))
        h_abs = min(self.h_abs, self.max_step)
        rejected = False
        while True:
            if h_abs < floor:
                return False, f"Required step size {h_abs:.3e} is below the minimum {floor:.3e}"
            h = h_abs * self.direction
            t_new = t + h
            if self.direction * (t_new - self.t_bound) > 0:
                t_new = self.t_bound
            h = t_new - t
            h_abs = abs(h)

            lu = lu_factor(self.I - h * D * J, check_finite=False)
            self.nlu += 1
            k1 = lu_solve(lu, f0)
            f1 = self.fun(t + 0.5 * h, y + 0.5 * h * k1)
            k2 = lu_solve(lu, f1 - k1) + k1
            y_new = y + h * k2
            f2 = self.fun(t_new, y_new)
            k3 = lu_solve(lu, f2 - E32 * (k2 - f1) - 2.0 * (k1 - f0))

            scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = _rms(h / 6.0 * (k1 - 2.0 * k2 + k3) / scale)

            if not np.isfinite(err) or not np.all(np.isfinite(y_new)):
                h_abs *= FAC_MIN
                rejected = True
                continue
            if err > 1.0:
                h_abs *= max(FAC_MIN, FAC_SAFE * err ** (-1 / 3))
                rejected = True
                continue

            factor = FAC_MAX if err == 0 else min(FAC_MAX, FAC_SAFE * err ** (-1 / 3))
            if rejected:
                factor = min(1.0, factor)
            self.h_abs = h_abs * factor
            break

        self.y_old = y
        self._k1, self._k2, self._h_last = k1, k2, h
        self.t, self.y, self.f = t_new, y_new, f2
        return True, None

    def _dense_output_impl(self):
        return Rosenbrock23DenseOutput(self.t_old, self.t, self.y_old, self._k1, self._k2, self._h_last)


class Rosenbrock23DenseOutput(DenseOutput):
    """y(t_old + s h) ≈ y_old + h (s(1−s)/(1−2d) k1 + s(s−2d)/(1−2d) k2)."""

    def __init__(self, t_old, t, y_old, k1, k2, h):
        super().__init__(t_old, t)
        self.y_old = y_old
        self.k1 = k1
        self.k2 = k2
        self.h = h

    def _call_impl(self, t):
        s = (np.asarray(t) - self.t_old) / self.h
        a = s * (1 - s) / (1 - 2 * D)
        b = s * (s - 2 * D) / (1 - 2 * D)
        if np.ndim(s) == 0:
            return self.y_old + self.h * (a * self.k1 + b * self.k2)
        return self.y_old[:, None] + self.h * (np.outer(self.k1, a) + np.outer(self.k2, b))
