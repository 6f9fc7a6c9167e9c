"""Forward drift-diffusion evolution and the stochastic value duality.

The drift enters through the exact adjoint of the slice inner product:
``drift_divergence`` is the unique vertex field with

    sum_x phi(x) D(Y, rho)(x) m(x)  =  <d phi, Y>_{rho m}    for all phi,

explicitly ``D(Y, rho)(x) = -(1 / 2 m(x)) sum_y w(xy) Y(x,y) (rho(x) + rho(y))``.
Defining the divergence this way (rather than discretising it separately)
makes the summation-by-parts chain behind the value identity exact in
space: the duality gap of the optimal drift is pure time-quadrature error.
Constants annihilate the adjoint, so every step conserves mass exactly.

Positivity of the density is monitored, not enforced: the centred-average
adjoint can undershoot for large drifts, and the remedy is a smaller step
(upwinding would break exact adjointness).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .space import TimeGrid, gamma, v_norms
from .forms import _as_cocycle
from .viscous import cole_hopf, mol_solve, picard_solve

__all__ = [
    "MassDrift",
    "PositivityLossWarning",
    "FPResidualError",
    "MeasurePath",
    "DriftPath",
    "drift_inner_slice",
    "drift_inner",
    "drift_divergence",
    "fp_step",
    "fp_solve",
    "optimal_drift",
    "stochastic_value",
    "duality_check",
    "DualityReport",
    "divergence_bound_ratio",
]

MASS_TOL = 1e-10
POSITIVITY_TOL = -1e-9


class MassDrift(RuntimeError):
    """Total mass left the unit-sum tolerance."""


class PositivityLossWarning(RuntimeWarning):
    """Density undershot below the monitoring tolerance; reduce the step."""


class FPResidualError(ValueError):
    """A supplied (density, drift) pair does not satisfy the discrete
    forward equation within tolerance."""


@dataclass
class MeasurePath:
    """Probability densities with respect to the vertex measure, one row
    per grid node.  Unit mass is exact; positivity is only monitored."""

    space: object
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.steps + 1, self.space.n_vertices):
            raise ValueError("density path has the wrong shape")
        mass = self.values @ self.space.measure
        err = float(np.max(np.abs(mass - 1.0)))
        if err > MASS_TOL:
            raise MassDrift(f"mass deviates from one by {err:.3e}")
        lowest = float(np.min(self.values))
        if lowest < POSITIVITY_TOL:
            warnings.warn(
                f"density undershoots to {lowest:.3e}; consider a smaller dt",
                PositivityLossWarning,
                stacklevel=2,
            )

    def min_density(self):
        return float(np.min(self.values))


@dataclass
class DriftPath:
    """Cocycle-valued drift: one antisymmetric edge slice per grid node."""

    space: object
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.steps + 1, self.space.n_edges):
            raise ValueError("drift path has the wrong shape")

    @classmethod
    def constant(cls, space, grid, form):
        vals = np.tile(_as_cocycle(form).values, (grid.steps + 1, 1))
        return cls(space, grid, vals)

    @classmethod
    def zero(cls, space, grid):
        return cls(space, grid, np.zeros((grid.steps + 1, space.n_edges)))


def drift_inner_slice(space, a_values, b_values, rho):
    """<a, b> against the measure rho m at a single time:
    0.5 * sum_e w_e a_e b_e (rho(u) + rho(v))."""
    e = space.edges
    rr = rho[e[:, 0]] + rho[e[:, 1]]
    return float(0.5 * np.sum(space.weights * a_values * b_values * rr))


def drift_inner(space, grid, a_path, b_path, rho_path):
    """Trapezoid-in-time inner product of two drifts against a density
    path; equals the weighted sum of its slices by construction."""
    a = a_path.values if isinstance(a_path, DriftPath) else np.asarray(a_path)
    b = b_path.values if isinstance(b_path, DriftPath) else np.asarray(b_path)
    rho = rho_path.values if isinstance(rho_path, MeasurePath) else np.asarray(rho_path)
    wt = grid.trapezoid_weights()
    total = 0.0
    for k in range(grid.steps + 1):
        total += wt[k] * drift_inner_slice(space, a[k], b[k], rho[k])
    return total


def drift_divergence(space, y_values, rho):
    """Exact adjoint of the slice inner product against test coboundaries."""
    e = space.edges
    per_edge = space.weights * y_values * (rho[e[:, 0]] + rho[e[:, 1]])
    out = np.zeros(space.n_vertices)
    np.add.at(out, e[:, 0], -per_edge)
    np.add.at(out, e[:, 1], per_edge)
    return out / (2.0 * space.measure)


def _drift_matrix(space, y_values):
    """Dense matrix of rho -> drift_divergence(Y, rho)."""
    n = space.n_vertices
    g = np.zeros((n, n))
    e = space.edges
    coef_u = space.weights * y_values / (2.0 * space.measure[e[:, 0]])
    coef_v = space.weights * y_values / (2.0 * space.measure[e[:, 1]])
    np.add.at(g, (e[:, 0], e[:, 1]), -coef_u)
    np.add.at(g, (e[:, 0], e[:, 0]), -coef_u)
    np.add.at(g, (e[:, 1], e[:, 0]), coef_v)
    np.add.at(g, (e[:, 1], e[:, 1]), coef_v)
    return g


def _step_matrices(space, y_mid, dt, beta, theta):
    lap = space.laplacian_matrix(sparse=False)
    g = _drift_matrix(space, y_mid)
    eye = np.eye(space.n_vertices)
    lhs = eye - dt * (lap / (2.0 * beta)) - dt * theta * g
    rhs = eye + dt * (1.0 - theta) * g
    return lhs, rhs


def fp_step(space, rho, y_values, dt, beta, theta=0.5):
    """One forward step: implicit diffusion, drift at the theta level."""
    if theta not in (0.0, 0.5):
        raise ValueError("theta must be 0 or 0.5")
    lhs, rhs = _step_matrices(space, y_values, dt, beta, theta)
    new = scipy.linalg.solve(lhs, rhs @ np.asarray(rho, dtype=float))
    mass = float(new @ space.measure)
    if abs(mass - 1.0) > MASS_TOL:
        raise MassDrift(f"mass deviates from one by {abs(mass - 1.0):.3e}")
    if float(np.min(new)) < POSITIVITY_TOL:
        warnings.warn(
            f"density undershoots to {float(np.min(new)):.3e}; reduce dt",
            PositivityLossWarning,
            stacklevel=2,
        )
    return new


def _mid_drift(drift_values, k, theta):
    if theta == 0.0:
        return drift_values[k]
    return 0.5 * (drift_values[k] + drift_values[k + 1])


def fp_solve(space, initial_density, drift, grid, beta, theta=0.5):
    """March the density from the initial node to time zero."""
    dvals = drift.values if isinstance(drift, DriftPath) else np.asarray(drift)
    rho = np.empty((grid.steps + 1, space.n_vertices))
    rho[0] = np.asarray(initial_density, dtype=float)
    mass0 = float(rho[0] @ space.measure)
    if abs(mass0 - 1.0) > MASS_TOL:
        raise MassDrift(f"initial mass deviates from one by {abs(mass0 - 1.0):.3e}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PositivityLossWarning)
        for k in range(grid.steps):
            rho[k + 1] = fp_step(
                space, rho[k], _mid_drift(dvals, k, theta), grid.dt, beta, theta
            )
    return MeasurePath(space=space, grid=grid, values=rho)


def optimal_drift(problem, u_path):
    """Edgewise drift  Y_k = omega - d u_k  built from a solution path."""
    vals = np.empty((problem.grid.steps + 1, problem.space.n_edges))
    for k in range(problem.grid.steps + 1):
        vals[k] = problem.omega.values - problem.space.edge_differences(
            u_path.values[k]
        )
    return DriftPath(space=problem.space, grid=problem.grid, values=vals)


def _fp_residual(space, rho, drift_values, grid, beta, theta):
    worst = 0.0
    for k in range(grid.steps):
        lhs, rhs = _step_matrices(
            space, _mid_drift(drift_values, k, theta), grid.dt, beta, theta
        )
        r = lhs @ rho[k + 1] - rhs @ rho[k]
        worst = max(worst, float(np.max(np.abs(r))))
    return worst


def stochastic_value(problem, nu_density, rho_path, drift, theta=0.5,
                     residual_tol=1e-8):
    """Drift energy minus winding and potential terms plus the final-value
    integral, for an admissible density/drift pair:

        1/2 <Y, Y> - <omega, Y> - int V rho dm dt + int u0 rho_end dm.

    The pair must solve the discrete forward equation from ``nu``; the
    per-step residual is rechecked against ``residual_tol``.
    """
    space, grid = problem.space, problem.grid
    rho = rho_path.values if isinstance(rho_path, MeasurePath) else np.asarray(rho_path)
    dvals = drift.values if isinstance(drift, DriftPath) else np.asarray(drift)
    nu = np.asarray(nu_density, dtype=float)
    if float(np.max(np.abs(rho[0] - nu))) > 1e-9 * max(1.0, float(np.max(np.abs(nu)))):
        raise FPResidualError("density path does not start at nu")
    res = _fp_residual(space, rho, dvals, grid, beta=problem.beta, theta=theta)
    scale = max(1.0, float(np.max(np.abs(rho))))
    if res > residual_tol * scale:
        raise FPResidualError(
            f"forward-equation residual {res:.3e} exceeds {residual_tol:.0e}"
        )
    omega_path = np.tile(problem.omega.values, (grid.steps + 1, 1))
    energy = 0.5 * drift_inner(space, grid, dvals, dvals, rho)
    winding = drift_inner(space, grid, omega_path, dvals, rho)
    wt = grid.trapezoid_weights()
    potential_term = float(
        np.sum(wt[:, None] * problem._v_slices * rho * space.measure[None, :])
    )
    final_term = float(np.sum(problem.final_u * rho[-1] * space.measure))
    return energy - winding - potential_term + final_term


@dataclass(frozen=True)
class DualityReport:
    lhs: float
    rhs: float
    gap: float
    solver: str
    theta: float
    mass_error: float
    min_density: float

    def as_dict(self):
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "gap": self.gap,
            "solver": self.solver,
            "theta": self.theta,
            "mass_error": self.mass_error,
            "min_density": self.min_density,
        }


def duality_check(problem, nu_density, method="mol", theta=0.5,
                  solver_kwargs=None):
    """Both sides of the value identity for the optimal drift.

    Solves the backward problem, forms ``Y = omega - du`` per edge, pushes
    ``nu`` forward with it and evaluates the stochastic value; the left
    side is the ``nu``-average of the backward solution at the initial
    time.  The inequality ``lhs <= rhs`` holds for any admissible pair;
    near-equality distinguishes the optimal drift.
    """
    nu = np.asarray(nu_density, dtype=float)
    if np.any(nu <= 0):
        raise ValueError("nu must have strictly positive density")
    if abs(float(nu @ problem.space.measure) - 1.0) > MASS_TOL:
        raise ValueError("nu must integrate to one")
    solver_kwargs = dict(solver_kwargs or {})
    if method == "mol":
        sol = mol_solve(problem, **solver_kwargs)
    elif method == "picard":
        sol = picard_solve(problem, **solver_kwargs)
    else:
        raise ValueError(f"unknown method {method!r}")
    u_path = cole_hopf(sol)
    drift = optimal_drift(problem, u_path)
    rho = fp_solve(problem.space, nu, drift, problem.grid, problem.beta, theta)
    lhs = float(np.sum(u_path.values[0] * nu * problem.space.measure))
    rhs = float(stochastic_value(problem, nu, rho, drift, theta=theta))
    mass = rho.values @ problem.space.measure
    return DualityReport(
        lhs=lhs,
        rhs=rhs,
        gap=rhs - lhs,
        solver=sol.method,
        theta=theta,
        mass_error=float(np.max(np.abs(mass - 1.0))),
        min_density=rho.min_density(),
    )


def divergence_bound_ratio(space, omega, u_field, rho_field):
    """Ratio of the divergence norm of the optimal-type drift to the
    regularity product

        |D((omega - du) rho)|_{L2(m)}
        ----------------------------------------------------
        (1 + |u|_{V2}) (|rho|_{L2(m)} + (sum gamma(rho) m)^(1/2)).

    Finite on every graph; the empirical constant is graph dependent and
    reported, never asserted universal.
    """
    omega = _as_cocycle(omega)
    y = omega.values - space.edge_differences(u_field)
    div = drift_divergence(space, y, np.asarray(rho_field, dtype=float))
    num = float(np.sqrt(np.sum(div**2 * space.measure)))
    rho_l2 = float(np.sqrt(np.sum(np.asarray(rho_field) ** 2 * space.measure)))
    rho_h1 = float(np.sqrt(np.sum(gamma(space, rho_field) * space.measure)))
    den = (1.0 + v_norms(space, u_field).v2) * (rho_l2 + rho_h1)
    return num / den if den > 0 else 0.0
