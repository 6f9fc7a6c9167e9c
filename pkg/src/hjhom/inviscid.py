"""Deterministic value function by backward dynamic programming.

The value of a final-condition problem with running cost
``|speed|^2 / 2 - V`` and a winding reward given by a cocycle is computed
over discrete paths that either rest or hop one edge per time step:

    u_k(x) = min over y in {x} + neighbours(x) of
             [ d(x, y)^2 / (2 dt) - omega(x -> y) - V(t_k, x) dt + u_{k+1}(y) ]

Rest steps cost nothing kinetically, hops pay the squared shortest-path
distance; multi-edge displacement emerges across steps, so the effective
speed is capped by ``max edge length / dt``.  Ties break to the smallest
vertex index, which makes minimizers reproducible.

Lifting the problem to a deck window and dropping the cocycle in favour of
the primitive reproduces the base value exactly
(:func:`cover_equivalence_check`); monotonicity in the final condition is
exact (:func:`comparison_test`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .space import TimeGrid, potential_slices
from .forms import VertexPath, _as_cocycle, integrate
from .cover import WindowExceeded

__all__ = [
    "InviscidProblem",
    "ValueTable",
    "DiscreteTrajectory",
    "solve_value",
    "extract_minimizer",
    "trajectory_action",
    "cover_equivalence_check",
    "comparison_test",
]


@dataclass
class InviscidProblem:
    """Final-value problem data: space, cocycle, potential, final condition
    and the uniform time grid on ``[t_start, 0]``."""

    space: object
    omega: object
    potential: object
    final_condition: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        self.omega = _as_cocycle(self.omega)
        if self.omega.space is not self.space:
            raise ValueError("cocycle lives on a different space")
        self.final_condition = np.asarray(self.final_condition, dtype=float)
        if len(self.final_condition) != self.space.n_vertices:
            raise ValueError("final condition length mismatch")
        vs = potential_slices(self.potential, self.space, self.grid)
        if not np.all(np.isfinite(vs)):
            raise ValueError("potential must be bounded on the grid")
        self._v_slices = vs

    def potential_at_node(self, k):
        return self._v_slices[k]


@dataclass
class ValueTable:
    """Backward-recursion output: values ``u[k, x]`` on every node and the
    chosen next vertex ``backpointers[k, x]`` for each non-final node."""

    problem: InviscidProblem
    u: np.ndarray
    backpointers: np.ndarray

    def value_at_start(self):
        return self.u[0]


@dataclass(frozen=True)
class DiscreteTrajectory:
    """One vertex per time node; rest steps repeat the vertex."""

    problem: InviscidProblem
    vertices: tuple

    def as_vertex_path(self):
        return VertexPath(self.problem.space, self.vertices)

    def displacement(self):
        """Total metric length traversed (rests contribute zero)."""
        total = 0.0
        space = self.problem.space
        for a, b in zip(self.vertices, self.vertices[1:]):
            if a != b:
                idx, _ = space.edge_id(a, b)
                total += space.lengths[idx]
        return total


def _move_table(space, omega_values_fn, dt, dist_fn):
    """Candidate moves per vertex: (cand, cost) padded arrays.

    ``cand[x]`` lists x itself and its neighbours in ascending order
    (padding repeats x with +inf cost so the argmin tie-break stays
    'smallest vertex index').  ``cost[x, j]`` carries the kinetic term
    minus the winding reward of the move.
    """
    n = space.n_vertices
    cands = []
    for x in range(n):
        entries = sorted(set(int(y) for y in space.neighbors(x)) | {x})
        cands.append(entries)
    width = max(len(c) for c in cands)
    cand = np.empty((n, width), dtype=np.int64)
    cost = np.full((n, width), np.inf)
    for x, entries in enumerate(cands):
        for j, y in enumerate(entries):
            cand[x, j] = y
            if y == x:
                cost[x, j] = 0.0
            else:
                cost[x, j] = dist_fn(x, y) ** 2 / (2.0 * dt) - omega_values_fn(x, y)
        cand[x, len(entries):] = x
    return cand, cost


def _backward_recursion(cand, cost, v_slices, dt, g):
    steps = v_slices.shape[0] - 1
    n = len(g)
    u = np.empty((steps + 1, n))
    bp = np.empty((steps, n), dtype=np.int64)
    u[steps] = g
    rows = np.arange(n)
    for k in range(steps - 1, -1, -1):
        total = cost + u[k + 1][cand]
        j = np.argmin(total, axis=1)
        bp[k] = cand[rows, j]
        u[k] = total[rows, j] - v_slices[k] * dt
    return u, bp


def solve_value(problem):
    """Backward Bellman recursion over rest-or-hop moves."""
    space = problem.space
    dist = space.distances()
    cand, cost = _move_table(
        space,
        problem.omega.value,
        problem.grid.dt,
        lambda x, y: dist[x, y],
    )
    u, bp = _backward_recursion(
        cand, cost, problem._v_slices, problem.grid.dt, problem.final_condition
    )
    return ValueTable(problem=problem, u=u, backpointers=bp)


def extract_minimizer(table, start_vertex):
    """Follow backpointers from a start vertex at the initial node."""
    verts = [int(start_vertex)]
    for k in range(table.problem.grid.steps):
        verts.append(int(table.backpointers[k, verts[-1]]))
    return DiscreteTrajectory(problem=table.problem, vertices=tuple(verts))


def trajectory_action(problem, trajectory):
    """Forward re-evaluation of the discrete action of a trajectory:
    kinetic cost minus winding reward minus potential plus final value."""
    space = problem.space
    dist = space.distances()
    dt = problem.grid.dt
    verts = trajectory.vertices
    total = 0.0
    for k, (a, b) in enumerate(zip(verts, verts[1:])):
        if a != b:
            total += dist[a, b] ** 2 / (2.0 * dt)
        total -= problem.potential_at_node(k)[a] * dt
    total -= integrate(problem.omega, VertexPath(space, verts))
    total += problem.final_condition[verts[-1]]
    return total


def cover_equivalence_check(problem, cover):
    """Solve the cocycle-free problem on the deck window with final
    condition ``g o sigma - phi`` and compare ``v + phi`` on interior
    sheets against the base value.

    The lifted recursion uses the projected base move costs, so both
    recursions range over the same discrete path space and the identity is
    combinatorial; discrepancies are pure float noise.

    Returns ``(max_discrepancy, per_sheet)`` where ``per_sheet`` maps each
    sheet with ``|h|_inf <= h_max - steps`` (the sheets the window is
    provably large enough for) to its discrepancy.
    """
    if cover.space is not problem.space:
        raise ValueError("cover was built over a different space")
    if not np.allclose(cover.omega.values, problem.omega.values):
        raise ValueError("cover was built for a different cocycle")
    steps = problem.grid.steps
    if cover.rank > 0 and cover.h_max < steps:
        raise WindowExceeded(
            f"window h_max={cover.h_max} cannot absorb {steps} winding steps"
        )
    base = solve_value(problem)

    space = problem.space
    dist = space.distances()
    lifted = cover.lifted_space()
    base_of = cover.base_of
    cand, cost = _move_table(
        lifted,
        lambda x, y: 0.0,
        problem.grid.dt,
        lambda x, y: dist[base_of[x], base_of[y]],
    )
    v_slices = problem._v_slices[:, base_of]
    g_lift = problem.final_condition[base_of] - cover.phi
    v, _ = _backward_recursion(cand, cost, v_slices, problem.grid.dt, g_lift)

    interior = cover.h_max - steps if cover.rank else 0
    per_sheet = {}
    for si, h in enumerate(cover.sheets):
        if cover.rank and max(abs(c) for c in h) > interior:
            continue
        ids = np.arange(si * space.n_vertices, (si + 1) * space.n_vertices)
        rebuilt = v[:, ids] + cover.phi[ids][None, :]
        per_sheet[h] = float(np.max(np.abs(rebuilt - base.u)))
    return max(per_sheet.values()), per_sheet


def comparison_test(problem_minus, problem_plus, tol=1e-12):
    """Monotonicity in the final condition: with ordered data ``g- <= g+``
    and identical remaining inputs the values stay ordered."""
    pm, pp = problem_minus, problem_plus
    if pm.space is not pp.space or pm.grid != pp.grid:
        raise ValueError("problems must share space and grid")
    if not np.allclose(pm.omega.values, pp.omega.values):
        raise ValueError("problems must share the cocycle")
    if not np.array_equal(pm._v_slices, pp._v_slices):
        raise ValueError("problems must share the potential")
    if np.any(pm.final_condition > pp.final_condition):
        raise ValueError("final conditions are not ordered")
    um = solve_value(pm).u
    up = solve_value(pp).u
    return bool(np.all(um <= up + tol))
