import numpy as np
import pytest

from hjhom import (
    Cocycle,
    GraphSpace,
    InviscidProblem,
    TimeGrid,
    WindowExceeded,
    add,
    build_cover,
    comparison_test,
    cover_equivalence_check,
    extract_minimizer,
    solve_value,
    trajectory_action,
)

from conftest import random_cocycle, random_connected_space


def brute_force_value(problem, start):
    """Oracle: enumerate every rest-or-hop move sequence on the
    space-time lattice and take the cheapest action."""
    space = problem.space
    d = space.distances()
    dt = problem.grid.dt
    steps = problem.grid.steps
    moves = {
        x: [x] + [int(y) for y in space.neighbors(x)]
        for x in range(space.n_vertices)
    }

    best = np.inf
    stack = [(start, 0, 0.0)]
    while stack:
        x, k, acc = stack.pop()
        acc_here = acc - problem.potential_at_node(k)[x] * dt if k < steps else acc
        if k == steps:
            best = min(best, acc + problem.final_condition[x])
            continue
        for y in moves[x]:
            cost = 0.0 if y == x else d[x, y] ** 2 / (2 * dt) - problem.omega.value(x, y)
            stack.append((y, k + 1, acc_here + cost))
    return best


def zero_problem(space, grid):
    return InviscidProblem(
        space, Cocycle(space, np.zeros(space.n_edges)), None,
        np.zeros(space.n_vertices), grid,
    )


# -- value function ---------------------------------------------------------------

def test_trivial_problem_is_zero():
    space = GraphSpace.cycle(8, 1.0)
    table = solve_value(zero_problem(space, TimeGrid(-1.0, 16)))
    assert np.allclose(table.u, 0.0)


def test_three_cycle_hand_oracle():
    space = GraphSpace.cycle(3, 3.0)  # unit edges
    problem = InviscidProblem(
        space, Cocycle(space, np.zeros(3)), None,
        np.array([0.0, 1.0, 2.0]), TimeGrid(-1.0, 1),
    )
    table = solve_value(problem)
    assert np.allclose(table.u[0], [0.0, 0.5, 0.5])
    assert np.allclose(table.u[1], [0.0, 1.0, 2.0])


def test_matches_brute_force_enumeration(rng):
    for trial in range(8):
        space = random_connected_space(rng, n_min=4, n_max=7, extra_edges=2)
        grid = TimeGrid(-0.75, int(rng.integers(3, 6)))
        problem = InviscidProblem(
            space,
            random_cocycle(space, rng),
            rng.standard_normal(space.n_vertices),
            rng.standard_normal(space.n_vertices),
            grid,
        )
        table = solve_value(problem)
        for start in range(space.n_vertices):
            assert np.isclose(
                table.u[0][start], brute_force_value(problem, start), atol=1e-10
            )


def test_constant_form_value_converges_to_closed_form():
    # continuum optimum: steady winding at the drift speed, value -c^2/2 |t|
    c, exact = 2.0, -2.0
    errors = []
    for n in (64, 128, 256):
        space = GraphSpace.cycle(n, 1.0)
        problem = InviscidProblem(
            space, Cocycle.constant_on_cycle(space, c), None,
            np.zeros(n), TimeGrid(-1.0, 2 * n),
        )
        val = solve_value(problem).u[0][0]
        errors.append(abs(val - exact))
    assert errors[-1] <= 0.05 * abs(exact)
    assert all(b <= a + 1e-12 for a, b in zip(errors, errors[1:]))


def test_final_node_equals_final_condition(rng):
    space = random_connected_space(rng)
    g = rng.standard_normal(space.n_vertices)
    problem = InviscidProblem(
        space, random_cocycle(space, rng), None, g, TimeGrid(-0.5, 4)
    )
    assert np.array_equal(solve_value(problem).u[-1], g)


# -- minimizers --------------------------------------------------------------------

def test_minimizer_constant_when_nothing_to_gain():
    space = GraphSpace.cycle(10, 1.0)
    table = solve_value(zero_problem(space, TimeGrid(-1.0, 8)))
    traj = extract_minimizer(table, 3)
    assert set(traj.vertices) == {3}


def test_minimizer_winds_at_drift_speed():
    n, c = 64, 2.0
    space = GraphSpace.cycle(n, 1.0)
    problem = InviscidProblem(
        space, Cocycle.constant_on_cycle(space, c), None,
        np.zeros(n), TimeGrid(-1.0, 2 * n),
    )
    traj = extract_minimizer(solve_value(problem), 0)
    assert abs(traj.displacement() - c * 1.0) <= 1.0 / n + 1e-12


def test_tie_break_picks_smallest_vertex():
    # forward hops cost exactly as much as resting: ties resolve to the
    # smallest candidate vertex index
    space = GraphSpace.cycle(3, 3.0)
    om = Cocycle(space, np.array([0.5, 0.5, 0.5]))  # oriented 0->1->2->0
    problem = InviscidProblem(space, om, None, np.zeros(3), TimeGrid(-1.0, 1))
    table = solve_value(problem)
    assert table.backpointers[0].tolist() == [0, 1, 0]


def test_action_reevaluation_consistency(rng):
    for _ in range(50):
        space = random_connected_space(rng, n_min=4, n_max=9)
        problem = InviscidProblem(
            space,
            random_cocycle(space, rng),
            rng.standard_normal(space.n_vertices),
            rng.standard_normal(space.n_vertices),
            TimeGrid(-0.5, int(rng.integers(2, 7))),
        )
        table = solve_value(problem)
        start = int(rng.integers(space.n_vertices))
        traj = extract_minimizer(table, start)
        assert abs(
            trajectory_action(problem, traj) - table.u[0][start]
        ) <= 1e-10


# -- structural identities ------------------------------------------------------------

def test_dynamic_programming_principle(rng):
    space = random_connected_space(rng)
    problem = InviscidProblem(
        space, random_cocycle(space, rng),
        rng.standard_normal(space.n_vertices),  # autonomous
        rng.standard_normal(space.n_vertices), TimeGrid(-1.0, 8),
    )
    table = solve_value(problem)
    j = 5
    sub = InviscidProblem(
        space, problem.omega, problem.potential, table.u[j], TimeGrid(-1.0 * j / 8, j)
    )
    assert np.array_equal(solve_value(sub).u[0], table.u[0])


def test_additive_equivariance(rng):
    space = random_connected_space(rng)
    g = rng.standard_normal(space.n_vertices)
    om = random_cocycle(space, rng)
    grid = TimeGrid(-0.5, 5)
    base = solve_value(InviscidProblem(space, om, None, g, grid)).u
    shifted = solve_value(InviscidProblem(space, om, None, g + 1.0, grid)).u
    assert np.allclose(shifted, base + 1.0, atol=1e-12)


def test_gauge_shift_identity(rng):
    # value(omega + df, g)(x) = value(omega, g - f)(x) + f(x), exactly
    for _ in range(10):
        space = random_connected_space(rng)
        om = random_cocycle(space, rng)
        f = rng.standard_normal(space.n_vertices)
        g = rng.standard_normal(space.n_vertices)
        grid = TimeGrid(-0.5, 5)
        lhs = solve_value(
            InviscidProblem(space, add(om, Cocycle.exact(space, f)), None, g, grid)
        ).u[0]
        rhs = solve_value(
            InviscidProblem(space, om, None, g - f, grid)
        ).u[0] + f
        assert np.allclose(lhs, rhs, atol=1e-10)


def test_continuity_modulus_bounded_under_refinement():
    # diagnostic: the one-spacing modulus of the value stays bounded
    moduli = []
    for n in (32, 64, 128):
        space = GraphSpace.cycle(n, 1.0)
        problem = InviscidProblem(
            space, Cocycle.constant_on_cycle(space, 1.0), None,
            np.cos(2 * np.pi * np.arange(n) / n), TimeGrid(-1.0, 2 * n),
        )
        u = solve_value(problem).u
        moduli.append(float(np.max(np.abs(u[:, 1:] - u[:, :-1]))))
    assert max(moduli) <= 2.0 * moduli[0] + 1e-6


# -- cover equivalence ------------------------------------------------------------------

def test_cover_equivalence_trivial_for_exact_form(rng):
    space = random_connected_space(rng)
    f = rng.standard_normal(space.n_vertices)
    om = Cocycle.exact(space, f)
    problem = InviscidProblem(
        space, om, rng.standard_normal(space.n_vertices),
        rng.standard_normal(space.n_vertices), TimeGrid(-0.5, 6),
    )
    disc, _ = cover_equivalence_check(problem, build_cover(space, om, h_max=0))
    assert disc <= 1e-9


def test_cover_equivalence_cycle_scenario():
    space = GraphSpace.cycle(12, 1.0)
    om = Cocycle.constant_on_cycle(space, 1.0)
    problem = InviscidProblem(
        space, om, None, np.zeros(12), TimeGrid(-0.5, 6)
    )
    disc, _ = cover_equivalence_check(problem, build_cover(space, om, h_max=6))
    assert disc <= 1e-9


def test_cover_equivalence_sheet_independent_with_larger_window():
    space = GraphSpace.cycle(12, 1.0)
    om = Cocycle.constant_on_cycle(space, 1.0)
    problem = InviscidProblem(
        space, om, None, np.cos(2 * np.pi * np.arange(12) / 12), TimeGrid(-0.5, 6)
    )
    disc6, sheets6 = cover_equivalence_check(problem, build_cover(space, om, h_max=6))
    disc7, sheets7 = cover_equivalence_check(problem, build_cover(space, om, h_max=7))
    assert disc6 <= 1e-9 and disc7 <= 1e-9
    assert set(sheets7) == {(-1,), (0,), (1,)}
    for h, v in sheets7.items():
        assert v <= 1e-9


def test_cover_equivalence_rejects_small_window():
    space = GraphSpace.cycle(12, 1.0)
    om = Cocycle.constant_on_cycle(space, 1.0)
    problem = InviscidProblem(space, om, None, np.zeros(12), TimeGrid(-0.5, 6))
    with pytest.raises(WindowExceeded):
        cover_equivalence_check(problem, build_cover(space, om, h_max=3))


# -- comparison principle ------------------------------------------------------------------

def test_comparison_equal_conditions(rng):
    space = random_connected_space(rng)
    g = rng.standard_normal(space.n_vertices)
    om = random_cocycle(space, rng)
    grid = TimeGrid(-0.5, 5)
    pm = InviscidProblem(space, om, None, g, grid)
    pp = InviscidProblem(space, om, None, g.copy(), grid)
    assert comparison_test(pm, pp)


def test_comparison_100_random_ordered_pairs(rng):
    space = GraphSpace.cycle(3, 3.0)
    grid = TimeGrid(-1.0, 6)
    for _ in range(100):
        om = random_cocycle(space, rng)
        g = rng.standard_normal(3)
        gap = rng.random(3)
        pm = InviscidProblem(space, om, None, g, grid)
        pp = InviscidProblem(space, om, None, g + gap, grid)
        assert comparison_test(pm, pp)


def test_comparison_rejects_unordered(rng):
    space = GraphSpace.cycle(4, 1.0)
    om = Cocycle(space, np.zeros(4))
    grid = TimeGrid(-0.5, 2)
    pm = InviscidProblem(space, om, None, np.array([0.0, 1, 0, 0]), grid)
    pp = InviscidProblem(space, om, None, np.array([1.0, 0, 1, 1]), grid)
    with pytest.raises(ValueError, match="ordered"):
        comparison_test(pm, pp)
