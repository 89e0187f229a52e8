"""Brute-force oracle tests: scenario tree, extensive form, value grids."""

import numpy as np
import pytest

from helpers import (polyhedral, random_instance, random_problem,
                     reference_value, single_var_instance,
                     subproblem_from_stage)
from isddp.errors import Infeasible, TooLarge
from isddp.model import (Box, MultistageProblem, Realization, StageModel,
                         parse_instance)
from isddp.oracle import (build_tree, extensive_form,
                          single_value_function_grid, subtree_value,
                          tree_size, true_Q_grid)
from isddp.subsolve import SubproblemInstance, solve_exact

SEED = 20240821
FIXTURE = "tests/fixtures/fixture3.json"
# Extensive-form optimum of the bundled 3-stage instance, frozen after
# cross-validation against the LP-free grid recursion (agreement ~8e-17,
# well inside the recursion's reported interpolation bound of ~1.4e-4).
FIXTURE3_OPTIMUM = 0.1769


def load_fixture():
    with open(FIXTURE) as fh:
        return parse_instance(fh.read())


def _stage(state_dim, box, realizations, floor=0.0):
    return StageModel(state_dim=state_dim, state_set=box,
                      realizations=tuple(realizations),
                      cost_lower_bound=floor)


def _cost_only(prob, pieces, dim_y, dim_x):
    return Realization(probability=prob,
                       A=np.zeros((0, dim_y)), B=np.zeros((0, dim_x)),
                       b=np.zeros(0), cost=polyhedral(pieces, dim_y, dim_x))


def hand_problem():
    """Two stages: free x1 in [0,1], then y pinned to x1-0.2 or 0.5-x1.

    Q_2(x) = 0.5 max(x-0.2, 0) + 0.5 max(0.5-x, 0) is flat at 0.15 on
    [0.2, 0.5], so the overall optimum is 0.15 with a non-unique argmin.
    """
    box01 = Box(np.array([0.0]), np.array([1.0]))
    zero = [([0.0], [0.0], 0.0)]
    stage1 = _stage(1, box01, [_cost_only(1.0, zero, 1, 1)])
    plus = polyhedral([([1.0], [0.0], 0.0), ([0.0], [0.0], 0.0)], 1, 1)
    r0 = Realization(probability=0.5, A=np.array([[1.0]]),
                     B=np.array([[-1.0]]), b=np.array([-0.2]), cost=plus)
    r1 = Realization(probability=0.5, A=np.array([[1.0]]),
                     B=np.array([[1.0]]), b=np.array([0.5]), cost=plus)
    stage2 = _stage(1, Box(np.array([-1.0]), np.array([1.0])), [r0, r1])
    return MultistageProblem(horizon=2, x0=np.array([0.0]),
                             stages=(stage1, stage2))


def q2_hand(x):
    return 0.5 * np.maximum(x - 0.2, 0.0) + 0.5 * np.maximum(0.5 - x, 0.0)


# ---------------------------------------------------------------------------
# scenario tree
# ---------------------------------------------------------------------------

def test_tree_shape_two_stage():
    prob = hand_problem()
    assert tree_size(prob) == 4
    nodes = build_tree(prob)
    assert [n.id for n in nodes] == [0, 1, 2, 3]
    root, mid, leaf0, leaf1 = nodes
    assert (root.stage, root.parent, root.realization) == (0, None, None)
    assert root.children == (1,)
    assert (mid.stage, mid.parent, mid.realization) == (1, 0, 0)
    assert mid.children == (2, 3)
    assert mid.probability == 1.0 and mid.path_probability == 1.0
    for leaf, j in ((leaf0, 0), (leaf1, 1)):
        assert (leaf.stage, leaf.parent, leaf.realization) == (2, 1, j)
        assert leaf.children == ()
        assert abs(leaf.probability - 0.5) < 1e-15
        assert abs(leaf.path_probability - 0.5) < 1e-15


def test_tree_size_counts_subtrees():
    prob = hand_problem()
    assert tree_size(prob, t_start=2) == 3  # virtual root plus two leaves
    assert tree_size(prob, t_start=3) == 1  # just the virtual root


def test_tree_probabilities_fixture3():
    prob = load_fixture()
    nodes = build_tree(prob)
    assert len(nodes) == tree_size(prob) == 8
    leaves = [n for n in nodes if n.stage == prob.horizon]
    assert len(leaves) == 4
    assert abs(sum(n.path_probability for n in leaves) - 1.0) < 1e-12
    for n in nodes:  # children listed in realization order
        js = [nodes[c].realization for c in n.children]
        assert js == sorted(js)
        for c in n.children:
            assert nodes[c].parent == n.id


def test_tree_too_large_guard():
    box01 = Box(np.array([0.0]), np.array([1.0]))
    zero = [([0.0], [0.0], 0.0)]
    wide = _stage(1, box01, [_cost_only(0.25, zero, 1, 1),
                             _cost_only(0.25, zero, 1, 1),
                             _cost_only(0.5, zero, 1, 1)])
    first = _stage(1, box01, [_cost_only(1.0, zero, 1, 1)])
    prob = MultistageProblem(horizon=13, x0=np.array([0.5]),
                             stages=(first,) + (wide,) * 12)
    assert tree_size(prob) > 100_000
    with pytest.raises(TooLarge):
        build_tree(prob)
    with pytest.raises(TooLarge):
        extensive_form(prob)


# ---------------------------------------------------------------------------
# extensive form
# ---------------------------------------------------------------------------

def test_extensive_form_hand_value():
    prob = hand_problem()
    value, decisions = extensive_form(prob)
    assert abs(value - 0.15) < 1e-9
    assert set(decisions) == {0, 1, 2, 3}
    np.testing.assert_allclose(decisions[0], prob.x0)
    x1 = decisions[1][0]
    assert 0.2 - 1e-9 <= x1 <= 0.5 + 1e-9
    assert abs(decisions[2][0] - (x1 - 0.2)) < 1e-9
    assert abs(decisions[3][0] - (0.5 - x1)) < 1e-9


def test_extensive_form_single_stage_matches_certified_solve():
    rng = np.random.default_rng(SEED)
    for _ in range(5):
        prob = random_problem(rng, horizon=1)
        value, decisions = extensive_form(prob)
        cert = solve_exact(subproblem_from_stage(prob, 1, 0, prob.x0))
        assert abs(value - cert.primal_value) <= 1e-9
        direct = max(p.slope_y @ decisions[1] + p.slope_x @ prob.x0 + p.offset
                     for p in prob.stage(1).realizations[0].cost.pieces)
        assert abs(direct - value) <= 1e-9


def test_extensive_form_infeasible():
    box01 = Box(np.array([0.0]), np.array([1.0]))
    zero = [([0.0], [0.0], 0.0)]
    stage1 = _stage(1, box01, [_cost_only(1.0, zero, 1, 1)])
    pinned = Realization(probability=1.0, A=np.array([[1.0]]),
                         B=np.array([[-1.0]]), b=np.array([-2.0]),
                         cost=polyhedral(zero, 1, 1))
    stage2 = _stage(1, box01, [pinned])
    prob = MultistageProblem(horizon=2, x0=np.array([0.0]),
                             stages=(stage1, stage2))
    with pytest.raises(Infeasible):
        extensive_form(prob)
    assert subtree_value(prob, 2, [0.0]) == np.inf


def test_extensive_form_reference_sandwich():
    """EF optimum squeezed between a grid restriction (upper) and the same
    grid minus a Lipschitz slack (lower), with stage-2 values from an
    independent LP solver."""
    rng = np.random.default_rng(SEED + 1)
    for _ in range(4):
        prob = random_problem(rng, horizon=2, n_realizations=2)
        efval, _ = extensive_form(prob)
        stage1, stage2 = prob.stage(1), prob.stage(2)
        box = stage1.state_set
        xs = np.linspace(box.lower[0], box.upper[0], 161)
        c1 = stage1.realizations[0].cost
        phi = np.max([p.slope_y[0] * xs + p.slope_x @ prob.x0 + p.offset
                      for p in c1.pieces], axis=0)
        lip = max(abs(p.slope_y[0]) for p in c1.pieces)
        for j, r in enumerate(stage2.realizations):
            inst = subproblem_from_stage(prob, 2, j, [xs[0]])
            qs = np.array([reference_value(inst, xbar=[x]) for x in xs])
            phi = phi + r.probability * qs
            lip += r.probability * max(abs(p.slope_x[0])
                                       for p in r.cost.pieces)
        gridmin = float(phi.min())
        h = (box.upper[0] - box.lower[0]) / (len(xs) - 1)
        assert efval <= gridmin + 1e-7
        assert gridmin - efval <= lip * h + 1e-7


def test_fixture3_extensive_form_pinned():
    prob = load_fixture()
    value, decisions = extensive_form(prob)
    assert abs(value - FIXTURE3_OPTIMUM) < 1e-9
    assert abs(decisions[1][0] - 0.3) < 1e-7


# ---------------------------------------------------------------------------
# subtree values and grids
# ---------------------------------------------------------------------------

def test_subtree_value_conventions():
    prob = hand_problem()
    assert subtree_value(prob, 3, [0.7]) == 0.0
    with pytest.raises(ValueError):
        subtree_value(prob, 0, [0.0])
    with pytest.raises(ValueError):
        subtree_value(prob, 4, [0.0])
    for x in np.linspace(0.0, 1.0, 7):
        assert abs(subtree_value(prob, 2, [x]) - q2_hand(x)) < 1e-9


def test_grid_last_stage_is_exact():
    prob = hand_problem()
    xs = np.linspace(0.0, 1.0, 31)
    vals, bound = true_Q_grid(prob, 2, xs)
    assert bound == 0.0
    np.testing.assert_allclose(vals, q2_hand(xs), atol=1e-12)


def test_grid_first_stage_value():
    prob = hand_problem()
    vals, bound = true_Q_grid(prob, 1, np.array([0.0]))
    assert 0.0 < bound <= 0.01
    assert abs(vals[0] - 0.15) <= bound + 1e-12


def test_grid_past_horizon_zero():
    prob = hand_problem()
    vals, bound = true_Q_grid(prob, 3, np.linspace(0.0, 1.0, 5))
    assert bound == 0.0
    assert np.all(vals == 0.0)


def test_fixture3_grid_recursion_agrees():
    prob = load_fixture()
    value, _ = extensive_form(prob)
    vals, bound = true_Q_grid(prob, 1, np.array([prob.x0[0]]))
    assert 0.0 < bound < 5e-4
    assert abs(vals[0] - value) <= bound
    assert abs(vals[0] - value) <= 1e-4


def test_fixture3_stage_grids_match_subtree_solves():
    prob = load_fixture()
    xs = np.linspace(0.0, 1.0, 9)
    for t in (2, 3):
        vals, bound = true_Q_grid(prob, t, xs)
        exact = np.array([subtree_value(prob, t, [x]) for x in xs])
        assert np.all(vals >= exact - 1e-9)  # chord interpolant overestimates
        np.testing.assert_allclose(vals, exact, atol=bound + 1e-9)


def test_grid_recursion_vs_extensive_slices():
    rng = np.random.default_rng(SEED + 2)
    for _ in range(3):
        prob = random_problem(rng, horizon=3, n_realizations=2)
        box = prob.stage(1).state_set
        xs = np.linspace(box.lower[0], box.upper[0], 5)
        vals, bound = true_Q_grid(prob, 2, xs, resolution=801)
        exact = np.array([subtree_value(prob, 2, [x]) for x in xs])
        assert np.all(vals >= exact - 1e-9)
        np.testing.assert_allclose(vals, exact, atol=bound + 1e-9)


def test_grid_two_dimensional_states():
    box2 = Box(np.zeros(2), np.ones(2))
    zero2 = [(np.zeros(2), np.zeros(2), 0.0)]
    stage1 = _stage(2, box2, [_cost_only(1.0, zero2, 2, 2)])
    cheby = [([1.0, 0.0], [-1.0, 0.0], 0.0), ([-1.0, 0.0], [1.0, 0.0], 0.0),
             ([0.0, 1.0], [0.0, -1.0], 0.0), ([0.0, -1.0], [0.0, 1.0], 0.0)]
    stage2 = _stage(2, box2, [_cost_only(1.0, cheby, 2, 2)])
    prob = MultistageProblem(horizon=2, x0=np.array([0.3, 0.3]),
                             stages=(stage1, stage2))
    pts = np.array([[-0.5, 0.5], [0.5, 0.5], [1.5, 2.0], [0.2, -0.3]])
    vals, bound = true_Q_grid(prob, 2, pts)
    dist = np.maximum(np.maximum(-pts, pts - 1.0), 0.0)
    np.testing.assert_allclose(vals, dist.max(axis=1), atol=1e-9)
    assert bound == 0.0
    value, _ = extensive_form(prob)  # x1 can sit anywhere in the box
    assert abs(value) <= 1e-9


def test_grid_rejects_high_dimensional_states():
    box3 = Box(np.zeros(3), np.ones(3))
    zero3 = [(np.zeros(3), np.zeros(3), 0.0)]
    stages = (_stage(3, box3, [_cost_only(1.0, zero3, 3, 3)]),
              _stage(3, box3, [_cost_only(1.0, zero3, 3, 3)]))
    prob = MultistageProblem(horizon=2, x0=np.full(3, 0.5), stages=stages)
    with pytest.raises(TooLarge):
        true_Q_grid(prob, 2, np.zeros((1, 3)))


# ---------------------------------------------------------------------------
# single-subproblem value grids
# ---------------------------------------------------------------------------

def test_single_value_grid_tracks_parameter():
    inst = SubproblemInstance(
        cost=polyhedral([([1.0], [0.0], 0.0), ([0.0], [0.0], 0.0)], 1, 1),
        A=np.array([[1.0]]), B=np.array([[-1.0]]), b=np.array([0.0]),
        ineq=(), Y=Box(np.array([-2.0]), np.array([2.0])),
        xbar=np.array([0.0]))
    xs = np.linspace(-1.5, 1.5, 13)
    vals = single_value_function_grid(inst, xs)
    np.testing.assert_allclose(vals, np.maximum(xs, 0.0), atol=1e-9)


def test_single_value_grid_distance_and_infeasibility():
    dist = single_var_instance([(1.0, -1.0, 0.0), (-1.0, 1.0, 0.0)])
    xs = np.linspace(-1.0, 2.0, 16)
    vals = single_value_function_grid(dist, xs)
    expected = np.maximum(np.maximum(-xs, xs - 1.0), 0.0)
    np.testing.assert_allclose(vals, expected, atol=1e-9)

    pinned = SubproblemInstance(
        cost=polyhedral([([0.0], [0.0], 0.0)], 1, 1),
        A=np.array([[1.0]]), B=np.array([[-1.0]]), b=np.array([0.0]),
        ineq=(), Y=Box(np.array([0.0]), np.array([1.0])),
        xbar=np.array([0.5]))
    vals = single_value_function_grid(pinned, np.array([-0.5, 0.5, 1.5]))
    assert vals[0] == np.inf and vals[2] == np.inf
    assert abs(vals[1]) <= 1e-12


def test_grid_agrees_with_certified_solver():
    rng = np.random.default_rng(SEED)
    for _ in range(30):
        inst = random_instance(rng)
        cert = solve_exact(inst)
        vals = single_value_function_grid(inst, inst.xbar)
        assert abs(vals[0] - cert.primal_value) <= 1e-9
        assert abs(vals[0] - reference_value(inst)) <= 1e-7
