import numpy as np
import pytest

from safe_explore.baselines import (
    LipschitzConfig,
    heuristic_expanders,
    select_next_baseline,
    stageopt_expanders,
)
from safe_explore.domain import Box, GridDomain
from safe_explore.gp import condition
from safe_explore.safety import SafetyModel, is_safe

from conftest import make_gp


def explored_1d_state(n_evals=8, seed=0, lengthscale=1.2, outputscale=100.0):
    rng = np.random.default_rng(seed)
    gp = make_gp([], [], lengthscale=lengthscale, outputscale=outputscale,
                 noise=0.05, dim=1)
    for _ in range(n_evals):
        x = np.array([rng.uniform(-1.5, 1.5)])
        gp = condition(gp, x, np.exp(-x[0]) + 0.05 + rng.normal(0, 0.22))
    return gp


@pytest.fixture
def grid_1d():
    return GridDomain(Box(np.array([-5.0]), np.array([5.0])), 201)


@pytest.fixture
def safety():
    return SafetyModel(safe_seed=np.zeros(1), beta=2.0)


def test_zero_lipschitz_admits_all_safe_points(grid_1d, safety):
    gp = explored_1d_state()
    idx = stageopt_expanders(gp, safety, 8, grid_1d, LipschitzConfig(0.0))
    mu, var = gp.posterior(grid_1d.points)
    safe = mu - 2 * np.sqrt(var) >= 0
    assert safe.any() and not safe.all()
    assert np.array_equal(idx, np.flatnonzero(safe))


def test_huge_lipschitz_empties_expander_set(grid_1d, safety):
    gp = explored_1d_state()
    idx = stageopt_expanders(gp, safety, 8, grid_1d, LipschitzConfig(1e9))
    assert idx.size == 0


def test_expander_sets_shrink_as_lipschitz_grows(grid_1d, safety):
    gp = explored_1d_state()
    sets = [set(stageopt_expanders(gp, safety, 8, grid_1d, LipschitzConfig(L)).tolist())
            for L in (0.0, 1.0, 5.0, 10.0)]
    for smaller, larger in zip(sets[1:], sets[:-1]):
        assert smaller <= larger
    assert len(sets[0]) > len(sets[-1])


def test_expanders_subset_of_safe(grid_1d, safety):
    gp = explored_1d_state(seed=4)
    mu, var = gp.posterior(grid_1d.points)
    safe = set(np.flatnonzero(mu - 2 * np.sqrt(var) >= 0).tolist())
    for L in (0.0, 0.5, 2.0):
        assert set(stageopt_expanders(gp, safety, 8, grid_1d, LipschitzConfig(L)).tolist()) <= safe
    assert set(heuristic_expanders(gp, safety, 8, grid_1d).tolist()) <= safe


def test_heuristic_converged_point_is_not_expander():
    # a point evaluated many times carries no optimism left
    gp = make_gp([], [], lengthscale=1.0, outputscale=4.0, noise=0.05, dim=1)
    safety = SafetyModel(safe_seed=np.zeros(1), beta=2.0)
    for _ in range(30):
        gp = condition(gp, np.zeros(1), 2.0 + np.random.default_rng(1).normal(0, 0.22))
    grid = GridDomain(Box(np.array([-5.0]), np.array([5.0])), 101)
    idx = heuristic_expanders(gp, safety, 30, grid)
    seed_node = grid.snap_index(np.zeros(1))
    assert seed_node not in set(idx.tolist())


def test_heuristic_frontier_point_is_expander():
    # one confident observation at the seed with fine grid spacing: the
    # optimistic hypothetical update flips nearby nodes
    gp = make_gp([], [], lengthscale=1.0, outputscale=4.0, noise=0.01, dim=1)
    safety = SafetyModel(safe_seed=np.zeros(1), beta=2.0)
    for _ in range(3):
        gp = condition(gp, np.zeros(1), 6.0)
    grid = GridDomain(Box(np.array([-2.0]), np.array([2.0])), 81)  # spacing ls/20
    idx = heuristic_expanders(gp, safety, 3, grid)
    mu, var = gp.posterior(grid.points)
    safe_idx = np.flatnonzero(mu - 2 * np.sqrt(var) >= 0)
    assert idx.size > 0
    # frontier (outermost) safe nodes are expanders
    assert safe_idx.min() in idx and safe_idx.max() in idx


def test_selection_prefers_highest_variance(grid_1d, safety):
    gp = explored_1d_state()
    choice = select_next_baseline("uncertainty", gp, safety, 8, grid_1d)
    mu, var = gp.posterior(grid_1d.points)
    safe = mu - 2 * np.sqrt(var) >= 0
    assert np.sqrt(var[safe]).max() == pytest.approx(choice.score)
    assert is_safe(gp, safety, 8, choice.x_next)


def test_tie_break_lowest_index():
    # a fresh prior at beta = 0 makes every grid point safe with exactly
    # equal variance: the tie resolves to the lowest grid index
    gp = make_gp([], [], outputscale=4.0, dim=1)
    safety = SafetyModel(safe_seed=np.zeros(1), beta=0.0)
    grid = GridDomain(Box(np.array([-2.0]), np.array([2.0])), 41)
    choice = select_next_baseline("uncertainty", gp, safety, 0, grid)
    assert choice.index == 0
    assert choice.score == pytest.approx(2.0)


def test_stalled_expander_set_reevaluates_known_point(grid_1d, safety):
    gp = explored_1d_state()
    choice = select_next_baseline("stageopt", gp, safety, 8, grid_1d,
                                  LipschitzConfig(1e9))
    assert choice.expander_fallback
    assert choice.expander_count == 0
    assert is_safe(gp, safety, 8, choice.x_next)
    # the stall re-evaluates an already-evaluated point or the seed
    cands = np.vstack([gp.data.points, np.zeros((1, 1))])
    assert np.isclose(cands, choice.x_next[None, :]).all(axis=1).any()


def test_selection_with_no_safe_grid_point_returns_seed(safety):
    # 100-point grid over [-5, 5] does not contain the origin, so with a
    # fresh wide prior no grid node is safe and the virtual seed is chosen
    gp = make_gp([], [], outputscale=100.0, dim=1)
    grid = GridDomain(Box(np.array([-5.0]), np.array([5.0])), 100)
    choice = select_next_baseline("uncertainty", gp, safety, 0, grid)
    assert np.array_equal(choice.x_next, safety.safe_seed)
    assert choice.index == len(grid)


def test_seed_on_grid_is_selected_naturally(safety):
    # when the seed coincides with a grid node it is a safe grid point
    gp = make_gp([], [], outputscale=100.0, dim=1)
    grid = GridDomain(Box(np.array([-5.0]), np.array([5.0])), 101)
    choice = select_next_baseline("uncertainty", gp, safety, 0, grid)
    assert choice.index == grid.snap_index(np.zeros(1))
    assert np.array_equal(choice.x_next, np.zeros(1))


def test_determinism(grid_1d, safety):
    gp = explored_1d_state(seed=9)
    a = select_next_baseline("stageopt", gp, safety, 8, grid_1d, LipschitzConfig(1.0))
    b = select_next_baseline("stageopt", gp, safety, 8, grid_1d, LipschitzConfig(1.0))
    assert a.index == b.index and a.score == b.score


def test_unknown_kind_rejected(grid_1d, safety):
    gp = explored_1d_state()
    with pytest.raises(ValueError):
        select_next_baseline("greedy", gp, safety, 8, grid_1d)
