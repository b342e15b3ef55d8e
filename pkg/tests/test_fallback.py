from unittest.mock import MagicMock, patch

import pytest

from controller.lateral import LateralConfig, LateralController
from solver import InfeasibleError, NodeBudgetError
from utils.fallback import soften_on_infeasible


def test_retries_softened_after_infeasible():
    logger = MagicMock()
    calls = []

    @soften_on_infeasible(logger=logger)
    def solve(x, soft=False):
        calls.append(soft)
        if not soft:
            raise InfeasibleError("coupling rows conflict")
        return x * 2

    assert solve(3) == 6
    assert calls == [False, True]
    logger.warning.assert_called_once()
    assert "Retrying with softened constraints" in logger.warning.call_args[0][0]


def test_hard_success_skips_retry():
    calls = []

    @soften_on_infeasible()
    def solve(soft=False):
        calls.append(soft)
        return "hard"

    assert solve(soft=True) == "hard"     # callers cannot force the softened solve
    assert calls == [False]


def test_softened_failure_propagates():
    @soften_on_infeasible()
    def solve(soft=False):
        raise InfeasibleError("still infeasible")

    with pytest.raises(InfeasibleError, match="still infeasible"):
        solve()


def test_other_errors_are_not_retried():
    calls = []

    @soften_on_infeasible()
    def solve(soft=False):
        calls.append(soft)
        raise NodeBudgetError("budget")

    with pytest.raises(NodeBudgetError):
        solve()
    assert calls == [False]


def test_lateral_controller_falls_back(sim, occ, behind_state, shared_for):
    controller = LateralController(sim, occ, LateralConfig(N=5))
    softened = MagicMock()
    with patch("controller.lateral.lateral_step", side_effect=[InfeasibleError("hard"), softened]) as step:
        out = controller.step(behind_state, shared_for(behind_state, 5))
    assert out is softened
    assert [c.kwargs["soft"] for c in step.call_args_list] == [False, True]
    assert controller.warm_pattern is softened.solution.pattern
