"""Finite-difference oracle over every differentiable op and the two
micro networks. The same harness backs `map2sat selfcheck`."""

import pytest

from map2sat import selfcheck


@pytest.mark.parametrize("result", selfcheck.check_op_gradients(),
                         ids=lambda r: r.name)
def test_op_gradients_match_finite_differences(result):
    assert result.passed, (
        f"{result.name}: max rel err {result.max_rel_err:.3e} "
        f">= {result.threshold:g}")


@pytest.mark.slow
def test_micro_network_gradients():
    for result in selfcheck.check_network_gradients():
        assert result.passed, (
            f"{result.name}: max rel err {result.max_rel_err:.3e} "
            f">= {result.threshold:g}")
