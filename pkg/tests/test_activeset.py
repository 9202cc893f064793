import numpy as np
import pytest

from switched_kkt import builtin_problem
from switched_kkt.activeset import ActiveSet, active_indices, assemble_active, indicator_matrix
from switched_kkt.errors import StructuralError


def test_activeset_sorted_and_deduplicated():
    s = ActiveSet([3, 1, 3, 0])
    assert tuple(s) == (0, 1, 3)
    assert ActiveSet(s) is s
    assert s.add(2) == ActiveSet([0, 1, 2, 3])
    assert s.remove(1) == ActiveSet([0, 3])
    assert s.remove(7) == s


def test_activeset_rejects_bad_indices():
    with pytest.raises(ValueError):
        ActiveSet([-1])
    with pytest.raises(ValueError):
        ActiveSet([2]).validate(p=2)
    with pytest.raises(StructuralError):
        ActiveSet([0, 1]).validate(p=3, m=1, n=2)


def test_active_indices_uses_tolerance():
    prob = builtin_problem("qp-paper")
    # both constraints are tight at the known optimum (2/3, 4/3)
    z = np.array([2.0 / 3.0, 4.0 / 3.0])
    assert active_indices(prob, z) == ActiveSet([0, 1])
    assert active_indices(prob, z + 1e-3) == ActiveSet()
    assert active_indices(prob, z, g_ineq=np.array([0.0, -1.0])) == ActiveSet([0])
    with pytest.raises(ValueError):
        active_indices(prob, z, tol_active=0.0)


def test_indicator_matrix_selects_rows():
    E = indicator_matrix([2, 0], 4)
    np.testing.assert_array_equal(E, [[1, 0, 0, 0], [0, 0, 1, 0]])
    assert indicator_matrix([], 3).shape == (0, 3)


def test_assemble_orders_equalities_first():
    prob = builtin_problem("hvac-paper")
    z = np.array([23.0, 20.0, 1.0])
    empty = assemble_active(prob, z, [])
    full = assemble_active(prob, z, [0])
    assert empty.a.shape == (2, 3) and full.a.shape == (3, 3)
    np.testing.assert_array_equal(full.a[:2], empty.a)
    np.testing.assert_array_equal(full.g[:2], empty.g)
    np.testing.assert_allclose(full.jac[2], [1.0, 0.0, 0.0])


def test_assemble_without_equalities_has_empty_rows():
    prob = builtin_problem("rosenbrock")
    data = assemble_active(prob, [0.0, 0.0], [])
    assert data.a.shape == (0, 2) and data.g.shape == (0,)
