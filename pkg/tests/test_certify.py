import json
import math

import numpy as np
import pytest

from switched_kkt import builtin_problem
from switched_kkt.activeset import ActiveSet
from switched_kkt.certify import (
    AssumptionReport,
    KKTReport,
    Sampler,
    certify_point,
    check_assumption1,
    default_subsets,
    enumerate_subsets,
    iss_bound,
    iss_radius,
    kkt_residual,
    lagrangian_gradient,
    lagrangian_hessian,
    recover_multipliers,
    second_order_check,
)
from switched_kkt.dynamics import GainConfig
from switched_kkt.errors import CapabilityError, SamplingError
from switched_kkt.problem import Problem, QpData, qp_transform
from switched_kkt.switchlaw import SwitchEvent

QP_OPT = np.array([2.0 / 3.0, 4.0 / 3.0])


def _corner_problem():
    qp = QpData(np.eye(2), [1.0, 1.0], np.zeros((0, 2)), [], np.eye(2), [0.0, 0.0])
    return qp_transform(qp)


def test_multipliers_at_paper_qp_optimum():
    prob = builtin_problem("qp-paper")
    lam, nu = recover_multipliers(prob, QP_OPT, [0, 1])
    assert lam.size == 0
    np.testing.assert_allclose(nu, [28.0 / 9.0, 4.0 / 9.0], atol=1e-12)
    np.testing.assert_allclose(lagrangian_gradient(prob, QP_OPT, lam, nu), 0.0, atol=1e-12)


def test_multipliers_on_equality_problem():
    prob = builtin_problem("hvac-paper")
    z = np.array([25.45, 0.5 * 25.45 + 5.0, (0.75 * 25.45 - 7.5) / (30.0 - 25.45)])
    lam, nu = recover_multipliers(prob, z, [])
    assert lam.size == 2 and np.all(nu == 0)


def test_report_on_paper_qp():
    rep = certify_point(builtin_problem("qp-paper"), QP_OPT, [0, 1])
    assert rep.verdict == "kkt_pass_second_order"
    assert rep.second_order_eigmin == math.inf and rep.notes
    assert rep.grad_residual < 1e-12 and rep.comp_residual < 1e-12


def test_negative_multiplier_fails():
    # both bounds held at the origin while the minimiser (-1, -1) is interior
    rep = certify_point(_corner_problem(), [0.0, 0.0], [0, 1])
    assert rep.nu_min == pytest.approx(-1.0)
    assert rep.verdict == "kkt_fail" and not rep.passed


def test_residuals_of_infeasible_point():
    prob = builtin_problem("qp-paper")
    res = kkt_residual(prob, [5.0, 5.0], [], [0.0, 0.0])
    assert res.ineq_max == pytest.approx(8.0)
    assert res.eq_residual == 0.0 and res.nu_min == 0.0
    with pytest.raises(ValueError):
        kkt_residual(prob, QP_OPT, [], [1.0])


def test_fd_hessian_matches_analytic():
    prob = builtin_problem("rosenbrock")
    z = np.array([0.7, 0.2])
    analytic = np.array([[1200 * z[0] ** 2 - 400 * z[1] + 2, -400 * z[0]], [-400 * z[0], 200.0]])
    np.testing.assert_allclose(lagrangian_hessian(prob, z, [], [0.0]), analytic, rtol=1e-6)


def test_second_order_without_hessian_capability():
    base = builtin_problem("rosenbrock")
    prob = Problem(
        n=2, m=0, p=1, objective=base.objective, gradient=base.gradient,
        a_eq=base.a_eq, a_ineq=base.a_ineq, d_eq=base.d_eq, d_ineq=base.d_ineq,
    )
    with pytest.raises(CapabilityError):
        second_order_check(prob, [1.0, 1.0], [], [0.0], [], allow_fd=False)
    rep = certify_point(prob, [1.0, 1.0], [], allow_fd=False)
    assert rep.second_order_eigmin is None and rep.verdict == "kkt_pass"
    assert second_order_check(prob, [1.0, 1.0], [], [0.0], []) > 0


def test_report_round_trip():
    rep = certify_point(builtin_problem("rosenbrock"), [1.0, 1.0], [])
    back = KKTReport.from_dict(json.loads(json.dumps(rep.to_dict())))
    assert back.to_dict() == rep.to_dict()
    bad = rep.to_dict()
    bad["verdict"] = "maybe"
    with pytest.raises(ValueError):
        KKTReport.from_dict(bad)


def test_sampler_modes():
    grid = Sampler(((0.0, 1.0), (-1.0, 1.0)), count=9, mode="grid").points()
    assert grid.shape == (9, 2)
    np.testing.assert_array_equal(np.unique(grid[:, 1]), [-1.0, 0.0, 1.0])
    a = Sampler(((0.0, 1.0),), count=5, seed=3).points()
    np.testing.assert_array_equal(a, Sampler(((0.0, 1.0),), count=5, seed=3).points())
    with pytest.raises(ValueError):
        Sampler(((1.0, 0.0),))
    with pytest.raises(ValueError):
        Sampler(((0.0, 1.0),), mode="sobol")


def test_rosenbrock_minimum_over_grid():
    # sym B = z1^2 - 2 z1 + 201/200 is smallest at z1 = 1, which is on the 41-point grid
    rep = check_assumption1(
        builtin_problem("rosenbrock"),
        Sampler(((-2.0, 2.0), (-2.0, 2.0)), count=41 ** 2, mode="grid"),
        subsets=[[0]],
    )
    assert rep.record([0]).min_sym_eig == pytest.approx(0.005, abs=1e-12)
    assert rep.passed and rep.samples_drawn == 41 ** 2


def test_dependent_constraints_fail_the_check():
    qp = QpData(np.eye(2), [0.0, 0.0], np.zeros((0, 2)), [], [[1.0, 0.0], [1.0, 0.0]], [-1.0, -1.0])
    prob = qp_transform(qp)
    rep = check_assumption1(prob, Sampler(((-2.0, 0.5), (-2.0, 2.0)), count=50), enumerate_subsets(prob))
    assert not rep.passed
    assert not rep.record([0, 1]).passed and rep.record([0]).passed
    with pytest.raises(CapabilityError):
        iss_bound(prob, GainConfig(), rep)


def test_no_feasible_sample():
    with pytest.raises(SamplingError):
        check_assumption1(builtin_problem("qp-paper"), Sampler(((10.0, 11.0), (10.0, 11.0)), count=20))


def test_assumption_report_json_round_trip():
    rep = check_assumption1(builtin_problem("qp-paper"), Sampler(((-3.0, 3.0), (-3.0, 3.0)), count=200))
    obj = json.loads(rep.to_json())
    assert "pass" in obj["subsets"][0]
    back = AssumptionReport.from_dict(obj)
    assert back.to_dict() == json.loads(json.dumps(rep.to_dict()))


def test_subset_lists():
    prob = builtin_problem("hvac-paper")
    assert enumerate_subsets(prob) == [ActiveSet(), ActiveSet([0])]
    qp = builtin_problem("qp-paper")
    assert len(enumerate_subsets(qp)) == 4
    ev = SwitchEvent(0.0, "add", 1, ActiveSet([0]), ActiveSet([0, 1]))
    assert ActiveSet([0, 1]) in default_subsets(qp, [ev])


def test_iss_radius_scaling():
    args = dict(kappa1=1.0, kappa2=1.0, beta1=0.5, beta2=0.2, phi=0.3)
    assert iss_radius(d_norm_sq=0.0, **args) == 0.0
    r1 = iss_radius(d_norm_sq=1.0, **args)
    # |d| doubled means |d|^2 quadrupled
    assert iss_radius(d_norm_sq=4.0, **args) == pytest.approx(4.0 * r1)
    bigger_phi = dict(args, phi=0.6)
    assert iss_radius(d_norm_sq=1.0, **bigger_phi) < r1
    assert iss_radius(d_norm_sq=1.0, **dict(args, beta1=1.0)) <= r1
    with pytest.raises(CapabilityError):
        iss_radius(d_norm_sq=1.0, **dict(args, phi=0.0))


def test_iss_bound_on_paper_qp():
    prob = builtin_problem("qp-paper")
    rep = check_assumption1(prob, Sampler(((-3.0, 3.0), (-3.0, 3.0)), count=300), enumerate_subsets(prob))
    bound = iss_bound(prob, GainConfig(), rep)
    assert math.isfinite(bound) and bound > 0
