import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switched_kkt.errors import EvaluationError, FormatError, InvalidProblem, NumericalError
from switched_kkt.problem import (
    HvacParams,
    Problem,
    QpData,
    builtin_problem,
    eval_g,
    fd_jacobian,
    hvac_gain_condition,
    hvac_problem,
    jac_g,
    load_qp_file,
    paper_qp,
    qp_from_dict,
    qp_to_dict,
    qp_transform,
    rosenbrock_problem,
    save_qp_file,
    thermal_balance,
)


def test_paper_qp_recast_constants():
    prob = qp_transform(paper_qp())
    # L^-1 = [[2, 1], [1, 1]], so A = B L^-1 and d = c - B L^-1 K
    np.testing.assert_allclose(prob.a_ineq(np.zeros(2)), [[3.0, 2.0], [0.0, 1.0]], atol=1e-12)
    np.testing.assert_allclose(prob.d_ineq, [16.0, 4.0], atol=1e-12)
    assert (prob.n, prob.m, prob.p) == (2, 0, 2)


def test_qp_recast_matches_direct_constraints():
    qp = paper_qp()
    prob = qp_transform(qp)
    rng = np.random.default_rng(0)
    for z in rng.normal(size=(20, 2)):
        _, g = eval_g(prob, z)
        np.testing.assert_allclose(g, qp.b_ineq @ z + qp.c_ineq, atol=1e-12)


def test_qp_rejects_indefinite_and_asymmetric():
    with pytest.raises(InvalidProblem):
        QpData([[1.0, 0.0], [0.0, -1.0]], [0, 0], [], [], [], [])
    with pytest.raises(InvalidProblem):
        QpData([[1.0, 0.5], [0.0, 1.0]], [0, 0], [], [], [], [])
    with pytest.raises(InvalidProblem):
        QpData([[1.0, 0.0], [0.0, 1.0]], [0, 0, 0], [], [], [], [])


def test_qp_file_round_trip(tmp_path):
    qp = paper_qp()
    path = tmp_path / "qp.json"
    save_qp_file(qp, path)
    back = load_qp_file(path)
    assert qp_to_dict(back) == qp_to_dict(qp)


def test_qp_file_errors_name_the_location(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"L": [[1, 0], [0, 1]],\n "K": [0, 0],\n')
    with pytest.raises(FormatError) as info:
        load_qp_file(bad)
    assert "line" in str(info.value)
    with pytest.raises(FormatError) as info:
        qp_from_dict({"L": [[1.0]], "K": [0.0], "B_eq": [], "c_eq": []})
    assert "B_ineq" in str(info.value)


def test_rosenbrock_recast_is_exact():
    prob = rosenbrock_problem()
    rng = np.random.default_rng(1)
    for z in rng.uniform(-2, 2, size=(50, 2)):
        _, g = eval_g(prob, z)
        assert g[0] == pytest.approx(-2 * z[0] + z[1] + 0.75, abs=1e-9)
        np.testing.assert_allclose(
            prob.a_ineq(z), [[-0.5 + z[0] / 2, z[0] ** 2 - z[0] + 1 / 200]], atol=1e-12
        )
    assert prob.d_ineq[0] == pytest.approx(-0.25)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_rosenbrock_b_polynomial(z1, z2):
    prob = rosenbrock_problem()
    z = np.array([z1, z2])
    B = jac_g(prob, z, "inequality") @ prob.a_ineq(z).T
    assert B[0, 0] == pytest.approx(z1 ** 2 - 2 * z1 + 201 / 200, rel=1e-12, abs=1e-12)


def test_rosenbrock_analytic_jacobian_matches_fd():
    prob = rosenbrock_problem(b_ineq=[[1.0, 2.0], [-1.0, 0.5]], c_ineq=[0.1, -0.3])
    z = np.array([0.3, -0.7])
    fd = fd_jacobian(lambda x: eval_g(prob, x)[1], z, 2)
    np.testing.assert_allclose(jac_g(prob, z, "inequality"), fd, atol=1e-6)


def test_hvac_equality_matches_thermal_balance():
    params = HvacParams.paper()
    prob = hvac_problem()
    rng = np.random.default_rng(2)
    for z in rng.uniform([10, 10, 0], [30, 30, 5], size=(30, 3)):
        g_eq, _ = eval_g(prob, z)
        np.testing.assert_allclose(g_eq, thermal_balance(params, z), atol=1e-10)


def test_hvac_equilibrium_line():
    # scalar instance: balance gives T2 = T1/2 + 5 and m = (0.75 T1 - 7.5) / (30 - T1)
    prob = hvac_problem()
    for t1 in (18.0, 23.0, 25.45, 28.0):
        z = np.array([t1, 0.5 * t1 + 5.0, (0.75 * t1 - 7.5) / (30.0 - t1)])
        g_eq, _ = eval_g(prob, z)
        np.testing.assert_allclose(g_eq, 0.0, atol=1e-12)


def test_hvac_jacobian_matches_fd():
    prob = hvac_problem(HvacParams.paper(l1=2.0, l2=0.5, lm=0.3))
    z = np.array([21.0, 19.0, 1.7])
    fd = fd_jacobian(lambda x: eval_g(prob, x)[0], z, 2)
    np.testing.assert_allclose(jac_g(prob, z, "equality"), fd, atol=1e-6)


def test_hvac_multizone_shapes():
    params = HvacParams(
        n1=2, n2=1, c1=1.0, c2=1.0,
        e11=[[1.0, -0.5], [-0.5, 1.0]], e12=[[-0.5], [-0.5]], e22=[[1.0]],
        r1_inv=0.5, r2_inv=0.5, a_diag=1.0, t_supply=30.0, t_ambient=10.0, q_load=0.0,
        t1_star=22.0, t2_star=20.0, l1=1.0, l2=1.0, lm=0.1, eps_margin=1.0,
    )
    prob = hvac_problem(params)
    assert (prob.n, prob.m, prob.p) == (5, 3, 2)
    z = np.array([21.0, 22.0, 18.0, 1.0, 0.5])
    g_eq, g_ineq = eval_g(prob, z)
    np.testing.assert_allclose(g_eq, thermal_balance(params, z), atol=1e-10)
    np.testing.assert_allclose(g_ineq, z[:2] - 30.0 + 1.0)
    fd = fd_jacobian(lambda x: eval_g(prob, x)[0], z, 3)
    np.testing.assert_allclose(jac_g(prob, z, "equality"), fd, atol=1e-6)


def test_hvac_gain_condition_default_margin():
    # Y = 0.5 + 0.5 - 0.25 / 1 = 0.75; margin = 1 + 0.25 - 0.5 * 0.75^2 * 0.1 = 1.221875
    holds, margin = hvac_gain_condition(HvacParams.paper())
    assert holds
    assert margin == pytest.approx(1.221875, abs=1e-12)


def test_hvac_gain_condition_fails_for_tight_margin():
    holds, margin = hvac_gain_condition(HvacParams.paper(eps_margin=0.1, lm=10.0))
    assert not holds and margin < 0


def test_hvac_gain_condition_singular():
    params = HvacParams(
        n1=1, n2=2, c1=1.0, c2=1.0,
        e11=[[2.0]], e12=[[0.0, 0.0]], e22=[[1.0, -1.0], [-1.0, 1.0]],
        r1_inv=1.0, r2_inv=[1e-14, 1e-14], a_diag=1.0, t_supply=30.0, t_ambient=10.0,
        q_load=0.0, t1_star=22.0, t2_star=20.0, l1=1.0, l2=1.0, lm=0.1, eps_margin=1.0,
    )
    with pytest.raises(NumericalError):
        hvac_gain_condition(params)


def test_hvac_params_validation():
    with pytest.raises(InvalidProblem):
        HvacParams.paper(eps_margin=0.0)
    with pytest.raises(InvalidProblem):
        HvacParams.paper(lm=-1.0)


def test_eval_g_reports_non_finite():
    prob = Problem(
        n=1, m=0, p=1,
        objective=lambda z: float(z[0] ** 2),
        gradient=lambda z: np.array([np.nan]),
        a_eq=lambda z: np.zeros((0, 1)),
        a_ineq=lambda z: np.ones((1, 1)),
        d_eq=[], d_ineq=[0.0],
    )
    with pytest.raises(EvaluationError):
        eval_g(prob, [1.0])
    with pytest.raises(EvaluationError):
        eval_g(builtin_problem("qp-paper"), [np.inf, 0.0])


def test_problem_dimension_guards():
    with pytest.raises(InvalidProblem):
        Problem(n=1, m=2, p=0, objective=None, gradient=None, a_eq=None, a_ineq=None, d_eq=[0, 0], d_ineq=[])
    with pytest.raises(InvalidProblem):
        eval_g(builtin_problem("qp-paper"), [1.0, 2.0, 3.0])


def test_fd_fallback_when_no_jacobian():
    qp = paper_qp()
    base = qp_transform(qp)
    prob = Problem(
        n=2, m=0, p=2,
        objective=base.objective, gradient=base.gradient,
        a_eq=base.a_eq, a_ineq=base.a_ineq, d_eq=base.d_eq, d_ineq=base.d_ineq,
    )
    np.testing.assert_allclose(jac_g(prob, [0.3, 0.1], "inequality"), qp.b_ineq, atol=1e-7)


def test_builtin_lookup():
    assert builtin_problem("rosenbrock").name == "rosenbrock"
    with pytest.raises(InvalidProblem):
        builtin_problem("nope")


def test_paper_qp_data_file_is_json():
    from importlib import resources

    text = resources.files("switched_kkt").joinpath("data/paper_qp.json").read_text()
    obj = json.loads(text)
    np.testing.assert_array_equal(obj["L"], [[1, -1], [-1, 2]])
    np.testing.assert_array_equal(obj["B_ineq"], [[1, 1], [-1, 2]])
