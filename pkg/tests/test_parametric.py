import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_system, rel
from romopt.errors import ConfigurationError, IllConditionedWarning, SingularSystemError
from romopt.parametric import (HDM_SOLVES, AffineParametricSystem, ParamBox, Polynomial,
                               QuantityOfInterest, assemble, check_nonsingular,
                               compliance_qoi, gradients_adjoint, gradients_direct,
                               linear_output_qoi, parameter_qoi, qoi_gradient_adjoint,
                               qoi_gradient_direct, residual, solve_full,
                               state_sensitivity_direct, squared_norm_qoi)


def diag_system():
    """A = diag(mu, 1), b = (1, 1)."""
    box = ParamBox([0.5], [3.0])
    return AffineParametricSystem(np.diag([0.0, 1.0]),
                                  ((Polynomial.linear(0, 1), np.diag([1.0, 0.0])),),
                                  np.ones(2), (), box)


def test_assemble_zero_coefficients_gives_base():
    box = ParamBox([0.0], [1.0])
    base = np.array([[2.0, 1.0], [0.0, 3.0]])
    sys = AffineParametricSystem(base, ((Polynomial.constant(0.0, 1), np.ones((2, 2))),),
                                 np.array([1.0, 2.0]),
                                 ((Polynomial.constant(0.0, 1), np.ones(2)),), box)
    a, b = assemble(sys, [0.3])
    assert np.array_equal(a, base)
    assert np.array_equal(b, [1.0, 2.0])


def test_assemble_diag_substitution():
    a, b = assemble(diag_system(), [2.0])
    assert np.array_equal(a, np.diag([2.0, 1.0]))
    assert np.array_equal(b, [1.0, 1.0])


def test_assemble_two_element_diffusion_by_hand():
    # 3 nodes, 2 linear elements with conductivities mu_1, mu_2, plus mass-like base
    k1 = np.array([[1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    k2 = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, -1.0], [0.0, -1.0, 1.0]])
    base = 0.1 * np.eye(3)
    sys = AffineParametricSystem(base, ((Polynomial.linear(0, 2), k1),
                                        (Polynomial.linear(1, 2), k2)),
                                 np.zeros(3), (), ParamBox([0.5, 0.5], [2.0, 2.0]))
    expected = np.array([[1.1, -1.0, 0.0], [-1.0, 2.1, -1.0], [0.0, -1.0, 1.1]])
    assert np.allclose(sys.matrix([1.0, 1.0]), expected, atol=1e-15)


def test_term_dimension_mismatch_is_configuration_error():
    with pytest.raises(ConfigurationError):
        AffineParametricSystem(np.eye(2), ((Polynomial.linear(0, 1), np.eye(3)),),
                               np.ones(2), (), ParamBox([0.0], [1.0]))
    with pytest.raises(ConfigurationError):
        AffineParametricSystem(np.eye(2), (), np.ones(2),
                               ((Polynomial.linear(0, 1), np.ones(3)),), ParamBox([0.0], [1.0]))


def test_polynomial_degree_cap():
    with pytest.raises(ConfigurationError):
        Polynomial((1.0,), ((2, 2),))


def test_linearity_in_coefficients():
    rng = np.random.default_rng(3)
    sys = random_system(rng, 8, 2, degree=2)
    doubled = AffineParametricSystem(sys.base_matrix,
                                     tuple((Polynomial(tuple(2 * c for c in p.coefficients),
                                                       p.exponents), m)
                                           for p, m in sys.matrix_terms),
                                     sys.base_rhs, sys.rhs_terms, sys.box)
    mu = np.array([0.7, 1.2])
    expect = sys.base_matrix + 2 * (sys.matrix(mu) - sys.base_matrix)
    assert np.allclose(doubled.matrix(mu), expect, rtol=1e-14, atol=1e-14)


def test_solve_identity_and_diagonal():
    box = ParamBox([0.0], [1.0])
    b = np.array([3.0, -1.0, 2.5])
    ident = AffineParametricSystem(np.eye(3), (), b, (), box)
    assert np.array_equal(solve_full(ident, [0.5]), b)
    assert np.allclose(solve_full(diag_system(), [2.0]), [0.5, 1.0], rtol=0, atol=1e-16)


def test_solve_random_residual():
    rng = np.random.default_rng(0)
    sys = random_system(rng, 20, 3)
    mu = np.array([0.9, 1.1, 1.3])
    w = solve_full(sys, mu)
    b = sys.rhs(mu)
    assert np.linalg.norm(sys.matrix(mu) @ w - b) <= 1e-12 * np.linalg.norm(b)


def test_singular_system_reports_condition():
    box = ParamBox([0.0], [1.0])
    sys = AffineParametricSystem(np.zeros((2, 2)), ((Polynomial.linear(0, 1),
                                                     np.diag([1.0, 0.0])),), np.ones(2), (), box)
    with pytest.raises(SingularSystemError) as exc:
        solve_full(sys, [0.5])
    assert exc.value.condition == float("inf")
    with pytest.raises(SingularSystemError):
        check_nonsingular(sys, [[0.5]])


def test_ill_conditioned_warning():
    box = ParamBox([0.0], [1.0])
    sys = AffineParametricSystem(np.diag([1.0, 1e-14]), (), np.ones(2), (), box)
    with pytest.warns(IllConditionedWarning):
        solve_full(sys, [0.5])


def test_sensitivity_constant_system_is_zero():
    box = ParamBox([0.0, 0.0], [1.0, 1.0])
    sys = AffineParametricSystem(2 * np.eye(3), (), np.ones(3), (), box)
    w = solve_full(sys, [0.5, 0.5])
    assert np.array_equal(state_sensitivity_direct(sys, [0.5, 0.5], w), np.zeros((3, 2)))


def test_sensitivity_diag_analytic():
    sys = diag_system()
    mu = np.array([2.0])
    dw = state_sensitivity_direct(sys, mu, solve_full(sys, mu))
    assert np.allclose(dw[:, 0], [-1.0 / 4.0, 0.0], atol=1e-16)


@pytest.mark.parametrize("seed", range(5))
def test_sensitivity_matches_central_fd(seed):
    rng = np.random.default_rng(seed)
    sys = random_system(rng, 15, 3, degree=2)
    mu = rng.uniform(0.6, 1.4, 3)
    dw = state_sensitivity_direct(sys, mu, solve_full(sys, mu))
    h = 1e-5
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (solve_full(sys, mu + e) - solve_full(sys, mu - e)) / (2 * h)
        err = np.abs(fd - dw[:, i]).max() / np.abs(dw[:, i]).max()
        assert err <= 1e-5


def test_state_independent_qoi_gradient():
    rng = np.random.default_rng(1)
    sys = random_system(rng, 6, 3)
    q = parameter_qoi(lambda m: m[0], lambda m: np.array([1.0, 0.0, 0.0]))
    mu = np.array([1.0, 1.0, 1.0])
    assert np.allclose(qoi_gradient_direct(sys, q, mu), [1, 0, 0], atol=1e-15)
    assert np.allclose(qoi_gradient_adjoint(sys, q, mu), [1, 0, 0], atol=1e-15)


def test_squared_norm_gradient_analytic():
    # q = 1/mu^2 + 1, dq/dmu = -2/mu^3 = -2 at mu = 1
    sys = diag_system()
    q = squared_norm_qoi()
    assert qoi_gradient_direct(sys, q, [1.0])[0] == pytest.approx(-2.0, rel=1e-14)
    assert qoi_gradient_adjoint(sys, q, [1.0])[0] == pytest.approx(-2.0, rel=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_direct_and_adjoint_agree(seed):
    rng = np.random.default_rng(100 + seed)
    sys = random_system(rng, int(rng.integers(5, 50)), 4, degree=2)
    mu = rng.uniform(0.5, 1.5, 4)
    qois = [squared_norm_qoi(), compliance_qoi(sys, 0.5, 1.0),
            linear_output_qoi(rng.standard_normal(sys.n_w))]
    gd = gradients_direct(sys, qois, mu)
    ga = gradients_adjoint(sys, qois, mu)
    for a, d in zip(ga, gd):
        assert rel(a, d) <= 1e-10


def test_symmetric_operator_direct_equals_adjoint_tightly():
    rng = np.random.default_rng(7)
    sys = random_system(rng, 12, 3, symmetric=True)
    mu = np.array([0.8, 1.1, 1.2])
    q = squared_norm_qoi()
    assert rel(qoi_gradient_adjoint(sys, q, mu), qoi_gradient_direct(sys, q, mu)) <= 1e-12


def test_solve_counts_direct_vs_adjoint():
    rng = np.random.default_rng(11)
    sys = random_system(rng, 10, 6)
    mu = np.ones(6)
    q = squared_norm_qoi()
    HDM_SOLVES.reset()
    qoi_gradient_adjoint(sys, q, mu)
    assert HDM_SOLVES.snapshot() == {"state": 1, "sensitivity": 0, "adjoint": 1}
    assert HDM_SOLVES.total == 2
    HDM_SOLVES.reset()
    qoi_gradient_direct(sys, q, mu)
    assert HDM_SOLVES.sensitivity == 6


def test_residual_trivial_cases():
    rng = np.random.default_rng(5)
    sys = random_system(rng, 8, 2)
    mu = np.array([1.0, 1.2])
    w = solve_full(sys, mu)
    b = sys.rhs(mu)
    assert np.linalg.norm(residual(sys, mu, np.eye(8), w)) <= 1e-13 * np.linalg.norm(b)
    assert np.array_equal(residual(sys, mu, np.eye(8)[:, :3], np.zeros(3)), b)
    with pytest.raises(ConfigurationError):
        residual(sys, mu, np.eye(8)[:, :3], np.zeros(4))


def test_residual_galerkin_with_solution_snapshot():
    rng = np.random.default_rng(6)
    sys = random_system(rng, 30, 2)
    mu = np.array([0.9, 1.4])
    w = solve_full(sys, mu)
    v, _ = np.linalg.qr(np.column_stack([w, rng.standard_normal((30, 2))]))
    a_r = v.T @ sys.matrix(mu) @ v
    w_r = np.linalg.solve(a_r, v.T @ sys.rhs(mu))
    assert np.linalg.norm(residual(sys, mu, v, w_r)) <= 1e-10 * np.linalg.norm(sys.rhs(mu))


def test_qoi_partials_consistent_with_fd():
    rng = np.random.default_rng(8)
    sys = random_system(rng, 6, 2)
    q = compliance_qoi(sys, 2.0, -1.0)
    w = rng.standard_normal(6)
    mu = np.array([0.8, 1.2])
    h = 1e-6
    fd_w = np.array([(q.eval(w + h * e, mu) - q.eval(w - h * e, mu)) / (2 * h)
                     for e in np.eye(6)])
    fd_mu = np.array([(q.eval(w, mu + h * e) - q.eval(w, mu - h * e)) / (2 * h)
                      for e in np.eye(2)])
    assert rel(q.partial_w(w, mu), fd_w) <= 1e-8
    assert rel(q.partial_mu(w, mu), fd_mu) <= 1e-8


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4),
       st.lists(st.tuples(st.integers(0, 2), st.integers(0, 1), st.integers(0, 1)),
                min_size=1, max_size=4).filter(lambda es: all(sum(e) <= 3 for e in es)),
       st.lists(st.floats(0.2, 2.0), min_size=3, max_size=3))
def test_polynomial_gradient_matches_fd(coefs, exps, mu):
    p = Polynomial(tuple(coefs[:len(exps)]), tuple(exps))
    mu = np.array(mu)
    h = 1e-6
    fd = np.array([(p(mu + h * e) - p(mu - h * e)) / (2 * h) for e in np.eye(3)])
    assert np.allclose(p.gradient(mu), fd, rtol=1e-6, atol=1e-7)


def test_box_normalization_roundtrip():
    box = ParamBox([1.0, -2.0], [3.0, 2.0])
    assert np.allclose(box.normalize(box.lower), [-0.1, -0.1])
    assert np.allclose(box.normalize(box.upper), [0.1, 0.1])
    mu = np.array([2.2, 0.7])
    assert np.allclose(box.denormalize(box.normalize(mu)), mu, rtol=1e-15)
    with pytest.raises(ConfigurationError):
        ParamBox([1.0], [1.0])
