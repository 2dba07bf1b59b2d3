import numpy as np
import pytest

from romopt.parametric import solve_full
from romopt.problems import desk_design_problem, thermal_block


@pytest.mark.parametrize("n", [4, 5, 8, 10, 15])
def test_thermal_block_symmetric_positive_definite(n):
    sys = thermal_block(n)
    a = sys.matrix([1.0, 2.0, 3.0])
    assert np.array_equal(a, a.T)
    np.linalg.cholesky(a)


def test_uniform_conductivity_is_plain_laplacian():
    n = 6
    a = thermal_block(n, base_conductivity=2.0).matrix([2.0, 2.0, 2.0])
    lap1 = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    lap = (np.kron(np.eye(n), lap1) + np.kron(lap1, np.eye(n))) * (n + 1) ** 2
    assert np.allclose(a, 2.0 * lap, rtol=1e-14, atol=1e-9)


def test_desk_cap_between_corner_compliances():
    prob = desk_design_problem(n=8)
    box = prob.sys.box
    comp = [float(prob.sys.rhs(m) @ solve_full(prob.sys, m)) for m in (box.lower, box.upper)]
    assert comp[1] < prob.c_max < comp[0]
    f, g = prob.objective(box.lower)
    assert np.array_equal(g, prob.objective.linear)
