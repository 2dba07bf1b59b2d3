import numpy as np
import pytest

from romopt.parametric import HDM_SOLVES, AffineParametricSystem, ParamBox, Polynomial

ACCEPTANCE_LINES = []


def record_acceptance(number, title, passed, detail):
    ACCEPTANCE_LINES.append((number, title, passed, detail))
    print(f"ACCEPTANCE {number} {'PASS' if passed else 'FAIL'}: {title} :: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(
            f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} :: {detail}")


@pytest.fixture(autouse=True)
def _reset_counter():
    HDM_SOLVES.reset()
    yield


def random_system(rng, n_w=20, n_mu=3, symmetric=False, degree=1):
    """Well-conditioned affine system with polynomial coefficients."""
    def mat():
        m = rng.standard_normal((n_w, n_w)) / np.sqrt(n_w)
        return 0.5 * (m + m.T) if symmetric else m

    base = 4.0 * np.eye(n_w) + 0.3 * mat()
    terms = []
    for i in range(n_mu):
        e = [0] * n_mu
        e[i] = 1
        exps = [tuple(e)]
        coefs = [1.0]
        if degree >= 2:
            e2 = [0] * n_mu
            e2[i] = 1
            e2[(i + 1) % n_mu] += 1
            exps.append(tuple(e2))
            coefs.append(0.3)
        terms.append((Polynomial(tuple(coefs), tuple(exps)), 0.3 * mat()))
    rterms = [(Polynomial.linear(i, n_mu), rng.standard_normal(n_w)) for i in range(n_mu)]
    box = ParamBox(np.full(n_mu, 0.5), np.full(n_mu, 1.5))
    return AffineParametricSystem(base, tuple(terms), rng.standard_normal(n_w), tuple(rterms),
                                  box)


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
