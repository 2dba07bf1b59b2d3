import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from test_manifold import rand_pair, rand_spd
from romopt.errors import (AlignmentWarning, ConfigurationError, ExtrapolationWarning,
                           InterpolationConditioningError)
from romopt.interp import (ManifoldInterpolator, RomInterpolator, align, default_theta,
                           manifold_interpolate, manifold_interpolate_with_sensitivity,
                           multiquadric, procrustes_align, rbf_eval_grad, rbf_fit, rotate_rom)
from romopt.manifold import ManifoldKind, exp_map, is_member
from romopt.parametric import ParamBox

KINDS = list(ManifoldKind)
BOX2 = ParamBox([0.0, 1.0], [2.0, 4.0])


def rand_orth(rng, k):
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    return q * np.sign(np.diag(r))


def test_multiquadric_at_zero_is_theta():
    assert multiquadric(0.0, 0.37) == 0.37
    assert default_theta(4) == pytest.approx(0.1 * 0.2 * 2.0)


def test_single_center_is_constant():
    f = rbf_fit([[0.5, 2.0]], [3.25], box=BOX2)
    v, g = rbf_eval_grad(f, [1.7, 3.1])
    assert v == pytest.approx(3.25, rel=1e-14)
    assert np.allclose(g, 0.0, atol=1e-14)


def test_interpolatory_at_centers():
    rng = np.random.default_rng(0)
    c = rng.uniform(BOX2.lower, BOX2.upper, (12, 2))
    vals = rng.standard_normal((12, 3, 3))
    f = rbf_fit(c, vals, box=BOX2)
    for ci, vi in zip(c, vals):
        assert np.linalg.norm(f.evaluate(ci) - vi) <= 1e-10 * np.linalg.norm(vals)


def test_linear_data_reproduced_with_slope():
    xs = np.linspace(0.0, 2.0, 4)
    ys = np.linspace(1.0, 4.0, 3)
    c = np.array([[x, y] for x in xs for y in ys])
    slope = np.array([0.7, -1.3])
    f = rbf_fit(c, c @ slope + 2.0, box=BOX2, tail="linear")
    for q in ([0.3, 1.7], [1.9, 3.9], [1.0, 2.5]):
        v, g = f.evaluate(q, grad=True)
        assert v == pytest.approx(np.dot(q, slope) + 2.0, abs=1e-10)
        assert np.allclose(g, slope, atol=1e-8)


def test_gradient_matches_fd():
    rng = np.random.default_rng(1)
    c = rng.uniform(BOX2.lower, BOX2.upper, (9, 2))
    f = rbf_fit(c, np.sin(c[:, 0]) * c[:, 1], box=BOX2)
    mu = np.array([1.1, 2.2])
    v, g = f.evaluate(mu, grad=True)
    h = 1e-6
    fd = [(f.evaluate(mu + h * e) - f.evaluate(mu - h * e)) / (2 * h) for e in np.eye(2)]
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_rbf_rejects_duplicate_and_clustered_centers():
    with pytest.raises(ConfigurationError):
        rbf_fit([[0.0, 1.0], [0.0, 1.0]], [1.0, 2.0], box=BOX2)
    c = np.array([[1.0, 2.0], [1.0 + 1e-9, 2.0], [1.0, 2.0 + 1e-9], [0.0, 1.0]])
    with pytest.raises(InterpolationConditioningError):
        rbf_fit(c, np.arange(4.0), box=BOX2)
    with pytest.raises(ConfigurationError):
        rbf_fit([[0.0, 1.0]], [1.0], theta=-1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-3, 3), st.floats(-3, 3))
def test_rbf_linear_in_data(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    c = rng.uniform(BOX2.lower, BOX2.upper, (7, 2))
    g, d = rng.standard_normal((2, 7, 2, 2))
    mu = rng.uniform(BOX2.lower, BOX2.upper)
    lhs = rbf_fit(c, alpha * g + beta * d, box=BOX2).evaluate(mu)
    rhs = (alpha * rbf_fit(c, g, box=BOX2).evaluate(mu)
           + beta * rbf_fit(c, d, box=BOX2).evaluate(mu))
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(rhs).max()) * 10


def test_procrustes_cases():
    rng = np.random.default_rng(2)
    v, _ = np.linalg.qr(rng.standard_normal((30, 4)))
    assert np.allclose(procrustes_align(v, v), np.eye(4), atol=1e-13)
    q0 = rand_orth(rng, 4)
    assert np.allclose(procrustes_align(v @ q0, v), q0.T, atol=1e-12)
    vc, _ = np.linalg.qr(v + 0.3 * rng.standard_normal((30, 4)))
    q = procrustes_align(vc, v)
    best = np.linalg.norm(vc @ q - v)
    assert np.abs(q.T @ q - np.eye(4)).max() <= 1e-12
    assert all(best <= np.linalg.norm(vc @ rand_orth(rng, 4) - v) + 1e-12 for _ in range(1000))


def test_procrustes_warns_on_orthogonal_subspaces():
    e = np.eye(6)
    with pytest.warns(AlignmentWarning):
        procrustes_align(e[:, :2], e[:, 2:4])


def test_rotate_rom_properties():
    rng = np.random.default_rng(3)
    a = rand_spd(rng, 5)
    b = rng.standard_normal(5)
    a2, b2 = rotate_rom(a, b, np.eye(5))
    assert np.array_equal(a2, a) and np.array_equal(b2, b)
    q = rand_orth(rng, 5)
    a3, _ = rotate_rom(a, b, q)
    ev, ev3 = np.linalg.eigvalsh(a), np.linalg.eigvalsh(0.5 * (a3 + a3.T))
    assert np.abs(ev3 - ev).max() <= 1e-12 * np.abs(ev).max()
    np.linalg.cholesky(0.5 * (a3 + a3.T))
    n = rng.standard_normal((5, 5))
    en = np.sort_complex(np.linalg.eigvals(n))
    en3 = np.sort_complex(np.linalg.eigvals(rotate_rom(n, b, q)[0]))
    assert np.abs(en3 - en).max() <= 1e-12 * np.abs(en).max() * 10
    with pytest.raises(ConfigurationError):
        rotate_rom(a, b, 1.1 * q)


def _samples(rng, kind, n_p, k):
    """Smooth family Y(mu) = Exp_X(mu_1 G1 + mu_2 G2) sampled at random points."""
    x, _ = rand_pair(rng, kind, k)
    g1, g2 = 0.2 * rng.standard_normal((2, k, k))
    if kind is ManifoldKind.SPD:
        g1, g2 = g1 + g1.T, g2 + g2.T
    mus = rng.uniform(BOX2.lower, BOX2.upper, (n_p, 2))
    z = BOX2.to_unit(mus)
    ys = [exp_map(kind, x, zi[0] * g1 + zi[1] * g2) for zi in z]
    return mus, np.array(ys)


@pytest.mark.parametrize("kind", KINDS)
def test_reproduction_at_samples(kind):
    rng = np.random.default_rng(4)
    mus, ys = _samples(rng, kind, 10, 4)
    interp = ManifoldInterpolator(mus, ys, kind, BOX2)
    for m, y in zip(mus, ys):
        assert np.linalg.norm(interp(m) - y) <= 1e-8 * np.linalg.norm(y)


@pytest.mark.parametrize("kind", KINDS)
def test_single_sample_interpolant_is_constant(kind):
    rng = np.random.default_rng(5)
    x, _ = rand_pair(rng, kind, 3)
    y = manifold_interpolate([[1.0, 2.0]], [x], kind, [0.3, 3.7], BOX2)
    assert np.allclose(y, x, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("kind", [ManifoldKind.SPD, ManifoldKind.NONSINGULAR])
def test_membership_preserved_off_sample(kind):
    rng = np.random.default_rng(6)
    mus, ys = _samples(rng, kind, 8, 4)
    interp = ManifoldInterpolator(mus, ys, kind, BOX2)
    for q in rng.uniform(BOX2.lower, BOX2.upper, (100, 2)):
        assert is_member(kind, interp(q))


@pytest.mark.parametrize("kind", KINDS)
def test_constant_database_has_zero_sensitivity(kind):
    rng = np.random.default_rng(7)
    x, _ = rand_pair(rng, kind, 3)
    mus = rng.uniform(BOX2.lower, BOX2.upper, (5, 2))
    y, dy = manifold_interpolate_with_sensitivity(mus, [x] * 5, kind, [1.0, 2.0], BOX2)
    assert np.allclose(y, x, rtol=1e-12, atol=1e-12)
    assert np.abs(dy).max() <= 1e-10


def test_real_sensitivity_is_rbf_gradient():
    rng = np.random.default_rng(8)
    mus, ys = _samples(rng, ManifoldKind.REAL, 6, 3)
    mu = np.array([1.2, 2.9])
    _, dy = manifold_interpolate_with_sensitivity(mus, ys, "real", mu, BOX2)
    _, g = rbf_fit(mus, ys - ys[0], box=BOX2).evaluate(mu, grad=True)
    assert np.array_equal(dy, g)


@pytest.mark.parametrize("kind", KINDS)
def test_sensitivity_matches_fd_at_20_points(kind):
    rng = np.random.default_rng(9)
    mus, ys = _samples(rng, kind, 9, 4)
    interp = ManifoldInterpolator(mus, ys, kind, BOX2)
    h = 1e-5
    for q in rng.uniform(BOX2.lower + 0.01, BOX2.upper - 0.01, (20, 2)):
        _, dy = interp.with_sensitivity(q)
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (interp(q + e) - interp(q - e)) / (2 * h)
            assert np.linalg.norm(dy[i] - fd) <= 1e-6 * max(np.linalg.norm(dy[i]), 1e-3)


def test_extrapolation_warns():
    rng = np.random.default_rng(10)
    mus, ys = _samples(rng, ManifoldKind.REAL, 4, 2)
    interp = ManifoldInterpolator(mus, ys, "real", BOX2)
    with pytest.warns(ExtrapolationWarning):
        interp([5.0, 5.0])


def test_align_keeps_reference_and_rotations_orthogonal():
    rng = np.random.default_rng(11)
    n_w, k = 20, 3
    base, _ = np.linalg.qr(rng.standard_normal((n_w, k)))
    bases, a_list, b_list = [], [], []
    for c in range(4):
        v, _ = np.linalg.qr(base + 0.05 * rng.standard_normal((n_w, k)))
        v = v @ rand_orth(rng, k)
        bases.append(v)
        a_list.append(rand_spd(rng, k))
        b_list.append(rng.standard_normal(k))
    adb = align(rng.uniform(BOX2.lower, BOX2.upper, (4, 2)), a_list, b_list, bases, BOX2)
    assert np.array_equal(adb.A[0], a_list[0]) and np.array_equal(adb.b[0], b_list[0])
    for q in adb.rotations:
        assert np.abs(q.T @ q - np.eye(k)).max() <= 1e-12
    # alignment never moves a basis further from the reference
    for v_raw, v in zip(bases[1:], adb.bases[1:]):
        assert np.linalg.norm(v - adb.bases[0]) <= np.linalg.norm(v_raw - adb.bases[0]) + 1e-12


def test_nearest_tie_breaks_to_lowest_index():
    adb = align(np.array([[0.0, 1.0], [2.0, 1.0]]), [np.eye(1)] * 2, [np.ones(1)] * 2, None,
                BOX2)
    assert adb.nearest([1.0, 1.0]) == 0
    assert adb.nearest([1.5, 1.0]) == 1


def test_rom_interpolator_reproduces_aligned_entries():
    rng = np.random.default_rng(12)
    mus = rng.uniform(BOX2.lower, BOX2.upper, (5, 2))
    a_list = [rand_spd(rng, 3) for _ in range(5)]
    b_list = [rng.standard_normal(3) for _ in range(5)]
    adb = align(mus, a_list, b_list, None, BOX2)
    ri = RomInterpolator(adb, ManifoldKind.SPD)
    for c in range(5):
        rom = ri(mus[c], sensitivity=True)
        assert np.linalg.norm(rom.A_r - a_list[c]) <= 1e-8 * np.linalg.norm(a_list[c])
        assert np.linalg.norm(rom.b_r - b_list[c]) <= 1e-8 * np.linalg.norm(b_list[c])
        assert rom.dA_r.shape == (2, 3, 3) and rom.db_r.shape == (2, 3)
