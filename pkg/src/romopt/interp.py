"""Consistent interpolation of local ROMs.

Local ROMs are first rotated into the generalized coordinates of a
reference basis (orthogonal Procrustes), then interpolated entrywise in the
tangent space of their matrix manifold with a multiquadric RBF, and mapped
back. Parameter gradients of the interpolant are analytic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (AlignmentWarning, ConfigurationError, ExtrapolationWarning,
                     InterpolationConditioningError)
from .manifold import ManifoldKind, TangentChart

KERNEL_COND_MAX = 1e14


def multiquadric(r, theta):
    return np.sqrt(r * r + theta * theta)


def default_theta(n_mu):
    """0.1 x the diagonal of the normalized ``[-0.1, 0.1]^N`` box."""
    return 0.1 * 0.2 * np.sqrt(n_mu)


@dataclass(frozen=True)
class RbfInterpolant:
    """Multiquadric RBF interpolant with a polynomial tail.

    Values may carry trailing dimensions (one independent interpolant per
    entry); all entries share the kernel factorization. Centers and queries
    are mapped to ``[-0.1, 0.1]^N`` through ``box`` when one is given.
    """

    centers: np.ndarray          # normalized, (N_p, N_mu)
    weights: np.ndarray          # (N_p, m)
    tail: np.ndarray             # (n_tail, m)
    tail_degree: int
    theta: float
    value_shape: tuple
    box: object = None

    @property
    def n_mu(self):
        return self.centers.shape[1]

    def _normalize(self, mu):
        mu = np.asarray(mu, dtype=float)
        return mu if self.box is None else self.box.normalize(mu)

    def _chain(self):
        if self.box is None:
            return np.ones(self.n_mu)
        return self.box.normalize_scale

    def evaluate(self, mu, grad=False):
        z = self._normalize(mu)
        diff = z - self.centers                      # (N_p, N_mu)
        phi = multiquadric(np.linalg.norm(diff, axis=1), self.theta)
        val = phi @ self.weights
        if self.tail_degree >= 0:
            val = val + self.tail[0]
        if self.tail_degree >= 1:
            val = val + z @ self.tail[1:]
        val = val.reshape(self.value_shape)
        if not grad:
            return val
        # d phi_c / d z = (z - z_c) / phi_c
        dphi = diff / phi[:, None]                   # (N_p, N_mu)
        g = dphi.T @ self.weights                    # (N_mu, m)
        if self.tail_degree >= 1:
            g = g + self.tail[1:]
        g = g * self._chain()[:, None]
        return val, g.reshape((self.n_mu,) + self.value_shape)


def _tail_matrix(z, degree):
    cols = [np.ones((z.shape[0], 1))]
    if degree >= 1:
        cols.append(z)
    return np.hstack(cols)


def rbf_fit(centers, values, theta=None, box=None, tail="auto"):
    """Fit entrywise multiquadric interpolants.

    Parameters
    ----------
    centers : array_like, shape (N_p, N_mu)
    values : array_like, shape (N_p, ...)
        Real or complex; the fit is linear in the values.
    theta : float, optional
        Shape parameter in normalized coordinates; defaults to
        :func:`default_theta`.
    box : ParamBox, optional
        Maps parameters to ``[-0.1, 0.1]^N`` before distances are taken.
    tail : {"auto", "linear", "constant", "none"}
        ``auto`` uses a linear tail when the centers are unisolvent for
        linear polynomials and a constant tail otherwise.
    """
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    if c.ndim != 2:
        raise ConfigurationError("centers must be a 2-D array")
    vals = np.asarray(values)
    n_p, n_mu = c.shape
    if vals.shape[0] != n_p:
        raise ConfigurationError(f"{vals.shape[0]} values for {n_p} centers")
    z = c if box is None else box.normalize(c)
    if n_p > 1:
        d = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=2)
        if np.any(d[np.triu_indices(n_p, 1)] <= 1e-14):
            raise ConfigurationError("RBF centers must be pairwise distinct")
    if theta is None:
        theta = default_theta(n_mu)
    if theta <= 0:
        raise ConfigurationError("shape parameter theta must be positive")

    degree = {"none": -1, "constant": 0, "linear": 1}.get(tail)
    if tail == "auto":
        degree = 1 if np.linalg.matrix_rank(_tail_matrix(z, 1)) == n_mu + 1 else 0
    elif degree is None:
        raise ConfigurationError(f"unknown tail option {tail!r}")

    r = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=2)
    phi = multiquadric(r, theta)
    m = vals.reshape(n_p, -1)
    if degree >= 0:
        p = _tail_matrix(z, degree)
        nt = p.shape[1]
        k = np.block([[phi, p], [p.T, np.zeros((nt, nt))]])
        rhs = np.vstack([m, np.zeros((nt, m.shape[1]), dtype=m.dtype)])
    else:
        nt = 0
        k, rhs = phi, m
    cond = np.linalg.cond(k)
    if not np.isfinite(cond) or cond > KERNEL_COND_MAX:
        raise InterpolationConditioningError(
            f"RBF kernel condition number {cond:.2e} > {KERNEL_COND_MAX:.0e}; "
            "increase theta or remove clustered centers")
    sol = np.linalg.solve(k, rhs)
    weights = sol[:n_p]
    tail_coef = sol[n_p:] if nt else np.zeros((0, m.shape[1]), dtype=sol.dtype)
    return RbfInterpolant(z, weights, tail_coef, degree, float(theta),
                          vals.shape[1:], box)


def rbf_eval_grad(interp, mu):
    """Value and gradient (leading axis = parameter index) at ``mu``."""
    return interp.evaluate(mu, grad=True)


# ----------------------------------------------------------------------
# Procrustes alignment


def procrustes_align(v_c, v_ref):
    """Orthogonal ``Q`` minimizing ``||V_c Q - V_ref||_F``."""
    cross = np.asarray(v_c, dtype=float).T @ np.asarray(v_ref, dtype=float)
    u, s, zt = np.linalg.svd(cross)
    if s[-1] < 1e-8 * max(s[0], 1e-300):
        warnings.warn(f"Procrustes cross-Gram nearly rank deficient "
                      f"(sigma_min/sigma_max = {s[-1] / max(s[0], 1e-300):.2e})",
                      AlignmentWarning, stacklevel=2)
    return u @ zt


def rotate_rom(a_r, b_r, q):
    """Congruence ``(Q^T A_r Q, Q^T b_r)``."""
    q = np.asarray(q, dtype=float)
    if np.abs(q.T @ q - np.eye(q.shape[0])).max() > 1e-8:
        raise ConfigurationError("rotation matrix is not orthogonal")
    return q.T @ np.asarray(a_r) @ q, q.T @ np.asarray(b_r)


@dataclass(frozen=True)
class AlignedDatabase:
    """Local ROMs rotated into the reference coordinates.

    ``bases`` holds the aligned ROBs ``V_c Q_c`` when available.
    """

    mus: np.ndarray              # (N_p, N_mu)
    rotations: np.ndarray        # (N_p, k, k)
    A: np.ndarray                # (N_p, k, k)
    b: np.ndarray                # (N_p, k)
    reference: int
    box: object
    theta: float
    bases: np.ndarray = None     # (N_p, N_w, k)

    @property
    def n_p(self):
        return self.mus.shape[0]

    def nearest(self, mu):
        """Index of the nearest sample in normalized distance (lowest index on ties)."""
        z = self.box.normalize(self.mus)
        d = np.linalg.norm(z - self.box.normalize(mu), axis=1)
        return int(np.argmin(d))


def align(mus, a_list, b_list, bases, box, theta=None, reference=0):
    """Rotate every ROM onto the basis of entry ``reference``."""
    mus = np.atleast_2d(np.asarray(mus, dtype=float))
    n_p = mus.shape[0]
    if theta is None:
        theta = default_theta(mus.shape[1])
    rots, a_out, b_out, v_out = [], [], [], []
    v_ref = None if bases is None else np.asarray(bases[reference])
    for c in range(n_p):
        k = np.shape(b_list[c])[0]
        if bases is None:
            q = np.eye(k)
        elif c == reference:
            q = np.eye(k)
        else:
            q = procrustes_align(bases[c], v_ref)
        a, b = rotate_rom(a_list[c], b_list[c], q)
        rots.append(q)
        a_out.append(a)
        b_out.append(b)
        if bases is not None:
            v_out.append(np.asarray(bases[c]) @ q)
    return AlignedDatabase(mus, np.array(rots), np.array(a_out), np.array(b_out),
                           reference, box, float(theta),
                           None if bases is None else np.array(v_out))


# ----------------------------------------------------------------------
# Interpolation on manifolds


class ManifoldInterpolator:
    """Tangent-space RBF interpolation of samples ``Y_c`` on one manifold.

    The reference point is ``Y_reference``; samples are log-mapped once at
    construction, so evaluations only cost an RBF evaluation plus one
    exponential map.
    """

    def __init__(self, mus, samples, kind, box=None, theta=None, reference=0,
                 tail="auto"):
        self.kind = ManifoldKind.parse(kind)
        samples = np.asarray(samples, dtype=float)
        self.box = box
        self.mus = np.atleast_2d(np.asarray(mus, dtype=float))
        self.chart = TangentChart(self.kind, samples[reference])
        self.gammas = np.array([self.chart.log(y) for y in samples])
        self.rbf = rbf_fit(self.mus, self.gammas, theta, box, tail)

    def _warn_outside(self, mu):
        if self.box is not None and not self.box.contains(mu, atol=1e-12):
            warnings.warn("interpolation query outside the parameter box (extrapolation)",
                          ExtrapolationWarning, stacklevel=3)

    def __call__(self, mu):
        self._warn_outside(mu)
        return self.chart.exp(self.rbf.evaluate(mu))

    def with_sensitivity(self, mu):
        """``(Y*, dY*/dmu)`` with ``dY*/dmu`` of shape ``(N_mu,) + Y.shape``."""
        self._warn_outside(mu)
        g, dg = self.rbf.evaluate(mu, grad=True)
        y = self.chart.exp(g)
        dy = np.array([self.chart.exp_derivative(g, d) for d in dg])
        return y, dy


def manifold_interpolate(mus, samples, kind, mu, box=None, theta=None, reference=0):
    return ManifoldInterpolator(mus, samples, kind, box, theta, reference)(mu)


def manifold_interpolate_with_sensitivity(mus, samples, kind, mu, box=None, theta=None,
                                          reference=0):
    return ManifoldInterpolator(mus, samples, kind, box, theta,
                                reference).with_sensitivity(mu)


@dataclass(frozen=True)
class InterpolatedRom:
    A_r: np.ndarray
    b_r: np.ndarray
    dA_r: np.ndarray = None      # (N_mu, k, k)
    db_r: np.ndarray = None      # (N_mu, k)


class RomInterpolator:
    """Interpolates the aligned ``(A_r, b_r)`` pairs of an :class:`AlignedDatabase`.

    ``A_r`` lives on ``matrix_kind``; ``b_r`` is interpolated on the real
    vector space.
    """

    def __init__(self, adb, matrix_kind=ManifoldKind.REAL):
        self.adb = adb
        self.matrix_kind = ManifoldKind.parse(matrix_kind)
        self._a = ManifoldInterpolator(adb.mus, adb.A, self.matrix_kind, adb.box,
                                       adb.theta, adb.reference)
        self._b = ManifoldInterpolator(adb.mus, adb.b, ManifoldKind.REAL, adb.box,
                                       adb.theta, adb.reference)

    def __call__(self, mu, sensitivity=False):
        if not sensitivity:
            return InterpolatedRom(self._a(mu), self._b(mu))
        a, da = self._a.with_sensitivity(mu)
        b, db = self._b.with_sensitivity(mu)
        return InterpolatedRom(a, b, da, db)
