"""Logarithm/exponential maps on matrix manifolds and their derivatives.

Three manifolds are supported:

========== ============================ ==============================
kind       Log_X(Y)                     Exp_X(G)
========== ============================ ==============================
REAL       Y - X                        X + G
NONSINGULAR log(Y X^-1)                  exp(G) X
SPD        log(X^-1/2 Y X^-1/2)          X^1/2 exp(G) X^1/2
========== ============================ ==============================

``log`` is the principal matrix logarithm; a point whose relative spectrum
touches the closed negative real axis is outside the neighbourhood where
the log map is single-valued and raises :class:`ManifoldDomainError`.
"""

from __future__ import annotations

import enum
import warnings

import numpy as np
import scipy.linalg as sla

from .errors import ManifoldDomainError, ManifoldMembershipError

SPD_CLAMP = 1e-14
SYM_TOL = 1e-12


class ManifoldKind(enum.Enum):
    REAL = "real"
    NONSINGULAR = "nonsingular"
    SPD = "spd"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown manifold kind {value!r}; "
                             f"expected one of {[k.value for k in cls]}") from None


def matrix_exp(g):
    """Matrix exponential (scaling and squaring, Pade order 13)."""
    g = np.asarray(g)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("matrix_exp input has non-finite entries")
    with warnings.catch_warnings(), np.errstate(over="ignore", invalid="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        out = sla.expm(g)
    if not np.all(np.isfinite(out)):
        raise OverflowError("matrix exponential overflowed")
    return out


def _check_log_domain(y):
    lam = np.linalg.eigvals(y)
    scale = max(np.abs(lam).max(), np.finfo(float).tiny)
    on_axis = (np.abs(lam.imag) <= 1e-12 * scale) & (lam.real <= 1e-14 * scale)
    if np.any(on_axis):
        raise ManifoldDomainError(
            "matrix has an eigenvalue on the closed negative real axis; "
            "the point lies outside the log-map neighbourhood")


def matrix_log(y):
    """Principal matrix logarithm (inverse scaling and squaring on the Schur form)."""
    y = np.asarray(y, dtype=float)
    _check_log_domain(y)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = sla.logm(y, disp=False)[0]
    if np.iscomplexobj(out):
        # real input with no negative real eigenvalues has a real principal log
        out = out.real
    return out


def _sym_eig(a):
    a = np.asarray(a, dtype=float)
    return np.linalg.eigh(0.5 * (a + a.T))


def spd_power(x, p):
    """``X**p`` for SPD ``X``; tiny eigenvalues are clamped with a warning."""
    lam, q = _sym_eig(x)
    if lam.min() <= 0:
        raise ManifoldMembershipError("matrix is not positive definite")
    if lam.min() < SPD_CLAMP * lam.max():
        warnings.warn("degenerate SPD input: eigenvalues clamped", RuntimeWarning,
                      stacklevel=2)
        lam = np.maximum(lam, SPD_CLAMP * lam.max())
    return (q * lam ** p) @ q.T


def _sym_log(s):
    lam, q = _sym_eig(s)
    if lam.min() <= 0:
        raise ManifoldDomainError("relative matrix is not positive definite")
    out = (q * np.log(lam)) @ q.T
    return 0.5 * (out + out.T)


def _sym_exp(g):
    lam, q = _sym_eig(g)
    out = (q * np.exp(lam)) @ q.T
    return 0.5 * (out + out.T)


def is_spd(y):
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[0] != y.shape[1]:
        return False
    if np.abs(y - y.T).max() > SYM_TOL * max(np.abs(y).max(), 1e-300):
        return False
    try:
        np.linalg.cholesky(y)
    except np.linalg.LinAlgError:
        return False
    return True


def is_nonsingular(y):
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[0] != y.shape[1]:
        return False
    lu = sla.lu_factor(y, check_finite=False)
    piv = np.abs(np.diag(lu[0]))
    return bool(piv.min() > y.shape[0] * np.finfo(float).eps * np.abs(y).max())


def is_member(kind, y):
    kind = ManifoldKind.parse(kind)
    if kind is ManifoldKind.SPD:
        return is_spd(y)
    if kind is ManifoldKind.NONSINGULAR:
        return is_nonsingular(y)
    return bool(np.all(np.isfinite(y)))


def _require(kind, y, what):
    if not is_member(kind, y):
        raise ManifoldMembershipError(f"{what} is not on the {kind.value} manifold")


def log_map(kind, x, y):
    """Tangent vector at ``x`` pointing to ``y``."""
    kind = ManifoldKind.parse(kind)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind is ManifoldKind.REAL:
        return y - x
    _require(kind, x, "base point X")
    _require(kind, y, "point Y")
    if kind is ManifoldKind.NONSINGULAR:
        return matrix_log(np.linalg.solve(x.T, y.T).T)
    inv_half = spd_power(x, -0.5)
    return _sym_log(inv_half @ y @ inv_half)


def exp_map(kind, x, g):
    """Point on the manifold reached from ``x`` along tangent ``g``."""
    kind = ManifoldKind.parse(kind)
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    if kind is ManifoldKind.REAL:
        return x + g
    if kind is ManifoldKind.NONSINGULAR:
        out = matrix_exp(g) @ x
    else:
        half = spd_power(x, 0.5)
        out = half @ _sym_exp(g) @ half
        out = 0.5 * (out + out.T)
    _require(kind, out, "Exp_X(Gamma)")
    return out


def matrix_exp_derivative(g, dg):
    """Directional derivative of ``exp`` at ``g`` along ``dg``.

    Builds ``B = [[G, dG], [0, G]]`` and returns the (1, 2) block of
    ``exp(B)``.
    """
    g = np.asarray(g)
    dg = np.asarray(dg)
    k = g.shape[0]
    b = np.zeros((2 * k, 2 * k), dtype=np.result_type(g, dg))
    b[:k, :k] = g
    b[:k, k:] = dg
    b[k:, k:] = g
    return matrix_exp(b)[:k, k:]


def exp_map_derivative(kind, x, g, dg):
    """Derivative of ``Exp_X(Gamma(mu))`` given ``dGamma/dmu_i``."""
    kind = ManifoldKind.parse(kind)
    dg = np.asarray(dg, dtype=float)
    if kind is ManifoldKind.REAL:
        return dg.copy()
    de = matrix_exp_derivative(g, dg)
    if kind is ManifoldKind.NONSINGULAR:
        return de @ np.asarray(x, dtype=float)
    half = spd_power(x, 0.5)
    out = half @ de @ half
    return 0.5 * (out + out.T)


class TangentChart:
    """Log/exp maps anchored at a fixed base point, with cached square roots."""

    def __init__(self, kind, x):
        self.kind = ManifoldKind.parse(kind)
        self.x = np.asarray(x, dtype=float)
        if self.kind is not ManifoldKind.REAL:
            _require(self.kind, self.x, "reference point")
        if self.kind is ManifoldKind.SPD:
            self._half = spd_power(self.x, 0.5)
            self._inv_half = spd_power(self.x, -0.5)
        elif self.kind is ManifoldKind.NONSINGULAR:
            self._lu = sla.lu_factor(self.x)

    def log(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind is ManifoldKind.REAL:
            return y - self.x
        _require(self.kind, y, "point Y")
        if self.kind is ManifoldKind.NONSINGULAR:
            # Y X^-1 = (X^-T Y^T)^T
            return matrix_log(sla.lu_solve(self._lu, y.T, trans=1).T)
        return _sym_log(self._inv_half @ y @ self._inv_half)

    def exp(self, g):
        g = np.asarray(g, dtype=float)
        if self.kind is ManifoldKind.REAL:
            return self.x + g
        if self.kind is ManifoldKind.NONSINGULAR:
            return matrix_exp(g) @ self.x
        out = self._half @ _sym_exp(g) @ self._half
        return 0.5 * (out + out.T)

    def exp_derivative(self, g, dg):
        if self.kind is ManifoldKind.REAL:
            return np.array(dg, dtype=float)
        de = matrix_exp_derivative(g, dg)
        if self.kind is ManifoldKind.NONSINGULAR:
            return de @ self.x
        out = self._half @ de @ self._half
        return 0.5 * (out + out.T)
