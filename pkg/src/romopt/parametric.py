"""Affine-parametric full-order linear systems and their sensitivities.

The full-order (high-dimensional) model is ``A(mu) w = b(mu)`` with

    A(mu) = A_0 + sum_i theta_i(mu) A_i,    b(mu) = b_0 + sum_j eta_j(mu) b_j,

where every coefficient is a multivariate polynomial of degree <= 3 so that
``dA/dmu`` and ``db/dmu`` are exact. Everything downstream (reduction,
greedy sampling, the HDM optimization baseline) uses these routines as the
truth model.
"""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve

from .errors import ConfigurationError, IllConditionedWarning, SingularSystemError

COND_WARN = 1e12
MAX_DEGREE = 3


class SolveCounter:
    """Thread-safe tally of full-order linear solves, split by purpose.

    ``state`` counts solves of ``A w = b``, ``sensitivity`` counts the
    direct-approach solves ``A dw/dmu_i = ...`` and ``adjoint`` counts the
    transposed solves ``A^T lambda_q = dq/dw``.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.reset()

    def reset(self):
        with self._lock:
            self.state = 0
            self.sensitivity = 0
            self.adjoint = 0

    def add(self, kind, n=1):
        with self._lock:
            setattr(self, kind, getattr(self, kind) + n)

    @property
    def total(self):
        return self.state + self.sensitivity + self.adjoint

    def snapshot(self):
        with self._lock:
            return {"state": self.state, "sensitivity": self.sensitivity,
                    "adjoint": self.adjoint}


#: Global counter of every full-order solve performed by this module.
HDM_SOLVES = SolveCounter()


@dataclass(frozen=True)
class ParamBox:
    """Axis-aligned parameter domain ``lower <= mu <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size < 1:
            raise ConfigurationError("bounds must be 1-D arrays of equal length >= 1")
        if np.any(hi <= lo):
            raise ConfigurationError("upper bounds must exceed lower bounds")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.size

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    def contains(self, mu, atol=0.0):
        mu = np.asarray(mu, dtype=float)
        return bool(np.all(mu >= self.lower - atol) and np.all(mu <= self.upper + atol))

    def clip(self, mu):
        return np.clip(np.asarray(mu, dtype=float), self.lower, self.upper)

    def to_unit(self, mu):
        """Map to the unit cube ``[0, 1]^N``."""
        return (np.asarray(mu, dtype=float) - self.lower) / (self.upper - self.lower)

    def normalize(self, mu):
        """Map to ``[-0.1, 0.1]`` per axis (the interpolation coordinates)."""
        return 0.2 * self.to_unit(mu) - 0.1

    def denormalize(self, z):
        return self.lower + (np.asarray(z, dtype=float) + 0.1) / 0.2 * (self.upper - self.lower)

    @property
    def normalize_scale(self):
        """``d(normalized)/d(mu)`` per axis."""
        return 0.2 / (self.upper - self.lower)


@dataclass(frozen=True)
class Polynomial:
    """Multivariate polynomial ``sum_k c_k prod_j mu_j**e_kj`` of degree <= 3.

    Parameters
    ----------
    coefficients : sequence of float
    exponents : sequence of tuple of int
        One exponent tuple (length ``N_mu``) per coefficient.
    """

    coefficients: tuple
    exponents: tuple

    def __post_init__(self):
        coefs = tuple(float(c) for c in self.coefficients)
        exps = tuple(tuple(int(e) for e in ex) for ex in self.exponents)
        if len(coefs) != len(exps) or not exps:
            raise ConfigurationError("polynomial needs one exponent tuple per coefficient")
        if len({len(e) for e in exps}) != 1:
            raise ConfigurationError("exponent tuples must share one length")
        if any(e < 0 for ex in exps for e in ex):
            raise ConfigurationError("negative exponents are not polynomial")
        if max(sum(ex) for ex in exps) > MAX_DEGREE:
            raise ConfigurationError(f"polynomial degree exceeds {MAX_DEGREE}")
        object.__setattr__(self, "coefficients", coefs)
        object.__setattr__(self, "exponents", exps)

    @classmethod
    def constant(cls, value, n_mu):
        return cls((value,), ((0,) * n_mu,))

    @classmethod
    def linear(cls, index, n_mu, scale=1.0):
        """``scale * mu_index``."""
        e = [0] * n_mu
        e[index] = 1
        return cls((scale,), (tuple(e),))

    @property
    def n_mu(self):
        return len(self.exponents[0])

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=float)
        return float(sum(c * np.prod(mu ** np.asarray(ex)) for c, ex in
                         zip(self.coefficients, self.exponents)))

    def gradient(self, mu):
        mu = np.asarray(mu, dtype=float)
        g = np.zeros(self.n_mu)
        for c, ex in zip(self.coefficients, self.exponents):
            ex = np.asarray(ex)
            for i in np.flatnonzero(ex):
                d = ex.copy()
                d[i] -= 1
                g[i] += c * ex[i] * np.prod(mu ** d)
        return g


@dataclass(frozen=True)
class AffineParametricSystem:
    """``A(mu) = A_0 + sum theta_i(mu) A_i``, ``b(mu) = b_0 + sum eta_j(mu) b_j``.

    Instances are immutable; arrays are stored read-only.
    """

    base_matrix: np.ndarray
    matrix_terms: tuple
    base_rhs: np.ndarray
    rhs_terms: tuple
    box: ParamBox

    def __post_init__(self):
        a0 = _frozen(self.base_matrix, ndim=2)
        b0 = _frozen(self.base_rhs, ndim=1)
        n = a0.shape[0]
        if a0.shape != (n, n) or b0.shape != (n,):
            raise ConfigurationError("base matrix must be square and match the rhs length")
        mterms = tuple((p, _frozen(m, ndim=2)) for p, m in self.matrix_terms)
        rterms = tuple((p, _frozen(v, ndim=1)) for p, v in self.rhs_terms)
        for p, m in mterms:
            if m.shape != (n, n):
                raise ConfigurationError(f"matrix term shape {m.shape} != {(n, n)}")
            if p.n_mu != self.box.dim:
                raise ConfigurationError("coefficient arity differs from parameter dimension")
        for p, v in rterms:
            if v.shape != (n,):
                raise ConfigurationError(f"rhs term shape {v.shape} != {(n,)}")
            if p.n_mu != self.box.dim:
                raise ConfigurationError("coefficient arity differs from parameter dimension")
        object.__setattr__(self, "base_matrix", a0)
        object.__setattr__(self, "base_rhs", b0)
        object.__setattr__(self, "matrix_terms", mterms)
        object.__setattr__(self, "rhs_terms", rterms)

    @property
    def n_w(self):
        return self.base_matrix.shape[0]

    @property
    def n_mu(self):
        return self.box.dim

    def matrix(self, mu):
        a = self.base_matrix.copy()
        for p, m in self.matrix_terms:
            a += p(mu) * m
        return a

    def rhs(self, mu):
        b = self.base_rhs.copy()
        for p, v in self.rhs_terms:
            b += p(mu) * v
        return b

    def matrix_derivatives(self, mu):
        """Array ``(N_mu, N_w, N_w)`` of ``dA/dmu_i``."""
        d = np.zeros((self.n_mu, self.n_w, self.n_w))
        for p, m in self.matrix_terms:
            g = p.gradient(mu)
            for i in np.flatnonzero(g):
                d[i] += g[i] * m
        return d

    def rhs_derivatives(self, mu):
        """Array ``(N_mu, N_w)`` of ``db/dmu_i``."""
        d = np.zeros((self.n_mu, self.n_w))
        for p, v in self.rhs_terms:
            g = p.gradient(mu)
            for i in np.flatnonzero(g):
                d[i] += g[i] * v
        return d

    def scaled(self, alpha):
        """System with both ``A`` and ``b`` multiplied by ``alpha``."""
        return AffineParametricSystem(
            alpha * self.base_matrix,
            tuple((p, alpha * m) for p, m in self.matrix_terms),
            alpha * self.base_rhs,
            tuple((p, alpha * v) for p, v in self.rhs_terms),
            self.box)


def _frozen(a, ndim):
    a = np.array(a, dtype=float)
    if a.ndim != ndim:
        raise ConfigurationError(f"expected a {ndim}-D array, got shape {a.shape}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class QuantityOfInterest:
    """Scalar output ``q(w, mu)`` with its partial derivatives.

    ``partial_w`` returns ``dq/dw`` (shape ``(N_w,)``) and ``partial_mu``
    returns ``dq/dmu`` at fixed ``w`` (shape ``(N_mu,)``).
    """

    eval: Callable
    partial_w: Callable
    partial_mu: Callable
    name: str = field(default="q")


def assemble(sys, mu):
    """Return ``(A(mu), b(mu))``."""
    return sys.matrix(mu), sys.rhs(mu)


def condition_estimate(a, lu=None):
    """LAPACK 1-norm reciprocal condition estimate turned into ``kappa_1``."""
    if lu is None:
        lu = lu_factor(a, check_finite=True)
    anorm = np.linalg.norm(a, 1)
    rcond, info = lapack.dgecon(lu[0], anorm, norm="1")
    if info != 0 or rcond == 0.0:
        return float("inf")
    return 1.0 / rcond


class Factorization:
    """LU factorization of one matrix with counted solves."""

    def __init__(self, a, what="system"):
        a = np.asarray(a, dtype=float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lu = lu_factor(a)
        pivots = np.abs(np.diag(lu[0]))
        tiny = np.finfo(float).tiny
        if not np.all(np.isfinite(lu[0])) or pivots.min() <= tiny * max(1.0, pivots.max()):
            raise SingularSystemError(f"{what} matrix is singular to working precision")
        self.cond = condition_estimate(a, lu)
        if self.cond > COND_WARN:
            warnings.warn(f"{what} matrix condition estimate {self.cond:.2e} exceeds "
                          f"{COND_WARN:.0e}", IllConditionedWarning, stacklevel=3)
        self.lu = lu

    def solve(self, rhs, trans=False, kind=None):
        x = lu_solve(self.lu, rhs, trans=1 if trans else 0)
        if kind is not None:
            n = 1 if np.ndim(rhs) == 1 else np.shape(rhs)[1]
            HDM_SOLVES.add(kind, n)
        return x


def solve_full(sys, mu):
    """Solve ``A(mu) w = b(mu)`` by dense LU with partial pivoting."""
    a, b = assemble(sys, mu)
    return Factorization(a).solve(b, kind="state")


def state_sensitivity_direct(sys, mu, w, factorization=None):
    """``dw/dmu`` as an ``(N_w, N_mu)`` array, one linear solve per parameter."""
    fac = factorization or Factorization(sys.matrix(mu))
    da = sys.matrix_derivatives(mu)
    db = sys.rhs_derivatives(mu)
    rhs = (db - da @ w).T
    return fac.solve(rhs, kind="sensitivity")


def _as_list(qois):
    return [qois] if isinstance(qois, QuantityOfInterest) else list(qois)


def gradients_direct(sys, qois, mu):
    """Gradients of several QoIs by the direct approach (``N_mu`` solves total).

    Returns an ``(n_qoi, N_mu)`` array.
    """
    qois = _as_list(qois)
    fac = Factorization(sys.matrix(mu))
    w = fac.solve(sys.rhs(mu), kind="state")
    dw = state_sensitivity_direct(sys, mu, w, fac)
    return np.array([q.partial_mu(w, mu) + q.partial_w(w, mu) @ dw for q in qois])


def gradients_adjoint(sys, qois, mu):
    """Gradients of several QoIs by the adjoint approach (one solve per QoI).

    ``A(mu)`` is factorized once; each QoI costs one transposed solve.
    """
    qois = _as_list(qois)
    fac = Factorization(sys.matrix(mu))
    w = fac.solve(sys.rhs(mu), kind="state")
    # rows: db/dmu_i - dA/dmu_i w
    forcing = sys.rhs_derivatives(mu) - sys.matrix_derivatives(mu) @ w
    out = []
    for q in qois:
        lam = fac.solve(q.partial_w(w, mu), trans=True, kind="adjoint")
        out.append(q.partial_mu(w, mu) + forcing @ lam)
    return np.array(out)


def qoi_gradient_direct(sys, q, mu):
    return gradients_direct(sys, [q], mu)[0]


def qoi_gradient_adjoint(sys, q, mu):
    return gradients_adjoint(sys, [q], mu)[0]


def residual(sys, mu, V, w_r):
    """``b(mu) - A(mu) V w_r``."""
    V = np.asarray(V, dtype=float)
    w_r = np.asarray(w_r, dtype=float)
    if V.ndim != 2 or V.shape[1] != w_r.shape[0] or V.shape[0] != sys.n_w:
        raise ConfigurationError(
            f"basis shape {V.shape} incompatible with w_r {w_r.shape} and N_w={sys.n_w}")
    a, b = assemble(sys, mu)
    return b - a @ (V @ w_r)


# ----------------------------------------------------------------------
# Common quantities of interest


def compliance_qoi(sys, scale=1.0, shift=0.0):
    """``q = scale * b(mu)^T w + shift``."""
    return QuantityOfInterest(
        eval=lambda w, mu: scale * float(sys.rhs(mu) @ w) + shift,
        partial_w=lambda w, mu: scale * sys.rhs(mu),
        partial_mu=lambda w, mu: scale * (sys.rhs_derivatives(mu) @ w),
        name="compliance")


def squared_norm_qoi(weight=None):
    """``q = w^T M w`` (``M = I`` when ``weight`` is None)."""
    if weight is None:
        return QuantityOfInterest(
            eval=lambda w, mu: float(w @ w),
            partial_w=lambda w, mu: 2.0 * w,
            partial_mu=lambda w, mu: np.zeros(np.size(mu)),
            name="squared_norm")
    m = np.asarray(weight, dtype=float)
    return QuantityOfInterest(
        eval=lambda w, mu: float(w @ m @ w),
        partial_w=lambda w, mu: (m + m.T) @ w,
        partial_mu=lambda w, mu: np.zeros(np.size(mu)),
        name="weighted_squared_norm")


def linear_output_qoi(ell):
    """``q = ell^T w``."""
    ell = np.asarray(ell, dtype=float)
    return QuantityOfInterest(
        eval=lambda w, mu: float(ell @ w),
        partial_w=lambda w, mu: ell.copy(),
        partial_mu=lambda w, mu: np.zeros(np.size(mu)),
        name="linear_output")


def parameter_qoi(func, grad, name="param"):
    """State-independent ``q = func(mu)``."""
    return QuantityOfInterest(
        eval=lambda w, mu: float(func(mu)),
        partial_w=lambda w, mu: np.zeros(np.size(w)),
        partial_mu=lambda w, mu: np.asarray(grad(mu), dtype=float),
        name=name)


def check_nonsingular(sys, mus: Sequence):
    """Factorize ``A(mu)`` at every sample; raise on the first singular one."""
    for mu in mus:
        Factorization(sys.matrix(mu), what=f"A({np.array2string(np.asarray(mu))})")
