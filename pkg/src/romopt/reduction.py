"""POD bases, Galerkin/Petrov-Galerkin projection and reduced gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, RankError, SingularSystemError
from .parametric import Factorization

RANK_TOL = 1e-12


def fix_signs(u):
    """Flip columns so each one's largest-magnitude entry is positive."""
    u = np.array(u, dtype=float)
    idx = np.argmax(np.abs(u), axis=0)
    s = np.sign(u[idx, np.arange(u.shape[1])])
    s[s == 0] = 1.0
    return u * s


def spd_sqrt_pair(theta):
    """Return ``(Theta^{1/2}, Theta^{-1/2})`` from a symmetric eigendecomposition."""
    theta = np.asarray(theta, dtype=float)
    lam, q = np.linalg.eigh(0.5 * (theta + theta.T))
    if lam.min() <= 0:
        raise ConfigurationError("weight matrix is not positive definite")
    r = np.sqrt(lam)
    return (q * r) @ q.T, (q / r) @ q.T


def pod(snapshots, weight=None):
    """Thin weighted SVD of the snapshots.

    Returns ``(modes, singular_values)`` with sign-fixed, Theta-orthonormal modes.
    """
    s = np.asarray(snapshots, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if weight is None:
        u, sv, _ = np.linalg.svd(s, full_matrices=False)
        return fix_signs(u), sv
    half, inv_half = spd_sqrt_pair(weight)
    u, sv, _ = np.linalg.svd(half @ s, full_matrices=False)
    # sign convention applied to the left singular vectors before back-transform
    return inv_half @ fix_signs(u), sv


def pod_basis(snapshots, k, weight=None):
    """Leading ``k`` POD modes of ``snapshots`` (Theta-orthonormal when weighted).

    Raises
    ------
    RankError
        If the ``k``-th singular value is below ``1e-12 * sigma_max``.
    """
    modes, sv = pod(snapshots, weight)
    if k < 1 or k > sv.size or sv[k - 1] < RANK_TOL * sv[0]:
        rank = int(np.sum(sv >= RANK_TOL * sv[0])) if sv.size else 0
        raise RankError(f"requested k={k} but numerical rank is {rank}")
    return modes[:, :k]


def energy_rank(singular_values, fraction=0.9999):
    """Smallest ``k`` with ``sum(sigma[:k]**2) >= fraction * sum(sigma**2)``."""
    e = np.cumsum(np.asarray(singular_values, dtype=float) ** 2)
    return int(np.searchsorted(e, fraction * e[-1]) + 1)


@dataclass(frozen=True)
class ReducedBasisPair:
    """Trial basis ``V`` and test basis ``W`` (``W = V`` for Galerkin)."""

    V: np.ndarray
    W: np.ndarray = None
    weight: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.V, dtype=float)
        w = v if self.W is None else np.asarray(self.W, dtype=float)
        if v.ndim != 2 or v.shape != w.shape:
            raise ConfigurationError("V and W must be matrices of equal shape")
        if np.linalg.matrix_rank(w.T @ v) < v.shape[1]:
            raise ConfigurationError("W^T V is singular")
        if self.weight is not None:
            gram = v.T @ np.asarray(self.weight) @ v
            if np.abs(gram - np.eye(v.shape[1])).max() > 1e-10:
                raise ConfigurationError("V is not orthonormal in the weighted inner product")
        object.__setattr__(self, "V", v)
        object.__setattr__(self, "W", w)

    @classmethod
    def galerkin(cls, V, weight=None):
        return cls(V, None, weight)

    @property
    def k(self):
        return self.V.shape[1]


@dataclass(frozen=True)
class ReducedSystem:
    A_r: np.ndarray
    b_r: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.A_r, dtype=float))
        b = np.atleast_1d(np.asarray(self.b_r, dtype=float))
        if a.shape != (b.size, b.size) or b.size < 1:
            raise ConfigurationError(f"reduced shapes {a.shape} / {b.shape} inconsistent")
        object.__setattr__(self, "A_r", a)
        object.__setattr__(self, "b_r", b)

    @property
    def k(self):
        return self.b_r.size


def reduce(sys, mu, basis):
    """``A_r = W^T A(mu) V``, ``b_r = W^T b(mu)``."""
    if basis.V.shape[0] != sys.n_w:
        raise ConfigurationError(f"basis has {basis.V.shape[0]} rows, system has {sys.n_w}")
    a_r = basis.W.T @ sys.matrix(mu) @ basis.V
    b_r = basis.W.T @ sys.rhs(mu)
    _factorize_reduced(a_r)
    return ReducedSystem(a_r, b_r)


def _factorize_reduced(a_r):
    try:
        return Factorization(a_r, what="reduced")
    except SingularSystemError as exc:
        raise SingularSystemError("reduced operator A_r is singular", exc.condition) from None


def solve_reduced(rs):
    return _factorize_reduced(rs.A_r).solve(rs.b_r)


def reduced_qoi_gradient(rs, dA_r, db_r, q, w_r, mu):
    """Chain-rule gradient of ``q(w_r, mu)`` for ``A_r(mu) w_r = b_r(mu)``.

    Parameters
    ----------
    rs : ReducedSystem
    dA_r : ndarray, shape (N_mu, k, k)
    db_r : ndarray, shape (N_mu, k)
    q : QuantityOfInterest
        Expressed in reduced coordinates.
    w_r : ndarray, shape (k,)
    mu : ndarray, shape (N_mu,)
    """
    fac = _factorize_reduced(rs.A_r)
    forcing = np.asarray(db_r) - np.asarray(dA_r) @ w_r          # (N_mu, k)
    dw = fac.solve(forcing.T)                                     # (k, N_mu)
    return q.partial_mu(w_r, mu) + q.partial_w(w_r, mu) @ dw
