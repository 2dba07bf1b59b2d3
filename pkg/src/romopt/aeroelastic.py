"""Linearized coupled fluid/structure ROMs, flutter eigenvalues and damping ratios.

Reduced coupled dynamics, structure state ``q_s = (x_r', x_r)``::

    d/dt [q_s; w_r] = [[N_ss, N_sf], [N_fs, N_ff]] [q_s; w_r]

    N_ss = [[0, -Omega^2], [I, 0]]    N_sf = [[P_r], [0]]
    N_fs = [-R_r, -G_r]               N_ff = -H_r

Eliminating the fluid gives the nonlinear structural eigenproblem
``N_s(lam) q = 0`` with
``N_s(lam) = N_ss - lam I + N_sf (lam I - N_ff)^-1 N_fs``.
"""

from __future__ import annotations

import configparser
import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .errors import (ConfigurationError, NonConvergenceError, PoleError, RomOptError,
                     SensitivityUnavailableError)
from .interp import ManifoldInterpolator, default_theta, procrustes_align, rbf_fit
from .manifold import ManifoldKind
from .parametric import ParamBox

FP_TOL = 1e-12
FP_MAX_ITER = 200


# ----------------------------------------------------------------------
# Full-order synthetic model


@dataclass(frozen=True)
class CoupledFom:
    """``M x'' + K(mu) x = P w``,  ``A w' + H w + R x' + G(mu) x = 0``.

    ``K(mu) = K0 + mu_1 K1`` and ``G(mu) = G0 + mu_2 G1``; structural
    damping is zero.
    """

    M: np.ndarray
    K0: np.ndarray
    K1: np.ndarray
    A: np.ndarray
    H: np.ndarray
    R: np.ndarray
    G0: np.ndarray
    G1: np.ndarray
    P: np.ndarray
    box: ParamBox

    def K(self, mu):
        return self.K0 + mu[0] * self.K1

    def G(self, mu):
        return self.G0 + mu[1] * self.G1

    @property
    def n_s(self):
        return self.M.shape[0]

    @property
    def n_f(self):
        return self.A.shape[0]


def spring_chain(n, masses, springs):
    """Mass and stiffness of a fixed-free chain; ``springs[0]`` ties node 0 to ground."""
    k = np.zeros((n, n))
    for i, s in enumerate(springs):
        k[i, i] += s
        if i > 0:
            k[i - 1, i - 1] += s
            k[i - 1, i] -= s
            k[i, i - 1] -= s
    return np.diag(np.asarray(masses, float)), k


def synthetic_fom(n_s=10, n_f=40, coupling=0.05, seed=0, lower=(0.5, 0.5),
                  upper=(1.5, 1.5)):
    """Spring-mass chain coupled to a stable random fluid block.

    The fluid operator is ``H = A S`` with ``S`` diagonalizable and its
    eigenvalues in the right half plane, so the uncoupled fluid decays.
    """
    if n_f % 2:
        raise ConfigurationError("n_f must be even")
    rng = np.random.default_rng(seed)
    masses = rng.uniform(0.8, 1.2, n_s)
    springs = rng.uniform(0.8, 1.2, n_s)
    m, k0 = spring_chain(n_s, masses, springs)
    stiff = np.zeros(n_s)
    stiff[: n_s // 2] = springs[: n_s // 2]
    _, k1 = spring_chain(n_s, masses, stiff)
    a = np.diag(rng.uniform(0.5, 2.0, n_f))
    blocks = []
    for _ in range(n_f // 2):
        re, im = rng.uniform(1.0, 3.0), rng.uniform(0.0, 2.0)
        blocks.append(np.array([[re, im], [-im, re]]))
    t = np.eye(n_f) + 0.1 * rng.standard_normal((n_f, n_f)) / math.sqrt(n_f)
    s = t @ sla.block_diag(*blocks) @ np.linalg.inv(t)
    h = a @ s
    r = coupling * rng.standard_normal((n_f, n_s)) / math.sqrt(n_f)
    g0 = coupling * rng.standard_normal((n_f, n_s)) / math.sqrt(n_f)
    g1 = coupling * rng.standard_normal((n_f, n_s)) / math.sqrt(n_f)
    p = coupling * rng.standard_normal((n_s, n_f)) / math.sqrt(n_f)
    return CoupledFom(m, k0, k1, a, h, r, g0, g1, p, ParamBox(lower, upper))


def load_fom_spec(path):
    """Synthetic model from a ``[model]`` section (n_s, n_f, coupling, seed, lower, upper)."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigurationError(f"cannot read model spec {path}")
    if "model" not in cp:
        raise ConfigurationError("model spec needs a [model] section")
    s = cp["model"]
    try:
        return synthetic_fom(
            n_s=s.getint("n_s", 10), n_f=s.getint("n_f", 40),
            coupling=s.getfloat("coupling", 0.05), seed=s.getint("seed"),
            lower=tuple(float(v) for v in s.get("lower", "0.5 0.5").split()),
            upper=tuple(float(v) for v in s.get("upper", "1.5 1.5").split()))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad model spec: {exc}") from None


# ----------------------------------------------------------------------
# Reduction


def structural_modes(m, k, k_s):
    """Lowest ``k_s`` modes: ``K x = w^2 M x`` with ``X^T M X = I``."""
    m = np.asarray(m, float)
    if k_s < 1 or k_s > m.shape[0]:
        raise ConfigurationError("need 1 <= k_s <= N_s")
    try:
        lam, x = sla.eigh(np.asarray(k, float), m, subset_by_index=[0, k_s - 1])
    except np.linalg.LinAlgError:
        raise ConfigurationError("mass matrix is not positive definite") from None
    idx = np.argmax(np.abs(x), axis=0)
    x = x * np.sign(x[idx, np.arange(k_s)])
    return x, np.diag(lam)


def fluid_rob_freq(fom, mu, x, xi_samples, k_f):
    """Fluid basis from frequency-domain responses to structural modes.

    Solves ``(j xi A + H) w = -(j xi R + G) x_i`` for every mode and sample,
    stacks real and imaginary parts, and returns ``V = A^-1/2 U_k`` from the
    SVD of the ``A^1/2``-weighted snapshots (so ``V^T A V = I``).
    """
    xi_samples = np.atleast_1d(np.asarray(xi_samples, float))
    if k_f > 2 * x.shape[1] * xi_samples.size:
        raise ConfigurationError("k_f exceeds the number of snapshots")
    g = fom.G(mu)
    snaps = []
    for xi in xi_samples:
        op = 1j * xi * fom.A + fom.H
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu = sla.lu_factor(op)
        except (np.linalg.LinAlgError, ValueError):
            raise PoleError(f"resonant frequency sample xi={xi}") from None
        if np.abs(np.diag(lu[0])).min() <= 1e-14 * np.abs(op).max():
            raise PoleError(f"resonant frequency sample xi={xi}")
        w = sla.lu_solve(lu, -(1j * xi * fom.R + g) @ x)
        snaps.append(w.real)
        if xi != 0:
            snaps.append(w.imag)
    s = np.hstack(snaps)
    d = np.diag(fom.A)
    if np.any(d <= 0) or np.count_nonzero(fom.A - np.diag(d)):
        raise ConfigurationError("A must be diagonal with positive entries")
    u, sv, _ = np.linalg.svd(np.sqrt(d)[:, None] * s, full_matrices=False)
    if k_f > sv.size or sv[k_f - 1] < 1e-12 * sv[0]:
        raise ConfigurationError(f"fluid snapshots have numerical rank below k_f={k_f}")
    u = u[:, :k_f]
    u = u * np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(k_f)])
    return u / np.sqrt(d)[:, None]


@dataclass(frozen=True)
class CoupledRom:
    """Reduced blocks; ``omega2`` is SPD (diagonal before alignment)."""

    omega2: np.ndarray
    H_r: np.ndarray
    R_r: np.ndarray
    G_r: np.ndarray
    P_r: np.ndarray
    X: np.ndarray = None
    V: np.ndarray = None

    @property
    def k_s(self):
        return self.omega2.shape[0]

    @property
    def k_f(self):
        return self.H_r.shape[0]

    @property
    def n_ss(self):
        k = self.k_s
        return np.block([[np.zeros((k, k)), -self.omega2], [np.eye(k), np.zeros((k, k))]])

    @property
    def n_sf(self):
        return np.vstack([self.P_r, np.zeros((self.k_s, self.k_f))])

    @property
    def n_fs(self):
        return np.hstack([-self.R_r, -self.G_r])

    @property
    def n_ff(self):
        return -self.H_r

    def dense_operator(self):
        return np.block([[self.n_ss, self.n_sf], [self.n_fs, self.n_ff]])

    def rotated(self, q_s, q_f):
        """Congruence into new reduced coordinates (structure ``q_s``, fluid ``q_f``)."""
        return CoupledRom(q_s.T @ self.omega2 @ q_s, q_f.T @ self.H_r @ q_f,
                          q_f.T @ self.R_r @ q_s, q_f.T @ self.G_r @ q_s,
                          q_s.T @ self.P_r @ q_f,
                          None if self.X is None else self.X @ q_s,
                          None if self.V is None else self.V @ q_f)

    # N_s(lam) pieces
    def _resolvent(self, lam):
        op = lam * np.eye(self.k_f) - self.n_ff
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu = sla.lu_factor(op)
        except ValueError:
            raise PoleError(f"lambda={lam} is a fluid pole") from None
        piv = np.abs(np.diag(lu[0]))
        if piv.min() <= 1e-14 * max(np.abs(op).max(), 1e-300):
            raise PoleError(f"lambda={lam} is a fluid pole")
        return lu

    def n_f(self, lam):
        return self.n_sf @ sla.lu_solve(self._resolvent(lam), self.n_fs.astype(complex))

    def n_f_dlam(self, lam):
        lu = self._resolvent(lam)
        inner = sla.lu_solve(lu, sla.lu_solve(lu, self.n_fs.astype(complex)))
        return -self.n_sf @ inner

    def frozen(self, lam):
        return self.n_ss + self.n_f(lam)

    def dlam(self, lam):
        return self.n_f_dlam(lam) - np.eye(2 * self.k_s)


def assemble_ns(rom, lam):
    """``N_s(lam) = N_ss - lam I + N_sf (lam I - N_ff)^-1 N_fs``."""
    return rom.frozen(lam) - lam * np.eye(2 * rom.k_s)


def build_rom(fom, mu, k_s, k_f, xi_samples):
    mu = np.asarray(mu, float)
    x, om2 = structural_modes(fom.M, fom.K(mu), k_s)
    v = fluid_rob_freq(fom, mu, x, xi_samples, k_f)
    return CoupledRom(om2, v.T @ fom.H @ v, v.T @ fom.R @ x, v.T @ fom.G(mu) @ x,
                      x.T @ fom.P @ v, x, v)


def random_coupled_rom(k_s, k_f, coupling=0.1, seed=0):
    """Random small ROM with well separated structural and fluid spectra."""
    rng = np.random.default_rng(seed)
    om = 0.5 + 0.4 * np.arange(k_s) + rng.uniform(0.0, 0.15, k_s)
    s = rng.standard_normal((k_f, k_f)) * 0.3 / math.sqrt(k_f)
    h = s + np.diag(rng.uniform(1.5, 3.0, k_f))
    return CoupledRom(np.diag(om ** 2), h,
                      coupling * rng.standard_normal((k_f, k_s)),
                      coupling * rng.standard_normal((k_f, k_s)),
                      coupling * rng.standard_normal((k_s, k_f)))


# ----------------------------------------------------------------------
# Nonlinear eigenproblem


@dataclass
class StructEig:
    lam: complex
    q: np.ndarray
    p: np.ndarray
    zeta: float
    iterations: int
    collided: bool = False


def damping_ratio(lam):
    """``-Re(lam) / |lam|``."""
    lam = complex(lam)
    mod = abs(lam)
    if mod == 0:
        raise ValueError("damping ratio undefined for lambda = 0")
    return -lam.real / mod


def default_guesses(omega2):
    """``+/- j omega_i`` from the fluid-off limit."""
    om = np.sqrt(np.linalg.eigvalsh(0.5 * (omega2 + omega2.T)))
    return np.concatenate([1j * om, -1j * om])


def _solve_one(op, lam0, tol, max_iter):
    lam = complex(lam0)
    for it in range(1, max_iter + 1):
        t = op.frozen(lam)
        w, vl, vr = sla.eig(t, left=True, right=True)
        i = int(np.argmin(np.abs(w - lam)))
        new = complex(w[i])
        if abs(new - lam) <= tol * abs(lam) or new == lam:
            # eigenvectors of the frozen matrix at the converged value
            t = op.frozen(new)
            w, vl, vr = sla.eig(t, left=True, right=True)
            i = int(np.argmin(np.abs(w - new)))
            lam_f = complex(w[i])
            return lam_f, vr[:, i], vl[:, i], it
        lam = new
    raise NonConvergenceError(
        f"fixed-point eigen iteration from {lam0} did not converge in {max_iter} steps")


def solve_structural_eigs(op, guesses=None, tol=FP_TOL, max_iter=FP_MAX_ITER):
    """Fixed-point solution of ``N_s(lam) q = 0`` for each initial guess.

    ``op`` provides ``frozen(lam) = N_ss + N_f(lam)`` (a :class:`CoupledRom`
    or :class:`InterpolatedNs`). Returns one :class:`StructEig` per guess;
    ``collided`` marks guesses that converged to an already found root.
    """
    if guesses is None:
        guesses = default_guesses(op.omega2)
    out = []
    for g in guesses:
        lam, q, p, it = _solve_one(op, g, tol, max_iter)
        collided = any(abs(lam - e.lam) <= 1e-8 * max(abs(lam), 1e-300) for e in out)
        if collided:
            warnings.warn(f"eigenvalue guess {g} converged to an already found root {lam}",
                          RuntimeWarning, stacklevel=2)
            for e in out:
                if abs(lam - e.lam) <= 1e-8 * max(abs(lam), 1e-300):
                    e.collided = True
        out.append(StructEig(lam, q, p, damping_ratio(lam), it, collided))
    return out


def dense_eigenvalues(rom):
    return np.linalg.eigvals(rom.dense_operator())


def track_modes(previous, current):
    """Permutation ``perm`` so that ``current[perm[j]]`` continues ``previous[j]``."""
    prev = np.asarray(previous, complex)
    cur = np.asarray(current, complex)
    cost = np.abs(prev[:, None] - cur[None, :])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(prev.size, int)
    perm[rows] = cols
    return perm


# ----------------------------------------------------------------------
# Database interpolation of N_s


@dataclass(frozen=True)
class AeroDatabase:
    """Aligned local coupled ROMs sampled at ``mus``."""

    mus: np.ndarray
    roms: tuple
    box: ParamBox
    theta: float
    reference: int = 0


def build_aero_database(fom, mus, k_s, k_f, xi_samples, theta=None, reference=0):
    mus = np.atleast_2d(np.asarray(mus, float))
    roms = [build_rom(fom, mu, k_s, k_f, xi_samples) for mu in mus]
    return align_aero(mus, roms, fom.box, theta, reference)


def align_aero(mus, roms, box, theta=None, reference=0):
    """Rotate every ROM onto the reference bases (structure and fluid separately)."""
    ref = roms[reference]
    out = []
    for c, rom in enumerate(roms):
        if c == reference or rom.X is None or ref.X is None:
            # without bases the ROMs are taken to share coordinates already
            out.append(rom)
            continue
        q_s = procrustes_align(rom.X, ref.X)
        q_f = procrustes_align(rom.V, ref.V)
        out.append(rom.rotated(q_s, q_f))
    theta = default_theta(box.dim) if theta is None else float(theta)
    return AeroDatabase(np.asarray(mus, float), tuple(out), box, theta, reference)


class InterpolatedNs:
    """``N_s(lam; mu*)`` from an :class:`AeroDatabase`.

    ``N_f`` is interpolated on the real matrix space (linear in the data, so
    it is evaluated as a weighted sum of the local ``N_f(lam)``), and
    ``Omega^2`` on the SPD manifold with ``N_ss`` rebuilt from it.
    """

    def __init__(self, adb, mu):
        self.adb = adb
        self.mu = np.asarray(mu, float)
        n_p = len(adb.roms)
        card = rbf_fit(adb.mus, np.eye(n_p), adb.theta, adb.box)
        self.weights, self.dweights = card.evaluate(self.mu, grad=True)
        om = ManifoldInterpolator(adb.mus, [r.omega2 for r in adb.roms], ManifoldKind.SPD,
                                  adb.box, adb.theta, adb.reference)
        self.omega2, self.domega2 = om.with_sensitivity(self.mu)
        self.k_s = self.omega2.shape[0]

    def _combine(self, mats, w):
        ref = mats[self.adb.reference]
        return ref + sum(wc * (m - ref) for wc, m in zip(w, mats))

    def _combine_grad(self, mats, dw):
        ref = mats[self.adb.reference]
        return np.array([sum(d[c] * (mats[c] - ref) for c in range(len(mats)))
                         for d in dw])

    @property
    def n_ss(self):
        k = self.k_s
        return np.block([[np.zeros((k, k)), -self.omega2], [np.eye(k), np.zeros((k, k))]])

    def n_f(self, lam):
        return self._combine([r.n_f(lam) for r in self.adb.roms], self.weights)

    def frozen(self, lam):
        return self.n_ss + self.n_f(lam)

    def ns(self, lam):
        return self.frozen(lam) - lam * np.eye(2 * self.k_s)

    def dlam(self, lam):
        # interpolation is linear in the data: d/dlam passes through it
        return (self._combine([r.n_f_dlam(lam) for r in self.adb.roms], self.weights)
                - np.eye(2 * self.k_s))

    def dmu(self, lam):
        """``dN_s/dmu_i`` at fixed ``lam``, shape ``(N_mu, 2k_s, 2k_s)``."""
        k = self.k_s
        d_nf = self._combine_grad([r.n_f(lam) for r in self.adb.roms], self.dweights)
        d_nss = np.zeros((self.mu.size, 2 * k, 2 * k))
        d_nss[:, :k, k:] = -self.domega2
        return d_nf + d_nss


def interpolate_ns_blocks(adb, mu, lam):
    """``(N_s, dN_s/dmu, dN_s/dlam)`` of the interpolated operator at ``(mu, lam)``."""
    op = InterpolatedNs(adb, mu)
    return op.ns(lam), op.dmu(lam), op.dlam(lam)


def eigenvalue_sensitivity(eig, dns_dmu, dns_dlam):
    """``dlam/dmu_i = -(p^H dN_s/dmu_i q) / (p^H dN_s/dlam q)``."""
    p, q = eig.p, eig.q
    den = np.vdot(p, dns_dlam @ q)
    scale = np.linalg.norm(p) * np.linalg.norm(q) * max(np.linalg.norm(dns_dlam), 1e-300)
    if abs(den) < 1e-12 * scale:
        raise SensitivityUnavailableError(
            f"eigenvalue {eig.lam} is defective or nearly so (p^H dN/dlam q = {abs(den):.2e})")
    return np.array([-np.vdot(p, d @ q) / den for d in dns_dmu])


def zeta_gradient(lam, dlam_dmu):
    """Chain rule from ``dlam/dmu`` to ``dzeta/dmu``."""
    lam = complex(lam)
    lr, li = lam.real, lam.imag
    mod = abs(lam)
    if mod == 0:
        raise ValueError("damping ratio undefined for lambda = 0")
    dlam_dmu = np.asarray(dlam_dmu, complex)
    return (dlam_dmu.real * (lr * lr / mod ** 3 - 1.0 / mod)
            + dlam_dmu.imag * (lr * li / mod ** 3))


def damping_sensitivities(eig, dns_dmu, dns_dlam):
    return zeta_gradient(eig.lam, eigenvalue_sensitivity(eig, dns_dmu, dns_dlam))


@dataclass
class FlutterPoint:
    mu: np.ndarray
    eigs: list
    dzeta: np.ndarray = None     # (n_modes, N_mu)


def flutter_analysis(adb, mu, guesses=None, sensitivities=True):
    """Interpolated eigenvalues, damping ratios and (optionally) their gradients."""
    op = InterpolatedNs(adb, mu)
    eigs = solve_structural_eigs(op, guesses)
    dz = None
    if sensitivities:
        dz = np.array([damping_sensitivities(e, op.dmu(e.lam), op.dlam(e.lam))
                       for e in eigs])
    return FlutterPoint(np.asarray(mu, float), eigs, dz)


def write_eigen_csv(points, path, comment=None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        n_mu = points[0].mu.size if points else 0
        w.writerow([f"mu_{i + 1}" for i in range(n_mu)] + ["j", "lambda_re", "lambda_im",
                                                           "zeta"]
                   + [f"dzeta_dmu_{i + 1}" for i in range(n_mu)])
        for pt in points:
            for j, e in enumerate(pt.eigs):
                row = [repr(float(v)) for v in pt.mu] + [j, repr(e.lam.real), repr(e.lam.imag),
                                                         repr(e.zeta)]
                if pt.dzeta is not None:
                    row += [repr(float(v)) for v in pt.dzeta[j]]
                w.writerow(row)
