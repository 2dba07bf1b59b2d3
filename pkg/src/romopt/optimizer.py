"""Bound- and inequality-constrained NLP solver and ROM/HDM problem adapters.

The solver is an augmented Lagrangian method: inequality constraints
``c(mu) <= 0`` enter the merit

    L_A(mu; y, rho) = f(mu) + sum_i (max(0, y_i + rho c_i)^2 - y_i^2) / (2 rho)

which is minimized over the box by a projected damped-BFGS method with an
Armijo line search along the projected path. Multipliers then take the
first-order update ``y <- max(0, y + rho c)``.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from .errors import (ConfigurationError, EvaluationError, ManifoldDomainError,
                     ManifoldMembershipError, InterpolationConditioningError,
                     SingularSystemError)
from .parametric import Factorization, ParamBox
from .reduction import ReducedSystem, reduced_qoi_gradient, solve_reduced

log = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
BACKTRACK = 0.5
MAX_REJECTIONS = 30
PENALTY_INIT = 10.0
PENALTY_GROWTH = 10.0
MULTIPLIER_CAP = 1e8
FD_CHECK_TOL = 1e-4


@dataclass
class NlpProblem:
    """``min f(mu)`` s.t. ``c(mu) <= 0``, ``lower <= mu <= upper``.

    ``evaluate(mu)`` returns ``(f, grad_f, c, jac_c)``; ``c`` has shape
    ``(N_c,)`` and ``jac_c`` shape ``(N_c, N_mu)``.
    """

    evaluate: Callable
    box: ParamBox
    n_con: int = 0
    name: str = "nlp"

    @classmethod
    def from_functions(cls, objective, box, constraints=None, name="nlp"):
        """Build from ``objective(mu) -> (f, g)`` and ``constraints(mu) -> (c, J)``."""
        box = box if isinstance(box, ParamBox) else ParamBox(*box)
        n_con = 0
        if constraints is not None:
            n_con = int(np.size(constraints(box.center)[0]))

        def evaluate(mu):
            f, g = objective(mu)
            if constraints is None:
                return float(f), np.asarray(g, float), np.zeros(0), np.zeros((0, box.dim))
            c, j = constraints(mu)
            return (float(f), np.asarray(g, float), np.atleast_1d(np.asarray(c, float)),
                    np.atleast_2d(np.asarray(j, float)).reshape(n_con, box.dim))

        return cls(evaluate, box, n_con, name)


@dataclass
class KktReport:
    stationarity: float
    max_violation: float
    complementarity: float
    iterations: int
    evaluations: int
    converged: bool
    objective: float = math.nan
    constraints: np.ndarray = None
    multipliers: np.ndarray = None
    message: str = ""

    @property
    def kkt_residual(self):
        return max(self.stationarity, self.max_violation, self.complementarity)


@dataclass
class IterationRecord:
    iteration: int
    f: float
    max_violation: float
    stationarity: float
    step_norm: float
    evaluations: int
    merit: float
    outer: int


@dataclass
class NlpResult:
    mu: np.ndarray
    report: KktReport
    history: list = field(default_factory=list)


_RECOVERABLE = (EvaluationError, SingularSystemError, ManifoldDomainError,
                ManifoldMembershipError, InterpolationConditioningError,
                FloatingPointError, OverflowError, np.linalg.LinAlgError)


class _Counted:
    """Evaluation cache/counter around ``NlpProblem.evaluate``."""

    def __init__(self, problem):
        self.problem = problem
        self.count = 0
        self._key = None
        self._val = None

    def __call__(self, mu):
        key = np.asarray(mu, float).tobytes()
        if key == self._key:
            return self._val
        self.count += 1
        try:
            with np.errstate(all="raise"):
                out = self.problem.evaluate(np.array(mu, float))
        except _RECOVERABLE as exc:
            raise EvaluationError(str(exc)) from exc
        f, g, c, j = out
        if not (np.isfinite(f) and np.all(np.isfinite(g)) and np.all(np.isfinite(c))
                and np.all(np.isfinite(j))):
            raise EvaluationError("non-finite objective or constraint value")
        self._key, self._val = key, out
        return out


def _merit(f, g, c, j, y, rho):
    s = np.maximum(0.0, y + rho * c)
    val = f + float(np.sum(s * s - y * y)) / (2.0 * rho)
    return val, g + j.T @ s


def _projected_step(mu, g, box):
    return np.clip(mu - g, box.lower, box.upper) - mu


def _stationarity(mu, g, box):
    return float(np.abs(_projected_step(mu, g, box)).max(initial=0.0))


def _active_bounds(mu, g, box, eps=1e-12):
    span = box.upper - box.lower
    at_lo = (mu - box.lower <= eps * span) & (g > 0)
    at_hi = (box.upper - mu <= eps * span) & (g < 0)
    return at_lo | at_hi


def estimate_multipliers(mu, g, c, j, box, active_tol):
    """Nonnegative least-squares multipliers for the (near-)active constraints."""
    y = np.zeros(c.size)
    near = np.flatnonzero(c >= -active_tol)
    if near.size == 0:
        return y
    span = box.upper - box.lower
    free = (mu - box.lower > 1e-12 * span) & (box.upper - mu > 1e-12 * span)
    if not np.any(free):
        return y
    sol, _ = nnls(j[np.ix_(near, free)].T.copy(), -g[free])
    y[near] = np.minimum(sol, MULTIPLIER_CAP)
    return y


def kkt_measures(mu, g, c, j, y, box):
    lag = g + j.T @ y if c.size else g
    return (_stationarity(mu, lag, box), float(max(0.0, c.max(initial=0.0))),
            float(np.abs(y * c).max(initial=0.0)))


def check_gradients(problem, mu, tol=FD_CHECK_TOL, h=1e-6):
    """Central-difference check of all problem gradients at ``mu``.

    Returns the worst relative error; raises ``ConfigurationError`` above ``tol``.
    """
    mu = np.asarray(mu, float)
    f, g, c, j = problem.evaluate(mu)
    step = h * np.maximum(1.0, np.abs(mu))
    rows = np.vstack([g[None], j]) if c.size else g[None]
    fd = np.zeros_like(rows)
    for i in range(mu.size):
        e = np.zeros(mu.size)
        e[i] = step[i]
        fp, _, cp, _ = problem.evaluate(mu + e)
        fm, _, cm, _ = problem.evaluate(mu - e)
        fd[0, i] = (fp - fm) / (2 * step[i])
        if c.size:
            fd[1:, i] = (cp - cm) / (2 * step[i])
    scale = np.maximum(np.abs(rows).max(axis=1, keepdims=True), 1e-8)
    err = float((np.abs(rows - fd) / scale).max())
    if err > tol:
        raise ConfigurationError(
            f"gradient self-check failed at start point: relative FD mismatch {err:.2e} > {tol:.0e}")
    return err


def solve_nlp(problem, mu0, tol=1e-6, *, max_outer=50, max_inner=200,
              check=True, callback=None):
    """Solve ``problem`` from ``mu0``.

    Returns an :class:`NlpResult`; ``report.converged`` is True when
    stationarity, violation and complementarity are all ``<= tol``.
    """
    box = problem.box
    mu = np.asarray(mu0, dtype=float).copy()
    if mu.shape != (box.dim,):
        raise ConfigurationError(f"start point has shape {mu.shape}, expected ({box.dim},)")
    if not box.contains(mu, atol=1e-12):
        raise ConfigurationError("start point lies outside the bounds")
    mu = box.clip(mu)
    ev = _Counted(problem)
    if check:
        check_gradients(problem, mu)
    f, g, c, j = ev(mu)
    y = estimate_multipliers(mu, g, c, j, box, active_tol=math.sqrt(tol))
    history = []
    st, viol, comp = kkt_measures(mu, g, c, j, y, box)
    history.append(IterationRecord(0, f, viol, st, 0.0, ev.count, f, 0))
    if max(st, viol, comp) <= tol:
        return _finish(mu, ev, y, 0, True, history, "start point satisfies KKT conditions")

    rho = PENALTY_INIT
    it = 0
    prev_viol = viol
    for outer in range(1, max_outer + 1):
        inner_tol = tol
        mu, it = _inner(ev, box, mu, y, rho, inner_tol, max_inner, it, outer, history,
                        callback)
        f, g, c, j = ev(mu)
        y = np.minimum(np.maximum(0.0, y + rho * c), MULTIPLIER_CAP)
        st, viol, comp = kkt_measures(mu, g, c, j, y, box)
        log.debug("outer %d: f=%.6g viol=%.2e stat=%.2e comp=%.2e rho=%.1e",
                  outer, f, viol, st, comp, rho)
        if max(st, viol, comp) <= tol:
            return _finish(mu, ev, y, it, True, history, "converged")
        if viol > 0.25 * prev_viol:
            rho *= PENALTY_GROWTH
        prev_viol = max(viol, tol)
    return _finish(mu, ev, y, it, False, history, "outer iteration limit reached")


def _finish(mu, ev, y, it, converged, history, message):
    f, g, c, j = ev(mu)
    st, viol, comp = kkt_measures(mu, g, c, j, y, ev.problem.box)
    rep = KktReport(st, viol, comp, it, ev.count, converged, f, c.copy(), y.copy(), message)
    if not converged:
        log.warning("optimizer did not converge: %s (KKT residual %.2e)", message,
                    rep.kkt_residual)
    return NlpResult(mu.copy(), rep, history)


def _inner(ev, box, mu, y, rho, tol, max_inner, it, outer, history, callback):
    f, g, c, j = ev(mu)
    phi, dphi = _merit(f, g, c, j, y, rho)
    n = mu.size
    b = np.eye(n)
    for _ in range(max_inner):
        if _stationarity(mu, dphi, box) <= tol:
            break
        fixed = _active_bounds(mu, dphi, box)
        free = ~fixed
        d = np.zeros(n)
        try:
            d[free] = -np.linalg.solve(b[np.ix_(free, free)], dphi[free])
        except np.linalg.LinAlgError:
            d[free] = -dphi[free]
        if dphi @ d >= 0:
            b = np.eye(n)
            d = np.where(free, -dphi, 0.0)
        alpha = 1.0
        rejections = 0
        while True:
            trial = np.clip(mu + alpha * d, box.lower, box.upper)
            step = trial - mu
            if np.abs(step).max() <= 1e-16 * (1 + np.abs(mu).max()):
                trial = None
                break
            try:
                ft, gt, ct, jt = ev(trial)
            except EvaluationError as exc:
                rejections += 1
                if rejections >= MAX_REJECTIONS:
                    raise EvaluationError(
                        f"{MAX_REJECTIONS} consecutive trial points rejected: {exc}") from exc
                alpha *= BACKTRACK
                continue
            phit, dphit = _merit(ft, gt, ct, jt, y, rho)
            if phit <= phi + ARMIJO_C1 * float(dphi @ step):
                break
            rejections += 1
            if rejections >= MAX_REJECTIONS:
                trial = None
                break
            alpha *= BACKTRACK
        if trial is None:
            # no acceptable decrease along the projected path: restart curvature
            if np.allclose(b, np.eye(n)):
                break
            b = np.eye(n)
            continue
        s = step
        yk = dphit - dphi
        b = _damped_bfgs(b, s, yk)
        mu, f, g, c, j, phi, dphi = trial, ft, gt, ct, jt, phit, dphit
        it += 1
        viol = float(max(0.0, c.max(initial=0.0)))
        history.append(IterationRecord(it, f, viol, _stationarity(mu, dphi, box),
                                       float(np.linalg.norm(s)), ev.count, phi, outer))
        if callback is not None:
            callback(mu)
    return mu, it


def _damped_bfgs(b, s, yk):
    """Powell-damped BFGS update of the Hessian approximation."""
    bs = b @ s
    sbs = float(s @ bs)
    if sbs <= 0:
        return b
    sy = float(s @ yk)
    if sy >= 0.2 * sbs:
        r = yk
    else:
        t = 0.8 * sbs / (sbs - sy)
        r = t * yk + (1 - t) * bs
    sr = float(s @ r)
    if sr <= 1e-300:
        return b
    return b - np.outer(bs, bs) / sbs + np.outer(r, r) / sr


# ----------------------------------------------------------------------
# Problem adapters


def make_rom_nlp(db, objective, constraints, box=None, name="rom"):
    """NLP whose constraints are evaluated on the interpolated ROM database.

    Parameters
    ----------
    db : RomDatabase
    objective : callable ``mu -> (f, grad)``
    constraints : sequence of callables ``rom -> QuantityOfInterest``
        Each builds a QoI in reduced coordinates from an
        :class:`~romopt.interp.InterpolatedRom` (values and sensitivities).
    """
    box = box or db.box
    interp = db.interpolator
    n_c = len(constraints)

    def evaluate(mu):
        with warnings.catch_warnings():
            warnings.simplefilter("error", RuntimeWarning)
            rom = interp(mu, sensitivity=True)
        rs = ReducedSystem(rom.A_r, rom.b_r)
        w_r = solve_reduced(rs)
        f, gf = objective(mu)
        c = np.zeros(n_c)
        jac = np.zeros((n_c, box.dim))
        for i, make in enumerate(constraints):
            q = make(rom)
            c[i] = q.eval(w_r, mu)
            jac[i] = reduced_qoi_gradient(rs, rom.dA_r, rom.db_r, q, w_r, mu)
        return float(f), np.asarray(gf, float), c, jac

    return NlpProblem(evaluate, box, n_c, name)


def make_hdm_nlp(sys, objective, constraint_qois, box=None, name="hdm"):
    """NLP on the full-order model; constraint gradients by the adjoint method."""
    box = box or sys.box
    qois = list(constraint_qois)

    def evaluate(mu):
        f, gf = objective(mu)
        if not qois:
            return float(f), np.asarray(gf, float), np.zeros(0), np.zeros((0, box.dim))
        fac = Factorization(sys.matrix(mu))
        w = fac.solve(sys.rhs(mu), kind="state")
        c = np.array([q.eval(w, mu) for q in qois])
        forcing = sys.rhs_derivatives(mu) - sys.matrix_derivatives(mu) @ w
        jac = np.array([q.partial_mu(w, mu)
                        + forcing @ fac.solve(q.partial_w(w, mu), trans=True, kind="adjoint")
                        for q in qois])
        return float(f), np.asarray(gf, float), c, jac

    return NlpProblem(evaluate, box, len(qois), name)


def multi_start_points(box, n, seed):
    """``n`` start points: latin hypercube in the box (deterministic under ``seed``)."""
    from .database import latin_hypercube
    return latin_hypercube(box, n, seed)


def write_history_csv(history, path, comment=None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(["iter", "f", "max_violation", "stationarity", "step_norm",
                    "evaluations", "merit", "outer"])
        for r in history:
            w.writerow([r.iteration, repr(r.f), repr(r.max_violation), repr(r.stationarity),
                        repr(r.step_norm), r.evaluations, repr(r.merit), r.outer])
