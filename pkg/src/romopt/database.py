"""ROM databases: sampling, residual error indicator, greedy construction, I/O."""

from __future__ import annotations

import csv
import logging
import math
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DatabaseFormatError, InterpolationConditioningError
from .interp import RomInterpolator, align, default_theta, rbf_fit
from .manifold import ManifoldKind
from .parametric import Factorization, ParamBox, solve_full, state_sensitivity_direct
from .reduction import ReducedBasisPair, ReducedSystem, pod_basis, reduce, solve_reduced

log = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# Database types


def _ro(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class RomEntry:
    mu: np.ndarray
    A_r: np.ndarray
    b_r: np.ndarray
    V: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "mu", _ro(self.mu))
        object.__setattr__(self, "A_r", _ro(self.A_r))
        object.__setattr__(self, "b_r", _ro(self.b_r))
        if self.V is not None:
            object.__setattr__(self, "V", _ro(self.V))
        k = self.b_r.size
        if self.A_r.shape != (k, k):
            raise ConfigurationError("A_r must be k x k with k = len(b_r)")
        if self.V is not None and (self.V.ndim != 2 or self.V.shape[1] != k):
            raise ConfigurationError("V must have k columns")

    @property
    def k(self):
        return self.b_r.size

    def __eq__(self, other):
        if not isinstance(other, RomEntry):
            return NotImplemented
        same = [_bits_equal(self.mu, other.mu), _bits_equal(self.A_r, other.A_r),
                _bits_equal(self.b_r, other.b_r)]
        if (self.V is None) != (other.V is None):
            return False
        if self.V is not None:
            same.append(_bits_equal(self.V, other.V))
        return all(same)

    __hash__ = None


def _bits_equal(a, b):
    return a.shape == b.shape and a.tobytes() == b.tobytes()


@dataclass(frozen=True, eq=False)
class RomDatabase:
    """Append-only collection of local ROMs.

    ``with_entry`` returns a new database sharing every existing entry, so
    databases produced along a greedy run are nested.
    """

    entries: tuple
    box: ParamBox
    theta: float = None
    matrix_kind: ManifoldKind = ManifoldKind.REAL

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise ConfigurationError("a database needs at least one entry")
        ks = {e.k for e in entries}
        if len(ks) != 1:
            raise ConfigurationError(f"inconsistent reduced dimensions {sorted(ks)}")
        for e in entries:
            if e.mu.shape != (self.box.dim,):
                raise ConfigurationError("entry parameter has wrong dimension")
        z = self.box.normalize(np.array([e.mu for e in entries]))
        if len(entries) > 1:
            d = np.linalg.norm(z[:, None] - z[None], axis=2)
            if np.any(d[np.triu_indices(len(entries), 1)] == 0):
                raise ConfigurationError("database parameters must be pairwise distinct")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "matrix_kind", ManifoldKind.parse(self.matrix_kind))
        theta = default_theta(self.box.dim) if self.theta is None else float(self.theta)
        object.__setattr__(self, "theta", theta)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def k(self):
        return self.entries[0].k

    @property
    def n_mu(self):
        return self.box.dim

    @property
    def n_w(self):
        v = self.entries[0].V
        return 0 if v is None else v.shape[0]

    @property
    def has_bases(self):
        return all(e.V is not None for e in self.entries)

    @property
    def mus(self):
        return np.array([e.mu for e in self.entries])

    def with_entry(self, entry):
        return RomDatabase(self.entries + (entry,), self.box, self.theta, self.matrix_kind)

    @cached_property
    def aligned(self):
        bases = [e.V for e in self.entries] if self.has_bases else None
        return align(self.mus, [e.A_r for e in self.entries],
                     [e.b_r for e in self.entries], bases, self.box, self.theta)

    @cached_property
    def interpolator(self):
        return RomInterpolator(self.aligned, self.matrix_kind)

    def __eq__(self, other):
        if not isinstance(other, RomDatabase):
            return NotImplemented
        return (len(self) == len(other)
                and all(a == b for a, b in zip(self.entries, other.entries))
                and _bits_equal(self.box.lower, other.box.lower)
                and _bits_equal(self.box.upper, other.box.upper)
                and struct.pack("<d", self.theta) == struct.pack("<d", other.theta)
                and self.matrix_kind is other.matrix_kind)

    __hash__ = None


# ----------------------------------------------------------------------
# Local ROM construction


class LocalRomBuilder:
    """Builds the local Galerkin ROM at a sampled parameter.

    The HDM is solved together with its state sensitivities; the POD of
    ``{w, dw/dmu_1, ..., dw/dmu_N}`` (``k = N_mu + 1`` by default) is the
    local basis.
    """

    def __init__(self, sys, k=None, matrix_kind=ManifoldKind.SPD, theta=None,
                 weight=None):
        self.sys = sys
        self.k = sys.n_mu + 1 if k is None else int(k)
        self.matrix_kind = ManifoldKind.parse(matrix_kind)
        self.theta = theta
        self.weight = weight
        self.builds = 0

    @property
    def box(self):
        return self.sys.box

    def basis(self, mu):
        fac = Factorization(self.sys.matrix(mu))
        w = fac.solve(self.sys.rhs(mu), kind="state")
        dw = state_sensitivity_direct(self.sys, mu, w, fac)
        snaps = np.column_stack([w, dw])
        return pod_basis(snaps, self.k, self.weight)

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=float)
        v = self.basis(mu)
        rs = reduce(self.sys, mu, ReducedBasisPair.galerkin(v))
        self.builds += 1
        return RomEntry(mu, rs.A_r, rs.b_r, v)

    def start(self, mu):
        return RomDatabase((self(mu),), self.box, self.theta, self.matrix_kind)


# ----------------------------------------------------------------------
# A priori sampling


def full_factorial(box, levels, cap=1_000_000):
    """Cartesian product of equispaced levels (endpoints included)."""
    levels = [int(n) for n in np.broadcast_to(levels, (box.dim,))]
    if any(n < 2 for n in levels):
        raise ConfigurationError("every axis needs at least 2 levels")
    size = math.prod(levels)
    if size > cap:
        raise ConfigurationError(f"full factorial design of {size} points exceeds cap {cap}")
    axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(box.lower, box.upper, levels)]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)


def latin_hypercube(box, m, seed):
    """``m`` points with exactly one point per stratum along every axis."""
    if m < 1:
        raise ConfigurationError("latin hypercube needs m >= 1")
    rng = np.random.default_rng(seed)
    u = np.empty((m, box.dim))
    for j in range(box.dim):
        u[:, j] = (rng.permutation(m) + rng.random(m)) / m
    return box.lower + u * (box.upper - box.lower)


# ----------------------------------------------------------------------
# Error indicator


def relative_residual(sys, mu, V, w_r):
    a, b = sys.matrix(mu), sys.rhs(mu)
    return float(np.linalg.norm(b - a @ (V @ w_r)) / np.linalg.norm(b))


class ResidualIndicator:
    """``||b(mu) - A(mu) V(mu_r) w_r|| / ||b(mu)||`` for the interpolated ROM.

    ``w_r`` solves the interpolated, aligned ROM at ``mu``; ``V(mu_r)`` is the
    aligned basis of the database entry nearest to ``mu``.
    """

    def __init__(self, sys):
        self.sys = sys

    def prepare(self, db):
        if not db.has_bases:
            raise ConfigurationError("residual indicator needs bases stored in the database")
        interp = db.interpolator
        adb = db.aligned

        def evaluate(mu):
            rom = interp(mu)
            w_r = solve_reduced(ReducedSystem(rom.A_r, rom.b_r))
            v = adb.bases[adb.nearest(mu)]
            return relative_residual(self.sys, mu, v, w_r)

        return evaluate

    def __call__(self, mu, db):
        return self.prepare(db)(mu)


def error_indicator(mu, db, sys):
    return ResidualIndicator(sys)(mu, db)


def _prepare(indicator, db):
    if hasattr(indicator, "prepare"):
        return indicator.prepare(db)
    return lambda mu: indicator(mu, db)


# ----------------------------------------------------------------------
# Greedy sampling


@dataclass
class GreedyIteration:
    iteration: int
    mu: Optional[np.ndarray]
    max_indicator: float
    tau: float
    evaluations: int
    skips: int
    sanity: bool = False


@dataclass
class GreedyResult:
    strategy: str
    database: RomDatabase
    converged: bool
    final_max: float
    indicator_evals: int = 0
    skips: int = 0
    history: list = field(default_factory=list)
    added: list = field(default_factory=list)   # (xi index, iteration, indicator)

    @property
    def n_sampled(self):
        return len(self.database)


class _Run:
    """Shared bookkeeping for the greedy strategies."""

    def __init__(self, strategy, xi, builder, indicator, seed_index, threads, callback):
        self.xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if self.xi.shape[0] == 0:
            raise ConfigurationError("candidate set is empty")
        self.builder = builder
        self.indicator = indicator
        self.threads = max(1, int(threads))
        self.callback = callback
        self.box = builder.box
        self.zxi = self.box.normalize(self.xi)
        if seed_index is None:
            seed_index = int(np.argmin(np.linalg.norm(self.zxi - self.box.normalize(
                self.box.center), axis=1)))
        self.in_db = [seed_index]
        self.db = builder.start(self.xi[seed_index])
        self.result = GreedyResult(strategy, self.db, False, math.inf)
        self.result.added.append((seed_index, 0, math.inf))
        self._notify()
        self.evaluator = None

    def _notify(self):
        if self.callback is not None:
            self.callback(self.db)

    def refresh(self):
        self.evaluator = _prepare(self.indicator, self.db)

    def evaluate(self, idx):
        idx = list(idx)
        self.result.indicator_evals += len(idx)
        if self.threads > 1 and len(idx) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                return np.array(list(pool.map(lambda i: self.evaluator(self.xi[i]), idx)))
        return np.array([self.evaluator(self.xi[i]) for i in idx])

    def free(self):
        mask = np.ones(len(self.xi), bool)
        mask[self.in_db] = False
        return np.flatnonzero(mask)

    def append(self, i, iteration, value):
        self.db = self.db.with_entry(self.builder(self.xi[i]))
        self.in_db.append(int(i))
        self.result.added.append((int(i), iteration, float(value)))
        self._notify()

    def draw_subset(self, rng, n_pi):
        """Random subset of size ``n_pi`` away from the database."""
        free = self.free()
        zdb = self.zxi[self.in_db]
        dist = np.min(np.linalg.norm(self.zxi[free][:, None] - zdb[None], axis=2), axis=1)
        order = np.argsort(dist, kind="stable")
        n_near = math.ceil(n_pi / 2)
        pool = np.sort(free[order[n_near:]]) if free.size - n_near >= n_pi else free
        if pool.size <= n_pi:
            return pool
        return np.sort(rng.choice(pool, size=n_pi, replace=False))

    def draw_sanity(self, rng, n_sanity):
        free = self.free()
        if free.size <= n_sanity:
            return free
        return np.sort(rng.choice(free, size=n_sanity, replace=False))

    def finish(self, converged, final_max):
        self.result.database = self.db
        self.result.converged = converged
        self.result.final_max = float(final_max)
        if not converged:
            log.warning("%s greedy did not converge (max indicator %.3e)",
                        self.result.strategy, final_max)
        return self.result


def _argmax_first(vals):
    return int(np.argmax(vals))


def classical_greedy(xi, eps_tol, builder, indicator, *, max_iter=None, seed_index=None,
                     threads=1, callback=None):
    """Evaluate the indicator on every free candidate; add the worst point."""
    run = _Run("classical", xi, builder, indicator, seed_index, threads, callback)
    max_iter = len(run.xi) if max_iter is None else max_iter
    vmax = math.inf
    for it in range(1, max_iter + 1):
        free = run.free()
        if free.size == 0:
            return run.finish(True, 0.0)
        run.refresh()
        vals = run.evaluate(free)
        j = _argmax_first(vals)
        vmax = float(vals[j])
        run.result.history.append(GreedyIteration(it, run.xi[free[j]], vmax, 1.0,
                                                  free.size, 0))
        if vmax < eps_tol:
            return run.finish(True, vmax)
        run.append(free[j], it, vmax)
    return run.finish(False, vmax)


def _sanity(run, rng, n_sanity, it, eps_tol):
    """Unfiltered indicator sweep; returns ``(index, value)`` of the worst point."""
    subset = run.draw_sanity(rng, n_sanity)
    if subset.size == 0:
        return None, 0.0
    vals = run.evaluate(subset)
    j = _argmax_first(vals)
    run.result.history.append(GreedyIteration(it, run.xi[subset[j]], float(vals[j]),
                                              math.nan, subset.size, 0, sanity=True))
    return int(subset[j]), float(vals[j]), subset, vals


def random_greedy(xi, n_pi, eps_tol, seed, builder, indicator, *, n_sanity=None,
                  max_iter=None, seed_index=None, threads=1, callback=None):
    """Greedy over a fresh random subset of the candidates at every iteration."""
    run = _Run("random", xi, builder, indicator, seed_index, threads, callback)
    if n_pi > len(run.xi):
        raise ConfigurationError("subset size exceeds candidate set size")
    rng = np.random.default_rng(seed)
    n_sanity = round(2.5 * n_pi) if n_sanity is None else n_sanity
    max_iter = len(run.xi) if max_iter is None else max_iter
    vmax = math.inf
    for it in range(1, max_iter + 1):
        if run.free().size == 0:
            return run.finish(True, 0.0)
        run.refresh()
        subset = run.draw_subset(rng, n_pi)
        vals = run.evaluate(subset)
        j = _argmax_first(vals)
        vmax, pick = float(vals[j]), int(subset[j])
        run.result.history.append(GreedyIteration(it, run.xi[pick], vmax, 1.0,
                                                  subset.size, 0))
        if vmax < eps_tol:
            out = _sanity(run, rng, n_sanity, it, eps_tol)
            if out[0] is None or out[1] < eps_tol:
                return run.finish(True, max(vmax, out[1]))
            pick, vmax = out[0], out[1]
        run.append(pick, it, vmax)
    return run.finish(False, vmax)


def saturation_greedy(xi, n_pi, eps_tol, gamma, tau_init, seed, builder, indicator, *,
                      adaptive=True, n_sanity=None, rho_max_reset=0.0, max_iter=None,
                      seed_index=None, callback=None):
    """Random greedy with saturation-assumption filtering of indicator evaluations.

    A candidate is evaluated only if ``tau * profile > running max`` and
    ``tau * profile > eps_tol``, where ``profile`` is its most recent
    indicator value (``inf`` if never evaluated). With ``adaptive`` the
    saturation estimate ``tau`` is updated from the growth ratios
    ``gamma * profile / previous profile`` (only at points whose previous
    value exceeded ``eps_tol``), clamped to at least 1.

    ``rho_max_reset`` is the value the running maximum is reset to at the
    start of each iteration; ``1.0`` reproduces the literal pseudo-code,
    which never selects a point when all indicators stay below 1.
    """
    if gamma < 1:
        raise ConfigurationError("marginal factor gamma must be >= 1")
    if tau_init < 1:
        raise ConfigurationError("initial saturation constant must be >= 1")
    if rho_max_reset >= 1.0 and eps_tol < 1.0:
        log.warning("running-max reset %.3g >= 1 hides every indicator below 1; "
                    "the iteration may never select a point", rho_max_reset)
    if eps_tol >= 1.0:
        log.warning("eps_tol >= 1 makes the saturation filter vacuous")
    run = _Run("saturation" if adaptive else "saturation-fixed", xi, builder, indicator,
               seed_index, 1, callback)
    if n_pi > len(run.xi):
        raise ConfigurationError("subset size exceeds candidate set size")
    rng = np.random.default_rng(seed)
    n_sanity = round(2.5 * n_pi) if n_sanity is None else n_sanity
    max_iter = len(run.xi) if max_iter is None else max_iter
    profile = np.full(len(run.xi), np.inf)
    prev = np.full(len(run.xi), np.inf)
    tau = float(tau_init)
    rho_max = math.inf
    for it in range(1, max_iter + 1):
        if run.free().size == 0:
            return run.finish(True, 0.0)
        run.refresh()
        subset = run.draw_subset(rng, n_pi)
        rho_max = rho_max_reset
        pick = None
        tau_temp = np.zeros(subset.size)
        evals = skips = 0
        for jj, i in enumerate(subset):
            if not (tau * profile[i] > rho_max and tau * profile[i] > eps_tol):
                skips += 1
                continue
            prev[i] = profile[i]
            val = float(run.evaluate([i])[0])
            evals += 1
            profile[i] = val
            if np.isfinite(prev[i]) and prev[i] > eps_tol:
                tau_temp[jj] = max(1.0, gamma * profile[i] / prev[i])
            if val > rho_max:
                rho_max, pick = val, int(i)
        run.result.skips += skips
        run.result.history.append(GreedyIteration(
            it, None if pick is None else run.xi[pick], rho_max, tau, evals, skips))
        if rho_max < eps_tol:
            out = _sanity(run, rng, n_sanity, it, eps_tol)
            if out[0] is not None:
                for i, v in zip(out[2], out[3]):
                    prev[i], profile[i] = profile[i], v
            if out[0] is None or out[1] < eps_tol:
                return run.finish(True, max(rho_max, out[1]))
            pick, rho_max = out[0], out[1]
        if adaptive and tau_temp.size and tau_temp.max() >= 1:
            tau = float(tau_temp.max())
        if pick is None:
            log.warning("iteration %d selected no point (running max never exceeded "
                        "its reset value %.3g)", it, rho_max_reset)
            return run.finish(False, rho_max)
        run.append(pick, it, rho_max)
        profile[pick] = 0.0
    return run.finish(False, rho_max)


def surrogate_greedy(xi, n_s, eps_tol, seed, builder, indicator, *, n_sanity=None,
                     max_iter=None, seed_index=None, callback=None):
    """Greedy driven by an RBF surrogate of the logged indicator values.

    Converges when two consecutive probes at the surrogate maximizer fall
    below ``eps_tol`` and a sanity sweep agrees.
    """
    run = _Run("surrogate", xi, builder, indicator, seed_index, 1, callback)
    if n_s < run.box.dim + 1:
        raise ConfigurationError("surrogate greedy needs at least N_mu + 1 initial samples")
    rng = np.random.default_rng(seed)
    n_sanity = round(2.5 * 2 * n_s) if n_sanity is None else n_sanity
    max_iter = 4 * len(run.xi) if max_iter is None else max_iter
    logged = {}
    run.refresh()
    init = run.draw_sanity(rng, n_s)
    for i, v in zip(init, run.evaluate(init)):
        logged[int(i)] = float(v)
    for i in run.in_db:
        logged[i] = 0.0
    lows = 0
    last = math.inf
    for it in range(1, max_iter + 1):
        free = run.free()
        if free.size == 0:
            return run.finish(True, 0.0)
        idx = np.array(sorted(logged))
        try:
            sur = rbf_fit(run.xi[idx], np.array([logged[i] for i in idx]), box=run.box)
            pred = np.array([sur.evaluate(run.xi[i]) for i in free])
            j = int(free[_argmax_first(pred)])
        except InterpolationConditioningError:
            j = int(rng.choice(free))
        val = float(run.evaluate([j])[0])
        logged[j] = val
        last = val
        run.result.history.append(GreedyIteration(it, run.xi[j], val, math.nan, 1, 0))
        if val >= eps_tol:
            lows = 0
            run.append(j, it, val)
            logged[j] = 0.0
            run.refresh()
            continue
        lows += 1
        if lows < 2:
            continue
        out = _sanity(run, rng, n_sanity, it, eps_tol)
        if out[0] is None or out[1] < eps_tol:
            return run.finish(True, max(val, out[1]))
        for i, v in zip(out[2], out[3]):
            logged[int(i)] = float(v)
        run.append(out[0], it, out[1])
        logged[out[0]] = 0.0
        run.refresh()
        lows = 0
    return run.finish(False, last)


# ----------------------------------------------------------------------
# Persistence

MAGIC = b"ROMDB\x01"
VERSION_MAJOR = 1
VERSION_MINOR = 0
_HEADER = struct.Struct("<HIIIIId")
_KIND_CODES = {ManifoldKind.REAL: 0, ManifoldKind.NONSINGULAR: 1, ManifoldKind.SPD: 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


def dumps(db):
    flags = (1 if db.has_bases else 0) | (_KIND_CODES[db.matrix_kind] << 1)
    parts = [MAGIC, _HEADER.pack((VERSION_MAJOR << 8) | VERSION_MINOR, len(db), db.n_mu,
                                 db.k, db.n_w if db.has_bases else 0, flags, db.theta),
             np.concatenate([db.box.lower, db.box.upper]).astype("<f8").tobytes()]
    for e in db.entries:
        parts.append(e.mu.astype("<f8").tobytes())
        parts.append(np.ascontiguousarray(e.A_r).astype("<f8").tobytes())
        parts.append(e.b_r.astype("<f8").tobytes())
        if db.has_bases:
            parts.append(np.asfortranarray(e.V).astype("<f8").tobytes(order="F"))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data):
    if len(data) < len(MAGIC) + _HEADER.size + 4:
        raise DatabaseFormatError("file truncated")
    if data[:len(MAGIC)] != MAGIC:
        raise DatabaseFormatError("bad magic bytes; not a ROM database or unsupported version")
    version, n_p, n_mu, k, n_w, flags, theta = _HEADER.unpack_from(data, len(MAGIC))
    major = version >> 8
    if major != VERSION_MAJOR:
        raise DatabaseFormatError(
            f"database format major version {major} is not supported (expected "
            f"{VERSION_MAJOR}); upgrade the reader")
    body, trailer = data[:-4], data[-4:]
    if struct.unpack("<I", trailer)[0] != zlib.crc32(body):
        raise DatabaseFormatError("checksum mismatch (corrupted or truncated file)")
    has_v = bool(flags & 1)
    kind = _CODE_KINDS.get((flags >> 1) & 3)
    if kind is None:
        raise DatabaseFormatError("unknown manifold tag in header flags")
    per_entry = n_mu + k * k + k + (n_w * k if has_v else 0)
    expected = len(MAGIC) + _HEADER.size + 8 * (2 * n_mu + n_p * per_entry)
    if len(body) != expected:
        raise DatabaseFormatError(f"payload length {len(body)} != expected {expected}")
    floats = np.frombuffer(body, dtype="<f8", offset=len(MAGIC) + _HEADER.size)
    box = ParamBox(floats[:n_mu].copy(), floats[n_mu:2 * n_mu].copy())
    pos = 2 * n_mu
    entries = []
    for _ in range(n_p):
        mu = floats[pos:pos + n_mu]; pos += n_mu
        a = floats[pos:pos + k * k].reshape(k, k); pos += k * k
        b = floats[pos:pos + k]; pos += k
        v = None
        if has_v:
            v = floats[pos:pos + n_w * k].reshape((n_w, k), order="F"); pos += n_w * k
        entries.append(RomEntry(mu.astype(float), a.astype(float), b.astype(float),
                                None if v is None else np.array(v, dtype=float)))
    return RomDatabase(tuple(entries), box, theta, kind)


def save(db, path):
    with open(path, "wb") as fh:
        fh.write(dumps(db))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


def export_csv(db, path, added=None, comment=None):
    """Entry table: index, parameters, iteration added, indicator at selection."""
    added = added or [(None, None, math.nan)] * len(db)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(["entry"] + [f"mu_{i + 1}" for i in range(db.n_mu)]
                   + ["iteration_added", "indicator_at_selection"])
        for c, (e, rec) in enumerate(zip(db.entries, added)):
            w.writerow([c] + [repr(float(x)) for x in e.mu]
                       + ["" if rec[1] is None else rec[1], repr(float(rec[2]))])
