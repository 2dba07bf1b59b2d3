"""Desk-scale benchmark problems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .parametric import (AffineParametricSystem, ParamBox, Polynomial, QuantityOfInterest,
                         compliance_qoi)


def _block_of(x2, y2, n):
    # coordinates in half grid steps; the interface x = 0.5 sits at n + 1
    return int(x2 >= n + 1) + 2 * int(y2 >= n + 1)


def thermal_block(n=15, lower=1.0, upper=3.0, base_conductivity=1.0):
    """Heat conduction in the unit square split into 2 x 2 blocks.

    Five-point finite differences on an ``n x n`` interior grid with zero
    Dirichlet data and a unit source. Block 0 (lower left) has a fixed
    conductivity; blocks 1 to 3 carry the three parameters, so ``A(mu)`` is
    SPD for positive parameters and ``b`` is parameter independent.
    """
    h = 1.0 / (n + 1)
    n_w = n * n
    mats = [np.zeros((n_w, n_w)) for _ in range(4)]

    def idx(i, j):
        return i * n + j

    for i in range(n):
        for j in range(n):
            p = idx(i, j)
            for di, dj in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                # edge midpoints in integer half steps, so both end nodes agree
                blk = _block_of(2 * (j + 1) + dj, 2 * (i + 1) + di, n)
                m = mats[blk]
                m[p, p] += 1.0 / h ** 2
                ii, jj = i + di, j + dj
                if 0 <= ii < n and 0 <= jj < n:
                    m[p, idx(ii, jj)] -= 1.0 / h ** 2
    box = ParamBox(np.full(3, float(lower)), np.full(3, float(upper)))
    terms = tuple((Polynomial.linear(i, 3), mats[i + 1]) for i in range(3))
    return AffineParametricSystem(base_conductivity * mats[0], terms, np.ones(n_w), (), box)


@dataclass(frozen=True)
class ParamQuadratic:
    """``f(mu) = sum_i c_i mu_i + 0.5 * sum_i d_i (mu_i - m_i)^2``."""

    linear: np.ndarray
    curvature: np.ndarray
    center: np.ndarray

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=float)
        r = mu - self.center
        f = float(self.linear @ mu + 0.5 * np.sum(self.curvature * r * r))
        return f, self.linear + self.curvature * r


def reduced_compliance(rom, scale=1.0, shift=0.0):
    """``scale * b_r^T w_r + shift`` for an interpolated ROM.

    The compliance is invariant under the congruence rotations applied to
    the local ROMs, so it is meaningful in the aligned coordinates.
    """
    b_r = np.asarray(rom.b_r)
    db_r = np.asarray(rom.db_r) if rom.db_r is not None else None
    return QuantityOfInterest(
        eval=lambda w, mu: scale * float(b_r @ w) + shift,
        partial_w=lambda w, mu: scale * b_r,
        partial_mu=lambda w, mu: (np.zeros(np.size(mu)) if db_r is None
                                  else scale * (db_r @ w)),
        name="compliance")


@dataclass(frozen=True)
class DeskDesignProblem:
    """Minimum-cost conductivity design with a compliance cap.

    minimize ``f(mu)`` subject to ``compliance(mu) / c_max - 1 <= 0``.
    """

    sys: AffineParametricSystem
    objective: ParamQuadratic
    c_max: float

    def hdm_constraints(self):
        return [compliance_qoi(self.sys, 1.0 / self.c_max, -1.0)]

    def rom_constraints(self):
        return [lambda rom: reduced_compliance(rom, 1.0 / self.c_max, -1.0)]


def desk_design_problem(n=15, lower=1.0, upper=3.0):
    sys = thermal_block(n, lower, upper)
    obj = ParamQuadratic(np.array([1.0, 1.5, 2.0]), np.full(3, 0.5), np.full(3, lower))
    # cap chosen between the compliance at the lower and upper corners
    from .parametric import solve_full
    c_lo = float(sys.rhs(sys.box.lower) @ solve_full(sys, sys.box.lower))
    c_hi = float(sys.rhs(sys.box.upper) @ solve_full(sys, sys.box.upper))
    c_max = c_hi + 0.35 * (c_lo - c_hi)
    return DeskDesignProblem(sys, obj, c_max)
