"""Range-limited force evaluation: the pair kernel
F/r = A r^-14 + B r^-8 + QQ r^-3, computed either directly or from
doubling-section lookup tables indexed by r^2.

Table layout: section s spans [x_min 2^s, x_min 2^(s+1)), twice as wide as
its predecessor, and holds a fixed count of equal intervals.  Indexing by
r^2 avoids a square root on the hot path; the force scalar times the
displacement vector is the pair force.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._kernels_py import _table_eval
from .model import LJParamTable, ParticleSet
from .neighbor import CellGrid

EXPONENTS = (-14, -8, -3)  # powers of r; in x = r^2 these are -7, -4, -1.5
_GAUSS_POINTS = 16


class TableError(ValueError):
    pass


class SingularPairError(ValueError):
    """A pair too close to evaluate (r^2 zero, or below the table domain)."""


@dataclass(frozen=True)
class InterpolationTableSet:
    """Piecewise-polynomial tables for the three pair-force terms.

    coef has shape (3, n_sections * intervals, order + 1): Horner
    coefficients in (x - a) with a the interval start.
    """

    order: int
    intervals: int
    x_min: float
    x_max: float  # padded to x_min * 2^n_sections
    n_sections: int
    coef: np.ndarray

    @property
    def n_intervals(self) -> int:
        return self.n_sections * self.intervals


def build_tables(
    order: int = 1,
    intervals: int = 256,
    x_min: float = 0.25,
    x_max: float = 81.0,
    powers=(-7.0, -4.0, -1.5),
) -> InterpolationTableSet:
    """Fit per-interval polynomials to x^p by continuous least squares
    (Gauss-Legendre projection), one table per force term.

    The requested upper bound is padded to the end of its section so the
    doubling layout tiles the domain exactly.
    """
    if order not in (1, 2, 3):
        raise TableError(f"interpolation order must be 1..3, got {order}")
    if intervals < 1 or intervals & (intervals - 1):
        raise TableError(f"intervals per section must be a power of two, got {intervals}")
    if not (0.0 < x_min < x_max):
        raise TableError(f"need 0 < x_min < x_max, got [{x_min}, {x_max}]")
    n_sections = max(1, math.ceil(math.log2(x_max / x_min)))
    # interval starts and widths for every (section, interval)
    sec_start = x_min * np.exp2(np.arange(n_sections))
    h = np.repeat(sec_start / intervals, intervals)
    a = np.repeat(sec_start, intervals) + np.tile(np.arange(intervals), n_sections) * h
    # weighted projection onto polynomials in u = (x - a)/h on [0, 1]
    u, w = np.polynomial.legendre.leggauss(_GAUSS_POINTS)
    u = 0.5 * (u + 1.0)
    w = 0.5 * w
    design = np.vander(u, order + 1, increasing=True)  # (P, order+1)
    solve = np.linalg.solve(design.T * w @ design, design.T * w)  # (order+1, P)
    x_nodes = a[:, None] + h[:, None] * u[None, :]
    coef = np.empty((len(powers), len(a), order + 1))
    scale = h[:, None] ** np.arange(order + 1)[None, :]
    for ti, p in enumerate(powers):
        cu = x_nodes**p @ solve.T  # coefficients in u
        coef[ti] = cu / scale  # rescale to t = x - a
    return InterpolationTableSet(
        order=order,
        intervals=intervals,
        x_min=float(x_min),
        x_max=float(x_min * 2.0**n_sections),
        n_sections=n_sections,
        coef=coef,
    )


def lookup_index(x: float, tables: InterpolationTableSet) -> tuple[int, int, float]:
    """(section, interval, offset into the interval) for one x = r^2."""
    if not (tables.x_min <= x < tables.x_max):
        raise TableError(f"x={x} outside table domain [{tables.x_min}, {tables.x_max})")
    mant, expo = math.frexp(x / tables.x_min)
    s = expo - 1  # floor(log2(x / x_min))
    sec_start = tables.x_min * 2.0**s
    h = sec_start / tables.intervals
    i = min(int((x - sec_start) / h), tables.intervals - 1)
    return s, i, x - (sec_start + i * h)


def table_value(tables: InterpolationTableSet, exponent: int, x):
    """Evaluate the r^exponent table at x = r^2 (scalar or array)."""
    ti = EXPONENTS.index(exponent)
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < tables.x_min) or np.any(x >= tables.x_max):
        raise TableError("value outside table domain")
    return _table_eval(x, tables.coef[ti], tables.x_min, tables.intervals, tables.order + 1)


def eval_rl_direct(r2, a, b, qq):
    """Exact force-over-distance scalar A r^-14 + B r^-8 + QQ r^-3."""
    r2 = np.asarray(r2, dtype=np.float64)
    if np.any(r2 == 0.0):
        raise SingularPairError("coincident particles (r^2 = 0)")
    inv = 1.0 / r2
    inv3 = inv * inv * inv
    return a * inv3 * inv3 * inv + b * inv3 * inv + qq * inv * np.sqrt(inv)


def eval_rl_interp(r2, a, b, qq, tables: InterpolationTableSet):
    """Table-lookup force-over-distance scalar (same contract as direct)."""
    r2 = np.asarray(r2, dtype=np.float64)
    if np.any(r2 < tables.x_min):
        raise SingularPairError(f"r^2 below table domain start {tables.x_min}")
    return (
        a * table_value(tables, -14, r2)
        + b * table_value(tables, -8, r2)
        + qq * table_value(tables, -3, r2)
    )


def pair_energy(r2, a, b, qq):
    """Pair potential consistent with the force law:
    A/12 r^-12 + B/6 r^-6 + QQ r^-1."""
    inv = 1.0 / np.asarray(r2, dtype=np.float64)
    inv3 = inv * inv * inv
    return (a / 12.0) * inv3 * inv3 + (b / 6.0) * inv3 + qq * np.sqrt(inv)


@dataclass
class PassStats:
    energy: float
    candidates: int
    filter_passed: int
    accepted: int


def rl_pass(
    grid: CellGrid,
    particles: ParticleSet,
    lj: LJParamTable,
    coulomb: float,
    mode: str = "direct",
    filter: str = "direct",
    scheme: int = 1,
    tables: InterpolationTableSet | None = None,
    out: np.ndarray | None = None,
    on_cell_done=None,
) -> tuple[np.ndarray, PassStats]:
    """One range-limited pass over the grid: accumulate +f to the reference
    and -f to the neighbor for every accepted pair.

    The distribution scheme changes only the order pairs would be issued to
    pipelines; accumulation always runs in the canonical order (home cells
    ascending, references in slot order), which is what makes the result
    bitwise identical across schemes and worker counts.  on_cell_done fires
    after each home cell completes, in ascending cell order.
    """
    if scheme not in (1, 2, 3):
        raise ValueError(f"unknown distribution scheme {scheme!r}")
    if mode not in ("direct", "interp"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "interp" and tables is None:
        raise TableError("interp mode requires tables")
    box = grid.box
    rc2 = box.cutoff * box.cutoff
    if mode == "interp" and tables.x_max < rc2:
        raise TableError(f"tables cover x < {tables.x_max}, cutoff^2 is {rc2}")
    use_planar = 1 if filter == "planar" else 0
    if filter not in ("direct", "planar"):
        raise ValueError(f"unknown filter {filter!r}")
    forces = out if out is not None else np.zeros((particles.n, 3))
    acc = np.zeros(4)
    # pack into slot order so the kernels stream cells contiguously; the
    # final scatter is a pure permutation, so rounding is unaffected
    pos_s = np.ascontiguousarray(grid.pos[grid.rows])
    charge_s = np.ascontiguousarray(particles.charge[grid.rows])
    typ_s = np.ascontiguousarray(particles.type_idx[grid.rows])
    identity = np.arange(len(grid.rows), dtype=np.int64)
    forces_s = np.zeros_like(forces)
    for c in range(grid.n_cells):
        if mode == "direct":
            status = kernels.rl_cell_direct(
                c, grid.start, identity, pos_s, charge_s, typ_s,
                lj.a, lj.b, grid.hs_cells, grid.hs_shift,
                rc2, coulomb, use_planar, box.cutoff, forces_s, acc,
            )
        else:
            status = kernels.rl_cell_interp(
                c, grid.start, identity, pos_s, charge_s, typ_s,
                lj.a, lj.b, grid.hs_cells, grid.hs_shift,
                rc2, coulomb, use_planar, box.cutoff,
                tables.coef, tables.x_min, tables.intervals, tables.order + 1,
                forces_s, acc,
            )
        if status == kernels.STATUS_SINGULAR:
            raise SingularPairError(f"singular pair in cell {c}")
        if on_cell_done is not None:
            on_cell_done(c)
    forces[grid.rows] += forces_s
    stats = PassStats(
        energy=float(acc[0]),
        candidates=int(acc[1]),
        filter_passed=int(acc[2]),
        accepted=int(acc[3]),
    )
    return forces, stats


def dump_tables(tables: InterpolationTableSet, stream) -> None:
    """One text line per interval: exponent, section, interval, interval
    start, then the Horner coefficients."""
    for ti, k in enumerate(EXPONENTS):
        for s in range(tables.n_sections):
            sec_start = tables.x_min * 2.0**s
            h = sec_start / tables.intervals
            for i in range(tables.intervals):
                a = sec_start + i * h
                cs = " ".join(repr(float(c)) for c in tables.coef[ti, s * tables.intervals + i])
                stream.write(f"{k} {s} {i} {a!r} {cs}\n")
