"""Pure-numpy kernels: per-cell pair force passes and grid charge
spread/gather.  Signature-compatible with the compiled twins in ``_core``;
``kernels`` picks whichever is importable.

Accumulation order is canonical (home cells ascending, references in slot
order, candidates in half-shell enumeration order) so results do not depend
on the workload-distribution scheme requested upstream.
"""

from __future__ import annotations

import numpy as np

from .constants import PLANAR_MAX, PLANAR_SCALE

IMPL_NAME = "python"

STATUS_OK = 0
STATUS_SINGULAR = 1


def _cell_block(c, start, rows, pos, hs_cells, hs_shift):
    home = rows[start[c] : start[c + 1]]
    cand = [home]
    blocks = [pos[home]]
    for j in range(13):
        nb = rows[start[hs_cells[c, j]] : start[hs_cells[c, j] + 1]]
        cand.append(nb)
        blocks.append(pos[nb] + hs_shift[c, j])
    return home, np.concatenate(cand), np.vstack(blocks)


def _masks(disp, r2, m, rc2, use_planar, cutoff):
    valid = np.ones(r2.shape, dtype=bool)
    valid[:, :m] = ~np.tri(m, m, k=0, dtype=bool)
    in_range = (r2 < rc2) & valid
    if not use_planar:
        return valid, in_range, in_range
    q = np.minimum(np.abs(disp), PLANAR_MAX - 1.0 / PLANAR_SCALE)
    q = np.floor(q * PLANAR_SCALE) / PLANAR_SCALE
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    c2 = np.sqrt(2.0) * cutoff
    c3 = np.sqrt(3.0) * cutoff
    passed = (
        (x < cutoff) & (y < cutoff) & (z < cutoff)
        & (x + y < c2) & (x + z < c2) & (y + z < c2)
        & (x + y + z < c3)
    ) & valid
    return valid, passed, passed & in_range


def _accumulate(forces, ref_rows, nbr_rows, f):
    np.add.at(forces, ref_rows, f)
    np.add.at(forces, nbr_rows, -f)


def rl_cell_direct(
    c, start, rows, pos, charge, typ, a_tab, b_tab, hs_cells, hs_shift,
    rc2, coul, use_planar, cutoff, forces, acc,
):
    """Direct evaluation of the pair force for home cell c; accumulates
    force two-sidedly and pair energy, candidate and filter counters into
    acc[0:4].  Returns a status code."""
    home, cand_rows, cand_pos = _cell_block(c, start, rows, pos, hs_cells, hs_shift)
    m = len(home)
    if m == 0:
        return STATUS_OK
    disp = pos[home][:, None, :] - cand_pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", disp, disp)
    valid, passed, accepted = _masks(disp, r2, m, rc2, use_planar, cutoff)
    acc[1] += valid.sum()
    acc[2] += passed.sum()
    acc[3] += accepted.sum()
    ref_i, cand_i = np.nonzero(accepted)
    if len(ref_i) == 0:
        return STATUS_OK
    x = r2[ref_i, cand_i]
    if np.any(x == 0.0):
        return STATUS_SINGULAR
    ref_rows = home[ref_i]
    nbr_rows = cand_rows[cand_i]
    a = a_tab[typ[ref_rows], typ[nbr_rows]]
    b = b_tab[typ[ref_rows], typ[nbr_rows]]
    qq = coul * charge[ref_rows] * charge[nbr_rows]
    inv = 1.0 / x
    inv3 = inv * inv * inv
    rinv = np.sqrt(inv)
    scalar = a * inv3 * inv3 * inv + b * inv3 * inv + qq * inv * rinv
    energy = (a / 12.0) * inv3 * inv3 + (b / 6.0) * inv3 + qq * rinv
    acc[0] += energy.sum()
    _accumulate(forces, ref_rows, nbr_rows, scalar[:, None] * disp[ref_i, cand_i])
    return STATUS_OK


def _table_eval(x, coef_k, x_min, m_intervals, n_coef):
    """Evaluate one doubling-section table at x (array), Horner form."""
    mant, expo = np.frexp(x / x_min)
    s = expo - 1  # floor(log2(x / x_min)); mant in [0.5, 1)
    sec_start = x_min * np.ldexp(1.0, s)
    h = sec_start / m_intervals
    i = np.minimum((np.floor((x - sec_start) / h)).astype(np.int64), m_intervals - 1)
    g = s * m_intervals + i
    t = x - (sec_start + i * h)
    v = coef_k[g, n_coef - 1]
    for k in range(n_coef - 2, -1, -1):
        v = v * t + coef_k[g, k]
    return v


def rl_cell_interp(
    c, start, rows, pos, charge, typ, a_tab, b_tab, hs_cells, hs_shift,
    rc2, coul, use_planar, cutoff, coef, x_min, m_intervals, n_coef, forces, acc,
):
    """Table-lookup variant of rl_cell_direct.  coef holds the three
    doubling-section tables (r^-14, r^-8, r^-3) indexed by r^2."""
    home, cand_rows, cand_pos = _cell_block(c, start, rows, pos, hs_cells, hs_shift)
    m = len(home)
    if m == 0:
        return STATUS_OK
    disp = pos[home][:, None, :] - cand_pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", disp, disp)
    valid, passed, accepted = _masks(disp, r2, m, rc2, use_planar, cutoff)
    acc[1] += valid.sum()
    acc[2] += passed.sum()
    acc[3] += accepted.sum()
    ref_i, cand_i = np.nonzero(accepted)
    if len(ref_i) == 0:
        return STATUS_OK
    x = r2[ref_i, cand_i]
    if np.any(x < x_min):
        return STATUS_SINGULAR
    ref_rows = home[ref_i]
    nbr_rows = cand_rows[cand_i]
    a = a_tab[typ[ref_rows], typ[nbr_rows]]
    b = b_tab[typ[ref_rows], typ[nbr_rows]]
    qq = coul * charge[ref_rows] * charge[nbr_rows]
    scalar = (
        a * _table_eval(x, coef[0], x_min, m_intervals, n_coef)
        + b * _table_eval(x, coef[1], x_min, m_intervals, n_coef)
        + qq * _table_eval(x, coef[2], x_min, m_intervals, n_coef)
    )
    inv = 1.0 / x
    inv3 = inv * inv * inv
    energy = (a / 12.0) * inv3 * inv3 + (b / 6.0) * inv3 + qq * np.sqrt(inv)
    acc[0] += energy.sum()
    _accumulate(forces, ref_rows, nbr_rows, scalar[:, None] * disp[ref_i, cand_i])
    return STATUS_OK


def _basis(t):
    """Third-order assignment weights for fractional offsets t, shape
    (..., 4); rows sum to one for any t."""
    t2 = t * t
    t3 = t2 * t
    return np.stack(
        [
            -0.5 * t3 + t2 - 0.5 * t,
            1.5 * t3 - 2.5 * t2 + 1.0,
            -1.5 * t3 + 2.0 * t2 + 0.5 * t,
            0.5 * t3 - 0.5 * t2,
        ],
        axis=-1,
    )


def _basis_deriv(t):
    t2 = t * t
    return np.stack(
        [
            -1.5 * t2 + 2.0 * t - 0.5,
            4.5 * t2 - 5.0 * t,
            -4.5 * t2 + 4.0 * t + 0.5,
            1.5 * t2 - t,
        ],
        axis=-1,
    )


def _grid_support(pos, lengths, k):
    """Base node, fractional offset, and the 4 wrapped node indices per axis."""
    spacing = lengths / k
    s = pos / spacing
    base = np.floor(s).astype(np.int64)
    t = s - base
    nodes = (base[:, None, :] + np.arange(-1, 3)[None, :, None]) % k  # (N, 4, 3)
    return t, nodes


def spread_charge(pos, charge, lengths, grid):
    """Deposit q * wx * wy * wz onto each particle's 4x4x4 periodic node
    neighborhood.  Rows of pos must already be in the canonical (ascending
    gid) order; accumulation follows row order."""
    k = grid.shape[0]
    t, nodes = _grid_support(pos, lengths, k)
    wx = _basis(t[:, 0])
    wy = _basis(t[:, 1])
    wz = _basis(t[:, 2])
    w = (
        charge[:, None, None, None]
        * wx[:, :, None, None]
        * wy[:, None, :, None]
        * wz[:, None, None, :]
    )
    flat = (
        nodes[:, :, None, None, 0] * k + nodes[:, None, :, None, 1]
    ) * k + nodes[:, None, None, :, 2]
    np.add.at(grid.reshape(-1), flat.reshape(-1), w.reshape(-1))


def gather_forces(pos, charge, lengths, ex, ey, ez, pot, out_forces, out_pot):
    """Interpolate the grid field and potential back to particles with the
    spreading weights; the force is q * E(r)."""
    k = pot.shape[0]
    t, nodes = _grid_support(pos, lengths, k)
    wx, wy, wz = _basis(t[:, 0]), _basis(t[:, 1]), _basis(t[:, 2])
    flat = (
        nodes[:, :, None, None, 0] * k + nodes[:, None, :, None, 1]
    ) * k + nodes[:, None, None, :, 2]

    def combine(grid):
        vals = grid.reshape(-1)[flat]  # (N, 4, 4, 4)
        return np.einsum("nijk,ni,nj,nk->n", vals, wx, wy, wz)

    out_pot[:] = combine(pot)
    out_forces[:, 0] = charge * combine(ex)
    out_forces[:, 1] = charge * combine(ey)
    out_forces[:, 2] = charge * combine(ez)
