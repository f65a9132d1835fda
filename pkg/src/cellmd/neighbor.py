"""Cell-grid construction, periodic geometry, half-shell neighbor
enumeration, pair filtering, and pair-stream generation.

Pairs are found once each: every cell pairs with itself (upper-triangle in
slot order) and with 13 of its 26 neighbors, chosen as the lexicographically
positive offsets.  The reference particle always lives in the home cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import PLANAR_MAX, PLANAR_SCALE
from .model import ParticleSet, SimulationBox


class NeighborError(ValueError):
    pass


def _half_shell_offsets() -> np.ndarray:
    offsets = []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                if (dx, dy, dz) > (0, 0, 0):
                    offsets.append((dx, dy, dz))
    return np.array(offsets, dtype=np.int64)


HALF_SHELL_OFFSETS = _half_shell_offsets()  # (13, 3), lexicographic order

ALL_OFFSETS = np.array(
    [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)],
    dtype=np.int64,
)  # (27, 3) including (0,0,0)


def minimum_image(disp, box: SimulationBox) -> np.ndarray:
    """Wrap displacement components into (-L/2, L/2]."""
    disp = np.asarray(disp, dtype=np.float64)
    lengths = box.lengths
    return disp - lengths * np.ceil(disp / lengths - 0.5)


def half_shell(cell, box: SimulationBox) -> np.ndarray:
    """Home cell plus its 13 half-shell neighbors, periodically wrapped.

    Returns (14, 3) cell indices; row 0 is the home cell.
    """
    cell = np.asarray(cell, dtype=np.int64)
    if np.any(cell < 0) or np.any(cell >= box.ncells):
        raise NeighborError(f"cell index {cell.tolist()} outside grid {box.ncells.tolist()}")
    out = np.empty((14, 3), dtype=np.int64)
    out[0] = cell
    out[1:] = np.mod(cell + HALF_SHELL_OFFSETS, box.ncells)
    return out


def filter_direct(disp, cutoff: float):
    """Strict cutoff test on a minimum-imaged displacement.

    Returns the squared distance when r^2 < cutoff^2 (reusable downstream),
    else None.
    """
    disp = np.asarray(disp, dtype=np.float64)
    r2 = float(disp @ disp)
    return r2 if r2 < cutoff * cutoff else None


def quantize_fixed(values) -> np.ndarray:
    """Emulated 28-bit fixed-point magnitude: sign + 7 integer bits + 20
    fraction bits, truncated toward zero, saturating at 128 A."""
    mag = np.minimum(np.abs(values), PLANAR_MAX - 1.0 / PLANAR_SCALE)
    return np.floor(mag * PLANAR_SCALE) / PLANAR_SCALE


def planar_mask(disp, cutoff: float) -> np.ndarray:
    """Vectorized seven-plane pre-filter on (..., 3) displacements.

    A pass is necessary but not sufficient for r < cutoff, so callers must
    re-check the squared distance.  Components are quantized to the
    fixed-point format first; truncation only shrinks magnitudes, so no
    in-range pair is ever rejected.
    """
    q = quantize_fixed(np.asarray(disp, dtype=np.float64))
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    c1 = cutoff
    c2 = np.sqrt(2.0) * cutoff
    c3 = np.sqrt(3.0) * cutoff
    return (
        (x < c1) & (y < c1) & (z < c1)
        & (x + y < c2) & (x + z < c2) & (y + z < c2)
        & (x + y + z < c3)
    )


def filter_planar(disp, cutoff: float) -> bool:
    return bool(planar_mask(disp, cutoff))


class CellGrid:
    """Double-buffered spatial partition of particles into cutoff-sized cells.

    The current buffer is a CSR layout: cell c owns particle rows
    ``rows[start[c]:start[c+1]]``.  Positions and gids are cached per row at
    build/migration time so force passes read a stable snapshot.  The next
    buffer is staged during migration and swapped in atomically.
    """

    def __init__(self, box: SimulationBox, start, rows, gids, pos):
        self.box = box
        self.start = np.asarray(start, dtype=np.int64)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.gids = np.asarray(gids, dtype=np.int64)
        self.pos = np.asarray(pos, dtype=np.float64)
        self._next: tuple[np.ndarray, np.ndarray] | None = None
        self.hs_cells, self.hs_shift = _half_shell_tables(box)

    @property
    def n_particles(self) -> int:
        return len(self.rows)

    @property
    def n_cells(self) -> int:
        return self.box.total_cells

    def cell_rows(self, c: int) -> np.ndarray:
        return self.rows[self.start[c] : self.start[c + 1]]

    def occupancy(self) -> np.ndarray:
        return np.diff(self.start)

    def cell_of_rows(self) -> np.ndarray:
        """Flat cell id per particle row."""
        out = np.empty(len(self.rows), dtype=np.int64)
        for c in range(self.n_cells):
            out[self.cell_rows(c)] = c
        return out

    def stage_next(self, cell_per_row: np.ndarray, new_pos: np.ndarray) -> None:
        """Fill the next buffer: ascending gid within each cell."""
        if self._next is not None:
            raise NeighborError("next buffer already staged")
        n = len(self.rows)
        if len(cell_per_row) != n or len(new_pos) != n:
            raise NeighborError(f"particle count mismatch: {len(cell_per_row)} updates for {n} slots")
        order = np.lexsort((self.gids, cell_per_row))
        start = np.zeros(self.n_cells + 1, dtype=np.int64)
        counts = np.bincount(cell_per_row, minlength=self.n_cells)
        np.cumsum(counts, out=start[1:])
        self._next = (start, order)
        self._next_pos = np.asarray(new_pos, dtype=np.float64)

    def swap(self) -> None:
        """Promote the staged buffer; the old layout is discarded."""
        if self._next is None:
            raise NeighborError("no staged buffer to swap in")
        start, order = self._next
        if start[-1] != len(self.rows):
            raise NeighborError("staged buffer lost or duplicated particles")
        self.start = start
        self.rows = order
        self.pos = self._next_pos.copy()
        self._next = None


def _half_shell_tables(box: SimulationBox) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell flat neighbor ids (C, 13) and periodic image shifts
    (C, 13, 3) to add to neighbor positions."""
    nx, ny, nz = (int(v) for v in box.ncells)
    cells = np.array(
        [(cx, cy, cz) for cx in range(nx) for cy in range(ny) for cz in range(nz)],
        dtype=np.int64,
    )
    raw = cells[:, None, :] + HALF_SHELL_OFFSETS[None, :, :]  # (C, 13, 3)
    wrap = np.floor_divide(raw, box.ncells)
    wrapped = raw - wrap * box.ncells
    flat = (wrapped[..., 0] * ny + wrapped[..., 1]) * nz + wrapped[..., 2]
    shift = wrap.astype(np.float64) * box.lengths
    return flat.astype(np.int64), shift


def build_cell_grid(particles: ParticleSet, box: SimulationBox) -> CellGrid:
    """Assign particles to cells by the floor rule; insertion order within a
    cell follows input order."""
    pos = particles.pos
    if np.any(pos < 0.0) or np.any(pos >= box.lengths):
        raise NeighborError("positions must be wrapped into [0, L) before building the grid")
    flat = box.flat_index(box.cell_of(pos))
    rows = np.argsort(flat, kind="stable")
    start = np.zeros(box.total_cells + 1, dtype=np.int64)
    counts = np.bincount(flat, minlength=box.total_cells)
    np.cumsum(counts, out=start[1:])
    return CellGrid(box, start, rows, particles.gid.copy(), pos.copy())


@dataclass
class PairStream:
    """Accepted in-cutoff pairs in the traversal order of one distribution
    scheme.  Displacement points from neighbor to reference."""

    ref_gid: np.ndarray
    nbr_gid: np.ndarray
    disp: np.ndarray  # (n, 3)
    r2: np.ndarray
    candidates: int = 0
    filter_passed: int = 0

    def __len__(self) -> int:
        return len(self.ref_gid)

    def key_multiset(self) -> list[tuple[int, int]]:
        """Unordered pair keys, sorted, for cross-scheme comparison."""
        lo = np.minimum(self.ref_gid, self.nbr_gid)
        hi = np.maximum(self.ref_gid, self.nbr_gid)
        return sorted(zip(lo.tolist(), hi.tolist()))


def _cell_candidates(grid: CellGrid, c: int):
    """Reference rows, candidate rows, shifted candidate positions, and the
    home-cell slot count for home cell c."""
    home = grid.cell_rows(c)
    blocks = [grid.pos[home]]
    cand_rows = [home]
    for j in range(13):
        nb = grid.cell_rows(int(grid.hs_cells[c, j]))
        cand_rows.append(nb)
        blocks.append(grid.pos[nb] + grid.hs_shift[c, j])
    return home, np.concatenate(cand_rows), np.vstack(blocks), len(home)


def generate_pairs(grid: CellGrid, scheme: int, filter: str = "direct") -> PairStream:
    """Emit every in-cutoff unordered pair exactly once.

    Record order follows the scheme's traversal: home cells ascending, then
    within a cell either reference-major (scheme 1), interleaved across
    references in candidate order (scheme 2, mirroring neighbor broadcast),
    or reference-major per home-cell block (scheme 3, whose blocks merge
    back in ascending cell order).  The accepted multiset is identical for
    all three.
    """
    if scheme not in (1, 2, 3):
        raise NeighborError(f"unknown distribution scheme {scheme!r}")
    if filter not in ("direct", "planar"):
        raise NeighborError(f"unknown filter {filter!r}")
    box = grid.box
    rc = box.cutoff
    rc2 = rc * rc
    ref_parts, nbr_parts, disp_parts, r2_parts = [], [], [], []
    candidates = 0
    filter_passed = 0
    for c in range(grid.n_cells):
        home, cand_rows, cand_pos, m = _cell_candidates(grid, c)
        if m == 0:
            continue
        disp = grid.pos[home][:, None, :] - cand_pos[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", disp, disp)
        # home-cell pairs only for ref slot < candidate slot
        valid = np.ones(r2.shape, dtype=bool)
        valid[:, :m] = ~np.tri(m, m, k=0, dtype=bool)
        in_range = (r2 < rc2) & valid
        candidates += int(valid.sum())
        if filter == "planar":
            passed = planar_mask(disp, rc) & valid
            filter_passed += int(passed.sum())
            accepted = passed & in_range  # force path re-checks the cutoff
        else:
            accepted = in_range
            filter_passed += int(accepted.sum())
        ref_i, cand_i = np.nonzero(accepted)
        if scheme == 2:
            order = np.lexsort((ref_i, cand_i))
            ref_i, cand_i = ref_i[order], cand_i[order]
        ref_parts.append(home[ref_i])
        nbr_parts.append(cand_rows[cand_i])
        disp_parts.append(disp[ref_i, cand_i])
        r2_parts.append(r2[ref_i, cand_i])
    if ref_parts:
        ref_rows = np.concatenate(ref_parts)
        nbr_rows = np.concatenate(nbr_parts)
        disp_all = np.vstack(disp_parts)
        r2_all = np.concatenate(r2_parts)
    else:
        ref_rows = np.zeros(0, dtype=np.int64)
        nbr_rows = np.zeros(0, dtype=np.int64)
        disp_all = np.zeros((0, 3))
        r2_all = np.zeros(0)
    return PairStream(
        ref_gid=grid.gids[ref_rows],
        nbr_gid=grid.gids[nbr_rows],
        disp=disp_all,
        r2=r2_all,
        candidates=candidates,
        filter_passed=filter_passed,
    )
