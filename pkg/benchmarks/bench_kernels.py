"""Benchmark the compiled kernels against the pure-numpy fallback on the
hot paths: per-cell pair passes (direct and table-lookup, both filters) and
grid charge spread/gather.

Usage: python benchmarks/bench_kernels.py [--n 5000] [--repeats 3]
"""

import argparse
import time

import numpy as np

from cellmd import _kernels_py
from cellmd.cli import gen_dataset
from cellmd.constants import COULOMB
from cellmd.lr import field_grids, solve_potential, spread_charges
from cellmd.model import SimulationBox, derive_lj_pairs
from cellmd.neighbor import build_cell_grid
from cellmd.rl import build_tables

try:
    from cellmd import _core
except ImportError:
    _core = None


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def rl_pass_with(impl, mode, use_planar, box, ps, lj, grid, tables):
    forces = np.zeros((ps.n, 3))
    acc = np.zeros(4)
    rc2 = box.cutoff**2
    for c in range(grid.n_cells):
        if mode == "direct":
            impl.rl_cell_direct(
                c, grid.start, grid.rows, grid.pos, ps.charge, ps.type_idx,
                lj.a, lj.b, grid.hs_cells, grid.hs_shift,
                rc2, COULOMB, use_planar, box.cutoff, forces, acc,
            )
        else:
            impl.rl_cell_interp(
                c, grid.start, grid.rows, grid.pos, ps.charge, ps.type_idx,
                lj.a, lj.b, grid.hs_cells, grid.hs_shift,
                rc2, COULOMB, use_planar, box.cutoff,
                tables.coef, tables.x_min, tables.intervals, tables.order + 1,
                forces, acc,
            )
    return acc


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=5000)
    parser.add_argument("--k", type=int, default=32, help="charge grid size")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    box = SimulationBox(lengths=[28.0, 28.0, 63.0], cutoff=9.0, ncells=[3, 3, 7])
    ps = gen_dataset(args.n, box.lengths, seed=1, style="lj-fluid", sigma=2.0)
    lj = derive_lj_pairs([0.2], [2.0])
    grid = build_cell_grid(ps, box)
    tables = build_tables(order=1, intervals=256, x_max=box.cutoff**2)
    acc = rl_pass_with(_kernels_py, "direct", 0, box, ps, lj, grid, tables)
    print(
        f"{args.n} particles, {grid.n_cells} cells, "
        f"{int(acc[1])} candidate pairs, {int(acc[3])} accepted\n"
    )

    impls = [("python", _kernels_py)]
    if _core is not None:
        impls.append(("compiled", _core))
    else:
        print("compiled core not built; showing fallback only\n")

    charge = np.ascontiguousarray(ps.charge + 0.1)
    pot = np.ascontiguousarray(
        solve_potential(spread_charges(ps.pos, charge, args.k, box), box)
    )
    ex, ey, ez = (np.ascontiguousarray(g) for g in field_grids(pot, box))

    cases = []
    for mode, planar in (("direct", 0), ("direct", 1), ("interp", 0), ("interp", 1)):
        label = f"rl {mode:6s} {'planar' if planar else 'direct'}-filter"
        cases.append(
            (label, {name: (lambda impl=impl, m=mode, p=planar: rl_pass_with(
                impl, m, p, box, ps, lj, grid, tables)) for name, impl in impls})
        )
    cases.append(
        ("lr spread", {name: (lambda impl=impl: impl.spread_charge(
            ps.pos, charge, box.lengths, np.zeros((args.k,) * 3))) for name, impl in impls})
    )
    out_f, out_p = np.zeros((ps.n, 3)), np.zeros(ps.n)
    cases.append(
        ("lr gather", {name: (lambda impl=impl: impl.gather_forces(
            ps.pos, charge, box.lengths, ex, ey, ez, pot, out_f, out_p)) for name, impl in impls})
    )

    header = f"{'kernel':28s}" + "".join(f"{name:>12s}" for name, _ in impls)
    if len(impls) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for label, runners in cases:
        times = [time_call(runners[name], args.repeats) for name, _ in impls]
        row = f"{label:28s}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
