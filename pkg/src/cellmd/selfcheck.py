"""Runtime invariant checks behind the ``validate`` subcommand.

Each check returns (passed, detail) and is independently runnable; the
acceptance test suite calls the same functions at their full sample sizes.
Oracles here are deliberately simple and independent of the code paths
they judge: quadratic-cost pair enumeration, finite differences, and an
Ewald reference sum.
"""

from __future__ import annotations

import math

import numpy as np

from . import archsim, bonded, lr, neighbor, rl
from .constants import COULOMB, UNIFORM_PAIR_PASS_RATE
from .model import ParticleSet, SimulationBox, derive_lj_pairs


def _random_particles(n, box: SimulationBox, seed, charged=False):
    rng = np.random.default_rng(seed)
    charge = rng.uniform(-1.0, 1.0, n) if charged else np.zeros(n)
    if charged:
        charge -= charge.mean()  # neutral system
    return ParticleSet(
        gid=np.arange(n, dtype=np.int64),
        pos=rng.random((n, 3)) * box.lengths,
        vel=np.zeros((n, 3)),
        charge=charge,
        mass=np.ones(n),
        type_idx=rng.integers(0, 2, n),
    )


def brute_force_pairs(particles: ParticleSet, box: SimulationBox):
    """O(N^2) minimum-image pair enumeration: the reference for the
    cell-list path.  Returns the set of gid pairs and per-pair geometry."""
    pos = particles.pos
    n = particles.n
    rc2 = box.cutoff**2
    i, j = np.triu_indices(n, k=1)
    disp = neighbor.minimum_image(pos[i] - pos[j], box)
    r2 = np.einsum("ij,ij->i", disp, disp)
    keep = r2 < rc2
    return i[keep], j[keep], disp[keep], r2[keep]


def brute_force_rl(particles: ParticleSet, box: SimulationBox, lj, coulomb=COULOMB):
    """Reference forces via the quadratic enumeration (direct kernel)."""
    i, j, disp, r2 = brute_force_pairs(particles, box)
    a = lj.a[particles.type_idx[i], particles.type_idx[j]]
    b = lj.b[particles.type_idx[i], particles.type_idx[j]]
    qq = coulomb * particles.charge[i] * particles.charge[j]
    scalar = rl.eval_rl_direct(r2, a, b, qq)
    forces = np.zeros((particles.n, 3))
    np.add.at(forces, i, scalar[:, None] * disp)
    np.add.at(forces, j, -scalar[:, None] * disp)
    return forces


def ewald_reference_forces(pos, q, lengths, n_images=2, kmax=10, alpha=None):
    """Classic two-part Ewald force sum: real-space over a (2*n_images+1)^3
    image block plus the reciprocal sum, tinfoil boundary."""
    pos = np.asarray(pos, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.float64)
    if alpha is None:
        alpha = 6.0 / lengths.min()
    n = len(q)
    forces = np.zeros((n, 3))
    rng_i = range(-n_images, n_images + 1)
    for i in range(n):
        for j in range(n):
            for ax in rng_i:
                for ay in rng_i:
                    for az in rng_i:
                        if i == j and ax == ay == az == 0:
                            continue
                        d = pos[i] - pos[j] + np.array([ax, ay, az]) * lengths
                        r = float(np.linalg.norm(d))
                        forces[i] += (
                            COULOMB * q[i] * q[j]
                            * (
                                math.erfc(alpha * r) / r**3
                                + 2.0 * alpha / math.sqrt(math.pi)
                                * math.exp(-(alpha * r) ** 2) / r**2
                            )
                            * d
                        )
    volume = float(np.prod(lengths))
    for mx in range(-kmax, kmax + 1):
        for my in range(-kmax, kmax + 1):
            for mz in range(-kmax, kmax + 1):
                if mx == my == mz == 0:
                    continue
                k = 2.0 * math.pi * np.array([mx, my, mz]) / lengths
                k2 = float(k @ k)
                damp = math.exp(-k2 / (4.0 * alpha**2))
                if damp < 1e-16:
                    continue
                structure = np.sum(q * np.exp(1j * (pos @ k)))
                phase = np.exp(-1j * (pos @ k))
                forces += (
                    -COULOMB * (4.0 * math.pi / volume) * damp / k2
                    * (q[:, None] * k[None, :])
                    * np.imag(phase * structure)[:, None]
                )
    return forces


# ---------------------------------------------------------------------------
# individual checks


def check_minimum_image(samples=1000, seed=1):
    box = SimulationBox.from_cutoff([62.23, 62.23, 62.23], 9.0)
    rng = np.random.default_rng(seed)
    disp = rng.uniform(-4, 4, (samples, 3)) * box.lengths
    out = neighbor.minimum_image(disp, box)
    ok = bool(
        np.all(np.abs(out) <= np.abs(disp) + 1e-12)
        and np.all(out > -box.lengths / 2 - 1e-12)
        and np.all(out <= box.lengths / 2 + 1e-12)
    )
    return ok, f"{samples} displacements wrapped into (-L/2, L/2]"


def check_half_shell_coverage(nc=4):
    box = SimulationBox(lengths=[nc * 9.0] * 3, cutoff=9.0, ncells=[nc] * 3)
    seen = {}
    for cx in range(nc):
        for cy in range(nc):
            for cz in range(nc):
                cells = neighbor.half_shell((cx, cy, cz), box)
                home = box.flat_index(cells[0])
                if len(cells) != 14:
                    return False, "half shell must have 14 cells"
                for nb in cells[1:]:
                    key = tuple(sorted((int(home), int(box.flat_index(nb)))))
                    seen[key] = seen.get(key, 0) + 1
    adjacent = set()
    for cx in range(nc):
        for cy in range(nc):
            for cz in range(nc):
                me = int(box.flat_index(np.array([cx, cy, cz])))
                for off in neighbor.ALL_OFFSETS:
                    if not off.any():
                        continue
                    other = int(box.flat_index(np.mod(np.array([cx, cy, cz]) + off, nc)))
                    if other != me:
                        adjacent.add(tuple(sorted((me, other))))
    once = all(v == 1 for v in seen.values())
    ok = once and set(seen) == adjacent
    return ok, f"{len(seen)} adjacent cell pairs each covered exactly once on a {nc}^3 grid"


def check_filter_pass_rate(samples=1_000_000, seed=7, tol=0.005):
    """Uniform pairs over a 3x3x3 block of cutoff cells against the direct
    filter; the acceptance target is the sphere/block volume ratio."""
    rc = 9.0
    box = SimulationBox(lengths=[3 * rc] * 3, cutoff=rc, ncells=[3, 3, 3])
    rng = np.random.default_rng(seed)
    ref = rc + rng.random((samples, 3)) * rc  # center cell
    nbr = rng.random((samples, 3)) * (3 * rc)  # anywhere in the block
    disp = neighbor.minimum_image(ref - nbr, box)
    r2 = np.einsum("ij,ij->i", disp, disp)
    rate = float(np.mean(r2 < rc * rc))
    ok = abs(rate - UNIFORM_PAIR_PASS_RATE) < tol
    return ok, f"measured {rate:.4f} vs {UNIFORM_PAIR_PASS_RATE:.4f} +- {tol}"


def check_planar_filter(samples=1_000_000, seed=8):
    """The planar pre-filter must never reject an in-range pair, and its
    false positives stay far below the direct filter's rejection mass."""
    rc = 9.0
    rng = np.random.default_rng(seed)
    disp = rng.uniform(-1.5 * rc, 1.5 * rc, (samples, 3))
    r2 = np.einsum("ij,ij->i", disp, disp)
    in_range = r2 < rc * rc
    planar = neighbor.planar_mask(disp, rc)
    false_neg = int(np.sum(in_range & ~planar))
    fp_rate = float(np.mean(planar & ~in_range))
    reject_margin = float(np.mean(~in_range))
    ok = false_neg == 0 and fp_rate < reject_margin
    return ok, (
        f"false negatives {false_neg}, false-positive rate {fp_rate:.4f} "
        f"< rejection margin {reject_margin:.4f}"
    )


def check_pair_oracle(n=500, seed=11):
    """Cell-list pair sets equal the quadratic oracle; the three workload
    distribution orderings agree as multisets."""
    box = SimulationBox.from_cutoff([62.23, 62.23, 62.23], 9.0)
    particles = _random_particles(n, box, seed)
    grid = neighbor.build_cell_grid(particles, box)
    streams = {s: neighbor.generate_pairs(grid, s) for s in (1, 2, 3)}
    i, j, _, _ = brute_force_pairs(particles, box)
    oracle = sorted(zip(np.minimum(i, j).tolist(), np.maximum(i, j).tolist()))
    sets = {s: st.key_multiset() for s, st in streams.items()}
    ok = all(sets[s] == oracle for s in (1, 2, 3))
    planar_stream = neighbor.generate_pairs(grid, 1, filter="planar")
    ok = ok and planar_stream.key_multiset() == oracle
    return ok, f"{len(oracle)} pairs matched across schemes, filters, and the O(N^2) oracle"


def check_rl_oracle(n=500, seed=12, rel=1e-12):
    box = SimulationBox.from_cutoff([62.23, 62.23, 62.23], 9.0)
    particles = _random_particles(n, box, seed, charged=True)
    lj = derive_lj_pairs([0.2, 0.15], [2.0, 2.5])
    grid = neighbor.build_cell_grid(particles, box)
    forces, _ = rl.rl_pass(grid, particles, lj, COULOMB, mode="direct")
    oracle = brute_force_rl(particles, box, lj)
    scale = np.abs(oracle).max()
    err = np.abs(forces - oracle).max() / scale
    return bool(err <= rel), f"max relative deviation {err:.2e} (tolerance {rel})"


def check_scheme_bitwise(n=400, seed=13):
    box = SimulationBox.from_cutoff([62.23, 62.23, 62.23], 9.0)
    particles = _random_particles(n, box, seed, charged=True)
    lj = derive_lj_pairs([0.2], [2.0])
    particles.type_idx[:] = 0
    grid = neighbor.build_cell_grid(particles, box)
    outs = [
        rl.rl_pass(grid, particles, lj, COULOMB, mode="direct", scheme=s)[0]
        for s in (1, 2, 3)
    ]
    ok = all(np.array_equal(outs[0], o) for o in outs[1:])
    return ok, "accumulated forces bitwise identical across distributions 1/2/3"


def check_momentum(n=400, seed=14, rel=1e-9):
    box = SimulationBox.from_cutoff([62.23, 62.23, 62.23], 9.0)
    particles = _random_particles(n, box, seed, charged=True)
    lj = derive_lj_pairs([0.2, 0.3], [2.0, 1.8])
    grid = neighbor.build_cell_grid(particles, box)
    forces, _ = rl.rl_pass(grid, particles, lj, COULOMB, mode="direct")
    drift = np.abs(forces.sum(axis=0)).max()
    scale = np.abs(forces).sum()
    ok = drift <= rel * scale
    return bool(ok), f"|sum F| = {drift:.2e} vs {rel} * sum|F| = {rel * scale:.2e}"


def check_interpolation(rel=1e-4):
    tables = rl.build_tables(order=1, intervals=256, x_min=0.25, x_max=81.0)
    x = np.linspace(0.25, 81.0, 400_001)
    x = x[x < tables.x_max]
    worst_term = 0.0
    for k, p in zip(rl.EXPONENTS, (-7.0, -4.0, -1.5)):
        approx = rl.table_value(tables, k, x)
        exact = x**p
        worst_term = max(worst_term, float(np.max(np.abs(approx - exact) / exact)))
    lj = derive_lj_pairs([0.2], [2.0])
    a, b = lj.a[0, 0], lj.b[0, 0]
    qq = COULOMB * 0.4 * -0.3
    interp = rl.eval_rl_interp(x, a, b, qq, tables)
    direct = rl.eval_rl_direct(x, a, b, qq)
    scale = (
        abs(a) * x**-7.0 + abs(b) * x**-4.0 + abs(qq) * x**-1.5
    )  # magnitude of the evaluated terms; the force itself crosses zero
    worst_force = float(np.max(np.abs(interp - direct) / scale))
    ok = worst_term <= rel and worst_force <= rel
    return ok, f"max term error {worst_term:.2e}, max force error {worst_force:.2e} (<= {rel})"


def check_lr_identities(seed=15):
    box = SimulationBox.from_cutoff([62.23, 62.23, 62.23], 9.0)
    rng = np.random.default_rng(seed)
    t = rng.random(10_000)
    unity = float(np.abs(lr.basis_weights(t).sum(axis=1) - 1.0).max())
    particles = _random_particles(100, box, seed, charged=True)
    grid = lr.spread_charges(
        particles.pos[np.argsort(particles.gid)],
        particles.charge[np.argsort(particles.gid)], 32, box,
    )
    qerr = abs(float(grid.sum()) - float(particles.charge.sum()))
    qscale = max(np.abs(particles.charge).sum(), 1e-30)
    g = rng.standard_normal((16, 16, 16))
    rt = lr.fft3_inverse(lr.fft3_forward(g)).real
    rterr = float(np.abs(rt - g).max() / np.abs(g).max())
    pot = lr.solve_potential(g, box)
    k2 = -4.0 * math.pi * (g - g.mean())
    spec = lr.fft3_forward(pot)
    axes = [2.0 * math.pi * np.fft.fftfreq(16, d=box.lengths[i] / 16) for i in range(3)]
    kx, ky, kz = np.meshgrid(*axes, indexing="ij", sparse=True)
    lap = lr.fft3_inverse(-(kx**2 + ky**2 + kz**2) * spec).real
    perr = float(np.abs(lap - k2).max() / np.abs(k2).max())
    flat, _ = lr.gather_forces(np.full((8, 8, 8), 3.7), particles.pos[:10], particles.charge[:10], box)
    gerr = float(np.abs(flat).max())  # spectral gradient of a constant is exactly zero
    ok = unity < 1e-14 and qerr < 1e-12 * qscale and rterr < 1e-6 and perr < 1e-6 and gerr == 0.0
    return ok, (
        f"unity {unity:.1e}, charge {qerr:.1e}, roundtrip {rterr:.1e}, "
        f"poisson {perr:.1e}, flat-gather {gerr:.1e}"
    )


def check_lr_two_charge(k_grid=32, rel=0.05):
    """Grid force between two opposite node-aligned charges against the
    Ewald reference (real-space images over a 5^3 block)."""
    lengths = np.array([62.23, 62.23, 62.23])
    box = SimulationBox.from_cutoff(lengths, 9.0)
    h = lengths[0] / k_grid
    pos = np.array([[0.0, 0.0, 0.0], [(k_grid // 4) * h, (k_grid // 4) * h, 0.0]])
    q = np.array([1.0, -1.0])
    particles = ParticleSet(
        gid=[0, 1], pos=pos, vel=np.zeros((2, 3)), charge=q, mass=[1, 1], type_idx=[0, 0]
    )
    forces, _, _, _ = lr.lr_pass(particles, k_grid, box)
    oracle = ewald_reference_forces(pos, q, lengths)
    err = float(np.linalg.norm(forces[0] - oracle[0]) / np.linalg.norm(oracle[0]))
    opposite = float(np.abs(forces[0] + forces[1]).max())
    ok = err <= rel and opposite <= 1e-10 * float(np.abs(forces).max())
    return ok, f"relative error vs Ewald {err:.4f} (<= {rel}), antisymmetry {opposite:.1e}"


def check_bonded_gradients(cases=100, seed=16, rel=1e-5, step=1e-6):
    rng = np.random.default_rng(seed)

    def fd(energy_fn, coords):
        grad = np.zeros_like(coords)
        for a in range(coords.shape[0]):
            for d in range(3):
                cp = coords.copy()
                cp[a, d] += step
                cm = coords.copy()
                cm[a, d] -= step
                grad[a, d] = -(energy_fn(cp) - energy_fn(cm)) / (2 * step)
        return grad

    worst = 0.0
    done = {"bond": 0, "angle": 0, "dihedral": 0}
    while min(done.values()) < cases:
        c = rng.normal(size=(4, 3)) * 2.0
        if done["bond"] < cases and np.linalg.norm(c[0] - c[1]) > 0.3:
            k, r0 = rng.uniform(0.5, 5), rng.uniform(0.8, 2.5)
            fi, fj, _ = bonded.eval_bond(c[0], c[1], k, r0)
            ref = fd(lambda cc: bonded.eval_bond(cc[0], cc[1], k, r0)[2], c[:2].copy())
            worst = max(worst, np.linalg.norm(np.vstack([fi, fj]) - ref) / max(np.linalg.norm(ref), 1e-10))
            done["bond"] += 1
        if done["angle"] < cases:
            kt, t0 = rng.uniform(1, 10), rng.uniform(0.5, 2.5)
            kub, rub = rng.uniform(0, 3), rng.uniform(1, 3)
            try:
                fi, fj, fk, _ = bonded.eval_angle(c[0], c[1], c[2], kt, t0, kub, rub)
            except bonded.DegenerateGeometryError:
                continue
            ref = fd(
                lambda cc: bonded.eval_angle(cc[0], cc[1], cc[2], kt, t0, kub, rub)[3],
                c[:3].copy(),
            )
            worst = max(worst, np.linalg.norm(np.vstack([fi, fj, fk]) - ref) / max(np.linalg.norm(ref), 1e-10))
            done["angle"] += 1
        if done["dihedral"] < cases:
            kd, nper, ph = rng.uniform(0.5, 4), int(rng.integers(0, 4)), rng.uniform(-math.pi, math.pi)
            try:
                fi, fj, fk, fl, _ = bonded.eval_dihedral(c[0], c[1], c[2], c[3], kd, nper, ph)
            except bonded.DegenerateGeometryError:
                continue
            ref = fd(
                lambda cc: bonded.eval_dihedral(cc[0], cc[1], cc[2], cc[3], kd, nper, ph)[4],
                c.copy(),
            )
            worst = max(worst, np.linalg.norm(np.vstack([fi, fj, fk, fl]) - ref) / max(np.linalg.norm(ref), 1e-10))
            done["dihedral"] += 1
    return bool(worst <= rel), f"worst relative gradient error {worst:.2e} over {cases} cases/term"


def check_arbiter():
    """Exhaustive 8-bit sweep: one-hot grants, plus starvation freedom."""
    width = 8
    for valid in range(256):
        for gbit in range(-1, width):
            grant = 0 if gbit < 0 else (1 << gbit)
            out = archsim.arbiter_next(grant, valid, width)
            if valid == 0:
                if out != 0:
                    return False, f"granted {out:#x} with no valid bits"
            else:
                if out == 0 or (out & (out - 1)) or not (out & valid):
                    return False, f"bad grant {out:#x} for valid {valid:#x}"
    for valid in range(1, 256):
        for target in range(width):
            if not valid & (1 << target):
                continue
            grant = 0
            for hops in range(width + 1):
                grant = archsim.arbiter_next(grant, valid, width)
                if grant == 1 << target:
                    break
            else:
                return False, f"bit {target} starved under valid {valid:#x}"
    ok = (
        archsim.arbiter_next(0b00001, 0b00101, 5) == 0b00100
        and archsim.arbiter_next(0b00100, 0b00101, 5) == 0b00001
    )
    return ok, "all 8-bit states grant one valid bit; no starvation within 8 rounds"


def check_estimator():
    util_a = archsim.estimate(
        archsim.MappingConfig(archsim.MEM_PER_CELL, 3, 100), archsim.DatasetStats(15000, 150)
    ).utilization
    util_b = archsim.estimate(
        archsim.MappingConfig(archsim.MEM_PER_CELL, 2, 35), archsim.DatasetStats(7000, 100)
    ).utilization
    util_c = archsim.estimate(
        archsim.MappingConfig(archsim.MEM_GLOBAL, 2, 52), archsim.DatasetStats(7000, 100)
    ).utilization
    dhfr = archsim.DatasetStats(23588, 216)
    order = [i for i, _, _ in archsim.rank_designs(dhfr)]
    ok = (
        util_a == 0.75
        and util_b == 1.0
        and util_c == 70 / 104
        and order[0] == 6
        and order[-1] == 1
    )
    for n, c in ((5000, 63), (5000, 12), (20000, 252), (20000, 50), (50000, 625), (50000, 125)):
        ranking = [i for i, _, _ in archsim.rank_designs(archsim.DatasetStats(n, c))]
        ok = ok and ranking[-1] == 1
    return ok, f"utilizations ({util_a}, {util_b}, {util_c:.4f}), DHFR order {order}"


def run_all(fast: bool = False):
    """All checks with sizes scaled down when fast."""
    mc = 200_000 if fast else 1_000_000
    cases = 25 if fast else 100
    checks = [
        ("minimum-image", lambda: check_minimum_image()),
        ("half-shell-coverage", lambda: check_half_shell_coverage()),
        ("filter-pass-rate", lambda: check_filter_pass_rate(samples=mc)),
        ("planar-filter", lambda: check_planar_filter(samples=mc)),
        ("pair-oracle", lambda: check_pair_oracle(n=300 if fast else 500)),
        ("rl-oracle", lambda: check_rl_oracle(n=300 if fast else 500)),
        ("scheme-bitwise", lambda: check_scheme_bitwise(n=200 if fast else 400)),
        ("momentum", lambda: check_momentum()),
        ("interpolation", lambda: check_interpolation()),
        ("lr-identities", lambda: check_lr_identities()),
        ("lr-two-charge", lambda: check_lr_two_charge(k_grid=16 if fast else 32, rel=0.15 if fast else 0.05)),
        ("bonded-gradients", lambda: check_bonded_gradients(cases=cases)),
        ("arbiter", lambda: check_arbiter()),
        ("estimator", lambda: check_estimator()),
    ]
    for name, fn in checks:
        try:
            passed, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        yield name, passed, detail
