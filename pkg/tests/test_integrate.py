import numpy as np
import pytest

from cellmd.cli import RunConfig, gen_dataset
from cellmd.integrate import (
    Scoreboard,
    ScoreboardError,
    TimestepError,
    init_state,
    migrate,
    motion_update,
    run,
    step,
    sum_forces,
)
from cellmd.model import (
    BondedTopology,
    ForceStore,
    ParticleSet,
    SimulationBox,
    derive_lj_pairs,
)
from cellmd.neighbor import build_cell_grid
from conftest import random_particles


def cube_box(n=3, edge=10.0):
    return SimulationBox(lengths=[n * edge] * 3, cutoff=9.0, ncells=[n] * 3)


# --------------------------------------------------------------------------
# scoreboard


def test_scoreboard_all_ready_on_3cubed():
    sb = Scoreboard(cube_box(3))
    for c in range(27):
        sb.mark_evaluated(c)
    assert sorted(sb.ready_cells()) == list(range(27))


def test_scoreboard_26_of_27_not_ready():
    box = cube_box(4)
    sb = Scoreboard(box)
    target = 0
    contributors = sb.neighborhood[target]
    for c in contributors[:-1]:
        sb.mark_evaluated(int(c))
    assert not sb.ready(target)
    sb.mark_evaluated(int(contributors[-1]))
    assert sb.ready(target)


def test_scoreboard_order_independent():
    box = cube_box(4)
    rng = np.random.default_rng(0)
    marks = rng.permutation(64)[:40]
    ready_sets = []
    for _ in range(5):
        sb = Scoreboard(box)
        for c in rng.permutation(marks):
            sb.mark_evaluated(int(c))
        ready_sets.append(sorted(sb.ready_cells().tolist()))
    assert all(r == ready_sets[0] for r in ready_sets)


def test_scoreboard_double_mark_raises():
    sb = Scoreboard(cube_box(3))
    sb.mark_evaluated(5)
    with pytest.raises(ScoreboardError):
        sb.mark_evaluated(5)


# --------------------------------------------------------------------------
# force summation and motion update


def test_sum_forces_examples():
    fs = ForceStore.zeros(2)
    assert np.array_equal(sum_forces(fs, [0])[0], np.zeros(3))
    fs.rl[0] = [1, 0, 0]
    fs.lr[0] = [0, 1, 0]
    fs.bonded[0] = [0, 0, 1]
    assert np.array_equal(sum_forces(fs, [0])[0], [1.0, 1.0, 1.0])
    rng = np.random.default_rng(1)
    fs.rl[:] = rng.normal(size=(2, 3))
    fs.lr[:] = rng.normal(size=(2, 3))
    fs.bonded[:] = rng.normal(size=(2, 3))
    assert np.array_equal(sum_forces(fs, [0, 1]), fs.rl + fs.lr + fs.bonded)


def test_motion_update_ballistic():
    box = cube_box(3)
    pos, vel, cell = motion_update(
        [[5.0, 5.0, 5.0]], [[1.0, 0.0, 0.0]], [[0.0, 0.0, 0.0]], [1.0], 2.0, box
    )
    assert pos[0, 0] == pytest.approx(7.0)
    assert vel[0, 0] == 1.0


def test_motion_update_fixed_point():
    box = cube_box(3)
    pos, vel, cell = motion_update(
        [[5.0, 5.0, 5.0]], [[0.0, 0.0, 0.0]], [[0.0, 0.0, 0.0]], [1.0], 2.0, box
    )
    assert np.array_equal(pos[0], [5.0, 5.0, 5.0])
    assert np.array_equal(vel[0], np.zeros(3))


def test_motion_update_cell_boundary_compare():
    box = SimulationBox.from_cutoff([62.23, 62.23, 62.23], 9.0)  # edge 10.3716
    # stationary particle placed past the first boundary
    pos, vel, cell = motion_update(
        [[10.4, 0.0, 0.0]], [[0.0, 0.0, 0.0]], np.zeros((1, 3)), [1.0], 2.0, box
    )
    assert box.unflatten(int(cell[0]))[0] == 1


def test_motion_update_rejects_large_step():
    box = cube_box(4)
    with pytest.raises(TimestepError):
        motion_update(
            [[5.0, 5.0, 5.0]], [[12.0, 0.0, 0.0]], np.zeros((1, 3)), [1.0], 2.0, box
        )


# --------------------------------------------------------------------------
# migration


def _grid_with(particles, box):
    return build_cell_grid(particles, box)


def test_migrate_stable_when_no_crossing():
    box = cube_box(3)
    ps = random_particles(50, box, seed=2)
    grid = _grid_with(ps, box)
    cells = box.flat_index(box.cell_of(ps.pos))
    before = {c: sorted(grid.gids[grid.cell_rows(c)].tolist()) for c in range(27)}
    migrate(grid, cells, ps.pos.copy())
    after = {c: sorted(grid.gids[grid.cell_rows(c)].tolist()) for c in range(27)}
    assert before == after
    # slots are gid-ascending after migration
    for c in range(27):
        rows = grid.cell_rows(c)
        gids = grid.gids[rows]
        assert np.array_equal(gids, np.sort(gids))


def test_migrate_single_crossing():
    box = cube_box(3)
    ps = ParticleSet(
        gid=[0, 1], pos=[[9.5, 5.0, 5.0], [5.0, 5.0, 5.0]], vel=np.zeros((2, 3)),
        charge=np.zeros(2), mass=np.ones(2), type_idx=np.zeros(2, dtype=int),
    )
    grid = _grid_with(ps, box)
    new_pos = np.array([[10.5, 5.0, 5.0], [5.0, 5.0, 5.0]])
    cells = box.flat_index(box.cell_of(new_pos))
    migrate(grid, cells, new_pos)
    cell_x1 = int(box.flat_index(np.array([1, 0, 0])))
    assert 0 in grid.gids[grid.cell_rows(cell_x1)]
    assert grid.n_particles == 2


def test_migrate_conserves_gids_bulk():
    box = cube_box(4)
    ps = random_particles(10_000, box, seed=3)
    grid = _grid_with(ps, box)
    rng = np.random.default_rng(4)
    new_pos = box.wrap(ps.pos + rng.uniform(-2, 2, ps.pos.shape))
    cells = box.flat_index(box.cell_of(new_pos))
    before = sorted(grid.gids.tolist())
    migrate(grid, cells, new_pos)
    collected = np.concatenate([grid.gids[grid.cell_rows(c)] for c in range(box.total_cells)])
    assert sorted(collected.tolist()) == before


def test_migrate_count_mismatch_raises():
    box = cube_box(3)
    ps = random_particles(10, box, seed=5)
    grid = _grid_with(ps, box)
    from cellmd.neighbor import NeighborError

    with pytest.raises(NeighborError):
        grid.stage_next(np.zeros(5, dtype=np.int64), ps.pos[:5])


# --------------------------------------------------------------------------
# full steps


def _ideal_gas_state(cfg):
    box = cfg.simulation_box()
    # 8 particles on a sparse lattice, all farther apart than the cutoff
    coords = np.array(
        [[i * 15.0 + 2.0, j * 15.0 + 2.0, k * 15.0 + 2.0]
         for i in range(2) for j in range(2) for k in range(2)]
    )
    ps = ParticleSet(
        gid=np.arange(8), pos=coords, vel=np.zeros((8, 3)),
        charge=np.zeros(8), mass=np.full(8, 20.0), type_idx=np.zeros(8, dtype=int),
    )
    lj = derive_lj_pairs(cfg.lj_epsilon, cfg.lj_sigma)
    return init_state(ps, box, lj, None, cfg)


def test_step_force_free_gas_is_stationary():
    cfg = RunConfig(box=(30.0, 30.0, 30.0), steps=3, lr_every=0, rl_mode="direct",
                    filter="direct", lj_epsilon=(0.2,), lj_sigma=(2.0,), masses=(20.0,))
    state = _ideal_gas_state(cfg)
    before = state.particles.pos.copy()
    for _ in range(3):
        row = step(state, cfg)
    assert np.array_equal(state.particles.pos, before)
    assert state.iteration == 3
    assert row.kinetic == 0.0


def test_step_counts_ready_checks():
    cfg = RunConfig(box=(30.0, 30.0, 30.0), steps=2, lr_every=0, rl_mode="direct",
                    filter="direct", lj_epsilon=(0.2,), lj_sigma=(2.0,), masses=(20.0,))
    state = _ideal_gas_state(cfg)
    for _ in range(2):
        step(state, cfg)
    assert state.ready_checks == 2 * cfg.simulation_box().total_cells


def test_two_particle_oscillator_energy():
    cfg = RunConfig(box=(30.0, 30.0, 30.0), steps=10_000, lr_every=0, rl_mode="direct",
                    filter="direct", timestep=2.0,
                    lj_epsilon=(1e-6,), lj_sigma=(1.0,), masses=(10.0,))
    box = cfg.simulation_box()
    ps = ParticleSet(
        gid=[0, 1], pos=[[10.0, 15.0, 15.0], [16.0, 15.0, 15.0]], vel=np.zeros((2, 3)),
        charge=np.zeros(2), mass=np.full(2, 10.0), type_idx=np.zeros(2, dtype=int),
    )
    topo = BondedTopology(
        bond_gids=[[0, 1]], bond_params=[[0.05, 5.0]],  # soft spring, stretched by 1 A
        angle_gids=np.zeros((0, 3)), angle_params=np.zeros((0, 4)),
        dihedral_gids=np.zeros((0, 4)), dihedral_params=np.zeros((0, 3)),
    )
    lj = derive_lj_pairs(cfg.lj_epsilon, cfg.lj_sigma)
    state = init_state(ps, box, lj, topo, cfg)
    xs = []
    energies = []
    for _ in range(cfg.steps):
        row = step(state, cfg)
        xs.append(state.particles.pos[0, 0])
        energies.append(row.total)
    xs = np.array(xs)
    energies = np.array(energies)
    # position oscillates around the 5 A rest separation
    assert xs.max() > 10.4 and xs.min() < 10.05
    sign_changes = np.sum(np.diff(np.sign(xs - xs.mean())) != 0)
    assert sign_changes >= 8
    assert np.abs(energies - energies[0]).max() / abs(energies[0]) < 0.01


def test_step_is_deterministic_bitwise():
    cfg = RunConfig(box=(28.0, 28.0, 63.0), steps=25, lr_every=2, grid_k=16,
                    rl_mode="interp", filter="planar",
                    lj_epsilon=(0.2,), lj_sigma=(2.0,), masses=(20.0,))
    box = cfg.simulation_box()

    def trajectory():
        ps = gen_dataset(800, box.lengths, seed=9, style="lj-fluid", sigma=2.0)
        ps.mass[:] = 20.0
        state = init_state(ps, box, derive_lj_pairs(cfg.lj_epsilon, cfg.lj_sigma), None, cfg)
        for _ in range(cfg.steps):
            step(state, cfg)
        return state.particles.pos.copy(), state.particles.vel.copy()

    p1, v1 = trajectory()
    p2, v2 = trajectory()
    assert np.array_equal(p1, p2)
    assert np.array_equal(v1, v2)


def test_dhfr_scale_run_records_wall_time():
    # reference workload shape: 23,588 particles, 62.23 A box, 9 A cutoff,
    # 2 fs steps, long-range every second iteration, table lookup + planar
    cfg = RunConfig(box=(62.23, 62.23, 62.23), cutoff=9.0, steps=3, lr_every=2,
                    grid_k=32, rl_mode="interp", filter="planar", timestep=2.0,
                    lj_epsilon=(0.2,), lj_sigma=(2.0,), masses=(20.0,))
    box = cfg.simulation_box()
    ps = gen_dataset(23_588, box.lengths, seed=7, style="lj-fluid", sigma=2.0)
    ps.mass[:] = 20.0
    state = init_state(ps, box, derive_lj_pairs(cfg.lj_epsilon, cfg.lj_sigma), None, cfg)
    result = run(state, cfg)
    assert len(result["wall_times"]) == 3
    assert all(t > 0 for t in result["wall_times"])
    assert state.iteration == 3


def test_run_writes_energy_and_frames(tmp_path):
    import io

    cfg = RunConfig(box=(30.0, 30.0, 30.0), steps=4, lr_every=2, grid_k=8,
                    dump_every=2, rl_mode="direct", filter="direct",
                    lj_epsilon=(0.2,), lj_sigma=(2.0,), masses=(20.0,))
    state = _ideal_gas_state(cfg)
    ebuf, tbuf = io.StringIO(), io.StringIO()
    result = run(state, cfg, energy_stream=ebuf, traj_stream=tbuf)
    lines = ebuf.getvalue().splitlines()
    assert lines[0] == "step,kinetic,rl,lr,bonded,total"
    assert len(lines) == 1 + cfg.steps
    first = lines[1].split(",")
    assert int(first[0]) == 1 and len(first) == 6
    frames = [l for l in tbuf.getvalue().splitlines() if l.startswith("frame")]
    assert frames == ["frame 2", "frame 4"]
    assert len(result["wall_times"]) == cfg.steps
