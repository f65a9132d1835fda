import numpy as np
import pytest

from cellmd import selfcheck
from cellmd.model import ParticleSet, SimulationBox
from cellmd.neighbor import (
    HALF_SHELL_OFFSETS,
    NeighborError,
    build_cell_grid,
    filter_direct,
    filter_planar,
    generate_pairs,
    half_shell,
    minimum_image,
    planar_mask,
    quantize_fixed,
)
from conftest import random_particles


def test_half_shell_offsets_are_lexicographically_positive():
    assert len(HALF_SHELL_OFFSETS) == 13
    for off in HALF_SHELL_OFFSETS:
        assert tuple(off) > (0, 0, 0)


def test_half_shell_counts_and_home_first(dhfr_box):
    cells = half_shell((0, 0, 0), dhfr_box)
    assert cells.shape == (14, 3)
    assert list(cells[0]) == [0, 0, 0]
    # lexicographically positive offsets never step backward in x, but the
    # negative y/z arms wrap to coordinate 5 in a 6^3 grid
    assert not any(c[0] == 5 for c in cells)
    assert any(5 in c[1:] for c in cells[1:])
    cells51 = half_shell((5, 1, 1), dhfr_box)
    assert any(c[0] == 0 for c in cells51)  # positive-x neighbors wrap to 0


def test_half_shell_rejects_bad_cell(dhfr_box):
    with pytest.raises(NeighborError):
        half_shell((6, 0, 0), dhfr_box)


def test_half_shell_covers_each_adjacent_pair_once():
    ok, detail = selfcheck.check_half_shell_coverage(nc=4)
    assert ok, detail


def test_minimum_image_basics(dhfr_box):
    assert minimum_image([61.0, 0.0, 0.0], dhfr_box)[0] == pytest.approx(-1.23)
    assert np.array_equal(minimum_image([0.0, 0.0, 0.0], dhfr_box), np.zeros(3))


def test_minimum_image_magnitude_never_grows():
    ok, detail = selfcheck.check_minimum_image(samples=1000)
    assert ok, detail


def test_filter_direct_boundary_exclusive():
    assert filter_direct([9.0, 0.0, 0.0], 9.0) is None
    assert filter_direct([1.0, 2.0, 2.0], 9.0) == pytest.approx(9.0)


def test_filter_planar_examples():
    rc = 9.0
    assert not filter_planar([rc, 0.0, 0.0], rc)
    assert filter_planar([0.5 * rc, 0.5 * rc, 0.5 * rc], rc)


def test_quantize_fixed_truncates_and_saturates():
    assert quantize_fixed(1.0) == 1.0
    v = 1.2345678901
    q = quantize_fixed(v)
    assert q <= v and v - q < 2.0**-20
    assert quantize_fixed(-v) == q  # magnitudes only
    assert quantize_fixed(1000.0) < 128.0


def test_planar_never_rejects_in_range(dhfr_box):
    rng = np.random.default_rng(9)
    rc = 9.0
    disp = rng.uniform(-1, 1, (1_000_000, 3))
    disp *= (rc * rng.random(1_000_000) ** (1 / 3) / np.linalg.norm(disp, axis=1))[:, None]
    assert planar_mask(disp, rc).all()


def test_build_cell_grid_assigns_by_floor_rule(dhfr_box):
    ps = ParticleSet(
        gid=[0, 1], pos=[[0.0, 0.0, 0.0], [11.0, 0.0, 0.0]], vel=np.zeros((2, 3)),
        charge=np.zeros(2), mass=np.ones(2), type_idx=np.zeros(2, dtype=int),
    )
    grid = build_cell_grid(ps, dhfr_box)
    assert 0 in grid.cell_rows(0)
    cell_x1 = dhfr_box.flat_index(np.array([1, 0, 0]))
    assert 1 in grid.cell_rows(cell_x1)


def test_build_cell_grid_rejects_unwrapped(dhfr_box):
    ps = ParticleSet(
        gid=[0], pos=[[-1.0, 0.0, 0.0]], vel=np.zeros((1, 3)),
        charge=np.zeros(1), mass=np.ones(1), type_idx=np.zeros(1, dtype=int),
    )
    with pytest.raises(NeighborError):
        build_cell_grid(ps, dhfr_box)


def test_grid_occupancy_dataset1_analog():
    box = SimulationBox(lengths=[28.0, 28.0, 63.0], cutoff=9.0, ncells=[3, 3, 7])
    assert box.total_cells == 63
    ps = random_particles(5000, box, seed=2)
    grid = build_cell_grid(ps, box)
    occ = grid.occupancy()
    assert occ.sum() == 5000
    assert 79 <= occ.mean() <= 80


def test_generate_pairs_single_pair(small_box):
    ps = ParticleSet(
        gid=[10, 20], pos=[[1.0, 1.0, 1.0], [3.0, 1.0, 1.0]], vel=np.zeros((2, 3)),
        charge=np.zeros(2), mass=np.ones(2), type_idx=np.zeros(2, dtype=int),
    )
    grid = build_cell_grid(ps, small_box)
    for scheme in (1, 2, 3):
        stream = generate_pairs(grid, scheme)
        assert len(stream) == 1
        assert stream.ref_gid[0] != stream.nbr_gid[0]
        assert stream.r2[0] == pytest.approx(4.0)


def test_generate_pairs_scheme_errors(small_box):
    ps = random_particles(10, small_box, seed=3)
    grid = build_cell_grid(ps, small_box)
    with pytest.raises(NeighborError):
        generate_pairs(grid, 4)
    with pytest.raises(NeighborError):
        generate_pairs(grid, 1, filter="banana")


def test_generate_pairs_matches_oracle_and_schemes():
    ok, detail = selfcheck.check_pair_oracle(n=500)
    assert ok, detail


def test_scheme2_interleaves_differently(dhfr_box):
    ps = random_particles(300, dhfr_box, seed=4)
    grid = build_cell_grid(ps, dhfr_box)
    s1 = generate_pairs(grid, 1)
    s2 = generate_pairs(grid, 2)
    s3 = generate_pairs(grid, 3)
    keys1 = list(zip(s1.ref_gid.tolist(), s1.nbr_gid.tolist()))
    keys2 = list(zip(s2.ref_gid.tolist(), s2.nbr_gid.tolist()))
    keys3 = list(zip(s3.ref_gid.tolist(), s3.nbr_gid.tolist()))
    assert keys1 != keys2  # different traversal order
    assert keys1 == keys3  # per-block traversal merges back to scheme 1 order
    assert sorted(keys1) == sorted(keys2)


def test_no_self_pairs_and_unique(dhfr_box):
    ps = random_particles(200, dhfr_box, seed=5)
    grid = build_cell_grid(ps, dhfr_box)
    stream = generate_pairs(grid, 1)
    assert (stream.ref_gid != stream.nbr_gid).all()
    keys = stream.key_multiset()
    assert len(keys) == len(set(keys))


def test_filter_pass_rate_converges():
    ok, detail = selfcheck.check_filter_pass_rate(samples=400_000, tol=0.005)
    assert ok, detail


def test_planar_false_positive_rate():
    ok, detail = selfcheck.check_planar_filter(samples=400_000)
    assert ok, detail
