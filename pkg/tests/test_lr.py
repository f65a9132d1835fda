import numpy as np
import pytest

from cellmd import selfcheck
from cellmd.lr import (
    apply_green,
    basis_derivatives,
    basis_weights,
    fft3_forward,
    fft3_inverse,
    gather_forces,
    lr_pass,
    solve_potential,
    spread_charges,
)
from cellmd.model import ParticleSet, SimulationBox
from conftest import random_particles


def particles_at(positions, charges, masses=None):
    n = len(charges)
    return ParticleSet(
        gid=np.arange(n), pos=np.asarray(positions, dtype=float),
        vel=np.zeros((n, 3)), charge=np.asarray(charges, dtype=float),
        mass=np.ones(n) if masses is None else masses,
        type_idx=np.zeros(n, dtype=int),
    )


def test_basis_weights_on_node():
    assert np.allclose(basis_weights(0.0), [0.0, 1.0, 0.0, 0.0])


def test_basis_weights_shift_consistency():
    w = basis_weights(1.0 - 1e-12)
    assert np.allclose(w, [0.0, 0.0, 1.0, 0.0], atol=1e-11)


def test_basis_weights_partition_of_unity():
    rng = np.random.default_rng(0)
    w = basis_weights(rng.random(10_000))
    assert np.abs(w.sum(axis=1) - 1.0).max() < 1e-14
    # derivative rows sum to zero
    d = basis_derivatives(rng.random(100))
    assert np.abs(d.sum(axis=1)).max() < 1e-14


def test_basis_weights_domain():
    with pytest.raises(ValueError):
        basis_weights(1.0)


def test_spread_on_node_is_delta(dhfr_box):
    k = 16
    h = dhfr_box.lengths[0] / k
    grid = spread_charges(np.array([[3 * h, 5 * h, 7 * h]]), np.array([1.0]), k, dhfr_box)
    assert grid[3, 5, 7] == pytest.approx(1.0)
    grid[3, 5, 7] = 0.0
    assert np.abs(grid).max() == 0.0


def test_spread_conserves_charge(dhfr_box):
    rng = np.random.default_rng(1)
    pos = rng.random((1, 3)) * dhfr_box.lengths
    grid = spread_charges(pos, np.array([1.0]), 16, dhfr_box)
    assert grid.sum() == pytest.approx(1.0, abs=1e-14)
    ps = random_particles(100, dhfr_box, seed=2, charged=True)
    ps.charge += 0.1  # make the total distinctly nonzero
    grid = spread_charges(ps.pos, ps.charge, 32, dhfr_box)
    assert grid.sum() == pytest.approx(ps.charge.sum(), rel=1e-12)


def test_fft_round_trip_and_impulse():
    rng = np.random.default_rng(3)
    zero = np.zeros((8, 8, 8))
    assert np.abs(fft3_forward(zero)).max() == 0.0
    g = rng.standard_normal((16, 16, 16))
    back = fft3_inverse(fft3_forward(g)).real
    assert np.abs(back - g).max() / np.abs(g).max() < 1e-6
    impulse = np.zeros((8, 8, 8))
    impulse[0, 0, 0] = 1.0
    spec = fft3_forward(impulse)
    assert np.allclose(np.abs(spec), 1.0)


def test_apply_green_zero_mode_and_single_mode(dhfr_box):
    k = 8
    spec = np.zeros((k, k, k), dtype=complex)
    spec[0, 0, 0] = 5.0
    out = apply_green(spec, dhfr_box)
    assert out[0, 0, 0] == 0.0
    spec = np.zeros((k, k, k), dtype=complex)
    spec[1, 0, 0] = 1.0
    out = apply_green(spec, dhfr_box)
    k1 = 2 * np.pi / dhfr_box.lengths[0]
    assert out[1, 0, 0] == pytest.approx(4 * np.pi / k1**2)


def test_poisson_residual(dhfr_box):
    rng = np.random.default_rng(4)
    rho = rng.standard_normal((16, 16, 16))
    pot = solve_potential(rho, dhfr_box)
    axes = [2 * np.pi * np.fft.fftfreq(16, d=dhfr_box.lengths[i] / 16) for i in range(3)]
    kx, ky, kz = np.meshgrid(*axes, indexing="ij", sparse=True)
    lap = fft3_inverse(-(kx**2 + ky**2 + kz**2) * fft3_forward(pot)).real
    target = -4 * np.pi * (rho - rho.mean())
    assert np.abs(lap - target).max() / np.abs(target).max() < 1e-6


def test_gather_uniform_potential_is_zero(dhfr_box):
    rng = np.random.default_rng(5)
    pos = rng.random((20, 3)) * dhfr_box.lengths
    forces, pot = gather_forces(np.full((8, 8, 8), 2.5), pos, np.ones(20), dhfr_box)
    assert np.abs(forces).max() < 1e-12
    assert np.allclose(pot, 2.5)


def test_lr_pass_empty_set(dhfr_box):
    ps = particles_at(np.zeros((0, 3)), np.zeros(0))
    forces, energy, charge_grid, _ = lr_pass(ps, 16, dhfr_box)
    assert forces.shape == (0, 3)
    assert energy == 0.0
    assert np.abs(charge_grid).max() == 0.0


def test_lr_pass_opposite_charges_symmetric(dhfr_box):
    k = 32
    h = dhfr_box.lengths[0] / k
    ps = particles_at([[0.0, 0.0, 0.0], [8 * h, 8 * h, 0.0]], [1.0, -1.0])
    forces, energy, _, _ = lr_pass(ps, k, dhfr_box)
    assert np.allclose(forces[0], -forces[1], atol=1e-12)
    # force points from + toward - along the diagonal
    assert forces[0][0] > 0 and forces[0][1] > 0
    assert forces[0][2] == pytest.approx(0.0, abs=1e-12)


def test_lr_pass_neutral_sum(dhfr_box):
    ps = random_particles(60, dhfr_box, seed=6, charged=True)
    forces, _, _, _ = lr_pass(ps, 32, dhfr_box)
    assert np.abs(forces.sum(axis=0)).max() <= 1e-8 * np.abs(forces).max()


def test_lr_pass_input_order_invariance(dhfr_box):
    ps = random_particles(50, dhfr_box, seed=7, charged=True)
    perm = np.random.default_rng(8).permutation(50)
    shuffled = ParticleSet(
        gid=ps.gid[perm], pos=ps.pos[perm], vel=ps.vel[perm],
        charge=ps.charge[perm], mass=ps.mass[perm], type_idx=ps.type_idx[perm],
    )
    f1, e1, g1, _ = lr_pass(ps, 16, dhfr_box)
    f2, e2, g2, _ = lr_pass(shuffled, 16, dhfr_box)
    assert np.array_equal(g1, g2)  # spreading runs in gid order either way
    assert e1 == e2
    assert np.array_equal(f1[perm], f2)


def test_lr_two_charge_oracle():
    ok, detail = selfcheck.check_lr_two_charge(k_grid=32, rel=0.05)
    assert ok, detail


def test_lr_grid_refinement_improves():
    errs = []
    for k in (16, 32):
        lengths = np.array([62.23, 62.23, 62.23])
        box = SimulationBox.from_cutoff(lengths, 9.0)
        h = lengths[0] / k
        pos = np.array([[0.0, 0.0, 0.0], [(k // 4) * h, (k // 4) * h, 0.0]])
        q = np.array([1.0, -1.0])
        ps = particles_at(pos, q)
        forces, _, _, _ = lr_pass(ps, k, box)
        oracle = selfcheck.ewald_reference_forces(pos, q, lengths)
        errs.append(float(np.linalg.norm(forces[0] - oracle[0]) / np.linalg.norm(oracle[0])))
    assert errs[1] < errs[0]
