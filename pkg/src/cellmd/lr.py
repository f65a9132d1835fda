"""Long-range electrostatics on a periodic grid: third-order charge
spreading, forward FFT per axis, Green's-function multiply, inverse FFT,
and force gathering over the same 64-point neighborhoods.

The charge grid stores raw charge (its sum equals the total charge); the
conversion to charge density (1/cell volume) and the Coulomb prefactor are
applied once between the Poisson solve and the gather.

Forces interpolate the spectrally differentiated field, not the analytic
derivative of the interpolant.  The two variants differ at interpolation
order, but only the field-interpolating form cancels the sum of forces
exactly (the derivative kernel is odd, so the grid-level total telescopes
to zero); differentiating the weights instead leaves every particle a
spurious self-force and the total momentum drifts.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from ._kernels_py import _basis, _basis_deriv
from .constants import COULOMB
from .model import ParticleSet, SimulationBox


def basis_weights(offset):
    """Four spreading weights for fractional offsets in [0, 1); they sum to
    one for any offset, which is what conserves charge on the grid."""
    t = np.asarray(offset, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t >= 1.0):
        raise ValueError("fractional offset must lie in [0, 1)")
    return _basis(t)


def basis_derivatives(offset):
    """d/dt of the spreading weights (rows sum to zero)."""
    t = np.asarray(offset, dtype=np.float64)
    return _basis_deriv(t)


def spread_charges(pos, charge, k_grid: int, box: SimulationBox) -> np.ndarray:
    """Deposit charges onto a k^3 periodic grid; each particle touches its
    4x4x4 node neighborhood.  Accumulates in row order of the inputs."""
    grid = np.zeros((k_grid, k_grid, k_grid))
    kernels.spread_charge(
        np.ascontiguousarray(pos, dtype=np.float64),
        np.ascontiguousarray(charge, dtype=np.float64),
        box.lengths, grid,
    )
    return grid


def fft3_forward(grid: np.ndarray) -> np.ndarray:
    """Axis-by-axis discrete Fourier transform (x, then y, then z)."""
    out = np.asarray(grid, dtype=np.complex128)
    for axis in range(3):
        out = np.fft.fft(out, axis=axis)
    return out


def fft3_inverse(spectral: np.ndarray) -> np.ndarray:
    out = np.asarray(spectral, dtype=np.complex128)
    for axis in range(3):
        out = np.fft.ifft(out, axis=axis)
    return out


def _wavenumber_sq(shape, box: SimulationBox) -> np.ndarray:
    axes = [
        2.0 * np.pi * np.fft.fftfreq(n, d=box.lengths[i] / n)
        for i, n in enumerate(shape)
    ]
    kx, ky, kz = np.meshgrid(*axes, indexing="ij", sparse=True)
    return kx * kx + ky * ky + kz * kz


def apply_green(spectral: np.ndarray, box: SimulationBox) -> np.ndarray:
    """Multiply each mode by 4 pi / |k|^2; the zero mode is projected out
    (equivalent to assuming overall charge neutrality)."""
    k2 = _wavenumber_sq(spectral.shape, box)
    k2[0, 0, 0] = 1.0
    out = spectral * (4.0 * np.pi / k2)
    out[0, 0, 0] = 0.0
    return out


def solve_potential(charge_grid: np.ndarray, box: SimulationBox) -> np.ndarray:
    """Poisson solve of the grid as-is: laplacian(result) = -4 pi charge_grid
    (mean removed).  No density or Coulomb scaling here."""
    return fft3_inverse(apply_green(fft3_forward(charge_grid), box)).real


def field_grids(pot_grid: np.ndarray, box: SimulationBox) -> np.ndarray:
    """E = -grad(phi) by spectral differentiation, shape (3, K, K, K)."""
    spec = fft3_forward(pot_grid)
    axes = [
        2.0 * np.pi * np.fft.fftfreq(n, d=box.lengths[i] / n)
        for i, n in enumerate(pot_grid.shape)
    ]
    kx, ky, kz = np.meshgrid(*axes, indexing="ij", sparse=True)
    out = np.empty((3,) + pot_grid.shape)
    for i, k in enumerate((kx, ky, kz)):
        out[i] = fft3_inverse(-1j * k * spec).real
    return out


def gather_forces(pot_grid, pos, charge, box: SimulationBox):
    """Force q * E(r) and interpolated potential phi(r) at each position,
    both evaluated over the same 4x4x4 neighborhoods used for spreading."""
    n = len(pos)
    out_f = np.empty((n, 3))
    out_pot = np.empty(n)
    pot_grid = np.ascontiguousarray(pot_grid, dtype=np.float64)
    ex, ey, ez = field_grids(pot_grid, box)
    kernels.gather_forces(
        np.ascontiguousarray(pos, dtype=np.float64),
        np.ascontiguousarray(charge, dtype=np.float64),
        box.lengths,
        np.ascontiguousarray(ex), np.ascontiguousarray(ey),
        np.ascontiguousarray(ez), pot_grid,
        out_f, out_pot,
    )
    return out_f, out_pot


def lr_pass(
    particles: ParticleSet, k_grid: int, box: SimulationBox
) -> tuple[np.ndarray, float, np.ndarray, np.ndarray]:
    """Full long-range pass on a position snapshot: spread, transform,
    Green multiply, inverse transform, gather.

    Spreading runs in ascending gid order, making the grid (and everything
    downstream) independent of particle input order.  Returns row-aligned
    forces, the interaction energy, and the charge and potential grids.
    """
    order = np.argsort(particles.gid, kind="stable")
    pos = particles.pos[order]
    charge = particles.charge[order]
    charge_grid = spread_charges(pos, charge, k_grid, box)
    # physical potential: grid charge -> density is 1/cell volume
    cell_volume = float(np.prod(box.lengths)) / k_grid**3
    pot = solve_potential(charge_grid, box) * (COULOMB / cell_volume)
    f_sorted, phi = gather_forces(pot, pos, charge, box)
    forces = np.empty_like(f_sorted)
    forces[order] = f_sorted
    energy = 0.5 * float(charge @ phi)
    return forces, energy, charge_grid, pot


def dump_grid(grid: np.ndarray, stream) -> None:
    """Text dump, one line per node: i j k value."""
    k = grid.shape[0]
    for i in range(k):
        for j in range(k):
            for l in range(grid.shape[2]):
                stream.write(f"{i} {j} {l} {float(grid[i, j, l])!r}\n")
