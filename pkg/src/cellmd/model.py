"""Domain types shared by every stage: box, particles, pair parameters,
bonded topology, and per-particle force stores."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ModelError(ValueError):
    """Invalid domain data (bad invariant, malformed input)."""


@dataclass(frozen=True)
class SimulationBox:
    """Periodic orthorhombic box partitioned into cutoff-sized cells.

    Cell edges are lengths/ncells per axis and must be at least the cutoff
    so a 27-cell neighborhood contains every in-range pair.  At least three
    cells per axis keeps the periodic neighborhood free of self-aliasing.
    """

    lengths: np.ndarray  # (3,) edge lengths, angstrom
    cutoff: float
    ncells: np.ndarray  # (3,) cells per axis

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=np.float64).reshape(3)
        ncells = np.asarray(self.ncells, dtype=np.int64).reshape(3)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "ncells", ncells)
        if not np.all(np.isfinite(lengths)) or np.any(lengths <= 0.0):
            raise ModelError(f"box lengths must be positive, got {lengths}")
        if not (self.cutoff > 0.0):
            raise ModelError(f"cutoff must be positive, got {self.cutoff}")
        if np.any(ncells < 3):
            raise ModelError(f"need at least 3 cells per axis, got {ncells}")
        if np.any(lengths / ncells < self.cutoff * (1.0 - 1e-12)):
            raise ModelError(
                f"cell edge {lengths / ncells} smaller than cutoff {self.cutoff}"
            )

    @classmethod
    def from_cutoff(cls, lengths, cutoff: float) -> "SimulationBox":
        """Box with the largest cell count whose edge still covers the cutoff."""
        lengths = np.asarray(lengths, dtype=np.float64).reshape(3)
        ncells = np.floor(lengths / cutoff).astype(np.int64)
        return cls(lengths=lengths, cutoff=cutoff, ncells=ncells)

    @property
    def cell_edge(self) -> np.ndarray:
        return self.lengths / self.ncells

    @property
    def total_cells(self) -> int:
        return int(np.prod(self.ncells))

    def wrap(self, pos: np.ndarray) -> np.ndarray:
        """Map positions into [0, L) per axis."""
        wrapped = np.mod(pos, self.lengths)
        # x % L can round up to L for tiny negative x
        return np.where(wrapped >= self.lengths, 0.0, wrapped)

    def cell_of(self, pos: np.ndarray) -> np.ndarray:
        """Cell index triple(s) by the floor rule, for wrapped positions."""
        idx = np.floor(np.asarray(pos) / self.cell_edge).astype(np.int64)
        # guard against pos/edge rounding up to ncells at the box face
        return np.minimum(idx, self.ncells - 1)

    def flat_index(self, cell: np.ndarray) -> np.ndarray:
        """Linear cell id, x-major: ((cx * Ny) + cy) * Nz + cz."""
        cell = np.asarray(cell, dtype=np.int64)
        nx, ny, nz = (int(v) for v in self.ncells)
        return (cell[..., 0] * ny + cell[..., 1]) * nz + cell[..., 2]

    def unflatten(self, flat: int) -> tuple[int, int, int]:
        nx, ny, nz = (int(v) for v in self.ncells)
        cx, rem = divmod(int(flat), ny * nz)
        cy, cz = divmod(rem, nz)
        return cx, cy, cz


@dataclass
class ParticleSet:
    """Per-particle state keyed by an immutable global id (gid).

    Rows keep the construction order; ``gid_row`` maps gid to row.  The gid
    never changes over a simulation, so it is the stable address for bonded
    terms and force accumulation.
    """

    gid: np.ndarray  # (N,) int64, unique, non-negative
    pos: np.ndarray  # (N, 3) angstrom
    vel: np.ndarray  # (N, 3) angstrom/fs
    charge: np.ndarray  # (N,) elementary charges
    mass: np.ndarray  # (N,) amu
    type_idx: np.ndarray  # (N,) int64 LJ type
    gid_row: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.gid = np.asarray(self.gid, dtype=np.int64)
        self.pos = np.asarray(self.pos, dtype=np.float64).reshape(len(self.gid), 3)
        self.vel = np.asarray(self.vel, dtype=np.float64).reshape(len(self.gid), 3)
        self.charge = np.asarray(self.charge, dtype=np.float64)
        self.mass = np.asarray(self.mass, dtype=np.float64)
        self.type_idx = np.asarray(self.type_idx, dtype=np.int64)
        if np.any(self.gid < 0):
            raise ModelError("gids must be non-negative")
        if len(np.unique(self.gid)) != len(self.gid):
            raise ModelError("duplicate gid")
        if np.any(self.mass <= 0.0):
            raise ModelError("masses must be positive")
        if not np.all(np.isfinite(self.pos)):
            raise ModelError("non-finite position")
        self.gid_row = {int(g): i for i, g in enumerate(self.gid)}

    @property
    def n(self) -> int:
        return len(self.gid)

    def rows_for(self, gids) -> np.ndarray:
        try:
            return np.array([self.gid_row[int(g)] for g in np.atleast_1d(gids)])
        except KeyError as exc:
            raise ModelError(f"unknown gid {exc.args[0]}") from None


@dataclass(frozen=True)
class LJParamTable:
    """Pair coefficients A = 48 eps sigma^12 and B = -24 eps sigma^6 for all
    type pairs, from per-type parameters and a mixing rule."""

    eps: np.ndarray  # (T, T)
    sigma: np.ndarray  # (T, T)
    a: np.ndarray  # (T, T)
    b: np.ndarray  # (T, T)

    @property
    def ntypes(self) -> int:
        return self.a.shape[0]


def derive_lj_pairs(eps, sigma, mixing: str = "lorentz-berthelot") -> LJParamTable:
    """Build the symmetric pair table from per-type epsilon/sigma.

    ``lorentz-berthelot`` mixes sigma arithmetically and epsilon
    geometrically; ``geometric`` mixes both geometrically.
    """
    eps = np.asarray(eps, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if eps.shape != sigma.shape or eps.ndim != 1:
        raise ModelError("eps and sigma must be 1-d arrays of equal length")
    if np.any(eps <= 0.0) or np.any(sigma <= 0.0):
        raise ModelError("eps and sigma must be positive")
    eps_ab = np.sqrt(np.outer(eps, eps))
    if mixing == "lorentz-berthelot":
        sig_ab = 0.5 * (sigma[:, None] + sigma[None, :])
    elif mixing == "geometric":
        sig_ab = np.sqrt(np.outer(sigma, sigma))
    else:
        raise ModelError(f"unknown mixing rule {mixing!r}")
    sig6 = sig_ab**6
    a = 48.0 * eps_ab * sig6 * sig6
    b = -24.0 * eps_ab * sig6
    return LJParamTable(eps=eps_ab, sigma=sig_ab, a=a, b=b)


@dataclass
class ForceStore:
    """Three per-particle force accumulators (range-limited, long-range,
    bonded), row-aligned with a ParticleSet."""

    rl: np.ndarray
    lr: np.ndarray
    bonded: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "ForceStore":
        return cls(
            rl=np.zeros((n, 3)), lr=np.zeros((n, 3)), bonded=np.zeros((n, 3))
        )

    def clear(self) -> None:
        self.rl[:] = 0.0
        self.lr[:] = 0.0
        self.bonded[:] = 0.0

    def total(self) -> np.ndarray:
        return self.rl + self.lr + self.bonded


@dataclass
class BondedTopology:
    """Fixed bonded terms referencing particles by gid.

    bond params: (k, r0); angle params: (k_theta, theta0, k_ub, r_ub) with
    theta0 in radians; dihedral params: (k, n, phi) with integer
    periodicity n >= 0 and phi in radians.
    """

    bond_gids: np.ndarray  # (nb, 2) int64
    bond_params: np.ndarray  # (nb, 2)
    angle_gids: np.ndarray  # (na, 3) int64
    angle_params: np.ndarray  # (na, 4)
    dihedral_gids: np.ndarray  # (nd, 4) int64
    dihedral_params: np.ndarray  # (nd, 3)

    def __post_init__(self):
        self.bond_gids = np.asarray(self.bond_gids, dtype=np.int64).reshape(-1, 2)
        self.bond_params = np.asarray(self.bond_params, dtype=np.float64).reshape(-1, 2)
        self.angle_gids = np.asarray(self.angle_gids, dtype=np.int64).reshape(-1, 3)
        self.angle_params = np.asarray(self.angle_params, dtype=np.float64).reshape(-1, 4)
        self.dihedral_gids = np.asarray(self.dihedral_gids, dtype=np.int64).reshape(-1, 4)
        self.dihedral_params = np.asarray(self.dihedral_params, dtype=np.float64).reshape(-1, 3)
        for name, gids in (
            ("bond", self.bond_gids),
            ("angle", self.angle_gids),
            ("dihedral", self.dihedral_gids),
        ):
            for row in gids:
                if len(set(int(g) for g in row)) != len(row):
                    raise ModelError(f"{name} term repeats a gid: {row.tolist()}")
            seen = set(map(tuple, gids.tolist()))
            if len(seen) != len(gids):
                raise ModelError(f"duplicate {name} entries")
        if len(self.dihedral_params):
            n = self.dihedral_params[:, 1]
            if np.any(n < 0) or np.any(n != np.round(n)):
                raise ModelError("dihedral periodicity must be a non-negative integer")

    @classmethod
    def empty(cls) -> "BondedTopology":
        return cls(
            bond_gids=np.zeros((0, 2), dtype=np.int64),
            bond_params=np.zeros((0, 2)),
            angle_gids=np.zeros((0, 3), dtype=np.int64),
            angle_params=np.zeros((0, 4)),
            dihedral_gids=np.zeros((0, 4), dtype=np.int64),
            dihedral_params=np.zeros((0, 3)),
        )

    def validate_against(self, particles: ParticleSet) -> None:
        known = set(particles.gid_row)
        for name, gids in (
            ("bond", self.bond_gids),
            ("angle", self.angle_gids),
            ("dihedral", self.dihedral_gids),
        ):
            missing = set(gids.ravel().tolist()) - known
            if missing:
                raise ModelError(f"{name} references unknown gid(s) {sorted(missing)}")


def load_particles(stream, masses_by_type=(1.0,), box: SimulationBox | None = None) -> ParticleSet:
    """Parse a particles file: ``natoms N`` then N lines of
    ``gid x y z vx vy vz q type``.

    Masses come from the per-type table; positions are wrapped into the box
    when one is given.
    """
    masses_by_type = np.asarray(masses_by_type, dtype=np.float64)
    header = stream.readline()
    parts = header.split()
    if len(parts) != 2 or parts[0] != "natoms":
        raise ModelError(f"bad header {header.strip()!r}, expected 'natoms N'")
    try:
        n = int(parts[1])
    except ValueError:
        raise ModelError(f"bad particle count {parts[1]!r}") from None
    gid = np.empty(n, dtype=np.int64)
    pos = np.empty((n, 3))
    vel = np.empty((n, 3))
    charge = np.empty(n)
    type_idx = np.empty(n, dtype=np.int64)
    for i in range(n):
        line = stream.readline()
        fields = line.split()
        if len(fields) != 9:
            raise ModelError(f"particle line {i + 2}: expected 9 fields, got {len(fields)}")
        try:
            gid[i] = int(fields[0])
            values = [float(v) for v in fields[1:8]]
            type_idx[i] = int(fields[8])
        except ValueError:
            raise ModelError(f"particle line {i + 2}: unparsable value") from None
        if not all(math.isfinite(v) for v in values):
            raise ModelError(f"particle line {i + 2}: non-finite value")
        pos[i] = values[0:3]
        vel[i] = values[3:6]
        charge[i] = values[6]
    if np.any(type_idx < 0) or np.any(type_idx >= len(masses_by_type)):
        raise ModelError(
            f"type index out of range for {len(masses_by_type)} known type(s)"
        )
    if box is not None:
        pos = box.wrap(pos)
    return ParticleSet(
        gid=gid, pos=pos, vel=vel, charge=charge,
        mass=masses_by_type[type_idx], type_idx=type_idx,
    )


def save_particles(particles: ParticleSet, stream) -> None:
    """Inverse of load_particles; floats use repr so a reload is bit-exact."""
    stream.write(f"natoms {particles.n}\n")
    for i in range(particles.n):
        x, y, z = (float(v) for v in particles.pos[i])
        vx, vy, vz = (float(v) for v in particles.vel[i])
        stream.write(
            f"{particles.gid[i]} {x!r} {y!r} {z!r} {vx!r} {vy!r} {vz!r} "
            f"{float(particles.charge[i])!r} {particles.type_idx[i]}\n"
        )
