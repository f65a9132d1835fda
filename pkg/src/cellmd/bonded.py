"""Bonded force evaluation: bond, angle (with Urey-Bradley), and dihedral
terms, processed sequentially over a gid-indexed global position store.

Every force routine is the analytic negative gradient of its energy; the
finite-difference tests in the suite are the ground truth for the force
distribution over atoms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import BondedTopology, ModelError, ParticleSet, SimulationBox
from .neighbor import minimum_image

_DEGENERATE_SIN = 1e-8


class DegenerateGeometryError(ValueError):
    """Collinear angle or undefined dihedral plane."""


@dataclass
class GlobalParticleStore:
    """gid -> position map backing the bonded pipeline; refreshed from the
    particle set after every motion update."""

    gids: np.ndarray
    pos: np.ndarray
    gid_row: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_particles(cls, particles: ParticleSet) -> "GlobalParticleStore":
        store = cls(gids=particles.gid.copy(), pos=particles.pos.copy())
        store.gid_row = {int(g): i for i, g in enumerate(store.gids)}
        return store

    def refresh(self, pos: np.ndarray) -> None:
        self.pos[:] = pos

    def row(self, gid: int) -> int:
        try:
            return self.gid_row[int(gid)]
        except KeyError:
            raise ModelError(f"unknown gid {gid}") from None


def _image(vec, box: SimulationBox | None):
    return vec if box is None else minimum_image(vec, box)


def eval_bond(ri, rj, k: float, r0: float, box: SimulationBox | None = None):
    """Harmonic bond: U = k (r - r0)^2.

    Force on i is -2 k (r - r0) along the unit vector from j to i; the
    force on j is its exact negation.
    """
    d = _image(np.asarray(ri, dtype=np.float64) - rj, box)
    r = float(np.linalg.norm(d))
    if r == 0.0:
        raise DegenerateGeometryError("coincident bonded particles")
    fi = (-2.0 * k * (r - r0) / r) * d
    return fi, -fi, k * (r - r0) ** 2


def eval_angle(
    ri, rj, rk, k_theta: float, theta0: float, k_ub: float = 0.0,
    r_ub: float = 0.0, box: SimulationBox | None = None,
):
    """Harmonic angle at j plus optional Urey-Bradley 1-3 spring:
    U = k_theta (theta - theta0)^2 + k_ub (r_ik - r_ub)^2.

    The three forces sum to zero exactly (the j force is built as the
    negated sum).
    """
    u = _image(np.asarray(ri, dtype=np.float64) - rj, box)
    v = _image(np.asarray(rk, dtype=np.float64) - rj, box)
    cu = float(np.linalg.norm(u))
    cv = float(np.linalg.norm(v))
    if cu == 0.0 or cv == 0.0:
        raise DegenerateGeometryError("zero-length angle arm")
    uh, vh = u / cu, v / cv
    cos_t = float(np.clip(uh @ vh, -1.0, 1.0))
    sin_t = float(np.sqrt(max(0.0, 1.0 - cos_t * cos_t)))
    if sin_t < _DEGENERATE_SIN:
        raise DegenerateGeometryError("collinear angle")
    theta = float(np.arccos(cos_t))
    # dtheta/dri = (cos uh - vh) / (|u| sin), and symmetrically for k
    coeff = -2.0 * k_theta * (theta - theta0)
    fi = coeff * (cos_t * uh - vh) / (cu * sin_t)
    fk = coeff * (cos_t * vh - uh) / (cv * sin_t)
    energy = k_theta * (theta - theta0) ** 2
    if k_ub != 0.0:
        d = u - v  # i relative to k in the same image frame
        r = float(np.linalg.norm(d))
        if r == 0.0:
            raise DegenerateGeometryError("coincident 1-3 pair")
        f_ub = (-2.0 * k_ub * (r - r_ub) / r) * d
        fi = fi + f_ub
        fk = fk - f_ub
        energy += k_ub * (r - r_ub) ** 2
    return fi, -(fi + fk), fk, energy


def eval_dihedral(
    ri, rj, rk, rl, k: float, n: int, phi: float, box: SimulationBox | None = None
):
    """Torsion about the j-k axis, with psi the angle between the (i,j,k)
    and (j,k,l) planes:

        U = k (1 + cos(n psi + phi))   for n > 0
        U = k (psi - phi)^2            for n = 0

    Forces use the standard psi-gradient identities; the k force closes the
    sum to exactly zero.
    """
    b1 = _image(np.asarray(rj, dtype=np.float64) - ri, box)
    b2 = _image(np.asarray(rk, dtype=np.float64) - rj, box)
    b3 = _image(np.asarray(rl, dtype=np.float64) - rk, box)
    n1 = np.cross(b1, b2)
    n2 = np.cross(b2, b3)
    n1sq = float(n1 @ n1)
    n2sq = float(n2 @ n2)
    b2n = float(np.linalg.norm(b2))
    if b2n == 0.0 or n1sq < (_DEGENERATE_SIN * b2n) ** 2 or n2sq < (_DEGENERATE_SIN * b2n) ** 2:
        raise DegenerateGeometryError("degenerate dihedral planes")
    psi = float(np.arctan2(np.cross(n1, n2) @ b2 / b2n, n1 @ n2))
    n = int(n)
    if n > 0:
        du = -k * n * np.sin(n * psi + phi)
        energy = k * (1.0 + np.cos(n * psi + phi))
    else:
        du = 2.0 * k * (psi - phi)
        energy = k * (psi - phi) ** 2
    dpsi_dri = -(b2n / n1sq) * n1
    dpsi_drl = (b2n / n2sq) * n2
    p = float(b1 @ b2) / (b2n * b2n)
    q = float(b3 @ b2) / (b2n * b2n)
    dpsi_drj = -(1.0 + p) * dpsi_dri + q * dpsi_drl
    fi = -du * dpsi_dri
    fj = -du * dpsi_drj
    fl = -du * dpsi_drl
    fk = -(fi + fj + fl)
    return fi, fj, fk, fl, float(energy)


def bonded_pass(
    topology: BondedTopology,
    store: GlobalParticleStore,
    box: SimulationBox | None = None,
    out: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Evaluate bonds, then angles, then dihedrals in entry order,
    accumulating into a gid-addressed force array.  Strictly sequential,
    hence bitwise deterministic."""
    forces = out if out is not None else np.zeros((len(store.gids), 3))
    energy = 0.0
    pos = store.pos
    for gids, params in zip(topology.bond_gids, topology.bond_params):
        i, j = (store.row(g) for g in gids)
        fi, fj, u = eval_bond(pos[i], pos[j], params[0], params[1], box)
        forces[i] += fi
        forces[j] += fj
        energy += u
    for gids, params in zip(topology.angle_gids, topology.angle_params):
        i, j, k = (store.row(g) for g in gids)
        fi, fj, fk, u = eval_angle(
            pos[i], pos[j], pos[k], params[0], params[1], params[2], params[3], box
        )
        forces[i] += fi
        forces[j] += fj
        forces[k] += fk
        energy += u
    for gids, params in zip(topology.dihedral_gids, topology.dihedral_params):
        i, j, k, l = (store.row(g) for g in gids)
        fi, fj, fk, fl, u = eval_dihedral(
            pos[i], pos[j], pos[k], pos[l], params[0], int(params[1]), params[2], box
        )
        forces[i] += fi
        forces[j] += fj
        forces[k] += fk
        forces[l] += fl
        energy += u
    return forces, energy
