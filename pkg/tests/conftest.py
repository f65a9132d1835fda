import numpy as np
import pytest

from cellmd.model import ParticleSet, SimulationBox


@pytest.fixture
def dhfr_box():
    return SimulationBox.from_cutoff([62.23, 62.23, 62.23], 9.0)


@pytest.fixture
def small_box():
    return SimulationBox(lengths=[30.0, 30.0, 30.0], cutoff=9.0, ncells=[3, 3, 3])


def random_particles(n, box, seed=0, charged=False, ntypes=1):
    rng = np.random.default_rng(seed)
    charge = np.zeros(n)
    if charged:
        charge = rng.uniform(-1.0, 1.0, n)
        charge -= charge.mean()
    return ParticleSet(
        gid=np.arange(n, dtype=np.int64),
        pos=rng.random((n, 3)) * box.lengths,
        vel=np.zeros((n, 3)),
        charge=charge,
        mass=np.ones(n),
        type_idx=rng.integers(0, ntypes, n),
    )
