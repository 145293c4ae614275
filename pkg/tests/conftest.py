import numpy as np
import pytest

from mimoplace import (ArrayGeometry, PlacementConstraints, RadarConfig,
                       Scenario, TargetParams, ula_geometry)

LAM = 0.3


def make_radar(num_tx, **overrides):
    kwargs = dict(powers=(1.0,) * num_tx)
    kwargs.update(overrides)
    return RadarConfig(**kwargs)


def single_target(theta=-np.pi / 3, beta=0.33, xi=3.0, zeta=3.0, cell=28):
    return TargetParams(cell=cell, theta=theta, beta=beta, xi=xi, zeta=zeta)


def transceiver_scenario(positions, targets, radar=None, d=LAM, e=2 * LAM,
                         include_bin0=True):
    geom = ArrayGeometry.transceiver(positions)
    radar = radar or make_radar(geom.num_tx)
    return Scenario(radar=radar, array=geom,
                    constraints=PlacementConstraints(d=d, e=e),
                    targets=tuple(targets), include_bin0=include_bin0)


def random_scenario(rng, max_antennas=4, max_targets=3, max_cell=2,
                    include_bin0=True, mode=None):
    """Randomized scenario for oracle-equivalence style tests."""
    mode = mode or ("transceiver" if rng.uniform() < 0.5 else "separate")
    if mode == "transceiver":
        count = int(rng.integers(1, max_antennas + 1))
        geom = ArrayGeometry.transceiver(rng.normal(scale=0.4,
                                                    size=(count, 2)))
        radar = make_radar(count)
    else:
        m = int(rng.integers(1, max_antennas + 1))
        n = int(rng.integers(1, max_antennas + 1))
        geom = ArrayGeometry(rng.normal(scale=0.4, size=(m, 2)),
                             rng.normal(scale=0.4, size=(n, 2)), "separate")
        radar = make_radar(m, powers=tuple(rng.uniform(0.5, 2.0, size=m)))
    targets = tuple(
        TargetParams(cell=int(rng.integers(1, max_cell + 1)),
                     theta=float(rng.uniform(-0.99 * np.pi, 0.99 * np.pi)),
                     beta=float(rng.uniform(0.1, 0.9)),
                     xi=float(rng.uniform(-3.0, 3.0)),
                     zeta=float(rng.uniform(-3.0, 3.0)))
        for _ in range(int(rng.integers(1, max_targets + 1))))
    return Scenario(radar=radar, array=geom,
                    constraints=PlacementConstraints(d=LAM, e=2 * LAM),
                    targets=targets, include_bin0=include_bin0)


@pytest.fixture
def table1_scenario():
    """Two-transceiver array with the reference single target."""
    return transceiver_scenario([[-0.15, 0.0], [0.15, 0.0]],
                                [single_target()])


@pytest.fixture
def ula3_scenario():
    geom = ula_geometry(3, LAM)
    radar = make_radar(3)
    return Scenario(radar=radar, array=geom,
                    constraints=PlacementConstraints(d=LAM, e=2 * LAM),
                    targets=(single_target(),))


@pytest.fixture
def two_target_scenario():
    """Two unresolved targets in one cell, four transceivers."""
    geom = ula_geometry(4, LAM)
    radar = make_radar(4)
    targets = (single_target(theta=-np.pi / 3, beta=0.33),
               single_target(theta=np.pi / 3, beta=0.66))
    return Scenario(radar=radar, array=geom,
                    constraints=PlacementConstraints(d=LAM, e=2 * LAM),
                    targets=targets)
