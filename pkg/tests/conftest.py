import numpy as np
import pytest

from lavahazard import synthetic
from lavahazard.event_model import EventClass, EventTable
from lavahazard.lava_ca import CaParams
from lavahazard.vent_field import VentSet
from lavahazard.raster import cell_center


@pytest.fixture(scope="session")
def tiny_dem():
    return synthetic.cone_dem(n=31, cellsize=100.0, summit=1000.0, decay=800.0)


@pytest.fixture(scope="session")
def tiny_vents(tiny_dem):
    # 12 vents, 3 classes
    cells = [(13, 15), (15, 17), (17, 13),
             (10, 15), (15, 20), (20, 15),
             (8, 8), (8, 22), (22, 8), (22, 22), (15, 7), (7, 15)]
    classes = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 2, 2]
    xy = [cell_center(tiny_dem, r, c) for r, c in cells]
    return VentSet([r for r, _ in cells], [c for _, c in cells],
                   [p[0] for p in xy], [p[1] for p in xy], classes, 3)


@pytest.fixture(scope="session")
def tiny_table():
    return EventTable([
        EventClass(0, 2, 0.0, 0.1, 0.4),
        EventClass(0, 2, 0.1, 0.3, 0.3),
        EventClass(2, 4, 0.0, 0.1, 0.2),
        EventClass(2, 4, 0.1, 0.3, 0.1),
    ])


@pytest.fixture(scope="session")
def tiny_params():
    return CaParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
