import numpy as np
import pytest
from hypothesis import settings

from tunnelkit.potential import PotentialModel, find_wells

settings.register_profile("tunnelkit", max_examples=40, deadline=None, derandomize=True)
settings.load_profile("tunnelkit")


@pytest.fixture(scope="session")
def quartic():
    return PotentialModel.quartic_double_well()


@pytest.fixture(scope="session")
def wells(quartic):
    return find_wells(quartic)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def near_square_chart(quartic, wells):
    """Chart of the (2, 2) torus at h = 0.005 (E = 0.05), launched from its inner umbilic."""
    from tunnelkit.agmon import action_chart
    from tunnelkit.spectrum import make_state
    s = make_state(wells[0], (2, 2), 0.005, model=quartic, project=True)
    return action_chart(quartic, wells[0], s.inner_umbilic(wells[0]), s.energy,
                        fan_width=0.4, n_rays=21)


@pytest.fixture(scope="session")
def defect_fit_report(near_square_chart):
    from tunnelkit.agmon import prop1_defect_fit
    return prop1_defect_fit(near_square_chart, raise_on_poor=False)


@pytest.fixture(scope="session")
def smoothness_report(quartic):
    from tunnelkit.agmon import prop3_smoothness_check
    return prop3_smoothness_check(quartic, 0.05)


@pytest.fixture(scope="session")
def fields_E005(quartic, wells):
    """Left-well distance fields at E = 0.05 on 128^2 and 256^2 grids."""
    from tunnelkit.agmon import agmon_distance
    from tunnelkit.grid import GridSpec
    return {n: agmon_distance(quartic, 0.05, wells[0], GridSpec.symmetric(2.0, 1.5, n, n))
            for n in (128, 256)}
