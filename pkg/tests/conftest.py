import pytest

from fhbounds.sim.model import FronthaulTopology, TrafficClass

MBPS = 1e6


@pytest.fixture
def table_classes():
    """URLLC / eMBB traffic mix used throughout the experiments (k=1 per class)."""
    return (
        TrafficClass("urllc", 500 * 8, 8000.0, 1),
        TrafficClass("embb", 1500 * 8, 4000.0, 1),
    )


@pytest.fixture
def ten_paths():
    return FronthaulTopology.homogeneous(10, 100 * MBPS)
