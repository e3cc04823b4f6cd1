import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("quick", parent=settings.get_profile("default"), max_examples=15)
settings.load_profile("default")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def disk_quad():
    """Shared unit-disk rule, fine enough for every degree used in tests."""
    from bergman_lab.fiber_numerics import FiberDomain, build_quadrature

    return build_quadrature(FiberDomain.disk(1.0), n_radial=48, n_angular=96)
