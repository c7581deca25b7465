"""Pytest configuration for the lab test suite.

Provides small models, regions and an isolated output directory. Every
fixture is cheap: the largest region used here has a few hundred sites.
"""

from unittest.mock import patch

import pytest
from opentelemetry.sdk.metrics import MeterProvider
from opentelemetry.sdk.metrics.export import InMemoryMetricReader

from common import metrics as lab_metrics
from lab.config import settings
from tests.fixtures import make_model


@pytest.fixture
def one_particle_model():
    """n=1, d=1 model with uniform disorder on [0, 1] and lambda = 1."""
    return make_model(n=1)


@pytest.fixture
def two_particle_model():
    """n=2, d=1 model with a nearest-neighbor interaction of strength 2."""
    return make_model(n=2, u0=2.0)


@pytest.fixture
def free_model():
    """n=1, d=1 model without disorder (lambda = 0)."""
    return make_model(n=1, coupling=0.0)


@pytest.fixture
def output_dir(tmp_path):
    """Isolated LAB_OUTPUT_DIR for runs that do not set output_dir."""
    with patch.object(settings, "LAB_OUTPUT_DIR", str(tmp_path / "runs")):
        yield tmp_path / "runs"


@pytest.fixture
def metrics_reader():
    """Create an InMemoryMetricReader for testing metrics."""
    reader = InMemoryMetricReader()
    provider = MeterProvider(metric_readers=[reader])

    # Replace the global meter with test meter
    lab_metrics.meter = provider.get_meter("anderson_lab.harness", version="0.1.0")

    # Re-create all metrics with the test meter
    lab_metrics._create_metrics()

    yield reader

    # Cleanup
    reader.shutdown()
