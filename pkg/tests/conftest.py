import numpy as np
import pytest

import tactilab
from tactilab.features import FeatureObservation, Modality
from tactilab.signals import NoiseScales, SkinConfig, load_catalog

QUIET = NoiseScales(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@pytest.fixture(scope="session")
def related_catalog():
    return load_catalog(tactilab.data_path("catalogs", "related_priors.json"))


@pytest.fixture(scope="session")
def unrelated_catalog():
    return load_catalog(tactilab.data_path("catalogs", "unrelated_priors.json"))


@pytest.fixture(scope="session")
def sample_catalog():
    return load_catalog(tactilab.data_path("catalogs", "sample_catalog.json"))


@pytest.fixture
def quiet_noise():
    return QUIET


@pytest.fixture
def small_skin():
    return SkinConfig(cells=2, force_per_cell=2, temp_per_cell=1, accel_per_cell=1)


def force_obs(value, object_id=None, action_id="test"):
    """1-D force-only observation, handy for kernel and GP unit tests."""
    return FeatureObservation(
        action_id, ((Modality.FORCE, np.atleast_1d(np.asarray(value, dtype=float))),), object_id
    )


def two_part_obs(force, thermal, object_id=None, action_id="test"):
    return FeatureObservation(
        action_id,
        (
            (Modality.FORCE, np.atleast_1d(np.asarray(force, dtype=float))),
            (Modality.THERMAL, np.asarray(thermal, dtype=float)),
        ),
        object_id,
    )
