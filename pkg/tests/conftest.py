import os

import hypothesis
import numpy as np
import pytest

from helpers import make_store, unit_rows

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def random_store(rng):
    """300 unit vectors in R^8."""
    return make_store(unit_rows(rng, 300, 8))
