"""Suite-wide configuration and fixtures."""

from __future__ import annotations

import pytest
from hypothesis import settings

from _helpers import LOGREG_ARCH, MLP_ARCH

settings.register_profile("suite", max_examples=60, deadline=None)
settings.load_profile("suite")


@pytest.fixture
def logreg_arch():
    return LOGREG_ARCH


@pytest.fixture
def mlp_arch():
    return MLP_ARCH
