"""Shared fixtures: the reference disk domain and standard coefficient fields."""
import numpy as np
import pytest

from fdtomo.fields import PhaseFunction, make_attenuation
from fdtomo.geometry import DiskDomain


@pytest.fixture(scope="session")
def dom() -> DiskDomain:
    return DiskDomain(r=1.0, D=0.2)


@pytest.fixture(scope="session")
def sigma_zero(dom):
    return make_attenuation({"kind": "zero"}, dom, n=64)


@pytest.fixture(scope="session")
def phi_iso():
    return PhaseFunction(kind="isotropic")


@pytest.fixture()
def rng():
    return np.random.default_rng(20260816)
