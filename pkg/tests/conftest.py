"""Shared fixtures: the van der Pol instance and its limit cycle.

Session-scoped because construction is deterministic and read-only; every
test that needs the cycle reuses one object.
"""

import pytest

from lcsync.limit_cycle import find_limit_cycle
from lcsync.model import van_der_pol


@pytest.fixture(scope="session")
def vdp():
    return van_der_pol(0.1)


@pytest.fixture(scope="session")
def lc(vdp):
    return find_limit_cycle(vdp)
