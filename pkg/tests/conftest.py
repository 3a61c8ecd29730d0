import pytest

from shelving.model import SystemParams

BETA = 0.1
LAM = 0.001


@pytest.fixture
def params() -> SystemParams:
    """Omega=1, beta=0.1, lambda=0.001, A=0.05i, B=0.05, n=m=10^6."""
    return SystemParams()


@pytest.fixture
def bare() -> SystemParams:
    """No three-state resonance: only the Rabi/fluorescence row survives."""
    return SystemParams(resonance_amp_a=0j, resonance_amp_b=0j)
