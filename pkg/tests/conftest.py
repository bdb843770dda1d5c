import numpy as np
import pytest

from photonstat import FourLevelParams, LevelSystem, build_four_level

K_RAD = 1.0 / 3.5e-9  # 3.5 ns radiative lifetime


@pytest.fixture
def two_level() -> LevelSystem:
    """Pump 1e6/s, decay 1/3.5 ns."""
    rates = np.zeros((2, 2))
    rates[0, 1] = 1e6
    rates[1, 0] = K_RAD
    return LevelSystem(rates=rates, radiative=(1, 0))


@pytest.fixture
def four_level() -> LevelSystem:
    return build_four_level(FourLevelParams(
        pump_rate=1e7, k_rad=K_RAD, k24=1e6, k42=1e6, k43=1e6, k31=1e6,
    ))


def random_level_system(rng, n_states=None) -> LevelSystem:
    """All-positive rate matrices are irreducible, so always valid."""
    n = n_states or int(rng.integers(2, 6))
    rates = rng.uniform(0.1, 10.0, size=(n, n))
    np.fill_diagonal(rates, 0.0)
    return LevelSystem(rates=rates, radiative=(1, 0))
