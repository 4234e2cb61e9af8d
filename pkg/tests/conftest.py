import numpy as np
import pytest

from filicon.systems import builtin


@pytest.fixture(scope="session")
def fams():
    return {name: builtin(name).family() for name in ("systemA", "systemB", "familyH", "systemC", "planarDemo")}


def g_one_oracle(u):
    """Independent transcription of g_1(u) = tanh(u) + 2 - 2e * bump(u)."""
    u = np.asarray(u, dtype=float)
    bump = np.zeros_like(u)
    inside = np.abs(u) < 1
    bump[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return np.tanh(u) + 2.0 - 2.0 * np.e * bump
