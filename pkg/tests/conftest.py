import numpy as np
import pytest

import nullform as nf

POL = (1.0, 0.4 + 0.2j, 0.1, 0.3j)

# spinor null-form coefficients used by the nonlinear suites
COEFFS = nf.NullFormCoeffs(2.0 * np.array([1.0, 0.3, 0.2j, 0.0]),
                           2.0 * np.array([0.0, 0.4, 0.0, 0.2 + 0.1j]))


def unit_pol(pol=POL):
    p = np.asarray(pol, dtype=complex)
    return p / np.linalg.norm(p)


def gaussian_field(grid, sigma, amplitude=1.0, pol=POL, center=(0.0, 0.0, 0.0),
                   time=0.0) -> nf.SpinorField:
    """Gaussian data built directly; callers may go below the DataSpec width
    guard but must stay spectrally resolved (tail below ~1e-12)."""
    assert sigma >= 2.3 * grid.h, "profile too narrow for the grid"
    X, Y, Z = grid.coords()
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2
    p = unit_pol(pol)
    data = amplitude * p[:, None, None, None] * np.exp(-r2 / (2 * sigma ** 2))[None]
    return nf.SpinorField(grid, time, data)


def rand_field(grid, rng, scale=1.0) -> nf.SpinorField:
    n = grid.n
    data = scale * (rng.standard_normal((4, n, n, n))
                    + 1j * rng.standard_normal((4, n, n, n)))
    return nf.SpinorField(grid, 0.0, data)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def grid16():
    return nf.Grid(16, 8.0)


@pytest.fixture(scope="session")
def grid32():
    return nf.Grid(32, 12.0)
