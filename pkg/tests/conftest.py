"""
Shared fixtures for flemvi tests
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from engine.geometry import Domain  # noqa: E402
from engine.kernels import InitialLaw, fixed_point_density, spectral_perturbation  # noqa: E402
from engine.spectral import SpectralBasis  # noqa: E402


@pytest.fixture(scope="session")
def interval():
    return Domain.interval(0.0, math.pi)


@pytest.fixture(scope="session")
def square():
    return Domain.rectangle(0.0, math.pi, 0.0, math.pi)


@pytest.fixture(scope="session")
def basis(interval):
    return SpectralBasis(interval, 64)


@pytest.fixture(scope="session")
def small_basis(interval):
    return SpectralBasis(interval, 16)


@pytest.fixture(scope="session")
def square_basis(square):
    return SpectralBasis(square, 16, quadrature_nodes=64)


@pytest.fixture(scope="session")
def mu0_law(small_basis):
    return InitialLaw.single(fixed_point_density(small_basis))


@pytest.fixture(scope="session")
def perturbed_law(small_basis):
    return InitialLaw.single(spectral_perturbation(small_basis, {2: 0.1}))


@pytest.fixture(scope="session")
def mixture_law(small_basis):
    return InitialLaw((
        (0.5, spectral_perturbation(small_basis, {2: 0.1})),
        (0.5, spectral_perturbation(small_basis, {2: -0.1, 3: 0.02})),
    ))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    """Run in an empty directory with no FLEMVI_ overrides"""
    import os

    for key in list(os.environ):
        if key.startswith("FLEMVI_"):
            monkeypatch.delenv(key, raising=False)
    monkeypatch.chdir(tmp_path)
    yield tmp_path
    # variables loaded from .env bypass monkeypatch
    for key in list(os.environ):
        if key.startswith("FLEMVI_"):
            os.environ.pop(key)
