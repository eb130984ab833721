import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
import pytest
from numba import njit

from basinstab.harvesters import HarvesterModel, SystemSpec, _no_event, _ParamsBase


@dataclass(frozen=True)
class OmegaOnly(_ParamsBase):
    omega: float = 1.0
    amplitude: float = 0.0

    amplitude_name: ClassVar[str] = "amplitude"
    frequency_name: ClassVar[str] = "omega"


@njit
def _oscillator(t, y, p, branch, out):
    out[0] = y[1]
    out[1] = -y[0]


@njit
def _decay(t, y, p, branch, out):
    out[0] = -y[0]


@njit
def _constant(t, y, p, branch, out):
    out[0] = 0.0


@njit
def _blowup(t, y, p, branch, out):
    out[0] = y[0] * y[0]


def _static_zero(x, p):
    return 0.0


def make_model(rhs, state_names):
    spec = SystemSpec("test", "closed-form test system", OmegaOnly, tuple(state_names), 0, rhs,
                      _no_event, False, _static_zero, (), {}, (0.1, 1.0), (0.0, 1.0))
    return HarvesterModel(spec, OmegaOnly())


@pytest.fixture(scope="session")
def oscillator():
    """x'' = -x."""
    return make_model(_oscillator, ("x", "v"))


@pytest.fixture(scope="session")
def decay():
    """y' = -y."""
    return make_model(_decay, ("y",))


@pytest.fixture(scope="session")
def constant():
    return make_model(_constant, ("y",))


@pytest.fixture(scope="session")
def blowup():
    """y' = y^2, finite-time blow-up at t = 1/y0."""
    return make_model(_blowup, ("y",))
