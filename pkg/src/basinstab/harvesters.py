"""Dimensionless models of the four bistable energy harvesters.

Every model is a first-order system ``dy/dt = f(t, y, p)`` whose
parameters travel as a flat float64 array so the compiled integrators
can consume them.  State ordering per system:

    s1: (x, x', i)                  i is the dimensionless current q'
    s2: (X, X', Y, Y', I)
    s3: (y, y', V)
    s4: (z1, z1', z2, z2', v1, v2)

The typed parameter classes validate the reference configuration and
provide get/set-by-name access for the mismatch sampler.  Perturbed
parameter vectors produced by the sampler are plain arrays and skip
validation on purpose (a +10 % draw on gamma2 = 0.95 leaves (0, 1)).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar

import numpy as np
from numba import njit
from scipy.optimize import brentq

__all__ = [
    "InvalidParameter",
    "NonPositiveParameter",
    "MonostableParameters",
    "UnknownParameter",
    "S1Params",
    "S1PhysicalParams",
    "S2Params",
    "S3Params",
    "S4Params",
    "WellGeometry",
    "SystemSpec",
    "HarvesterModel",
    "SYSTEMS",
    "PRESETS",
    "get_system",
    "preset",
    "s1_from_physical",
    "s1_rhs",
    "s2_rhs",
    "s3_rhs",
    "s4_rhs",
    "static_force",
    "well_geometry",
]


class InvalidParameter(ValueError):
    """A parameter vector violates a model invariant."""


class NonPositiveParameter(InvalidParameter):
    pass


class MonostableParameters(InvalidParameter):
    pass


class UnknownParameter(KeyError):
    pass


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

class _ParamsBase:
    """Name-addressable behaviour shared by the four parameter classes.

    ``lambda`` is a Python keyword, so the attribute is ``lambda_`` while
    the public name (JSON, mismatch lists) stays ``lambda``.
    """

    amplitude_name: ClassVar[str]
    frequency_name: ClassVar[str]

    @staticmethod
    def _attr(name: str) -> str:
        return "lambda_" if name == "lambda" else name

    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple("lambda" if f.name == "lambda_" else f.name
                     for f in dataclasses.fields(cls))

    @classmethod
    def index_of(cls, name: str) -> int:
        try:
            return cls.names().index(name)
        except ValueError:
            raise UnknownParameter(
                f"{cls.__name__} has no parameter {name!r}; "
                f"known: {', '.join(cls.names())}") from None

    def get(self, name: str) -> float:
        self.index_of(name)
        return getattr(self, self._attr(name))

    def replace(self, **values: float):
        kw = {}
        for name, v in values.items():
            self.index_of(name)
            kw[self._attr(name)] = float(v)
        return dataclasses.replace(self, **kw)

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in dataclasses.fields(self)],
                        dtype=np.float64)

    def to_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names(), self.to_array())}

    @classmethod
    def from_dict(cls, values: dict[str, Any], base=None):
        base = base if base is not None else cls()
        unknown = set(values) - set(cls.names())
        if unknown:
            raise UnknownParameter(
                f"unknown {cls.__name__} parameter(s): {', '.join(sorted(unknown))}")
        return base.replace(**values)

    @classmethod
    def from_array(cls, arr: np.ndarray):
        """Rebuild from a flat vector, with validation."""
        return cls(*[float(v) for v in arr])

    def _require(self, ok: bool, msg: str) -> None:
        if not ok:
            raise InvalidParameter(f"{type(self).__name__}: {msg}")

    def _finite(self) -> None:
        for n, v in zip(self.names(), self.to_array()):
            self._require(math.isfinite(v), f"{n} must be finite, got {v}")


@dataclass(frozen=True)
class S1PhysicalParams:
    """Physical constants of the classical electromagnetic harvester (SI units).

    ``i0`` defaults to ``alpha * l0 / Lc``, which makes epsilon = 1.
    """

    m: float = 0.2
    l0: float = 0.114
    h1: float = 0.95 * 0.114
    h2: float = 0.95 * 0.114
    Lc: float = 1.463
    alpha: float = 30.0
    c: float = 0.35
    k: float = 1500.0
    R: float = 2200.0
    i0: float | None = None

    def __post_init__(self):
        if self.i0 is None:
            object.__setattr__(self, "i0", self.alpha * self.l0 / self.Lc)
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise NonPositiveParameter(f"S1PhysicalParams.{f.name} must be > 0, got {v}")
        if not (self.h1 < self.l0 and self.h2 < self.l0):
            raise MonostableParameters("S1PhysicalParams: h1, h2 must be < l0 for bistability")

    @property
    def omega_n(self) -> float:
        return math.sqrt(self.k / self.m)


@dataclass(frozen=True)
class S1Params(_ParamsBase):
    gamma1: float = 0.95
    gamma2: float = 0.95
    theta: float = 900.0 / (1.463 * 1500.0)
    phi: float = 0.35 / math.sqrt(1500.0 * 0.2)
    epsilon: float = 1.0
    lambda_: float = 2200.0 / (1.463 * math.sqrt(1500.0 / 0.2))
    P: float = 1.0
    Omega: float = 0.3

    amplitude_name: ClassVar[str] = "P"
    frequency_name: ClassVar[str] = "Omega"

    def __post_init__(self):
        self._finite()
        for g in ("gamma1", "gamma2"):
            v = self.get(g)
            self._require(0.0 < v < 1.0, f"{g} must lie in (0, 1) for bistability, got {v}")
        self._require(self.phi >= 0, f"phi (damping) must be >= 0, got {self.phi}")
        self._require(self.lambda_ >= 0, f"lambda (dissipation) must be >= 0, got {self.lambda_}")
        self._require(self.Omega > 0, f"Omega must be > 0, got {self.Omega}")


@dataclass(frozen=True)
class S2Params(_ParamsBase):
    lambda_: float = 4.0
    eta1: float = 0.92
    eta2: float = 1.75
    phi1: float = 0.005
    phi2: float = 0.02
    mu1: float = 1.0
    mu2: float = 1.0
    theta: float = 20.0
    epsilon: float = 13.13
    rho: float = 0.005
    P: float = 0.5
    omega: float = 0.5

    amplitude_name: ClassVar[str] = "P"
    frequency_name: ClassVar[str] = "omega"

    def __post_init__(self):
        self._finite()
        for n, v in zip(self.names(), self.to_array()):
            if n != "P":
                self._require(v >= 0, f"{n} must be >= 0, got {v}")
        self._require(self.mu1 > 0 and self.mu2 > 0, "mu1, mu2 must be > 0")
        self._require(0.0 < self.eta1 < 1.0,
                      f"eta1 must lie in (0, 1) for bistability of X, got {self.eta1}")
        self._require(self.omega > 0, f"omega must be > 0, got {self.omega}")


@dataclass(frozen=True)
class S3Params(_ParamsBase):
    xi1: float = 0.08
    xi2: float = 0.05
    beta: float = 0.25
    delta: float = 0.5
    kappa: float = math.sqrt(0.002)
    alpha: float = 0.4
    K: float = 100.0
    d: float = 0.6
    f: float = 0.3
    omega: float = 0.8

    amplitude_name: ClassVar[str] = "f"
    frequency_name: ClassVar[str] = "omega"

    def __post_init__(self):
        self._finite()
        self._require(self.delta > 0, f"delta must be > 0, got {self.delta}")
        self._require(self.beta < 1, f"beta must be < 1 (unstable origin), got {self.beta}")
        self._require(self.K > 0, f"K (stop stiffness) must be > 0, got {self.K}")
        self._require(self.d > 0, f"d (stop clearance) must be > 0, got {self.d}")
        for n in ("xi1", "xi2", "alpha"):
            self._require(self.get(n) >= 0, f"{n} must be >= 0, got {self.get(n)}")
        self._require(self.omega > 0, f"omega must be > 0, got {self.omega}")


@dataclass(frozen=True)
class S4Params(_ParamsBase):
    zeta1: float = 0.025
    zeta2: float = 0.025
    alpha1: float = -2.0
    alpha2: float = -1.0
    beta1: float = 1.0
    beta2: float = 1.0
    chi1: float = 0.05
    chi2: float = 0.05
    kappa1: float = 0.5
    kappa2: float = 0.5
    rho: float = 1.0
    Omega_s: float = 0.25
    phi1: float = 0.05
    phi2: float = 0.05
    gamma: float = 0.5
    Omega: float = 0.8
    # power on the nonlinear restitution terms; 1 gives the literal linear reading
    beta_exponent: float = 3.0

    amplitude_name: ClassVar[str] = "gamma"
    frequency_name: ClassVar[str] = "Omega"

    def __post_init__(self):
        self._finite()
        self._require(self.rho > 0, f"rho must be > 0, got {self.rho}")
        for n in ("zeta1", "zeta2", "phi1", "phi2"):
            self._require(self.get(n) >= 0, f"{n} must be >= 0, got {self.get(n)}")
        self._require(1.0 + self.alpha1 < 0, "1 + alpha1 must be < 0 (double well)")
        self._require(self.alpha2 < 0, "alpha2 must be < 0 (double well)")
        self._require(self.Omega > 0, f"Omega must be > 0, got {self.Omega}")


def s1_from_physical(pp: S1PhysicalParams, A: float = 0.0, omega: float | None = None) -> S1Params:
    """Dimensionless S1 groups from physical constants.

    ``A`` is the force amplitude [N] and ``omega`` the forcing frequency
    [rad/s]; when omega is omitted Omega keeps its default.
    """
    wn = pp.omega_n
    kw = dict(
        gamma1=pp.h1 / pp.l0,
        gamma2=pp.h2 / pp.l0,
        theta=pp.alpha * pp.i0 / (pp.l0 * pp.k),
        phi=pp.c / math.sqrt(pp.k * pp.m),
        epsilon=pp.alpha * pp.l0 / (pp.Lc * pp.i0),
        lambda_=pp.R / (pp.Lc * wn),
        P=A / (pp.l0 * pp.k),
    )
    if omega is not None:
        kw["Omega"] = omega / wn
    return S1Params(**kw)


# ---------------------------------------------------------------------------
# right-hand sides (compiled)
#
# signature: rhs(t, y, p, branch, out) -> None
#            event(y, p) -> float   (switching function; sign change = event)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _s1_rhs(t, y, p, branch, out):
    x = y[0]
    g1, g2, theta, phi, eps, lam, P, Om = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]
    restoring = (x * (1.0 - 1.0 / math.sqrt(x * x + g1 * g1))
                 + x * (1.0 - 1.0 / math.sqrt(x * x + g2 * g2)))
    out[0] = y[1]
    out[1] = -restoring + theta * y[2] + P * math.cos(Om * t) - phi * y[1]
    out[2] = -eps * y[1] - lam * y[2]


@njit(cache=True)
def _s2_rhs(t, y, p, branch, out):
    X, Xd, Y, Yd, I = y[0], y[1], y[2], y[3], y[4]
    lam, eta1, eta2, phi1, phi2 = p[0], p[1], p[2], p[3], p[4]
    mu1, mu2, theta, eps, rho, P, om = p[5], p[6], p[7], p[8], p[9], p[10], p[11]
    s = 1.0 - 1.0 / math.sqrt(X * X + eta1 * eta1 * (1.0 - Y) * (1.0 - Y))
    out[0] = Xd
    out[1] = -X * s - phi1 * Xd + P * math.cos(om * t) - rho * I
    out[2] = Yd
    out[3] = (-(lam / mu1) * Y
              - 2.0 * (lam / mu2) * Y * (1.0 - 1.0 / math.sqrt(1.0 + eta2 * eta2 * Y * Y))
              + lam * (1.0 - Y) * s
              - phi2 * Yd)
    out[4] = eps * Xd - theta * I


@njit(cache=True)
def _s3_rhs(t, y, p, branch, out):
    yy, yd, V = y[0], y[1], y[2]
    xi1, xi2, beta, delta, kappa, alpha, K, d, f, om = (
        p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8], p[9])
    g = 0.0
    if branch == 1:
        g = 2.0 * xi2 * yd + K * (yy + d)
    out[0] = yd
    out[1] = (-2.0 * xi1 * yd + yy - beta * yy - delta * yy * yy * yy - g
              + kappa * kappa * V + f * math.cos(om * t))
    out[2] = -alpha * V - yd


@njit(cache=True)
def _s3_event(y, p):
    return y[0] + p[7]


@njit(cache=True)
def _no_event(y, p):
    return 1.0


@njit(cache=True)
def _spow(z, e):
    # odd power preserving sign; exact for the common integer cases
    if e == 3.0:
        return z * z * z
    if e == 1.0:
        return z
    return math.copysign(abs(z) ** e, z)


@njit(cache=True)
def _s4_rhs(t, y, p, branch, out):
    z1, z1d, z2, z2d, v1, v2 = y[0], y[1], y[2], y[3], y[4], y[5]
    zeta1, zeta2, a1, a2, b1, b2 = p[0], p[1], p[2], p[3], p[4], p[5]
    chi1, chi2, k1, k2, rho, Os = p[6], p[7], p[8], p[9], p[10], p[11]
    ph1, ph2, gam, Om, ex = p[12], p[13], p[14], p[15], p[16]
    base = gam * Om * Om * math.sin(Om * t)
    rel_v = z2d - z1d
    rel_z = z2 - z1
    out[0] = z1d
    out[1] = (base - 2.0 * zeta1 * z1d + 2.0 * zeta2 * rel_v - (1.0 + a1) * z1
              - b1 * _spow(z1, ex) + rho * Os * Os * rel_z + chi1 * v1 - chi2 * v2)
    out[2] = z2d
    out[3] = (base - 2.0 * zeta2 * rel_v - a2 * z2 - b2 * _spow(z2, ex)
              - rho * Os * rel_z + chi2 * v2) / rho
    out[4] = -ph1 * v1 - k1 * z1d
    out[5] = -ph2 * v2 - k2 * rel_v


# ---------------------------------------------------------------------------
# static (reduced, one-coordinate) restoring forces used for well geometry
# ---------------------------------------------------------------------------

def _s1_static(x: float, p: np.ndarray) -> float:
    g1, g2 = p[0], p[1]
    return -(x * (1 - 1 / math.sqrt(x * x + g1 * g1)) + x * (1 - 1 / math.sqrt(x * x + g2 * g2)))


def _s2_static(X: float, p: np.ndarray) -> float:
    eta1 = p[1]
    return -X * (1 - 1 / math.sqrt(X * X + eta1 * eta1))


def _s3_static(y: float, p: np.ndarray) -> float:
    beta, delta, K, d = p[2], p[3], p[6], p[7]
    g = K * (y + d) if y <= -d else 0.0
    return (1 - beta) * y - delta * y ** 3 - g


def _s4_static(z: float, p: np.ndarray) -> float:
    # symmetric mode z1 = z2 = z, where both coupling terms drop out
    a1, b1, ex = p[2], p[4], p[16]
    return -(1 + a1) * z - b1 * math.copysign(abs(z) ** ex, z)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WellGeometry:
    well_coordinate_index: int
    unstable_point: float
    left_bound: float
    right_bound: float

    def __post_init__(self):
        if not (self.left_bound < self.unstable_point < self.right_bound):
            raise ValueError(
                f"well bounds must satisfy left < unstable < right, got "
                f"{self.left_bound}, {self.unstable_point}, {self.right_bound}")

    def mirrored(self) -> "WellGeometry":
        return WellGeometry(self.well_coordinate_index, -self.unstable_point,
                            -self.right_bound, -self.left_bound)


@dataclass(frozen=True)
class SystemSpec:
    system_id: str
    description: str
    param_cls: type
    state_names: tuple[str, ...]
    well_index: int
    rhs: Any = field(repr=False)
    event: Any = field(repr=False)
    has_events: bool
    static_force: Callable[[float, np.ndarray], float] = field(repr=False)
    mismatch_names: tuple[str, ...]
    ic_ranges: dict[str, tuple[float, float]]
    omega_range: tuple[float, float]
    amplitude_range: tuple[float, float]

    @property
    def dim(self) -> int:
        return len(self.state_names)


SYSTEMS: dict[str, SystemSpec] = {
    "s1": SystemSpec(
        "s1", "classical electromagnetic bistable harvester",
        S1Params, ("x", "x_dot", "i"), 0, _s1_rhs, _no_event, False, _s1_static,
        ("gamma2", "theta", "epsilon", "phi"),
        {"x": (-1.0, 1.0), "x_dot": (-1.0, 1.0)},
        (0.1, 1.0), (0.0, 2.5)),
    "s2": SystemSpec(
        "s2", "electromagnetic bistable harvester with nonlinear elastic boundary",
        S2Params, ("X", "X_dot", "Y", "Y_dot", "I"), 0, _s2_rhs, _no_event, False, _s2_static,
        ("eta1", "eta2", "rho", "epsilon", "phi1", "phi2"),
        {"X": (-1.0, 1.0), "X_dot": (-1.0, 1.0)},
        (0.1, 2.0), (0.0, 1.0)),
    "s3": SystemSpec(
        "s3", "asymmetric piezoelectric bistable harvester with unilateral stop",
        S3Params, ("y", "y_dot", "V"), 0, _s3_rhs, _s3_event, True, _s3_static,
        ("K", "kappa", "xi1", "xi2"),
        {"y": (-0.55, 2.0), "y_dot": (-2.0, 2.0)},
        (0.1, 2.0), (0.0, 0.6)),
    "s4": SystemSpec(
        "s4", "compact two-degree-of-freedom piezoelectric harvester",
        S4Params, ("z1", "z1_dot", "z2", "z2_dot", "v1", "v2"), 0, _s4_rhs, _no_event, False,
        _s4_static,
        ("chi1", "chi2", "kappa1", "kappa2", "zeta1", "zeta2"),
        {"z1": (-2.0, 2.0), "z2": (-2.0, 2.0)},
        (0.1, 2.0), (0.0, 1.0)),
}

PRESETS: dict[str, tuple[str, Any]] = {
    "s1-ref": ("s1", s1_from_physical(S1PhysicalParams()).replace(P=1.25, Omega=0.3)),
    "s2-ref": ("s2", S2Params()),
    "s3-ref": ("s3", S3Params()),
    "s4-ref": ("s4", S4Params()),
}


def get_system(system_id: str) -> SystemSpec:
    try:
        return SYSTEMS[system_id.lower()]
    except KeyError:
        raise KeyError(f"unknown system {system_id!r}; choose from {', '.join(SYSTEMS)}") from None


def preset(name: str):
    """Reference parameters by preset name ('s1-ref') or bare system id ('s1')."""
    key = name if name in PRESETS else f"{name}-ref"
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return PRESETS[key][1]


@dataclass(frozen=True)
class HarvesterModel:
    """A system definition bound to one validated parameter set."""

    spec: SystemSpec
    params: Any

    @classmethod
    def from_id(cls, system_id: str, params=None, **overrides) -> "HarvesterModel":
        spec = get_system(system_id)
        p = params if params is not None else preset(spec.system_id)
        if overrides:
            p = p.replace(**overrides)
        return cls(spec, p)

    @property
    def system_id(self) -> str:
        return self.spec.system_id

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def omega(self) -> float:
        return self.params.get(self.params.frequency_name)

    @property
    def amplitude(self) -> float:
        return self.params.get(self.params.amplitude_name)

    def param_array(self) -> np.ndarray:
        return self.params.to_array()

    def with_excitation(self, omega: float | None = None, amplitude: float | None = None):
        kw = {}
        if omega is not None:
            kw[self.params.frequency_name] = omega
        if amplitude is not None:
            kw[self.params.amplitude_name] = amplitude
        return HarvesterModel(self.spec, self.params.replace(**kw)) if kw else self

    def initial_branch(self, y) -> int:
        if not self.spec.has_events:
            return 0
        return 1 if self.spec.event(np.asarray(y, dtype=np.float64), self.param_array()) <= 0.0 else 0

    def derivative(self, t: float, y, branch: int | None = None) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        out = np.empty(self.dim)
        b = self.initial_branch(y) if branch is None else branch
        self.spec.rhs(float(t), y, self.param_array(), b, out)
        return out


# Python-facing right-hand sides ------------------------------------------------

def _eval(rhs, t, y, p, branch=0):
    y = np.asarray(y, dtype=np.float64)
    out = np.empty_like(y)
    rhs(float(t), y, p.to_array(), branch, out)
    return out


def s1_rhs(t: float, y, p: S1Params) -> np.ndarray:
    return _eval(_s1_rhs, t, y, p)


def s2_rhs(t: float, y, p: S2Params) -> np.ndarray:
    return _eval(_s2_rhs, t, y, p)


def s3_rhs(t: float, y, p: S3Params) -> tuple[np.ndarray, int]:
    """Derivative plus the branch of the contact law used (1 = in contact)."""
    branch = 1 if y[0] <= -p.d else 0
    return _eval(_s3_rhs, t, y, p, branch), branch


def s4_rhs(t: float, y, p: S4Params) -> np.ndarray:
    return _eval(_s4_rhs, t, y, p)


def static_force(system_id: str, coord: float, params) -> float:
    """Reduced static force on the well coordinate (velocities and currents zero)."""
    spec = get_system(system_id)
    return spec.static_force(float(coord), params.to_array())


# ---------------------------------------------------------------------------
# well geometry
# ---------------------------------------------------------------------------

_EQ_TOL = 1e-8


def _dforce(fn, x, p, h=1e-6):
    return (fn(x + h, p) - fn(x - h, p)) / (2 * h)


def _stable_root(fn, p, lo, hi):
    """Root of the static force in (lo, hi) with a restoring slope."""
    flo, fhi = fn(lo, p), fn(hi, p)
    if not (flo * fhi < 0):
        return None
    r = brentq(fn, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, args=(p,))
    return r if _dforce(fn, r, p) < 0 else None


def _check_equilibrium(system_id, fn, x, p):
    if abs(fn(x, p)) > _EQ_TOL or not _dforce(fn, x, p) < 0:
        raise MonostableParameters(f"{system_id}: {x:.6g} is not a stable equilibrium")


def well_geometry(system_id: str, params=None) -> WellGeometry:
    """Unstable point and cross-well thresholds of the well coordinate."""
    spec = get_system(system_id)
    params = params if params is not None else preset(spec.system_id)
    p = params.to_array()
    fn = spec.static_force
    if not _dforce(fn, 0.0, p) > 0 or abs(fn(0.0, p)) > _EQ_TOL:
        raise MonostableParameters(f"{system_id}: origin is not an unstable equilibrium")

    sid = spec.system_id
    if sid == "s1":
        if params.gamma1 == params.gamma2:
            r = math.sqrt(1 - params.gamma1 ** 2)
        else:
            r = _stable_root(fn, p, 1e-9, 1.0)
        left, right = -r, r
    elif sid == "s2":
        r = math.sqrt(1 - params.eta1 ** 2)
        left, right = -r, r
    elif sid == "s3":
        right = math.sqrt((1 - params.beta) / params.delta)
        left = -params.d
        # the stop truncates the left well: the rest point must sit past -d
        rest = _stable_root(fn, p, -params.d - 10.0, -params.d)
        if rest is None:
            raise MonostableParameters("s3: no rest point in contact with the stop")
        _check_equilibrium(sid, fn, right, p)
        return WellGeometry(spec.well_index, 0.0, left, right)
    else:
        if params.beta_exponent == 3.0:
            r = math.sqrt(-(1 + params.alpha1) / params.beta1)
        else:
            r = _stable_root(fn, p, 1e-9, 10.0)
        left, right = -r, r
    if r is None:
        raise MonostableParameters(f"{system_id}: no stable well found")
    _check_equilibrium(sid, fn, left, p)
    _check_equilibrium(sid, fn, right, p)
    return WellGeometry(spec.well_index, 0.0, left, right)
