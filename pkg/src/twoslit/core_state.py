"""Experiment parameters and the analytic entangled two-particle wavefunction.

The two right-hand slits are A (upper, y = +Y) and B (lower); the left-hand
ones are A' (upper) and B' (lower).  Every single-slit packet is a freely
spreading Gaussian in y multiplied by a plane wave in x.  Array arguments
broadcast throughout; the ``PairConfiguration`` wrappers are thin scalar
front ends over the same expressions.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import QuadratureFailure
from .quadrature import integrate_2d

#: a complex amplitude R e^{iS/hbar}; ``abs(z)`` is R, ``cmath.phase(z)`` is S/hbar
ComplexAmplitude = complex

#: quadrature windows extend this many complex-width moduli beyond the packet centers
TAIL_WIDTHS = 8.0


class Statistics(str, enum.Enum):
    BOSONIC = "bosonic"
    FERMIONIC = "fermionic"

    @property
    def sign(self) -> float:
        return 1.0 if self is Statistics.BOSONIC else -1.0


class Slit(str, enum.Enum):
    A = "A"
    B = "B"
    APRIME = "Aprime"
    BPRIME = "Bprime"

    @property
    def ysign(self) -> float:
        """+1 for the upper slits (A, A'), -1 for the lower ones."""
        return 1.0 if self in (Slit.A, Slit.APRIME) else -1.0

    @property
    def xsign(self) -> float:
        """+1 for the right-hand slits (A, B), -1 for the left-hand ones."""
        return 1.0 if self in (Slit.A, Slit.B) else -1.0


@dataclass(frozen=True)
class ExperimentParams:
    """Physical constants and geometry, in units with hbar = m = 1 by default.

    ``ky`` may be negative: the packets then drift toward the symmetry axis.
    """

    sigma0: float = 1.0
    slit_y: float = 2.0
    slit_x: float = 20.0
    kx: float = 10.0
    ky: float = -5.0
    screen_dist: float = 22.0
    hbar: float = 1.0
    mass: float = 1.0
    amp: float = 1.0
    statistics: Statistics = Statistics.BOSONIC

    def __post_init__(self):
        object.__setattr__(self, "statistics", Statistics(self.statistics))
        for name in ("sigma0", "slit_y", "slit_x", "kx", "ky", "screen_dist", "hbar", "mass", "amp"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be > 0")
        if self.slit_y <= 0:
            raise ValueError("slit_y must be > 0")
        if self.slit_x < 0:
            raise ValueError("slit_x must be >= 0")
        if self.kx <= 0:
            raise ValueError("kx must be > 0")
        if self.hbar <= 0 or self.mass <= 0:
            raise ValueError("hbar and mass must be > 0")
        if self.screen_dist <= self.slit_x:
            raise ValueError("screen_dist must exceed slit_x")

    def replace(self, **changes) -> "ExperimentParams":
        return dataclasses.replace(self, **changes)

    @property
    def ux(self) -> float:
        return self.hbar * self.kx / self.mass

    @property
    def uy(self) -> float:
        return self.hbar * self.ky / self.mass

    @property
    def energy(self) -> float:
        """Total energy of the incident pair, hbar^2 (kx^2 + ky^2) / m."""
        return self.hbar**2 * (self.kx**2 + self.ky**2) / self.mass

    @property
    def energy_x(self) -> float:
        return 0.5 * self.mass * self.ux**2

    @property
    def wavelength(self) -> float:
        return 2.0 * math.pi / self.kx

    @property
    def spread_rate(self) -> float:
        """hbar / (2 m sigma0^2); the packet width doubles its phase at t = 1/spread_rate."""
        return self.hbar / (2.0 * self.mass * self.sigma0**2)

    @property
    def arrival_time(self) -> float:
        """Common ballistic screen-crossing time (D - d) / u_x."""
        return (self.screen_dist - self.slit_x) / self.ux

    @property
    def sign(self) -> float:
        return self.statistics.sign


@dataclass(frozen=True)
class PairConfiguration:
    x1: float
    y1: float
    x2: float
    y2: float
    t: float = 0.0

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2", "t"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.t < 0:
            raise ValueError("t must be >= 0")

    @property
    def com(self) -> float:
        return 0.5 * (self.y1 + self.y2)

    def reflected(self) -> "PairConfiguration":
        """Mirror both particles in the x-axis."""
        return PairConfiguration(self.x1, -self.y1, self.x2, -self.y2, self.t)

    def swapped(self) -> "PairConfiguration":
        return PairConfiguration(self.x2, self.y2, self.x1, self.y1, self.t)


# ---------------------------------------------------------------------------
# array-level building blocks


def complex_width(params: ExperimentParams, t):
    return params.sigma0 * (1.0 + 1j * params.hbar * t / (2.0 * params.mass * params.sigma0**2))


def packet_center(params: ExperimentParams, t):
    """Ordinate of the upper packets' center, Y + u_y t (lower ones sit at the negative)."""
    return params.slit_y + params.uy * t


def packet(params: ExperimentParams, ysign: float, xsign: float, x, y, t):
    """One slit packet; ``ysign`` picks upper/lower, ``xsign`` right/left."""
    st = complex_width(params, t)
    w = ysign * y - params.slit_y - params.uy * t
    phase = (xsign * params.kx * (x - xsign * params.slit_x)
             + params.ky * (ysign * y - params.slit_y - params.uy * t / 2.0)
             - params.energy_x * t / params.hbar)
    prefactor = params.amp * (2.0 * math.pi) ** -0.25 / np.sqrt(st)
    return prefactor * np.exp(-(w * w) / (4.0 * params.sigma0 * st) + 1j * phase)


def packet_dlog(params: ExperimentParams, ysign: float, y, t):
    """d/dy log of a packet of the given vertical sign (x-independent)."""
    st = complex_width(params, t)
    w = ysign * y - params.slit_y - params.uy * t
    return ysign * (-2.0 * w / (4.0 * params.sigma0 * st) + 1j * params.ky)


def psi_terms(params: ExperimentParams, x1, y1, x2, y2, t):
    """The four products A(1)B'(2), A(2)B'(1), B(1)A'(2), B(2)A'(1)."""
    a1 = packet(params, 1.0, 1.0, x1, y1, t)
    b1 = packet(params, -1.0, 1.0, x1, y1, t)
    ap1 = packet(params, 1.0, -1.0, x1, y1, t)
    bp1 = packet(params, -1.0, -1.0, x1, y1, t)
    a2 = packet(params, 1.0, 1.0, x2, y2, t)
    b2 = packet(params, -1.0, 1.0, x2, y2, t)
    ap2 = packet(params, 1.0, -1.0, x2, y2, t)
    bp2 = packet(params, -1.0, -1.0, x2, y2, t)
    return a1 * bp2, a2 * bp1, b1 * ap2, b2 * ap1


def combine(params: ExperimentParams, t1, t2, t3, t4):
    # grouping keeps exchange and reflection relations exact in floating point
    return (t1 + t3) + params.sign * (t2 + t4)


def psi(params: ExperimentParams, x1, y1, x2, y2, t, norm=1.0):
    return norm * combine(params, *psi_terms(params, x1, y1, x2, y2, t))


def peak_bound(params: ExperimentParams, t):
    """Upper bound on the unnormalized |psi| over a slice: four times one term's maximum."""
    return 4.0 * params.amp**2 / (math.sqrt(2.0 * math.pi) * np.abs(complex_width(params, t)))


def quadrature_halfwidth(params: ExperimentParams, t) -> float:
    return float(abs(packet_center(params, t)) + TAIL_WIDTHS * abs(complex_width(params, t)))


# ---------------------------------------------------------------------------
# operations


def sigma_t(params: ExperimentParams, t: float) -> ComplexAmplitude:
    if t < 0:
        raise ValueError("t must be >= 0")
    return complex(complex_width(params, t))


def incident_wave(params: ExperimentParams, config: PairConfiguration) -> ComplexAmplitude:
    phase = (params.kx * (config.x1 - config.x2) + params.ky * (config.y1 - config.y2)
             - params.energy * config.t / params.hbar)
    return params.amp * complex(np.exp(1j * phase))


def slit_wave(params: ExperimentParams, slit: Slit | str, x: float, y: float, t: float) -> ComplexAmplitude:
    if t < 0:
        raise ValueError("t must be >= 0")
    slit = Slit(slit)
    return complex(packet(params, slit.ysign, slit.xsign, x, y, t))


def total_wavefunction(params: ExperimentParams, config: PairConfiguration, norm: float = 1.0) -> ComplexAmplitude:
    return complex(psi(params, config.x1, config.y1, config.x2, config.y2, config.t, norm))


def slice_mass(params: ExperimentParams, x1: float, x2: float, t: float, window=None, norm=1.0) -> float:
    """Integral of |psi|^2 over y1, y2 at fixed x1, x2, t.

    ``window`` is ``(lo1, hi1, lo2, hi2)``; the default is the symmetric box of
    half-width |Y + u_y t| + 8 |sigma_t| in both ordinates.
    """
    if window is None:
        w = quadrature_halfwidth(params, t)
        window = (-w, w, -w, w)
    lo1, hi1, lo2, hi2 = window

    def density(y1, y2):
        return np.abs(psi(params, x1, y1, x2, y2, t, norm)) ** 2

    est, _ = integrate_2d(density, (lo1, lo2), (hi1, hi2))
    return float(est)


def normalize(params: ExperimentParams, x1: float, x2: float, t: float) -> float:
    """Constant N making |psi|^2 integrate to one over the (x1, x2, t) slice."""
    if t < 0:
        raise ValueError("t must be >= 0")
    mass = slice_mass(params, x1, x2, t)
    if not mass > 0:
        raise QuadratureFailure(f"slice (x1={x1}, x2={x2}, t={t}) carries no probability")
    return 1.0 / math.sqrt(mass)
