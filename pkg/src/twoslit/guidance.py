"""Bohmian y-velocities of the pair, center-of-mass law, and ballistic x-motion."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core_state import (
    ExperimentParams,
    PairConfiguration,
    combine,
    packet_dlog,
    peak_bound,
    psi,
    psi_terms,
)
from .errors import NodeSingularity, PhaseUnwrapFailure

#: |psi| at or below this fraction of the slice peak counts as a node
NODE_FLOOR = 1e-12

TRAJECTORY_COLUMNS = ("t", "x1", "y1", "x2", "y2", "vy1", "vy2")


class VelocityPair(NamedTuple):
    vy1: float
    vy2: float


def ballistic_x(params: ExperimentParams, t):
    """Plane-wave x positions: particle 1 moves right from d, particle 2 left from -d."""
    x1 = params.slit_x + params.ux * t
    return x1, -x1


def velocity_field(params: ExperimentParams, x1, y1, x2, y2, t):
    """Vectorized closed-form y-velocities.

    Returns ``(vy1, vy2, ratio)`` where ``ratio`` is |psi| over the slice peak
    bound; callers compare it against ``NODE_FLOOR``.
    """
    t1, t2, t3, t4 = psi_terms(params, x1, y1, x2, y2, t)
    value = combine(params, t1, t2, t3, t4)
    up1, dn1 = packet_dlog(params, 1.0, y1, t), packet_dlog(params, -1.0, y1, t)
    up2, dn2 = packet_dlog(params, 1.0, y2, t), packet_dlog(params, -1.0, y2, t)
    num1 = (up1 * t1 + dn1 * t3) + params.sign * (dn1 * t2 + up1 * t4)
    num2 = (dn2 * t1 + up2 * t3) + params.sign * (up2 * t2 + dn2 * t4)
    mod2 = value.real * value.real + value.imag * value.imag
    conj = np.conj(value)
    scale = params.hbar / params.mass
    with np.errstate(divide="ignore", invalid="ignore"):
        vy1 = scale * (num1 * conj).imag / mod2
        vy2 = scale * (num2 * conj).imag / mod2
    ratio = np.sqrt(mod2) / peak_bound(params, t)
    return vy1, vy2, ratio


def velocity_y(params: ExperimentParams, config: PairConfiguration) -> VelocityPair:
    vy1, vy2, ratio = velocity_field(params, config.x1, config.y1, config.x2, config.y2, config.t)
    if not ratio > NODE_FLOOR:
        raise NodeSingularity(f"|psi| is {float(ratio):.3g} of the slice peak at {config}", float(ratio))
    return VelocityPair(float(vy1), float(vy2))


def velocity_via_phase(params: ExperimentParams, config: PairConfiguration, h: float) -> VelocityPair:
    """Central-difference phase gradient in y1 and y2; independent check on ``velocity_y``."""
    if not h > 0:
        raise ValueError("h must be > 0")
    c = config
    floor = NODE_FLOOR * peak_bound(params, c.t)

    def value(dy1, dy2):
        z = complex(psi(params, c.x1, c.y1 + dy1, c.x2, c.y2 + dy2, c.t))
        if not abs(z) > floor:
            raise NodeSingularity(f"stencil point near a node at {c}", abs(z) / peak_bound(params, c.t))
        return z

    center = value(0.0, 0.0)
    out = []
    for plus, minus in (((h, 0.0), (-h, 0.0)), ((0.0, h), (0.0, -h))):
        zp, zm = value(*plus), value(*minus)
        # phase increments across each half of the stencil
        if abs(np.angle(zp / center)) > math.pi / 2 or abs(np.angle(center / zm)) > math.pi / 2:
            raise PhaseUnwrapFailure(f"phase jumps by more than pi/2 across stencil h={h} at {c}")
        dphase = np.angle(zp / center) + np.angle(center / zm)
        out.append(params.hbar / params.mass * dphase / (2.0 * h))
    return VelocityPair(float(out[0]), float(out[1]))


def com_velocity_closed_form(params: ExperimentParams, y, t):
    a = params.spread_rate
    return a * a * t * y / (1.0 + (a * t) ** 2)


def com_velocity(params: ExperimentParams, config: PairConfiguration) -> float:
    """Mean of the two y-velocities, cross-checked against the closed-form law."""
    v = velocity_y(params, config)
    mean = 0.5 * (v.vy1 + v.vy2)
    expected = com_velocity_closed_form(params, config.com, config.t)
    if abs(mean - expected) > 1e-8 * max(abs(expected), abs(v.vy1), abs(v.vy2), 1e-300) + 1e-13:
        warnings.warn(
            f"center-of-mass velocity {mean!r} departs from the closed form {expected!r} at {config}",
            RuntimeWarning,
            stacklevel=2,
        )
    return mean


def com_path(params: ExperimentParams, y0, t):
    return y0 * np.sqrt(1.0 + (params.spread_rate * t) ** 2)


@dataclass
class Trajectory:
    """Accepted integrator steps for one pair, stored column-wise."""

    t: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    params: ExperimentParams = field(repr=False)
    vy1: np.ndarray | None = None
    vy2: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.y1 = np.asarray(self.y1, dtype=float)
        self.y2 = np.asarray(self.y2, dtype=float)
        if self.t.ndim != 1 or len(self.t) == 0 or self.y1.shape != self.t.shape or self.y2.shape != self.t.shape:
            raise ValueError("trajectory columns must be equal-length 1-D arrays")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.vy1 is None or self.vy2 is None:
            x1, x2 = self.x1, self.x2
            vy1, vy2, _ = velocity_field(self.params, x1, self.y1, x2, self.y2, self.t)
            self.vy1, self.vy2 = np.asarray(vy1, float), np.asarray(vy2, float)

    @property
    def x1(self) -> np.ndarray:
        return ballistic_x(self.params, self.t)[0]

    @property
    def x2(self) -> np.ndarray:
        return ballistic_x(self.params, self.t)[1]

    @property
    def y0(self) -> float:
        return 0.5 * float(self.y1[0] + self.y2[0])

    @property
    def com(self) -> np.ndarray:
        return 0.5 * (self.y1 + self.y2)

    @property
    def samples(self) -> list[PairConfiguration]:
        x1, x2 = self.x1, self.x2
        return [PairConfiguration(*map(float, row)) for row in zip(x1, self.y1, x2, self.y2, self.t)]

    def __len__(self):
        return len(self.t)

    def rows(self):
        yield from zip(self.t, self.x1, self.y1, self.x2, self.y2, self.vy1, self.vy2)


def write_trajectories(path, trajectories) -> None:
    """Combined stream: one header line, then ``pair_id`` plus the trajectory columns."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("pair_id",) + TRAJECTORY_COLUMNS)
        for pair_id, traj in enumerate(trajectories):
            for row in traj.rows():
                w.writerow([pair_id] + [repr(float(v)) for v in row])
