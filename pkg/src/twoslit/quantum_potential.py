"""Center-of-mass quantum potential and force, plus a finite-difference Q."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core_state import ExperimentParams, PairConfiguration, peak_bound, psi
from .guidance import NODE_FLOOR, ballistic_x, com_path
from .errors import NodeSingularity


@dataclass(frozen=True)
class PotentialSample:
    q: float
    force_y: float
    location: PairConfiguration


def default_stencil(params: ExperimentParams) -> float:
    return params.sigma0 / 200.0


def q_cm(params: ExperimentParams, y0, t):
    a = params.spread_rate
    return 0.5 * params.mass * y0**2 * a**2 / (1.0 + (a * t) ** 2)


def q_cm_at(params: ExperimentParams, y0, y):
    """The same potential written as a function of the com ordinate y."""
    a = params.spread_rate
    return params.mass * y0**4 * a**2 / (2.0 * y**2)


def quantum_force_cm(params: ExperimentParams, y0, t):
    a = params.spread_rate
    return params.mass * y0 * a**2 / (1.0 + (a * t) ** 2) ** 1.5


def quantum_force_cm_at(params: ExperimentParams, y0, y):
    a = params.spread_rate
    return params.mass * y0**4 / y**3 * a**2


def sample_cm(params: ExperimentParams, y0: float, t: float) -> PotentialSample:
    """Potential and force at the com position reached from ``y0`` at time ``t``."""
    x1, x2 = ballistic_x(params, t)
    y = float(com_path(params, y0, t))
    return PotentialSample(
        q=float(q_cm(params, y0, t)),
        force_y=float(quantum_force_cm(params, y0, t)),
        location=PairConfiguration(float(x1), y, float(x2), y, t),
    )


def _modulus_fn(params):
    def modulus(x1, y1, x2, y2, t):
        return np.abs(psi(params, x1, y1, x2, y2, t))

    return modulus


def q_numeric(params: ExperimentParams, config: PairConfiguration, h: float | None = None, modulus=None) -> float:
    """-(hbar^2/2m) lap(R)/R with a central-difference Laplacian over x1, y1, x2, y2.

    ``modulus(x1, y1, x2, y2, t)`` defaults to |psi|; any other amplitude
    modulus (a single product term, say) can be substituted.
    """
    if h is None:
        h = default_stencil(params)
    if modulus is None:
        modulus = _modulus_fn(params)
    c = config
    base = np.array([c.x1, c.y1, c.x2, c.y2], dtype=float)
    offsets = np.vstack([np.zeros(4), h * np.eye(4), -h * np.eye(4)])
    pts = base + offsets
    r = np.asarray(modulus(pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3], c.t), dtype=float)
    floor = NODE_FLOOR * peak_bound(params, c.t)
    if np.any(r <= floor):
        raise NodeSingularity(f"stencil of width {h} touches a node at {config}", float(r.min() / peak_bound(params, c.t)))
    lap = float(np.sum(r[1:5] + r[5:9] - 2.0 * r[0])) / h**2
    return -(params.hbar**2) / (2.0 * params.mass) * lap / float(r[0])


def write_cm_curves(path, params: ExperimentParams, y0_values, times) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "y0", "q_cm", "force"))
        for y0 in y0_values:
            for t in times:
                w.writerow([repr(float(t)), repr(float(y0)), repr(float(q_cm(params, y0, t))),
                            repr(float(quantum_force_cm(params, y0, t)))])
