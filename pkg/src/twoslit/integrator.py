"""Pair trajectory integration under the y-velocity field with ballistic x.

Batches are integrated in lockstep, but every pair carries its own time,
step size and status, so a pair's result never depends on its neighbours.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core_state import ExperimentParams, PairConfiguration
from .errors import NodeEncounter, StepLimitExceeded
from .guidance import NODE_FLOOR, Trajectory, ballistic_x, velocity_field

OK, NODE, STEP_LIMIT = 0, 1, 2
STATUS_NAMES = {OK: "ok", NODE: "node", STEP_LIMIT: "step_limit"}


class Scheme(str, enum.Enum):
    RK4_FIXED = "rk4_fixed"
    RK45_ADAPTIVE = "rk45_adaptive"


@dataclass(frozen=True)
class IntegratorSettings:
    dt_init: float = 1e-3
    tol_rel: float = 1e-9
    tol_abs: float = 1e-12
    max_steps: int = 200_000
    scheme: Scheme = Scheme.RK45_ADAPTIVE

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not (self.dt_init > 0 and self.tol_rel > 0 and self.tol_abs > 0):
            raise ValueError("dt_init and tolerances must be > 0")
        if int(self.max_steps) <= 0:
            raise ValueError("max_steps must be > 0")


# Dormand-Prince 5(4)
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

_SAFETY, _MIN_FAC, _MAX_FAC, _NODE_FAC = 0.9, 0.2, 5.0, 0.25


@dataclass
class BatchResult:
    y1: np.ndarray
    y2: np.ndarray
    t: np.ndarray
    status: np.ndarray
    steps: np.ndarray
    nearest: np.ndarray
    history: list | None = None

    @property
    def ok(self) -> np.ndarray:
        return self.status == OK


def _field(params):
    def f(t, y1, y2):
        t = np.maximum(t, 0.0)
        x1, x2 = ballistic_x(params, t)
        with np.errstate(all="ignore"):
            v1, v2, ratio = velocity_field(params, x1, y1, x2, y2, t)
        good = (ratio > NODE_FLOOR) & np.isfinite(v1) & np.isfinite(v2)
        return v1, v2, ratio, good

    return f


def integrate_batch(params: ExperimentParams, y1, y2, t0: float, t_end: float,
                    settings: IntegratorSettings = IntegratorSettings(), record: bool = False) -> BatchResult:
    """Advance every pair from ``t0`` to ``t_end``; failed pairs are tagged, not raised."""
    if not t_end > t0:
        raise ValueError("t_end must exceed the start time")
    if t0 < 0:
        raise ValueError("negative start times are not supported")
    y = np.stack([np.asarray(y1, float).ravel(), np.asarray(y2, float).ravel()], axis=1)
    if settings.scheme is Scheme.RK4_FIXED:
        return _rk4(params, y, t0, t_end, settings, record)
    return _rk45(params, y, t0, t_end, settings, record)


def _new_history(y, t0, n):
    return [([t0], [y[i, 0]], [y[i, 1]]) for i in range(n)]


def _rk45(params, y, t0, t_end, settings, record):
    f = _field(params)
    n = len(y)
    t = np.full(n, float(t0))
    h = np.full(n, min(settings.dt_init, t_end - t0))
    status = np.full(n, OK, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    nearest = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    history = _new_history(y, t0, n) if record else None
    dt_floor = 1e-14 * max(1.0, abs(t_end))

    _, _, r0, g0 = f(t, y[:, 0], y[:, 1])
    nearest = np.minimum(nearest, r0)
    status[~g0] = NODE
    active &= g0

    while active.any():
        idx = np.flatnonzero(active)
        ti, yi = t[idx], y[idx]
        remaining = t_end - ti
        last = h[idx] >= remaining
        hi = np.where(last, remaining, h[idx])

        ks = []
        good = np.ones(len(idx), dtype=bool)
        rmin = np.full(len(idx), np.inf)
        for s in range(7):
            ys = yi.copy()
            for j, a in enumerate(_A[s]):
                if a:
                    ys += (hi * a)[:, None] * ks[j]
            v1, v2, ratio, g = f(ti + _C[s] * hi, ys[:, 0], ys[:, 1])
            good &= g
            rmin = np.minimum(rmin, ratio)
            ks.append(np.stack([v1, v2], axis=1))
            if s == 6:
                y5 = ys
        err_vec = np.zeros_like(yi)
        for e, k in zip(_E, ks):
            if e:
                err_vec += e * k
        err_vec *= hi[:, None]
        scale = settings.tol_abs + settings.tol_rel * np.maximum(np.abs(yi), np.abs(y5))
        with np.errstate(invalid="ignore"):
            err = np.max(np.abs(err_vec) / scale, axis=1)
        err = np.where(good & np.isfinite(err), err, np.inf)
        accept = err <= 1.0

        with np.errstate(divide="ignore", over="ignore"):
            fac = np.clip(_SAFETY * err ** -0.2, _MIN_FAC, _MAX_FAC)
        fac = np.where(err == 0.0, _MAX_FAC, fac)
        fac = np.where(good, fac, _NODE_FAC)
        h[idx] = hi * fac
        steps[idx] += 1

        acc = idx[accept]
        t_new = np.where(last, t_end, ti + hi)
        t[acc] = t_new[accept]
        y[acc] = y5[accept]
        nearest[acc] = np.minimum(nearest[acc], rmin[accept])
        if record:
            for i in np.flatnonzero(accept):
                rec = history[idx[i]]
                rec[0].append(t_new[i])
                rec[1].append(y5[i, 0])
                rec[2].append(y5[i, 1])

        finished = acc[last[accept]]
        active[finished] = False
        node_dead = idx[~good & (hi * _NODE_FAC < dt_floor)]
        status[node_dead] = NODE
        nearest[idx[~good]] = np.minimum(nearest[idx[~good]], rmin[~good])
        active[node_dead] = False
        over = idx[(steps[idx] >= settings.max_steps) & active[idx]]
        status[over] = STEP_LIMIT
        active[over] = False

    return BatchResult(y[:, 0].copy(), y[:, 1].copy(), t, status, steps, nearest, history)


def _rk4(params, y, t0, t_end, settings, record):
    f = _field(params)
    n = len(y)
    nsteps = max(1, math.ceil((t_end - t0) / settings.dt_init - 1e-9))
    dt = (t_end - t0) / nsteps
    status = np.full(n, OK, dtype=np.int64)
    nearest = np.full(n, np.inf)
    history = _new_history(y, t0, n) if record else None
    if nsteps > settings.max_steps:
        status[:] = STEP_LIMIT
        return BatchResult(y[:, 0].copy(), y[:, 1].copy(), np.full(n, float(t0)), status,
                           np.zeros(n, dtype=np.int64), nearest, history)
    alive = np.ones(n, dtype=bool)
    t_now = np.full(n, float(t0))

    def stage(tt, yy):
        v1, v2, ratio, g = f(tt, yy[:, 0], yy[:, 1])
        return np.stack([v1, v2], axis=1), ratio, g

    for step in range(nsteps):
        tc = t0 + step * dt
        idx = np.flatnonzero(alive)
        if len(idx) == 0:
            break
        yi = y[idx]
        k1, r1, g1 = stage(np.full(len(idx), tc), yi)
        k2, r2, g2 = stage(np.full(len(idx), tc + dt / 2), yi + dt / 2 * k1)
        k3, r3, g3 = stage(np.full(len(idx), tc + dt / 2), yi + dt / 2 * k2)
        k4, r4, g4 = stage(np.full(len(idx), tc + dt), yi + dt * k3)
        good = g1 & g2 & g3 & g4
        ynew = yi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rmin = np.minimum(np.minimum(r1, r2), np.minimum(r3, r4))
        nearest[idx] = np.minimum(nearest[idx], rmin)
        t_next = t_end if step == nsteps - 1 else t0 + (step + 1) * dt
        y[idx[good]] = ynew[good]
        t_now[idx[good]] = t_next
        status[idx[~good]] = NODE
        alive[idx[~good]] = False
        if record:
            for i in np.flatnonzero(good):
                rec = history[idx[i]]
                rec[0].append(t_next)
                rec[1].append(ynew[i, 0])
                rec[2].append(ynew[i, 1])
    steps = np.full(n, nsteps, dtype=np.int64)
    return BatchResult(y[:, 0].copy(), y[:, 1].copy(), t_now, status, steps, nearest, history)


def integrate_pair(params: ExperimentParams, initial: PairConfiguration, t_end: float,
                   settings: IntegratorSettings = IntegratorSettings()) -> Trajectory:
    """Integrate one pair, returning every accepted step.

    The x-coordinates are not integrated: they follow ``ballistic_x`` and the
    x-values stored in ``initial`` are ignored.
    """
    if not initial.t < t_end:
        raise ValueError("initial.t must be earlier than t_end")
    res = integrate_batch(params, [initial.y1], [initial.y2], initial.t, t_end, settings, record=True)
    code = int(res.status[0])
    if code == NODE:
        raise NodeEncounter(
            f"pair starting at {initial} ran into a node near t={res.t[0]:.6g} "
            f"(nearest |psi|/peak {res.nearest[0]:.3g})",
            nearest=float(res.nearest[0]),
            t=float(res.t[0]),
        )
    if code == STEP_LIMIT:
        raise StepLimitExceeded(f"pair starting at {initial} exceeded {settings.max_steps} steps")
    ts, y1s, y2s = res.history[0]
    return Trajectory(np.array(ts), np.array(y1s), np.array(y2s), params=params)
