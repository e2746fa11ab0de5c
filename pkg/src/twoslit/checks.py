"""Invariant suite behind the ``validate`` subcommand.

Each check is a reduced-size version of a property the package guarantees and
returns a ``Check`` rather than raising, so one failure does not hide others.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core_state import (
    ExperimentParams,
    PairConfiguration,
    packet_center,
    psi,
    slice_mass,
    normalize,
)
from .detection import SelectiveFilter, bqm_ensemble, selective_mask, sqm_same_side_probability
from .guidance import ballistic_x, com_path, velocity_field, velocity_via_phase, velocity_y
from .integrator import IntegratorSettings, integrate_batch
from .quantum_potential import q_cm, quantum_force_cm
from .sampler import SamplerMode, SamplerSpec


class Check(NamedTuple):
    name: str
    passed: bool
    detail: str


def random_configs(params: ExperimentParams, n: int, rng: np.random.Generator):
    """Points spread over the packet region at random times up to arrival."""
    t = rng.uniform(0.0, params.arrival_time, n)
    x1, x2 = ballistic_x(params, t)
    c = packet_center(params, t)
    y1 = rng.uniform(-1.5, 1.5, n) * (np.abs(c) + 2.0 * params.sigma0)
    y2 = rng.uniform(-1.5, 1.5, n) * (np.abs(c) + 2.0 * params.sigma0)
    return x1, y1, x2, y2, t


def _rel(a, b):
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b) / scale))


def check_symmetry(params, n=200, seed=0) -> Check:
    worst = 0.0
    for stats in ("bosonic", "fermionic"):
        p = params.replace(statistics=stats)
        x1, y1, x2, y2, t = random_configs(p, n, np.random.default_rng(seed))
        base = psi(p, x1, y1, x2, y2, t)
        worst = max(worst, _rel(psi(p, x1, -y1, x2, -y2, t), base))
        worst = max(worst, _rel(psi(p, x2, y2, x1, y1, t), p.sign * base))
        v1, v2, _ = velocity_field(p, x1, y1, x2, y2, t)
        r1, r2, _ = velocity_field(p, x1, -y1, x2, -y2, t)
        worst = max(worst, _rel(r1, -v1), _rel(r2, -v2))
        m1, m2, _ = velocity_field(p, x1, y1, x2, -y1, t)
        worst = max(worst, _rel(m1, -m2))
    return Check("symmetry", worst <= 1e-12, f"max relative deviation {worst:.3g}")


def check_guidance(params, n=20, seed=1) -> Check:
    rng = np.random.default_rng(seed)
    x1, y1, x2, y2, t = random_configs(params, n, rng)
    worst = 0.0
    for i in range(n):
        c = PairConfiguration(float(x1[i]), float(y1[i]), float(x2[i]), float(y2[i]), float(t[i]))
        v = velocity_y(params, c)
        f = velocity_via_phase(params, c, 1e-5 * params.sigma0)
        worst = max(worst, _rel(np.array(v), np.array(f)))
    return Check("guidance_oracle", worst <= 1e-6, f"max relative deviation {worst:.3g}")


def check_com_law(params, settings: IntegratorSettings) -> Check:
    y0 = np.array([0.1, 1.0, 3.0]) * params.sigma0
    t_end = params.arrival_time
    res = integrate_batch(params, y0, y0, 0.0, t_end, settings)
    com = 0.5 * (res.y1 + res.y2)
    err = float(np.max(np.abs(com - com_path(params, y0, t_end)) / np.abs(com_path(params, y0, t_end))))
    z = integrate_batch(params, [0.4 * params.sigma0], [-0.4 * params.sigma0], 0.0, t_end, settings)
    drift = abs(float(z.y1[0] + z.y2[0])) / 2.0
    ok = bool(res.ok.all() and z.ok.all() and err <= 1e-6 and drift <= 1e-8 * params.sigma0 and z.y1[0] > 0)
    return Check("com_law", ok, f"max relative error {err:.3g}, mirror drift {drift:.3g}")


def check_quantum_potential(params) -> Check:
    ts = np.linspace(0.05, params.arrival_time, 5)
    h = 1e-3 * params.arrival_time
    worst = 0.0
    for y0 in (0.1, 1.0, 3.0):
        y0 = y0 * params.sigma0
        accel = (com_path(params, y0, ts + h) - 2 * com_path(params, y0, ts) + com_path(params, y0, ts - h)) / h**2
        worst = max(worst, _rel(params.mass * accel, quantum_force_cm(params, y0, ts)))
    zero = float(np.max(np.abs(q_cm(params, 0.0, ts))))
    return Check("quantum_potential", worst <= 1e-6 and zero == 0.0,
                 f"force vs m*accel {worst:.3g}, Q(y0=0) max {zero:.3g}")


def check_normalization(params) -> Check:
    t = params.arrival_time
    x1, x2 = ballistic_x(params, t)
    n = normalize(params, x1, x2, t)
    mass = slice_mass(params, x1, x2, t, norm=n)
    return Check("normalization", abs(mass - 1.0) <= 1e-6, f"slice mass {mass:.12g}")


def check_divergence(params, settings, seed=0, n_pairs=1024, workers=1) -> Check:
    spec = SamplerSpec(SamplerMode.PINNED_COM, seed=seed)
    ens = bqm_ensemble(params, spec, n_pairs, settings, workers=workers)
    same = int(np.sum(ens.y_s1 * ens.y_s2 > 0))
    keep = selective_mask(ens.y_s1, SelectiveFilter("upper"))
    wrong = int(np.sum(ens.y_s2[keep] >= 0))
    sqm = sqm_same_side_probability(params)
    ok = same == 0 and wrong == 0 and sqm > 0
    return Check("individual_divergence", ok,
                 f"BQM same-side events {same}/{len(ens.y_s1)}, filtered S2 hits at y>=0 {wrong}, "
                 f"SQM same-side probability {sqm:.6g}")


def check_determinism(params, settings, seed=0, workers=1) -> Check:
    spec = SamplerSpec(SamplerMode.UNCONSTRAINED, seed=seed)
    a = bqm_ensemble(params, spec, 256, settings, workers=1)
    b = bqm_ensemble(params, spec, 256, settings, workers=max(workers, 1))
    same = (a.y_s1.tobytes() == b.y_s1.tobytes() and a.y_s2.tobytes() == b.y_s2.tobytes())
    return Check("determinism", bool(same), "repeat run bit-identical" if same else "repeat run differs")


def run_all(params: ExperimentParams, settings: IntegratorSettings = IntegratorSettings(),
            seed: int = 0, workers: int = 1) -> list[Check]:
    return [
        check_symmetry(params, seed=seed),
        check_guidance(params, seed=seed + 1),
        check_com_law(params, settings),
        check_quantum_potential(params),
        check_normalization(params),
        check_divergence(params, settings, seed=seed, workers=workers),
        check_determinism(params, settings, seed=seed, workers=workers),
    ]
