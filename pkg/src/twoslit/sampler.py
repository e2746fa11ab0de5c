"""Born-rule sampling of initial pair positions.

Every sample ``i`` draws from its own Philox stream keyed by the seed with
counter block ``i``, so any index range can be generated independently and
the stream is identical however the indices are split among workers.

Proposals come from the Gaussian moduli of the four product terms of the
wavefunction: |psi|^2 <= 4 * sum_j |term_j|^2 pointwise, which gives an exact
rejection envelope with no truncation.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core_state import (
    ExperimentParams,
    PairConfiguration,
    complex_width,
    combine,
    packet_center,
    psi,
    psi_terms,
)
from .errors import RejectionOverflow
from .guidance import ballistic_x

_ROUND = 16


class SamplerMode(str, enum.Enum):
    PINNED_COM = "pinned_com"
    SPREAD_COM = "spread_com"
    UNCONSTRAINED = "unconstrained"


@dataclass(frozen=True)
class SamplerSpec:
    mode: SamplerMode = SamplerMode.PINNED_COM
    y0_mean: float = 0.0
    y0_sigma: float = 0.0
    seed: int = 0
    max_rejects: int = 100_000

    def __post_init__(self):
        object.__setattr__(self, "mode", SamplerMode(self.mode))
        if not self.y0_sigma >= 0:
            raise ValueError("y0_sigma must be >= 0")
        if int(self.seed) < 0:
            raise ValueError("seed must be non-negative")
        if int(self.max_rejects) <= 0:
            raise ValueError("max_rejects must be > 0")

    def check(self, params: ExperimentParams) -> None:
        if self.mode is SamplerMode.SPREAD_COM:
            if not self.y0_sigma < params.sigma0:
                raise ValueError("spread_com needs y0_sigma < sigma0")
            if self.y0_sigma > params.sigma0 / 10:
                warnings.warn("y0_sigma exceeds sigma0/10; the center of mass is not well pinned",
                              RuntimeWarning, stacklevel=3)


@dataclass
class SampleBatch:
    y1: np.ndarray
    y2: np.ndarray
    y0: np.ndarray
    proposals: np.ndarray
    start: int = 0

    @property
    def acceptance_rate(self) -> float:
        total = int(self.proposals.sum())
        return len(self.y1) / total if total else 0.0

    def __len__(self):
        return len(self.y1)


def stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed), counter=int(index) << 128))


def _term_centers(params, t0):
    c = packet_center(params, t0)
    # particle-1 and particle-2 packet centers of A(1)B'(2), A(2)B'(1), B(1)A'(2), B(2)A'(1)
    m1 = np.array([c, -c, -c, c])
    m2 = np.array([-c, c, c, -c])
    return m1, m2


def _acceptance(params, t0, y1, y2):
    x1, x2 = ballistic_x(params, t0)
    t1, t2, t3, t4 = psi_terms(params, x1, y1, x2, y2, t0)
    value = combine(params, t1, t2, t3, t4)
    bound = 4.0 * (np.abs(t1) ** 2 + np.abs(t2) ** 2 + np.abs(t3) ** 2 + np.abs(t4) ** 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.abs(value) ** 2 / bound
    return np.where(bound > 0, ratio, 0.0)


def sample_block(params: ExperimentParams, spec: SamplerSpec, start: int, count: int, t0: float = 0.0) -> SampleBatch:
    """Draw samples ``start .. start+count-1`` of the stream defined by ``spec``."""
    if t0 < 0:
        raise ValueError("t0 must be >= 0")
    spec.check(params)
    gens = [stream(spec.seed, start + i) for i in range(count)]
    s = float(abs(complex_width(params, t0)))
    m1, m2 = _term_centers(params, t0)

    y0 = np.full(count, float(spec.y0_mean))
    if spec.mode is SamplerMode.SPREAD_COM:
        y0 = np.array([g.normal(spec.y0_mean, spec.y0_sigma) for g in gens])

    y1 = np.full(count, np.nan)
    y2 = np.full(count, np.nan)
    proposals = np.zeros(count, dtype=np.int64)
    pending = np.arange(count)
    while len(pending):
        comp = np.empty((len(pending), _ROUND), dtype=np.int64)
        z = np.empty((len(pending), _ROUND, 2))
        u = np.empty((len(pending), _ROUND))
        for row, i in enumerate(pending):
            g = gens[i]
            if spec.mode is SamplerMode.UNCONSTRAINED:
                comp[row] = g.integers(0, 4, _ROUND)
            else:
                comp[row] = np.minimum(np.searchsorted(_cum_weights(m1, m2, y0[i], s), g.random(_ROUND), side="right"), 3)
            z[row] = g.standard_normal((_ROUND, 2))
            u[row] = g.random(_ROUND)
        if spec.mode is SamplerMode.UNCONSTRAINED:
            c1 = m1[comp] + s * z[..., 0]
            c2 = m2[comp] + s * z[..., 1]
        else:
            yy0 = y0[pending][:, None]
            mu = 0.5 * (m1[comp] - m2[comp]) + yy0
            c1 = mu + (s / math.sqrt(2.0)) * z[..., 0]
            c2 = 2.0 * yy0 - c1
        hit = u < _acceptance(params, t0, c1, c2)
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        rows = np.flatnonzero(any_hit)
        done = pending[rows]
        y1[done] = c1[rows, first[rows]]
        y2[done] = c2[rows, first[rows]]
        proposals[done] += first[rows] + 1
        proposals[pending[~any_hit]] += _ROUND
        pending = pending[~any_hit]
        over = pending[proposals[pending] > spec.max_rejects]
        if len(over):
            rate = (count - len(pending)) / max(int(proposals.sum()), 1)
            raise RejectionOverflow(
                f"sample {start + int(over[0])} exceeded {spec.max_rejects} rejections "
                f"(running acceptance rate {rate:.3g})",
                acceptance_rate=rate,
            )
    return SampleBatch(y1, y2, y0, proposals, start)


def _cum_weights(m1, m2, y0, s):
    w = np.exp(-((m1 + m2 - 2.0 * y0) ** 2) / (4.0 * s * s))
    cw = np.cumsum(w)
    return cw / cw[-1]


def sample_pair(params: ExperimentParams, spec: SamplerSpec, t0: float = 0.0, index: int = 0) -> PairConfiguration:
    batch = sample_block(params, spec, index, 1, t0)
    x1, x2 = ballistic_x(params, t0)
    return PairConfiguration(float(x1), float(batch.y1[0]), float(x2), float(batch.y2[0]), t0)


def conditional_density(params: ExperimentParams, y1, y0: float = 0.0, t0: float = 0.0):
    """Unnormalized Born density along the line y1 + y2 = 2 y0."""
    x1, x2 = ballistic_x(params, t0)
    return np.abs(psi(params, x1, y1, x2, 2.0 * y0 - np.asarray(y1), t0)) ** 2
