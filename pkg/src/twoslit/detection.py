"""Screen statistics for both theories and the selective-detection filter.

SQM side: quadrature of the normalized |psi|^2 on the screen slice.  BQM side:
Born-sampled pairs integrated to the common arrival time and binned.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats
from scipy.signal import find_peaks

from .core_state import ExperimentParams, normalize, psi, quadrature_halfwidth
from .errors import NoFringesDetected
from .guidance import ballistic_x
from .integrator import STATUS_NAMES, IntegratorSettings, integrate_batch
from .quadrature import integrate_2d
from .sampler import SamplerSpec, sample_block

#: pairs per work unit; fixed so results never depend on the worker count
BLOCK_SIZE = 1024


class Side(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class SelectiveFilter:
    keep_side_s1: Side = Side.UPPER

    def __post_init__(self):
        object.__setattr__(self, "keep_side_s1", Side(self.keep_side_s1))

    def mirrored(self) -> "SelectiveFilter":
        return SelectiveFilter(Side.LOWER if self.keep_side_s1 is Side.UPPER else Side.UPPER)


@dataclass(frozen=True)
class DetectionEvent:
    y_s1: float
    y_s2: float
    t_arrive: float
    pair_id: int


class Bins(NamedTuple):
    lo: float
    hi: float
    nbins: int

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.nbins

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.nbins + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])


@dataclass
class Histogram:
    """Counts (or probability masses) over ``nbins`` equal bins on [lo, hi].

    ``total`` counts every entry, in range or not; ``underflow`` and
    ``overflow`` hold the out-of-range part.
    """

    lo: float
    hi: float
    nbins: int
    counts: np.ndarray
    total: float
    underflow: float = 0
    overflow: float = 0

    def __post_init__(self):
        if self.nbins < 2:
            raise ValueError("a histogram needs at least two bins")
        if not self.hi > self.lo:
            raise ValueError("hi must exceed lo")
        self.counts = np.asarray(self.counts)
        if self.counts.shape != (self.nbins,):
            raise ValueError("counts length must equal nbins")

    @classmethod
    def from_values(cls, values, bins: Bins) -> "Histogram":
        v = np.asarray(values, dtype=float)
        counts, _ = np.histogram(v, bins=bins.nbins, range=(bins.lo, bins.hi))
        return cls(bins.lo, bins.hi, bins.nbins, counts.astype(np.int64), len(v),
                   int(np.sum(v < bins.lo)), int(np.sum(v > bins.hi)))

    @property
    def bins(self) -> Bins:
        return Bins(self.lo, self.hi, self.nbins)

    @property
    def width(self) -> float:
        return self.bins.width

    @property
    def centers(self) -> np.ndarray:
        return self.bins.centers

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.total * self.width) if self.total else np.zeros(self.nbins)

    def merge(self, other: "Histogram") -> "Histogram":
        if self.bins != other.bins:
            raise ValueError("cannot merge histograms with different bins")
        return Histogram(self.lo, self.hi, self.nbins, self.counts + other.counts, self.total + other.total,
                         self.underflow + other.underflow, self.overflow + other.overflow)

    def rows(self):
        e = self.bins.edges
        for lo, hi, c, d in zip(e[:-1], e[1:], self.counts, self.density):
            yield lo, hi, c, d


# ---------------------------------------------------------------------------
# SQM


def screen_slice(params: ExperimentParams, t: float | None = None):
    """``(t, x1, x2)`` of the screen slice; defaults to the ballistic arrival time."""
    if t is None:
        t = params.arrival_time
    x1, x2 = ballistic_x(params, t)
    return t, float(x1), float(x2)


def _normed_density(params, t):
    t, x1, x2 = screen_slice(params, t)
    norm = normalize(params, x1, x2, t)

    def density(y1, y2):
        return np.abs(psi(params, x1, y1, x2, y2, t, norm)) ** 2

    return density, quadrature_halfwidth(params, t)


def sqm_joint_probability(params: ExperimentParams, yM: float, yN: float, delta: float, t: float | None = None) -> float:
    """Probability of a simultaneous hit in [yM, yM+delta] on S1 and [yN, yN+delta] on S2."""
    if not delta > 0:
        raise ValueError("delta must be > 0")
    density, _ = _normed_density(params, t)
    est, _ = integrate_2d(density, (yM, yN), (yM + delta, yN + delta))
    return float(est)


def _cell_integrand(density, b1: Bins, b2: Bins):
    e1, e2 = b1.edges[:-1], b2.edges[:-1]
    w1, w2 = b1.width, b2.width

    def f(u, v):
        y1 = e1[None, :, None] + u[:, None, None] * w1
        y2 = e2[None, None, :] + v[:, None, None] * w2
        return (density(y1, y2) * (w1 * w2)).reshape(len(u), -1)

    return f


def sqm_joint_grid(params: ExperimentParams, bins1: Bins, bins2: Bins | None = None, t: float | None = None) -> np.ndarray:
    """Cell probabilities, shape ``(bins1.nbins, bins2.nbins)``; rows index S1."""
    bins2 = bins1 if bins2 is None else bins2
    density, _ = _normed_density(params, t)
    est, _ = integrate_2d(_cell_integrand(density, bins1, bins2), (0.0, 0.0), (1.0, 1.0))
    return est.reshape(bins1.nbins, bins2.nbins)


def sqm_marginal_s1(params: ExperimentParams, bins: Bins, t: float | None = None) -> np.ndarray:
    """Probability of each S1 bin, integrated over the whole S2 window."""
    density, w = _normed_density(params, t)
    e, width = bins.edges[:-1], bins.width

    def f(u, y2):
        y1 = e[None, :] + u[:, None] * width
        return density(y1, y2[:, None]) * width

    est, _ = integrate_2d(f, (0.0, -w), (1.0, w))
    return est


def sqm_quadrant_mass(params: ExperimentParams, s1: Side, s2: Side, t: float | None = None) -> float:
    density, w = _normed_density(params, t)
    lo1, hi1 = (0.0, w) if Side(s1) is Side.UPPER else (-w, 0.0)
    lo2, hi2 = (0.0, w) if Side(s2) is Side.UPPER else (-w, 0.0)
    est, _ = integrate_2d(density, (lo1, lo2), (hi1, hi2))
    return float(est)


def sqm_same_side_probability(params: ExperimentParams, t: float | None = None) -> float:
    return (sqm_quadrant_mass(params, Side.UPPER, Side.UPPER, t)
            + sqm_quadrant_mass(params, Side.LOWER, Side.LOWER, t))


def sqm_conditional_s2_density(params: ExperimentParams, condition: SelectiveFilter, bins: Bins,
                               t: float | None = None) -> Histogram:
    """SQM distribution of the S2 hit given the S1 hit lies on the filter's side.

    ``counts`` holds bin probabilities normalized by the conditional mass over
    the full quadrature window, so ``density`` integrates to one when the bins
    cover that window.
    """
    density, w = _normed_density(params, t)
    lo1, hi1 = (0.0, w) if condition.keep_side_s1 is Side.UPPER else (-w, 0.0)
    side_mass, _ = integrate_2d(density, (lo1, -w), (hi1, w))
    e, width = bins.edges[:-1], bins.width

    def f(y1, v):
        y2 = e[None, :] + v[:, None] * width
        return density(y1[:, None], y2) * width

    per_bin, _ = integrate_2d(f, (lo1, 0.0), (hi1, 1.0))
    under = over = 0.0
    if bins.lo > -w:
        under = float(integrate_2d(density, (lo1, -w), (hi1, bins.lo))[0])
    if bins.hi < w:
        over = float(integrate_2d(density, (lo1, bins.hi), (hi1, w))[0])
    side_mass = float(side_mass)
    return Histogram(bins.lo, bins.hi, bins.nbins, per_bin / side_mass, 1.0, under / side_mass, over / side_mass)


def antidiagonal_cells(b1: Bins, b2: Bins) -> np.ndarray:
    """Mask of grid cells whose closed area touches the line y1 = -y2."""
    e1, e2 = b1.edges, b2.edges
    lo1, hi1 = e1[:-1][:, None], e1[1:][:, None]
    lo2, hi2 = -e2[1:][None, :], -e2[:-1][None, :]
    return (lo1 <= hi2) & (lo2 <= hi1)


# ---------------------------------------------------------------------------
# BQM


@dataclass
class EnsembleResult:
    """Screen hits of the pairs that reached the screen, plus bookkeeping."""

    y_s1: np.ndarray
    y_s2: np.ndarray
    y1_start: np.ndarray
    y2_start: np.ndarray
    pair_id: np.ndarray
    t_arrive: float
    n_requested: int
    excluded: dict = field(default_factory=dict)
    proposals: int = 0

    @property
    def events(self) -> list[DetectionEvent]:
        return [DetectionEvent(float(a), float(b), self.t_arrive, int(i))
                for a, b, i in zip(self.y_s1, self.y_s2, self.pair_id)]

    @property
    def n_excluded(self) -> int:
        return int(sum(self.excluded.values()))

    @property
    def excluded_fraction(self) -> float:
        return self.n_excluded / self.n_requested if self.n_requested else 0.0

    @property
    def acceptance_rate(self) -> float:
        return (self.n_requested / self.proposals) if self.proposals else 0.0

    def side_correlation(self) -> dict:
        """How often each particle ends on the side of the axis it started on."""
        if len(self.y_s1) == 0:
            return {"s1": float("nan"), "s2": float("nan")}
        return {
            "s1": float(np.mean(np.sign(self.y1_start) == np.sign(self.y_s1))),
            "s2": float(np.mean(np.sign(self.y2_start) == np.sign(self.y_s2))),
        }


def _run_block(job):
    params, spec, settings, start, count = job
    batch = sample_block(params, spec, start, count)
    res = integrate_batch(params, batch.y1, batch.y2, 0.0, params.arrival_time, settings)
    return batch, res


def bqm_ensemble(params: ExperimentParams, spec: SamplerSpec, n_pairs: int,
                 settings: IntegratorSettings = IntegratorSettings(), workers: int = 1) -> EnsembleResult:
    """Sample ``n_pairs`` pairs, integrate each to the screen and collect the hits.

    Pairs lost to nodes or the step limit are dropped and tallied in ``excluded``.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    jobs = [(params, spec, settings, s, min(BLOCK_SIZE, n_pairs - s)) for s in range(0, n_pairs, BLOCK_SIZE)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    else:
        parts = [_run_block(j) for j in jobs]

    ys1, ys2, s1, s2, ids = [], [], [], [], []
    excluded = {}
    proposals = 0
    for batch, res in parts:
        keep = res.ok
        ys1.append(res.y1[keep])
        ys2.append(res.y2[keep])
        s1.append(batch.y1[keep])
        s2.append(batch.y2[keep])
        ids.append(batch.start + np.flatnonzero(keep))
        proposals += int(batch.proposals.sum())
        for code in np.unique(res.status[~keep]):
            name = STATUS_NAMES[int(code)]
            excluded[name] = excluded.get(name, 0) + int(np.sum(res.status == code))
    return EnsembleResult(np.concatenate(ys1), np.concatenate(ys2), np.concatenate(s1), np.concatenate(s2),
                          np.concatenate(ids), params.arrival_time, n_pairs, excluded, proposals)


class SelectionResult(NamedTuple):
    kept: list
    ties: list


def apply_selective_detection(events, flt: SelectiveFilter) -> SelectionResult:
    """Keep events whose S1 hit lies strictly on the filter's side; S1 hits at 0 are ties."""
    kept, ties = [], []
    upper = flt.keep_side_s1 is Side.UPPER
    for ev in events:
        if ev.y_s1 == 0.0:
            ties.append(ev)
        elif (ev.y_s1 > 0.0) == upper:
            kept.append(ev)
    return SelectionResult(kept, ties)


def selective_mask(y_s1, flt: SelectiveFilter) -> np.ndarray:
    """Array form of ``apply_selective_detection``."""
    y = np.asarray(y_s1)
    return y > 0.0 if flt.keep_side_s1 is Side.UPPER else y < 0.0


# ---------------------------------------------------------------------------
# fringes and comparison statistics


def fringe_spacing_reference(params: ExperimentParams, t: float) -> float:
    """pi hbar t / (Y m): the far-field single-particle fringe spacing lambda D / 2Y."""
    return math.pi * params.hbar * t / (params.slit_y * params.mass)


def fringe_maxima(h: Histogram, n_sigma: float = 5.0, rel_floor: float = 1e-3) -> np.ndarray:
    """Positions of interior maxima separated from their neighbours by real valleys.

    Starting from all local maxima, adjacent pairs whose separating valley is
    shallower than the floor are merged (the lower one is dropped) until every
    remaining pair is separated by a significant dip.  For count histograms
    the floor is ``n_sigma`` Poisson deviations of the dip, sqrt(peak + valley);
    for probability masses it is ``rel_floor`` times the maximum.  A single
    smooth hump therefore yields one maximum, however noisy its top.  Positions
    are refined by a parabola through the peak bin and its neighbours.
    """
    y = np.asarray(h.counts, dtype=float)
    counts = np.issubdtype(np.asarray(h.counts).dtype, np.integer)
    peaks = list(find_peaks(y)[0])

    def floor(top, valley):
        if counts:
            return n_sigma * math.sqrt(max(top + valley, 1.0))
        return rel_floor * y.max()

    merged = True
    while merged and len(peaks) > 1:
        merged = False
        for i in range(len(peaks) - 1):
            a, b = peaks[i], peaks[i + 1]
            valley = y[a:b + 1].min()
            top = min(y[a], y[b])
            if top - valley < floor(top, valley):
                del peaks[i + 1 if y[b] <= y[a] else i]
                merged = True
                break
    if len(peaks) == 1:
        # a lone maximum still needs a dip on at least one side to count as a fringe
        p = peaks[0]
        dips = [y[p] - y[:p].min() if p else 0.0, y[p] - y[p + 1:].min() if p < len(y) - 1 else 0.0]
        if max(dips) < floor(y[p], y[p] - max(dips)):
            peaks = []
    peaks = np.array(peaks, dtype=int)
    if len(peaks) == 0:
        return np.array([])
    left, mid, right = y[peaks - 1], y[peaks], y[peaks + 1]
    curv = left - 2.0 * mid + right
    with np.errstate(invalid="ignore", divide="ignore"):
        shift = np.where(curv < 0, 0.5 * (left - right) / curv, 0.0)
    return h.centers[peaks] + np.clip(shift, -0.5, 0.5) * h.width


def fringe_spacing(h: Histogram, n_sigma: float = 5.0) -> float:
    """Mean distance between adjacent fringe maxima of ``h``."""
    pos = fringe_maxima(h, n_sigma)
    if len(pos) < 2:
        raise NoFringesDetected(f"found {len(pos)} fringe maxima; need at least 2")
    return float(np.mean(np.diff(pos)))


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p, float) - np.asarray(q, float))))


def marginal_chi2(observed, probs, min_expected: float = 5.0):
    """Pearson chi-square of binned counts against probabilities.

    The out-of-range remainder 1 - sum(probs) becomes one extra cell.  Adjacent
    cells are pooled left to right until every expected count reaches
    ``min_expected``.  Returns ``(statistic, p_value, dof)``.
    """
    obs = np.asarray(observed, dtype=float)
    p = np.asarray(probs, dtype=float)
    n = obs.sum()
    rest_p = max(1.0 - float(p.sum()), 0.0)
    exp = np.append(p, rest_p) * n
    obs = np.append(obs, 0.0) if len(obs) == len(p) else obs
    pooled_o, pooled_e = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(obs, exp):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            pooled_o.append(acc_o)
            pooled_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if pooled_e:
            pooled_o[-1] += acc_o
            pooled_e[-1] += acc_e
        else:
            pooled_o.append(acc_o)
            pooled_e.append(acc_e)
    o, e = np.array(pooled_o), np.array(pooled_e)
    e *= o.sum() / e.sum()
    res = stats.chisquare(o, e)
    return float(res.statistic), float(res.pvalue), len(o) - 1
