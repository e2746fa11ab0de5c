import numpy as np
import pytest
from hypothesis import given, strategies as st

from twoslit.core_state import ExperimentParams, quadrature_halfwidth
from twoslit.detection import (
    Bins,
    DetectionEvent,
    Histogram,
    SelectiveFilter,
    Side,
    antidiagonal_cells,
    apply_selective_detection,
    bqm_ensemble,
    fringe_maxima,
    fringe_spacing,
    fringe_spacing_reference,
    marginal_chi2,
    selective_mask,
    sqm_conditional_s2_density,
    sqm_joint_grid,
    sqm_joint_probability,
    sqm_marginal_s1,
    sqm_same_side_probability,
    total_variation,
)
from twoslit.errors import NoFringesDetected
from twoslit.sampler import SamplerMode, SamplerSpec, conditional_density

P = ExperimentParams()
W = quadrature_halfwidth(P, P.arrival_time)

# Gauss-Legendre panels on a standalone copy of the wavefunction (tests/oracles.py)
ORACLE_BOX = 0.0012074484556824736  # P(y1 in [1, 1.2], y2 in [1, 1.2]) at defaults
ORACLE_SAME_SIDE = 0.2697795012182874


@pytest.fixture(scope="module")
def pinned():
    return bqm_ensemble(P, SamplerSpec(SamplerMode.PINNED_COM, seed=21), 1500)


def test_joint_probability_whole_window_is_one():
    assert sqm_joint_probability(P, -W, -W, 2 * W) == pytest.approx(1.0, abs=1e-6)


def test_joint_probability_oracle_value():
    assert sqm_joint_probability(P, 1.0, 1.0, 0.2) == pytest.approx(ORACLE_BOX, rel=1e-8)


def test_joint_probability_reflection():
    a = sqm_joint_probability(P, 0.4, -1.1, 0.3)
    b = sqm_joint_probability(P, -0.7, 0.8, 0.3)  # the same box mirrored through the origin
    assert a == pytest.approx(b, rel=1e-9)
    with pytest.raises(ValueError):
        sqm_joint_probability(P, 0, 0, 0.0)


def test_same_side_probability_oracle():
    assert sqm_same_side_probability(P) == pytest.approx(ORACLE_SAME_SIDE, rel=1e-8)


def test_joint_grid_sums_and_symmetry():
    b = Bins(-W, W, 20)
    g = sqm_joint_grid(P, b)
    assert g.sum() == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(g, g[::-1, ::-1], rtol=1e-8, atol=1e-14)
    assert np.all(g >= -1e-15)


def test_marginal_matches_grid_rows():
    b = Bins(-W, W, 20)
    assert np.allclose(sqm_marginal_s1(P, b), sqm_joint_grid(P, b).sum(axis=1), rtol=1e-7, atol=1e-12)


def test_pinned_events_are_mirrored(pinned):
    assert len(pinned.y_s1) + pinned.n_excluded == 1500
    assert np.max(np.abs(pinned.y_s1 + pinned.y_s2)) <= 1e-6 * P.sigma0
    assert np.sum(pinned.y_s1 * pinned.y_s2 > 0) == 0
    ev = pinned.events
    assert all(e.t_arrive == P.arrival_time for e in ev)
    assert pinned.side_correlation()["s1"] == 1.0


def test_unconstrained_marginal_chi2():
    ens = bqm_ensemble(P, SamplerSpec(SamplerMode.UNCONSTRAINED, seed=5), 5000)
    bins = Bins(-3.0, 3.0, 30)
    h = Histogram.from_values(ens.y_s1, bins)
    stat, pval, dof = marginal_chi2(np.append(h.counts, h.underflow + h.overflow), sqm_marginal_s1(P, bins))
    assert pval > 0.01
    assert dof >= 20


def test_workers_do_not_change_results():
    spec = SamplerSpec(SamplerMode.UNCONSTRAINED, seed=1)
    a = bqm_ensemble(P, spec, 2100, workers=1)
    b = bqm_ensemble(P, spec, 2100, workers=3)
    assert a.y_s1.tobytes() == b.y_s1.tobytes() and a.y_s2.tobytes() == b.y_s2.tobytes()
    assert np.array_equal(a.pair_id, np.arange(2100))


def test_selective_detection(pinned):
    assert apply_selective_detection([], SelectiveFilter("upper")) == ([], [])
    ev = pinned.events + [DetectionEvent(0.0, 0.0, P.arrival_time, -1)]
    up = apply_selective_detection(ev, SelectiveFilter(Side.UPPER))
    down = apply_selective_detection(ev, SelectiveFilter(Side.LOWER))
    assert up.ties == down.ties and len(up.ties) == 1
    assert sorted(e.pair_id for e in up.kept + down.kept + up.ties) == sorted(e.pair_id for e in ev)
    assert all(e.y_s2 < 0 for e in up.kept)
    assert all(e.y_s2 > 0 for e in down.kept)
    assert np.sum(selective_mask(pinned.y_s1, SelectiveFilter("upper"))) == len(up.kept)


def test_conditional_density():
    b = Bins(-W, W, 60)
    up = sqm_conditional_s2_density(P, SelectiveFilter("upper"), b)
    assert up.counts.sum() + up.underflow + up.overflow == pytest.approx(1.0, abs=1e-6)
    assert up.counts[b.centers > 0].sum() > 0.1
    down = sqm_conditional_s2_density(P, SelectiveFilter("lower"), b)
    assert np.allclose(down.counts, up.counts[::-1], rtol=1e-8, atol=1e-14)
    narrow = sqm_conditional_s2_density(P, SelectiveFilter("upper"), Bins(-2.0, 2.0, 40))
    assert narrow.counts.sum() + narrow.underflow + narrow.overflow == pytest.approx(1.0, abs=1e-6)
    assert narrow.underflow > 0 and narrow.overflow > 0


def _density_hist(p, bins, t):
    d = conditional_density(p, bins.centers, 0.0, t) * bins.width
    return Histogram(bins.lo, bins.hi, bins.nbins, d, float(d.sum()))


def test_fringe_spacing_scales_inversely_with_slit_offset():
    s = []
    for y in (4.0, 8.0):
        p = ExperimentParams(slit_y=y, ky=0.0, screen_dist=220.0)
        s.append(fringe_spacing(_density_hist(p, Bins(-60, 60, 1200), p.arrival_time)))
    assert s[1] / s[0] == pytest.approx(0.5, rel=0.1)


def test_fringe_spacing_synthetic_counts():
    b = Bins(0.0, 10.0, 200)
    lam = 1.3
    counts = np.round(2000 * np.cos(np.pi * b.centers / lam) ** 2 + 50).astype(np.int64)
    h = Histogram(b.lo, b.hi, b.nbins, counts, int(counts.sum()))
    assert fringe_spacing(h) == pytest.approx(lam, rel=0.01)
    assert len(fringe_maxima(h)) == 7


def test_flat_histogram_has_no_fringes():
    h = Histogram(0.0, 1.0, 50, np.full(50, 100, dtype=np.int64), 5000)
    with pytest.raises(NoFringesDetected):
        fringe_spacing(h)
    x = np.linspace(-3, 3, 120)
    for seed in range(20):
        rng = np.random.default_rng(seed)
        noisy = Histogram(0.0, 1.0, 120, rng.poisson(1000, 120), 120_000)
        with pytest.raises(NoFringesDetected):
            fringe_spacing(noisy)
        hump = Histogram(-3.0, 3.0, 120, rng.poisson(180 * np.exp(-x**2 / 2)), 10_000)
        with pytest.raises(NoFringesDetected):
            fringe_spacing(hump)


def test_reference_spacing():
    assert fringe_spacing_reference(P, 0.2) == pytest.approx(np.pi * 0.2 / 2.0)


@given(st.lists(st.floats(-5, 5), max_size=50), st.lists(st.floats(-5, 5), max_size=50),
       st.lists(st.floats(-5, 5), max_size=50))
def test_histogram_merge_is_associative(a, b, c):
    bins = Bins(-3.0, 3.0, 12)
    ha, hb, hc = (Histogram.from_values(v, bins) for v in (a, b, c))
    left, right = ha.merge(hb).merge(hc), ha.merge(hb.merge(hc))
    assert np.array_equal(left.counts, right.counts) and left.total == right.total
    whole = Histogram.from_values(a + b + c, bins)
    assert np.array_equal(whole.counts, left.counts)
    assert whole.counts.sum() + whole.underflow + whole.overflow == whole.total


def test_histogram_validation():
    with pytest.raises(ValueError):
        Histogram(0.0, 1.0, 1, np.zeros(1), 0)
    with pytest.raises(ValueError):
        Histogram(1.0, 0.0, 2, np.zeros(2), 0)
    with pytest.raises(ValueError):
        Histogram.from_values([0.1], Bins(0, 1, 4)).merge(Histogram.from_values([0.1], Bins(0, 1, 5)))


def test_antidiagonal_mask():
    b = Bins(-1.0, 1.0, 4)
    m = antidiagonal_cells(b, b)
    assert m[0, 3] and m[3, 0] and m[1, 2]
    assert not m[0, 0] and not m[3, 3]


def test_statistics_helpers():
    assert total_variation([0.5, 0.5], [1.0, 0.0]) == 0.5
    probs = np.full(10, 0.1)
    stat, pval, dof = marginal_chi2(np.full(10, 100), probs)
    assert stat == pytest.approx(0.0, abs=1e-12) and pval == pytest.approx(1.0) and dof == 9


def test_conditional_density_with_negligible_tail_cells():
    # outer bins carry ~1e-14 probability; the absolute floor must accept them
    p = ExperimentParams(slit_y=1.0, ky=0.0, screen_dist=40.0)
    h = sqm_conditional_s2_density(p, SelectiveFilter("upper"), Bins(-12.0, 12.0, 96))
    assert h.counts.sum() + h.underflow + h.overflow == pytest.approx(1.0, abs=1e-6)
    assert h.counts[0] < 1e-12
