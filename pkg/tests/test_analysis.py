import json
import math

import numpy as np
import pytest
from scipy.stats import chi2, norm

from vogellab.analysis import (
    DEGENERATE_Z,
    STATUS_CLASSICAL,
    STATUS_INCONCLUSIVE,
    STATUS_NONCLASSICAL,
    CharacteristicCurve,
    VarianceCheck,
    VogelVerdict,
    build_report,
    default_nu_grid,
    empirical_char_fn,
    estimate_eta,
    estimation_error,
    min_samples,
    sample_variance,
    summarize,
    targeted_point,
    validate_report,
    variance_check,
    verdict_status,
    vogel_test,
    write_report,
)
from vogellab.homodyne import QuadratureDataset, Units, UnitsError, sample_quadratures
from vogellab.states import make_diosi_state, make_photon_vacuum_mixture, make_vacuum, nu_opt
from vogellab.summation import central_moments, pairwise_sum


@pytest.fixture(scope="module")
def mixture_half():
    return sample_quadratures(make_photon_vacuum_mixture(0.5), 100_000, seed=1)


@pytest.fixture(scope="module")
def vacuum_data():
    return sample_quadratures(make_vacuum(), 200_000, seed=2)


def test_default_grid():
    """Default grid runs 0..12 in steps of 0.05."""
    grid = default_nu_grid()
    assert grid.size == 241
    assert grid[0] == 0.0
    assert grid[-1] == pytest.approx(12.0)


def test_estimation_error_values():
    """Error law sqrt((1 - |F|^2)/n)."""
    assert estimation_error(1.0, 50) == 0.0
    assert estimation_error(0.0, 100_000) == pytest.approx(0.0031623, rel=1e-4)
    assert estimation_error(0.5, 10_000) == pytest.approx(0.0086603, rel=1e-4)
    with pytest.raises(ValueError, match="magnitude"):
        estimation_error(1.5, 10)


def test_pairwise_sum_matches_fsum():
    """Chunked pairwise sums agree with exact summation and ignore thread count."""
    values = np.random.default_rng(0).normal(size=50_000)
    serial = pairwise_sum(values)
    assert serial == pytest.approx(math.fsum(values), abs=1e-9)
    assert pairwise_sum(values, threads=3) == serial
    with pytest.raises(ValueError, match="empty"):
        pairwise_sum(np.array([]))


def test_central_moments_of_constant():
    """Constant input has zero spread."""
    mean, m2, m4 = central_moments(np.full(1000, 2.5))
    assert mean == 2.5
    assert m2 == 0.0
    assert m4 == 0.0


def test_char_fn_of_zero_samples_is_one():
    """e^(i nu 0) = 1 at every nu, with zero error."""
    data = QuadratureDataset(np.zeros(10))
    curve = empirical_char_fn(data, [0.0, 1.0, 7.5])
    assert np.all(curve.estimates == 1.0)
    assert np.all(curve.std_errors == 0.0)


def test_char_fn_input_checks():
    """Units, sample count and grid are validated."""
    with pytest.raises(UnitsError):
        empirical_char_fn(QuadratureDataset(np.zeros(10), Units.RAW), [1.0])
    with pytest.raises(ValueError, match="at least 2"):
        empirical_char_fn(QuadratureDataset(np.zeros(1)), [1.0])
    with pytest.raises(ValueError, match="empty"):
        empirical_char_fn(QuadratureDataset(np.zeros(10)), [])
    with pytest.raises(ValueError, match="non-negative"):
        empirical_char_fn(QuadratureDataset(np.zeros(10)), [-1.0])


def test_vacuum_estimate_at_four(vacuum_data):
    """|F(4)| of vacuum data sits near e^-2."""
    curve = empirical_char_fn(vacuum_data, [4.0])
    assert abs(abs(curve.estimates[0]) - math.exp(-2.0)) < 4.0 * curve.std_errors[0]


def test_estimates_independent_of_grid(mixture_half):
    """Estimates at shared nu values do not depend on the rest of the grid."""
    wide = empirical_char_fn(mixture_half, [0.0, 1.0, 2.0, 3.0])
    narrow = empirical_char_fn(mixture_half, [2.0])
    assert wide.estimates[2] == narrow.estimates[0]


def test_estimates_independent_of_threads(mixture_half):
    """Parallel grid evaluation gives identical numbers."""
    grid = [0.5, 2.0, 4.9]
    serial = empirical_char_fn(mixture_half, grid, threads=1)
    parallel = empirical_char_fn(mixture_half, grid, threads=4)
    assert np.array_equal(serial.estimates, parallel.estimates)


def test_vogel_test_detects_mixture(mixture_half):
    """mixture(0.5) at n = 1e5 is flagged near nu_opt."""
    verdict = vogel_test(empirical_char_fn(mixture_half, default_nu_grid()), k=3)
    assert verdict.nonclassical
    assert verdict.best_nu == pytest.approx(nu_opt(0.5), abs=0.6)
    assert verdict.excess == pytest.approx(math.exp(-3.0), abs=0.015)
    assert verdict.significance > 8.0


def test_vogel_test_vacuum_not_flagged(vacuum_data):
    """Vacuum saturates the bound and is not flagged."""
    verdict = vogel_test(empirical_char_fn(vacuum_data, default_nu_grid()), k=3)
    assert not verdict.nonclassical


def test_vogel_test_diosi_not_flagged():
    """The Diosi state is nonclassical but invisible to the Vogel test."""
    data = sample_quadratures(make_diosi_state(30), 200_000, seed=4)
    verdict = vogel_test(empirical_char_fn(data, default_nu_grid()), k=3)
    assert not verdict.nonclassical


def test_vogel_test_ties_prefer_smaller_nu():
    """Equal significance at two points picks the smaller nu."""
    # The vacuum bound underflows to 0 here, so every excess is exactly 0.01
    grid = np.array([100.0, 110.0, 120.0])
    estimates = np.full(3, 0.01, dtype=complex)
    curve = CharacteristicCurve(grid, estimates, np.full(3, 0.01), 1000)
    verdict = vogel_test(curve, k=1)
    assert verdict.best_nu == 100.0
    assert verdict.nonclassical


def test_vogel_test_requires_positive_k(mixture_half):
    """k must be positive."""
    curve = empirical_char_fn(mixture_half, [1.0])
    with pytest.raises(ValueError, match="k"):
        vogel_test(curve, k=0)


def test_targeted_point(mixture_half):
    """Single-frequency check at nu_opt reports theory and vacuum values."""
    point = targeted_point(mixture_half, 0.5)
    assert point.nu == pytest.approx(math.sqrt(24.0))
    assert point.theory_abs == pytest.approx(2.0 * math.exp(-3.0))
    assert point.vacuum == pytest.approx(math.exp(-3.0))
    assert point.significance > 8.0
    assert targeted_point(mixture_half, 0.0) is None


def test_min_samples_unit_efficiency():
    """eta = 1, k = 1 needs 12 samples."""
    plan = min_samples(1.0, 1)
    assert plan.n_min == 12


def test_min_samples_low_efficiency():
    """eta = 0.2 needs about a million samples."""
    assert min_samples(0.2, 1).n_min == pytest.approx(1.02e6, rel=0.02)


def test_min_samples_k_squared_scaling():
    """Doubling k quadruples the requirement."""
    base = min_samples(0.5, 1).n_min
    assert abs(min_samples(0.5, 2).n_min - 4 * base) <= 4


def test_min_samples_monotone_and_convex():
    """n_min falls with eta; log n_min is convex over the low-efficiency range."""
    etas = [round(0.1 * i, 12) for i in range(1, 11)]
    counts = [min_samples(eta, 1).n_min for eta in etas]
    assert all(a > b for a, b in zip(counts, counts[1:]))
    logs = np.log(counts[:6])
    assert np.all(np.diff(logs, 2) > 0.0)


def test_min_samples_domain():
    """eta must be positive; tiny eta overflows."""
    with pytest.raises(ValueError):
        min_samples(0.0, 1)
    with pytest.raises(OverflowError):
        min_samples(1e-3, 1)


def test_histogram_matches_vacuum_marginal(vacuum_data):
    """Binned vacuum data fits the Gaussian marginal."""
    summary = summarize(vacuum_data, 81, 2.0)
    cdf = norm(0.0, 0.5).cdf(summary.edges)
    expected = vacuum_data.count * np.diff(cdf)
    statistic = float(np.sum((summary.counts - expected) ** 2 / expected))
    assert chi2.sf(statistic, df=80) > 0.01
    assert summary.counts.sum() + summary.underflow + summary.overflow == vacuum_data.count
    assert summary.variance == pytest.approx(0.25, abs=3e-3)


def test_histogram_single_photon_dip():
    """eta = 1 marginal has a node at the origin."""
    data = sample_quadratures(make_photon_vacuum_mixture(1.0), 100_000, seed=5)
    summary = summarize(data, 81, 2.0)
    assert summary.counts[40] < 0.2 * summary.counts.max()


def test_histogram_all_overflow():
    """Samples outside the range land in the overflow fields."""
    summary = summarize(QuadratureDataset(np.full(50, 5.0)), 10, 2.0)
    assert summary.counts.sum() == 0
    assert summary.overflow == 50
    assert summary.underflow == 0


def test_histogram_checks():
    """Raw units and too few bins are rejected."""
    with pytest.raises(UnitsError):
        summarize(QuadratureDataset(np.zeros(5), Units.RAW), 10, 2.0)
    with pytest.raises(ValueError, match="bins"):
        summarize(QuadratureDataset(np.zeros(5)), 1, 2.0)


def test_variance_check():
    """True hypothesis is consistent; vacuum hypothesis is far off."""
    data = sample_quadratures(make_photon_vacuum_mixture(0.61), 100_000, seed=6)
    assert abs(variance_check(data, 0.61).z) < 3.0
    assert variance_check(data, 0.0).z > 50.0


def test_variance_check_constant_data():
    """Zero spread gives the degenerate sentinel."""
    check = variance_check(QuadratureDataset(np.zeros(200)), 0.0)
    assert check.degenerate
    assert check.z == DEGENERATE_Z


def test_variance_needs_samples():
    """Fewer than 100 samples is refused."""
    with pytest.raises(ValueError, match="at least 100"):
        sample_variance(QuadratureDataset(np.zeros(50)))


def test_estimate_eta(vacuum_data):
    """Variance inversion recovers eta."""
    assert estimate_eta(vacuum_data) == pytest.approx(0.0, abs=0.01)
    low = sample_quadratures(make_photon_vacuum_mixture(0.19), 100_000, seed=7)
    assert estimate_eta(low) == pytest.approx(0.19, abs=0.015)
    full = sample_quadratures(make_photon_vacuum_mixture(1.0), 100_000, seed=8)
    assert estimate_eta(full) == pytest.approx(1.0, abs=0.012)


def test_pooled_mixtures_are_nonclassical():
    """Pooling mixture(0.4) and mixture(0.6) behaves like mixture(0.5)."""
    a = sample_quadratures(make_photon_vacuum_mixture(0.4), 50_000, seed=9)
    b = sample_quadratures(make_photon_vacuum_mixture(0.6), 50_000, seed=10)
    pooled = QuadratureDataset.concatenate([a, b])
    verdict = vogel_test(empirical_char_fn(pooled, default_nu_grid()), k=3)
    assert verdict.nonclassical
    assert estimate_eta(pooled) == pytest.approx(0.5, abs=0.011)


def _verdict(fired):
    return VogelVerdict(
        nonclassical=fired, best_nu=5.0, excess=0.001, significance=1.0, k_required=3.0
    )


def test_verdict_status_tiers():
    """Fired, underpowered and classical-consistent readings."""
    loud = VarianceCheck(z=60.0, variance=0.35, standard_error=0.0015, degenerate=False)
    quiet = VarianceCheck(z=0.4, variance=0.25, standard_error=0.001, degenerate=False)
    flat = VarianceCheck(z=DEGENERATE_Z, variance=0.0, standard_error=0.0, degenerate=True)

    assert verdict_status(_verdict(True), quiet, 100_000, 0.0) == STATUS_NONCLASSICAL
    assert verdict_status(_verdict(False), loud, 100_000, 0.19) == STATUS_INCONCLUSIVE
    assert verdict_status(_verdict(False), loud, 10**9, 0.19) == STATUS_CLASSICAL
    assert verdict_status(_verdict(False), quiet, 100_000, 0.01) == STATUS_CLASSICAL
    assert verdict_status(_verdict(False), flat, 100_000, 0.0) == STATUS_CLASSICAL


def test_report_structure(mixture_half, tmp_path):
    """Report carries every schema field and writes as strict JSON."""
    curve = empirical_char_fn(mixture_half, default_nu_grid())
    verdict = vogel_test(curve, 3)
    report = build_report(
        data=mixture_half,
        inputs=[dict(mixture_half.meta)],
        curve=curve,
        verdict=verdict,
        manifest={"command": "analyze"},
    )
    assert report["verdict"]["status"] == STATUS_NONCLASSICAL
    assert report["n"] == 100_000
    assert len(report["curve"]) == 241
    assert report["targeted"]["nu_opt"] == pytest.approx(nu_opt(report["estimated_eta"]))
    assert 0.0 < report["verdict"]["abs_squared_bias"] < 1e-4

    path = tmp_path / "report.json"
    write_report(path, report)
    loaded = json.loads(path.read_text())
    assert loaded["verdict"]["best_nu"] == report["verdict"]["best_nu"]
    assert loaded["curve"][0]["sigma"] == 0.0


def test_report_for_underpowered_run():
    """eta = 0.19 at n = 1e5 is inconclusive and quotes the sample requirement."""
    data = sample_quadratures(make_photon_vacuum_mixture(0.19), 100_000, seed=11)
    curve = empirical_char_fn(data, default_nu_grid())
    report = build_report(
        data=data, inputs=[], curve=curve, verdict=vogel_test(curve, 3), manifest={}
    )
    assert report["verdict"]["status"] == STATUS_INCONCLUSIVE
    assert report["planning"]["k"] == 3.0
    assert report["planning"]["n_min"] > 100_000
    assert report["targeted"]["significance"] < 3.0


def test_report_for_vacuum(vacuum_data):
    """Vacuum data reads as classical-consistent with no targeted point."""
    curve = empirical_char_fn(vacuum_data, default_nu_grid())
    report = build_report(
        data=vacuum_data, inputs=[], curve=curve, verdict=vogel_test(curve, 3), manifest={}
    )
    assert report["verdict"]["status"] == STATUS_CLASSICAL
    if report["estimated_eta"] == 0.0:
        assert report["targeted"] is None
        assert report["planning"] is None


def test_validate_report_rejects_extra_fields(mixture_half):
    """Unknown report keys fail schema validation."""
    curve = empirical_char_fn(mixture_half, [1.0, 2.0])
    report = build_report(
        data=mixture_half, inputs=[], curve=curve, verdict=vogel_test(curve, 3), manifest={}
    )
    report["verdict"]["extra"] = 1
    with pytest.raises(ValueError, match="extra"):
        validate_report(report)


def test_write_report_replaces_infinity(tmp_path):
    """Non-finite numbers are written as null."""
    write_report(tmp_path / "r.json", {"significance": math.inf, "nested": [math.nan, 1.0]})
    loaded = json.loads((tmp_path / "r.json").read_text())
    assert loaded == {"significance": None, "nested": [None, 1.0]}


def test_write_report_floats_round_trip_exactly(mixture_half, tmp_path):
    """Every number read back from the report is the identical double."""
    curve = empirical_char_fn(mixture_half, [0.5, 2.0, 4.9])
    report = build_report(
        data=mixture_half, inputs=[], curve=curve, verdict=vogel_test(curve, 3), manifest={}
    )
    write_report(tmp_path / "r.json", report)
    loaded = json.loads((tmp_path / "r.json").read_text())

    assert loaded["estimated_eta"] == report["estimated_eta"]
    assert loaded["variance"]["sample_variance"] == report["variance"]["sample_variance"]
    for written, point in zip(loaded["curve"], report["curve"]):
        assert written["re"] == point["re"]
        assert written["sigma"] == point["sigma"]
