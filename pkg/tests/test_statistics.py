"""Repeated-trial acceptance runs. Deselected by default; run with `pytest -m slow`."""

import numpy as np
import pytest

from vogellab.analysis import (
    default_nu_grid,
    empirical_char_fn,
    estimation_error,
    min_samples,
    sample_variance,
    vogel_test,
)
from vogellab.homodyne import sample_quadratures
from vogellab.states import char_fn, make_diosi_state, make_photon_vacuum_mixture, make_vacuum

pytestmark = pytest.mark.slow

TRIALS = 100


def test_error_law_across_repetitions():
    """RMS deviation of the estimate across runs follows sqrt((1 - |F|^2)/n)."""
    state = make_photon_vacuum_mixture(0.5)
    grid = [2.0, 4.0, 6.0]
    n = 10_000
    estimates = np.array(
        [
            empirical_char_fn(sample_quadratures(state, n, seed=1000 + trial), grid).estimates
            for trial in range(TRIALS)
        ]
    )
    truth = char_fn(state, np.array(grid))
    rms = np.sqrt(np.mean(np.abs(estimates - truth) ** 2, axis=0))
    for i in range(len(grid)):
        expected = estimation_error(abs(truth[i]), n)
        assert rms[i] == pytest.approx(expected, rel=0.2)


def test_vacuum_false_positive_rate():
    """k = 3 over the default grid flags at most 5 of 100 vacuum runs."""
    grid = default_nu_grid()
    flagged = sum(
        vogel_test(
            empirical_char_fn(sample_quadratures(make_vacuum(), 100_000, seed=2000 + t), grid), 3
        ).nonclassical
        for t in range(TRIALS)
    )
    assert flagged <= 5


@pytest.mark.parametrize("eta", [0.3, 0.5, 0.61, 1.0])
def test_detection_at_four_times_min_samples(eta):
    """With 4 * min_samples(eta, 3) samples the test fires in at least 95 of 100 runs."""
    n = 4 * min_samples(eta, 3).n_min
    grid = default_nu_grid(12.0, 0.25)
    state = make_photon_vacuum_mixture(eta)
    fired = sum(
        vogel_test(
            empirical_char_fn(sample_quadratures(state, n, seed=3000 + t, threads=4), grid), 3
        ).nonclassical
        for t in range(TRIALS)
    )
    assert fired >= 95


def test_diosi_not_flagged_at_one_million():
    """10^6 Diosi samples stay under the vacuum bound."""
    data = sample_quadratures(make_diosi_state(30), 1_000_000, seed=4000, threads=4)
    verdict = vogel_test(empirical_char_fn(data, default_nu_grid(), threads=4), 3)
    assert not verdict.nonclassical


@pytest.mark.parametrize("eta", [0.19, 0.28, 0.45, 0.58, 0.61])
def test_variance_law_on_efficiency_ladder(eta):
    """Sample variance at n = 1e5 is within 3 standard errors of 1/4 + eta/2."""
    data = sample_quadratures(make_photon_vacuum_mixture(eta), 100_000, seed=5000)
    m2 = 0.25 + eta / 2.0
    m4 = (1.0 - eta) * 3.0 / 16.0 + eta * 15.0 / 16.0
    standard_error = np.sqrt((m4 - m2 * m2) / data.count)
    assert abs(sample_variance(data) - m2) < 3.0 * standard_error
