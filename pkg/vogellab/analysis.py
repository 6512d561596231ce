"""Statistical analysis of quadrature records.

This module handles:
- Empirical characteristic function with per-point standard errors
- The Vogel nonclassicality test and its three-tier reading
- Sample-size planning for the photon/vacuum mixture
- Histograms, variance z-scores and efficiency estimates
- Assembly and writing of the JSON analysis report
"""

import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .homodyne import QuadratureDataset, Units
from .states import char_fn, make_photon_vacuum_mixture, nu_opt, vacuum_char_fn, vogel_gap
from .summation import central_moments, pairwise_sum
from .version import __version__

DEFAULT_NU_MAX = 12.0
DEFAULT_NU_STEP = 0.05
DEFAULT_K_VERDICT = 3.0
DEFAULT_K_PLAN = 1.0

MIN_MOMENT_SAMPLES = 100

# Returned as z when the data has no spread at all
DEGENERATE_Z = -sys.float_info.max

STATUS_NONCLASSICAL = "nonclassical"
STATUS_INCONCLUSIVE = "inconclusive"
STATUS_CLASSICAL = "classical-consistent"


# =============================================================================
# Records
# =============================================================================


@dataclass(frozen=True, eq=False)
class CharacteristicCurve:
    """Empirical characteristic function on a grid of nu >= 0."""

    nu_grid: np.ndarray
    estimates: np.ndarray
    std_errors: np.ndarray
    n: int

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.estimates)

    @property
    def vacuum(self) -> np.ndarray:
        return vacuum_char_fn(self.nu_grid)

    @property
    def excess(self) -> np.ndarray:
        return self.magnitudes - self.vacuum


@dataclass(frozen=True)
class VogelVerdict:
    nonclassical: bool
    best_nu: float
    excess: float
    significance: float
    k_required: float


@dataclass(frozen=True)
class SampleSizePlan:
    eta: float
    k: float
    n_min: int


@dataclass(frozen=True, eq=False)
class HistogramSummary:
    edges: np.ndarray
    counts: np.ndarray
    underflow: int
    overflow: int
    mean: float
    variance: float
    n: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def densities(self) -> np.ndarray:
        return self.counts / (self.n * self.width)


@dataclass(frozen=True)
class VarianceCheck:
    z: float
    variance: float
    standard_error: float
    degenerate: bool


@dataclass(frozen=True)
class TargetedPoint:
    """Estimate at nu_opt of an assumed mixture efficiency."""

    eta: float
    nu: float
    estimate: complex
    std_error: float
    theory_abs: float
    vacuum: float

    @property
    def excess(self) -> float:
        return abs(self.estimate) - self.vacuum

    @property
    def significance(self) -> float:
        return _significance(self.excess, self.std_error)


# =============================================================================
# Characteristic function
# =============================================================================


def _check_grid(nu_grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(nu_grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ValueError("nu grid is empty")
    if not np.all(np.isfinite(grid)) or np.any(grid < 0.0):
        raise ValueError("nu grid values must be finite and non-negative")
    if np.any(np.diff(grid) < 0.0):
        raise ValueError("nu grid must be sorted in ascending order")
    return grid


def default_nu_grid(nu_max: float = DEFAULT_NU_MAX, nu_step: float = DEFAULT_NU_STEP) -> np.ndarray:
    """Uniform grid 0, step, ..., nu_max (241 points for the defaults)."""
    if not nu_step > 0.0 or not nu_max >= 0.0:
        raise ValueError(f"invalid grid: nu_max={nu_max}, nu_step={nu_step}")
    count = int(math.floor(nu_max / nu_step + 1e-9))
    return np.arange(count + 1) * nu_step


def estimation_error(magnitude: float, n: int) -> float:
    """Root-mean-square error of the empirical average: sqrt((1 - |F|^2) / n)."""
    if not 0.0 <= magnitude <= 1.0:
        raise ValueError(f"magnitude must lie in [0, 1], got {magnitude}")
    if n < 1:
        raise ValueError(f"sample count must be positive, got {n}")
    return math.sqrt((1.0 - magnitude * magnitude) / n)


def _point_estimate(samples: np.ndarray, nu: float) -> complex:
    n = samples.shape[0]
    re = pairwise_sum(samples, lambda block: np.cos(nu * block)) / n
    im = pairwise_sum(samples, lambda block: np.sin(nu * block)) / n
    return complex(re, im)


def empirical_char_fn(
    data: QuadratureDataset, nu_grid: Sequence[float], threads: int = 1
) -> CharacteristicCurve:
    """Average of exp(i nu X_j) at each grid point, with its standard error."""
    data.require_units(Units.NORMALIZED, "characteristic function estimation")
    if data.count < 2:
        raise ValueError(f"need at least 2 samples, got {data.count}")
    grid = _check_grid(nu_grid)

    samples = data.samples
    if threads > 1 and grid.size > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            estimates = list(pool.map(lambda nu: _point_estimate(samples, nu), grid))
    else:
        estimates = [_point_estimate(samples, nu) for nu in grid]

    estimates = np.array(estimates, dtype=complex)
    errors = np.array([estimation_error(min(abs(e), 1.0), data.count) for e in estimates])
    return CharacteristicCurve(grid, estimates, errors, data.count)


# =============================================================================
# Vogel test
# =============================================================================


def _significance(excess: float, sigma: float) -> float:
    if sigma > 0.0:
        return excess / sigma
    return math.inf if excess > 0.0 else 0.0


def vogel_test(curve: CharacteristicCurve, k: float = DEFAULT_K_VERDICT) -> VogelVerdict:
    """Scan the curve for |F| above the vacuum bound by at least k standard errors."""
    if not k > 0.0:
        raise ValueError(f"k must be positive, got {k}")
    excess = curve.excess
    significance = np.array(
        [_significance(e, s) for e, s in zip(excess.tolist(), curve.std_errors.tolist())]
    )
    # argmax returns the first maximum, i.e. the smallest nu on ties
    best = int(np.argmax(significance))
    best_excess = float(excess[best])
    best_sig = float(significance[best])
    return VogelVerdict(
        nonclassical=bool(best_sig >= k and best_excess > 0.0),
        best_nu=float(curve.nu_grid[best]),
        excess=best_excess,
        significance=best_sig,
        k_required=float(k),
    )


def targeted_point(data: QuadratureDataset, eta: float) -> Optional[TargetedPoint]:
    """Single-frequency check at nu_opt(eta); None when eta is zero."""
    if not eta > 0.0:
        return None
    nu = nu_opt(eta)
    curve = empirical_char_fn(data, [nu])
    return TargetedPoint(
        eta=eta,
        nu=nu,
        estimate=complex(curve.estimates[0]),
        std_error=float(curve.std_errors[0]),
        theory_abs=abs(char_fn(make_photon_vacuum_mixture(eta), nu)),
        vacuum=vacuum_char_fn(nu),
    )


# =============================================================================
# Planning
# =============================================================================


def min_samples(eta: float, k: float = DEFAULT_K_PLAN) -> SampleSizePlan:
    """Smallest n for which k standard errors at nu_opt fit inside the gap."""
    if not k > 0.0:
        raise ValueError(f"k must be positive, got {k}")
    nu = nu_opt(eta)
    gap = vogel_gap(eta)
    magnitude = abs(char_fn(make_photon_vacuum_mixture(eta), nu))
    if gap == 0.0:
        raise OverflowError(f"sample requirement for eta={eta} exceeds float range")
    required = k * k * (1.0 - magnitude * magnitude) / gap / gap
    if not math.isfinite(required):
        raise OverflowError(f"sample requirement for eta={eta} exceeds float range")
    return SampleSizePlan(eta=float(eta), k=float(k), n_min=max(1, math.ceil(required)))


# =============================================================================
# Summary statistics
# =============================================================================


def summarize(data: QuadratureDataset, bins: int, hist_range: float) -> HistogramSummary:
    """Equal-width histogram over [-hist_range, hist_range] plus moments."""
    data.require_units(Units.NORMALIZED, "histogram")
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    if not hist_range > 0.0:
        raise ValueError(f"histogram range must be positive, got {hist_range}")
    if data.count == 0:
        raise ValueError("dataset is empty")

    samples = data.samples
    counts, edges = np.histogram(samples, bins=bins, range=(-hist_range, hist_range))
    mean, m2, _ = central_moments(samples)
    return HistogramSummary(
        edges=edges,
        counts=counts,
        underflow=int(np.count_nonzero(samples < -hist_range)),
        overflow=int(np.count_nonzero(samples > hist_range)),
        mean=mean,
        variance=m2,
        n=data.count,
    )


def _moment_inputs(data: QuadratureDataset, operation: str) -> tuple[float, float, int]:
    data.require_units(Units.NORMALIZED, operation)
    n = data.count
    if n < MIN_MOMENT_SAMPLES:
        raise ValueError(f"{operation} needs at least {MIN_MOMENT_SAMPLES} samples, got {n}")
    _, m2, m4 = central_moments(data.samples)
    return m2, m4, n


def sample_variance(data: QuadratureDataset) -> float:
    m2, _, n = _moment_inputs(data, "variance")
    return m2 * n / (n - 1)


def variance_check(data: QuadratureDataset, eta_hypothesis: float) -> VarianceCheck:
    """z-score of the sample variance against 1/4 + eta/2."""
    m2, m4, n = _moment_inputs(data, "variance check")
    s2 = m2 * n / (n - 1)
    se = math.sqrt(max(m4 - m2 * m2, 0.0) / n)
    expected = 0.25 + eta_hypothesis / 2.0
    if se == 0.0:
        return VarianceCheck(z=DEGENERATE_Z, variance=s2, standard_error=0.0, degenerate=True)
    return VarianceCheck(z=(s2 - expected) / se, variance=s2, standard_error=se, degenerate=False)


def estimate_eta(data: QuadratureDataset) -> float:
    """Invert the variance law 1/4 + eta/2, clamped to [0, 1]."""
    return min(max(2.0 * (sample_variance(data) - 0.25), 0.0), 1.0)


def verdict_status(
    verdict: VogelVerdict,
    vacuum_check: VarianceCheck,
    n: int,
    eta_hat: float,
) -> str:
    """Three-tier reading of a verdict.

    A run that did not fire but whose variance clearly exceeds the vacuum, and
    that holds fewer samples than the mixture at eta_hat would need, is
    reported as inconclusive rather than classical.
    """
    if verdict.nonclassical:
        return STATUS_NONCLASSICAL
    if not vacuum_check.degenerate and vacuum_check.z >= verdict.k_required and eta_hat > 0.0:
        try:
            needed = min_samples(eta_hat, verdict.k_required).n_min
        except OverflowError:
            return STATUS_INCONCLUSIVE
        if n < needed:
            return STATUS_INCONCLUSIVE
    return STATUS_CLASSICAL


# =============================================================================
# Report
# =============================================================================


def _load_schema() -> Dict[str, List[str]]:
    text = resources.files("vogellab").joinpath("report_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(report: Dict[str, Any]) -> None:
    """Check field names against report_schema.json."""
    schema = _load_schema()

    def check(obj, section):
        if obj is None:
            return
        expected = set(schema[section])
        if set(obj) != expected:
            missing = sorted(expected - set(obj))
            extra = sorted(set(obj) - expected)
            raise ValueError(
                f"report section '{section}' mismatch: missing={missing} extra={extra}"
            )

    check(report, "report")
    check(report["variance"], "variance")
    check(report["verdict"], "verdict")
    check(report["targeted"], "targeted")
    check(report["planning"], "planning")
    for point in report["curve"]:
        check(point, "curve_point")


def build_report(
    *,
    data: QuadratureDataset,
    inputs: List[Dict[str, str]],
    curve: CharacteristicCurve,
    verdict: VogelVerdict,
    manifest: Dict[str, Any],
) -> Dict[str, Any]:
    eta_hat = estimate_eta(data)
    vacuum_check = variance_check(data, 0.0)
    estimated_check = variance_check(data, eta_hat)
    target = targeted_point(data, eta_hat)

    try:
        plan = min_samples(eta_hat, verdict.k_required) if eta_hat > 0.0 else None
    except OverflowError:
        plan = None

    best = int(np.searchsorted(curve.nu_grid, verdict.best_nu))
    best_abs = float(curve.magnitudes[best])

    report = {
        "tool_version": __version__,
        "manifest": manifest,
        "inputs": inputs,
        "n": data.count,
        "estimated_eta": eta_hat,
        "variance": {
            "sample_variance": vacuum_check.variance,
            "standard_error": vacuum_check.standard_error,
            "z_vacuum": vacuum_check.z,
            "z_estimated_eta": estimated_check.z,
            "degenerate": vacuum_check.degenerate,
        },
        "curve": [
            {
                "nu": float(nu),
                "re": float(est.real),
                "im": float(est.imag),
                "abs": float(abs(est)),
                "sigma": float(sigma),
                "vacuum": float(vac),
                "excess": float(exc),
            }
            for nu, est, sigma, vac, exc in zip(
                curve.nu_grid, curve.estimates, curve.std_errors, curve.vacuum, curve.excess
            )
        ],
        "verdict": {
            "status": verdict_status(verdict, vacuum_check, data.count, eta_hat),
            "nonclassical": verdict.nonclassical,
            "best_nu": verdict.best_nu,
            "excess": verdict.excess,
            "significance": verdict.significance,
            "k": verdict.k_required,
            # E|F|^2 exceeds |F|^2 by (1 - |F|^2)/n; reported, not corrected
            "abs_squared_bias": (1.0 - min(best_abs, 1.0) ** 2) / data.count,
        },
        "targeted": None
        if target is None
        else {
            "eta": target.eta,
            "nu_opt": target.nu,
            "abs": abs(target.estimate),
            "sigma": target.std_error,
            "theory_abs": target.theory_abs,
            "vacuum": target.vacuum,
            "excess": target.excess,
            "significance": target.significance,
        },
        "planning": None
        if plan is None
        else {"eta": plan.eta, "k": plan.k, "n_min": plan.n_min},
    }
    validate_report(report)
    return report


def _finite_or_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite_or_none(v) for v in obj]
    return obj


def write_report(path: Union[str, Path], report: Dict[str, Any]) -> None:
    """Write the report as strict JSON; non-finite numbers become null."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(_finite_or_none(report), f, indent=2, allow_nan=False)
        f.write("\n")
