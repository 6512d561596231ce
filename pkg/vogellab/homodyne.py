"""Balanced homodyne detection simulator.

This module handles:
- DetectorConfig / QuadratureDataset dataclasses
- Exact two-stage Monte Carlo sampling of quadratures from Fock-diagonal states
- The semiclassical detector model (loss, electronic noise, shot-noise scaling)
- Calibration of raw photoelectron records against a vacuum reference
- Reading and writing the text dataset format
"""

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .states import FockDiagonalState, apply_loss, hermite_functions
from .summation import CHUNK_SIZE, central_moments, pairwise_mean
from .version import __version__

PHASE_POLICY = "unstabilized/irrelevant (phase-symmetric state)"

RNG_NAME = "numpy.random.Philox"

# Inverse-CDF tables for Fock levels >= 2
TABLE_HALF_WIDTH = 8.0
TABLE_POINTS = 2**14

# Calibration needs a vacuum record at least this long
MIN_VACUUM_REFERENCE = 1000

MAX_SEED = 2**64


class Units(Enum):
    NORMALIZED = "normalized"
    RAW = "raw_photoelectrons"


class UnitsError(ValueError):
    """Dataset units do not fit the requested operation."""


class CalibrationError(ValueError):
    """Vacuum reference cannot define a shot-noise scale."""


class DatasetFormatError(ValueError):
    """Dataset file is corrupt."""


def _check_seed(seed: int) -> int:
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= seed < MAX_SEED:
        raise ValueError(f"seed must be an integer in [0, 2^64), got {seed}")
    return int(seed)


def electronic_noise_from_electrons(electrons: float, lo_mean_count: float) -> float:
    """Convert amplifier noise in electrons per pulse to quadrature units.

    Shot noise of N0 photoelectrons corresponds to the vacuum standard
    deviation 1/2, so sigma_el = (electrons / sqrt(N0)) / 2.
    """
    if electrons < 0:
        raise ValueError(f"electronic noise must be non-negative, got {electrons}")
    if lo_mean_count <= 0:
        raise ValueError(f"lo_mean_count must be positive, got {lo_mean_count}")
    return (electrons / math.sqrt(lo_mean_count)) / 2.0


@dataclass(frozen=True, kw_only=True)
class DetectorConfig:
    """Semiclassical homodyne detector model."""

    efficiency: float = 1.0
    electronic_noise_sigma: float = 0.0
    lo_mean_count: float = 1e6  # N0, photoelectrons per LO pulse
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.efficiency) or not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if not math.isfinite(self.electronic_noise_sigma) or self.electronic_noise_sigma < 0.0:
            raise ValueError(
                f"electronic_noise_sigma must be non-negative, got {self.electronic_noise_sigma}"
            )
        if not math.isfinite(self.lo_mean_count) or self.lo_mean_count <= 0.0:
            raise ValueError(f"lo_mean_count must be positive, got {self.lo_mean_count}")
        _check_seed(self.seed)

    def config_hash(self) -> str:
        """Short digest identifying this parameter set."""
        canonical = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class QuadratureDataset:
    """Ordered quadrature record with units and provenance metadata."""

    samples: np.ndarray
    units: Units = Units.NORMALIZED
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float).reshape(-1)
        if not np.all(np.isfinite(samples)):
            raise ValueError("dataset samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "units", Units(self.units))
        object.__setattr__(self, "meta", {str(k): str(v) for k, v in self.meta.items()})

    @property
    def count(self) -> int:
        return int(self.samples.shape[0])

    def require_units(self, units: Units, operation: str) -> None:
        if self.units is not units:
            raise UnitsError(f"{operation} requires {units.value} data, got {self.units.value}")

    @classmethod
    def concatenate(cls, datasets: Sequence["QuadratureDataset"]) -> "QuadratureDataset":
        """Pool several records into one, in order, without reweighting."""
        if not datasets:
            raise ValueError("nothing to concatenate")
        units = datasets[0].units
        for ds in datasets[1:]:
            if ds.units is not units:
                raise UnitsError("cannot pool datasets with different units")
        if len(datasets) == 1:
            return datasets[0]
        meta = {
            "units": units.value,
            "count": str(sum(ds.count for ds in datasets)),
            "pooled_from": ";".join(ds.meta.get("state", "?") for ds in datasets),
            "pooled_counts": ";".join(str(ds.count) for ds in datasets),
            "phase_policy": "pooled marginals (phase mixture)",
        }
        return cls(np.concatenate([ds.samples for ds in datasets]), units, meta)


# =============================================================================
# Sampling
# =============================================================================


@lru_cache(maxsize=64)
def _inverse_cdf_table(level: int) -> tuple[np.ndarray, np.ndarray]:
    grid = np.linspace(-TABLE_HALF_WIDTH, TABLE_HALF_WIDTH, TABLE_POINTS)
    psi = hermite_functions(grid, level)[level]
    pdf = psi * psi
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    # Keep strictly increasing knots so interpolation is monotone
    keep = np.concatenate([[True], np.diff(cdf) > 0.0])
    return cdf[keep], grid[keep]


def _draw_level(rng: np.random.Generator, level: int, size: int) -> np.ndarray:
    if level == 0:
        return rng.normal(0.0, 0.5, size)
    if level == 1:
        # |psi_1|^2 ~ x^2 exp(-2x^2): x^2 is Gamma(3/2, rate 2)
        y = rng.gamma(1.5, 0.5, size)
        sign = rng.integers(0, 2, size) * 2 - 1
        return sign * np.sqrt(y)
    cdf, grid = _inverse_cdf_table(level)
    return np.interp(rng.random(size), cdf, grid)


def _draw_chunk(
    seed_seq: np.random.SeedSequence,
    cumulative: np.ndarray,
    top_level: int,
    size: int,
    noise_sigma: float,
) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    levels = np.minimum(np.searchsorted(cumulative, rng.random(size), side="right"), top_level)
    x = np.empty(size)
    for level in np.unique(levels):
        mask = levels == level
        x[mask] = _draw_level(rng, int(level), int(mask.sum()))
    if noise_sigma > 0.0:
        x += rng.normal(0.0, noise_sigma, size)
    return x


def _generate(
    state: FockDiagonalState,
    n: int,
    seed: int,
    noise_sigma: float = 0.0,
    threads: int = 1,
) -> np.ndarray:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"sample count must be a positive integer, got {n}")
    n = int(n)
    seed = _check_seed(seed)

    weights = state.probabilities
    cumulative = np.cumsum(weights) / weights.sum()
    top_level = int(np.flatnonzero(weights > 0.0)[-1])

    sizes = [min(CHUNK_SIZE, n - lo) for lo in range(0, n, CHUNK_SIZE)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def work(i):
        return _draw_chunk(children[i], cumulative, top_level, sizes[i], noise_sigma)

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, range(len(sizes))))
    else:
        chunks = [work(i) for i in range(len(sizes))]
    return np.concatenate(chunks)


def _base_meta(state: FockDiagonalState, n: int, seed: int) -> Dict[str, str]:
    return {
        "state": state.describe(),
        "count": str(n),
        "seed": str(seed),
        "phase_policy": PHASE_POLICY,
        "rng": f"{RNG_NAME} (numpy {np.__version__}, chunk {CHUNK_SIZE})",
        "generator": f"vogellab {__version__}",
    }


def sample_quadratures(
    state: FockDiagonalState, n: int, seed: int, threads: int = 1
) -> QuadratureDataset:
    """Draw n i.i.d. quadratures from the marginal distribution of state."""
    samples = _generate(state, n, seed, threads=threads)
    meta = {"units": Units.NORMALIZED.value, **_base_meta(state, n, seed)}
    return QuadratureDataset(samples, Units.NORMALIZED, meta)


def simulate_homodyne(
    state: FockDiagonalState,
    det: DetectorConfig,
    n: int,
    units: Union[Units, str] = Units.NORMALIZED,
    threads: int = 1,
) -> QuadratureDataset:
    """Record n pulses of a lossy, noisy balanced homodyne detector."""
    if not isinstance(det, DetectorConfig):
        raise ValueError(f"invalid detector config: {det!r}")
    units = Units(units)

    detected = apply_loss(state, det.efficiency)
    samples = _generate(detected, n, det.seed, det.electronic_noise_sigma, threads)
    if units is Units.RAW:
        # Vacuum variance 1/4 maps to shot-noise mean square N0
        samples = samples * (2.0 * math.sqrt(det.lo_mean_count))

    meta = {
        "units": units.value,
        **_base_meta(state, n, det.seed),
        "detected_state": detected.describe(),
        "efficiency": repr(det.efficiency),
        "electronic_noise_sigma": repr(det.electronic_noise_sigma),
        "lo_mean_count": repr(det.lo_mean_count),
        "detector_hash": det.config_hash(),
    }
    return QuadratureDataset(samples, units, meta)


# =============================================================================
# Calibration
# =============================================================================


def calibrate(raw: QuadratureDataset, vacuum_ref: QuadratureDataset) -> QuadratureDataset:
    """Scale a raw record so the vacuum reference has variance 1/4.

    The signal mean is not subtracted; it is reported in the metadata.
    """
    raw.require_units(Units.RAW, "calibration")
    vacuum_ref.require_units(Units.RAW, "calibration")
    if vacuum_ref.count < MIN_VACUUM_REFERENCE:
        raise ValueError(
            f"vacuum reference needs at least {MIN_VACUUM_REFERENCE} samples, "
            f"got {vacuum_ref.count}"
        )

    _, vacuum_var, _ = central_moments(vacuum_ref.samples)
    if not vacuum_var > 0.0:
        raise CalibrationError("vacuum reference has zero variance")

    scale = 1.0 / (2.0 * math.sqrt(vacuum_var))
    meta = dict(raw.meta)
    meta.update(
        {
            "units": Units.NORMALIZED.value,
            "calibration_scale": repr(scale),
            "raw_mean": repr(pairwise_mean(raw.samples)),
            "vacuum_reference_count": str(vacuum_ref.count),
            "vacuum_reference_variance": repr(vacuum_var),
        }
    )
    return QuadratureDataset(raw.samples * scale, Units.NORMALIZED, meta)


# =============================================================================
# Dataset files
# =============================================================================


def write_dataset(path: Union[str, Path], dataset: QuadratureDataset) -> None:
    """Write '#key=value' header lines followed by one sample per line."""
    meta = dict(dataset.meta)
    meta["units"] = dataset.units.value
    meta["count"] = str(dataset.count)
    ordered = {"units": meta.pop("units"), "count": meta.pop("count"), **meta}

    lines = []
    for key, value in ordered.items():
        if "\n" in key or "\n" in value or "=" in key:
            raise ValueError(f"metadata entry cannot be written: {key!r}")
        lines.append(f"# {key}={value}\n")
    lines.extend(f"{x:.17g}\n" for x in dataset.samples.tolist())

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(lines)


def _parse_lines(lines: Iterable[str], source: str) -> QuadratureDataset:
    meta: Dict[str, str] = {}
    values = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            body = text[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        try:
            value = float(text)
        except ValueError:
            raise DatasetFormatError(f"{source}:{lineno}: not a number: {text!r}") from None
        if not math.isfinite(value):
            raise DatasetFormatError(f"{source}:{lineno}: non-finite sample {text!r}")
        values.append(value)

    try:
        units = Units(meta.get("units", Units.NORMALIZED.value))
    except ValueError:
        raise DatasetFormatError(f"{source}: unknown units {meta['units']!r}") from None
    if "count" in meta and meta["count"] != str(len(values)):
        raise DatasetFormatError(
            f"{source}: header count={meta['count']} but file holds {len(values)} samples"
        )
    meta["count"] = str(len(values))
    meta.setdefault("source", source)
    return QuadratureDataset(np.array(values, dtype=float), units, meta)


def read_dataset(path: Union[str, Path]) -> QuadratureDataset:
    """Read a dataset file; raises DatasetFormatError naming the bad line."""
    with open(path, "r", encoding="utf-8") as f:
        return _parse_lines(f, str(path))


def dataset_from_text(text: str, source: str = "<text>") -> QuadratureDataset:
    return _parse_lines(text.splitlines(), source)


def load_datasets(paths: Sequence[Union[str, Path]]) -> list:
    return [read_dataset(p) for p in paths]


def resolve_units(dataset: QuadratureDataset, vacuum_ref: Optional[QuadratureDataset]):
    """Calibrate raw data when a reference is given, pass normalized data through."""
    if dataset.units is Units.NORMALIZED:
        return dataset
    if vacuum_ref is None:
        raise UnitsError("raw photoelectron data needs a vacuum reference for calibration")
    return calibrate(dataset, vacuum_ref)
