"""Analytic models of Fock-diagonal states.

This module handles everything that can be computed exactly for a state whose
density matrix is diagonal in the photon-number basis:
- FockDiagonalState / AnalyticProfile dataclasses
- Constructors for the photon/vacuum mixture and the geometric (Diosi) ensemble
- Marginal distribution, Wigner function and characteristic function
- Binomial loss channel
- Closed-form optimum frequency and gap of the Vogel test for the mixture

Quadratures use the convention where the vacuum has variance 1/4 and the
vacuum characteristic function is exp(-nu^2/8).
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import binom

ArrayLike = Union[float, Sequence[float], np.ndarray]

# Weights must sum to one within this tolerance
NORMALIZATION_TOLERANCE = 1e-12

# Closed forms of the infinite geometric ensemble are used from this truncation
# upwards; below it the truncated weights differ from the closed form by more
# than 1e-9 and the series is evaluated instead.
DIOSI_CLOSED_FORM_MIN_NMAX = 30


class ProfileTag(Enum):
    """Which closed form (if any) describes a state."""

    MIXTURE = "mixture"
    DIOSI = "diosi"
    GENERIC = "generic"


@dataclass(frozen=True)
class AnalyticProfile:
    """Dispatch tag selecting closed-form evaluation for known states."""

    tag: ProfileTag = ProfileTag.GENERIC
    eta: Optional[float] = None

    def __post_init__(self):
        if self.tag is ProfileTag.MIXTURE:
            if self.eta is None:
                raise ValueError("mixture profile requires eta")
            if not 0.0 <= self.eta <= 1.0:
                raise ValueError(f"mixture eta must lie in [0, 1], got {self.eta}")
        elif self.eta is not None:
            raise ValueError(f"{self.tag.value} profile must not carry eta")

    def describe(self) -> str:
        """Short text used in dataset metadata."""
        if self.tag is ProfileTag.MIXTURE:
            return f"mix:{self.eta!r}"
        return self.tag.value


@dataclass(frozen=True)
class FockDiagonalState:
    """Photon-number probabilities rho_nn for n = 0..n_max.

    Instances are immutable; every operation in this module returns new states.
    """

    weights: Tuple[float, ...]
    profile: AnalyticProfile = field(default_factory=AnalyticProfile)

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "weights", weights)

        if not weights:
            raise ValueError("state needs at least one weight (n_max >= 0)")
        if any(not math.isfinite(w) or w < 0.0 for w in weights):
            raise ValueError(f"weights must be finite and non-negative: {weights}")
        total = math.fsum(weights)
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise ValueError(f"weights must sum to 1, got {total!r}")

        if self.profile.tag is ProfileTag.MIXTURE:
            eta = self.profile.eta
            expected = (1.0 - eta, eta)
            padded = weights + (0.0,) * max(0, 2 - len(weights))
            if any(abs(a - b) > NORMALIZATION_TOLERANCE for a, b in zip(padded, expected)) or any(
                w != 0.0 for w in padded[2:]
            ):
                raise ValueError(f"weights {weights} do not match mixture profile eta={eta}")

    @property
    def n_max(self) -> int:
        return len(self.weights) - 1

    @property
    def probabilities(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @property
    def mean_photon_number(self) -> float:
        return math.fsum(n * w for n, w in enumerate(self.weights))

    def describe(self) -> str:
        if self.profile.tag is ProfileTag.DIOSI:
            return f"diosi:{self.n_max}"
        if self.profile.tag is ProfileTag.MIXTURE:
            return self.profile.describe()
        return "fock:" + ",".join(repr(w) for w in self.weights)

    @classmethod
    def from_weights(cls, weights: Sequence[float]) -> "FockDiagonalState":
        """Generic state from explicit weights (must already be normalized)."""
        return cls(tuple(weights))


def _check_probability(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def _check_finite(values: ArrayLike, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _uses_diosi_closed_form(state: FockDiagonalState) -> bool:
    return (
        state.profile.tag is ProfileTag.DIOSI and state.n_max >= DIOSI_CLOSED_FORM_MIN_NMAX
    )


# =============================================================================
# Constructors
# =============================================================================


def make_photon_vacuum_mixture(eta: float) -> FockDiagonalState:
    """eta|1><1| + (1 - eta)|0><0|."""
    eta = _check_probability(eta, "eta")
    return FockDiagonalState(
        (1.0 - eta, eta), AnalyticProfile(tag=ProfileTag.MIXTURE, eta=eta)
    )


def make_vacuum() -> FockDiagonalState:
    return make_photon_vacuum_mixture(0.0)


def make_diosi_state(n_max: int) -> FockDiagonalState:
    """Geometric ensemble sum_{n>=1} 2^-n |n><n| truncated at n_max.

    The truncated weights are renormalized by 1 - 2^-n_max so the result is a
    valid probability vector.
    """
    if isinstance(n_max, bool) or int(n_max) != n_max or n_max < 1:
        raise ValueError(f"n_max must be a positive integer, got {n_max}")
    n_max = int(n_max)
    norm = -math.expm1(-n_max * math.log(2.0))
    weights = [0.0] + [math.ldexp(1.0, -n) / norm for n in range(1, n_max + 1)]
    # Absorb the last rounding ulp so the sum check holds exactly
    weights[1] += 1.0 - math.fsum(weights)
    return FockDiagonalState(tuple(weights), AnalyticProfile(tag=ProfileTag.DIOSI))


# =============================================================================
# Special functions
# =============================================================================


def hermite_functions(x: ArrayLike, n_max: int) -> np.ndarray:
    """Oscillator eigenfunctions psi_n(x) for n = 0..n_max.

    psi_n(x) = (2/pi)^(1/4) (2^n n!)^(-1/2) H_n(sqrt(2) x) exp(-x^2), evaluated
    with the normalized three-term recurrence so no factorial is ever formed.

    Returns an array of shape (n_max + 1,) + shape(x).
    """
    x = np.asarray(x, dtype=float)
    y = math.sqrt(2.0) * x
    out = np.empty((n_max + 1,) + x.shape, dtype=float)
    out[0] = (2.0 / math.pi) ** 0.25 * np.exp(-x * x)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * y * out[0]
    for n in range(1, n_max):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * y * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def laguerre_functions(z: ArrayLike, n_max: int) -> np.ndarray:
    """exp(-z/2) L_n(z) for n = 0..n_max via the Laguerre recurrence.

    The damping factor is applied to the seeds, which keeps every term bounded
    by one in magnitude for z >= 0.
    """
    z = np.asarray(z, dtype=float)
    damp = np.exp(-0.5 * z)
    out = np.empty((n_max + 1,) + z.shape, dtype=float)
    out[0] = damp
    if n_max >= 1:
        out[1] = (1.0 - z) * damp
    for n in range(1, n_max):
        out[n + 1] = ((2 * n + 1 - z) * out[n] - n * out[n - 1]) / (n + 1)
    return out


# =============================================================================
# Distributions
# =============================================================================


def marginal_pdf(state: FockDiagonalState, x: ArrayLike) -> Union[float, np.ndarray]:
    """Phase-independent quadrature probability density."""
    x = _check_finite(x, "x")
    if state.profile.tag is ProfileTag.MIXTURE:
        eta = state.profile.eta
        result = math.sqrt(2.0 / math.pi) * (1.0 - eta + 4.0 * eta * x * x) * np.exp(-2.0 * x * x)
    else:
        psi = hermite_functions(x, state.n_max)
        result = np.tensordot(state.probabilities, psi * psi, axes=1)
    return float(result) if result.ndim == 0 else result


def wigner_series(state: FockDiagonalState, x: ArrayLike, p: ArrayLike):
    """Wigner function from the Laguerre series over the diagonal weights."""
    x = _check_finite(x, "x")
    p = _check_finite(p, "p")
    r2 = x * x + p * p
    terms = laguerre_functions(4.0 * r2, state.n_max)
    signs = np.where(np.arange(state.n_max + 1) % 2 == 0, 1.0, -1.0)
    result = (2.0 / math.pi) * np.tensordot(state.probabilities * signs, terms, axes=1)
    return float(result) if result.ndim == 0 else result


def wigner(state: FockDiagonalState, x: ArrayLike, p: ArrayLike):
    """Wigner quasi-probability W(x, p), normalized to unit integral."""
    if state.profile.tag is ProfileTag.MIXTURE:
        x = _check_finite(x, "x")
        p = _check_finite(p, "p")
        eta = state.profile.eta
        r2 = x * x + p * p
        result = (2.0 / math.pi) * (4.0 * eta * r2 + 1.0 - 2.0 * eta) * np.exp(-2.0 * r2)
    elif _uses_diosi_closed_form(state):
        x = _check_finite(x, "x")
        p = _check_finite(p, "p")
        r2 = x * x + p * p
        result = (4.0 / (3.0 * math.pi)) * np.exp(-2.0 * r2 / 3.0) - (2.0 / math.pi) * np.exp(
            -2.0 * r2
        )
    else:
        return wigner_series(state, x, p)
    return float(result) if np.ndim(result) == 0 else result


def vacuum_char_fn(nu: ArrayLike):
    """exp(-nu^2/8), the classical bound of the Vogel test."""
    nu = np.asarray(nu, dtype=float)
    result = np.exp(-nu * nu / 8.0)
    return float(result) if result.ndim == 0 else result


def char_fn(state: FockDiagonalState, nu: ArrayLike):
    """Fourier transform of the marginal distribution.

    Every state in this module is phase symmetric, so the value is real; it is
    returned as a complex number to keep the general contract.
    """
    nu = _check_finite(nu, "nu")
    s = nu * nu
    if state.profile.tag is ProfileTag.MIXTURE:
        result = (1.0 - state.profile.eta * s / 4.0) * np.exp(-s / 8.0)
    elif _uses_diosi_closed_form(state):
        result = 2.0 * np.exp(-3.0 * s / 8.0) - np.exp(-s / 8.0)
    else:
        # F_n(nu) = exp(-nu^2/8) L_n(nu^2/4) = laguerre function at z = nu^2/4
        result = np.tensordot(state.probabilities, laguerre_functions(s / 4.0, state.n_max), axes=1)
    result = np.where(nu == 0.0, 1.0, result).astype(complex)
    return complex(result) if result.ndim == 0 else result


def variance(state: FockDiagonalState) -> float:
    """Quadrature variance; equals 1/4 + eta/2 for the mixture."""
    if state.profile.tag is ProfileTag.MIXTURE:
        return 0.25 + state.profile.eta / 2.0
    return math.fsum(w * (2 * n + 1) / 4.0 for n, w in enumerate(state.weights))


# =============================================================================
# Channels
# =============================================================================


def loss_matrix(n_max: int, transmission: float) -> np.ndarray:
    """Binomial loss transfer matrix M[n, m] = C(m, n) t^n (1 - t)^(m - n)."""
    m = np.arange(n_max + 1)
    return binom.pmf(m[:, None], m[None, :], transmission)


def apply_loss(state: FockDiagonalState, transmission: float) -> FockDiagonalState:
    """Pass the state through a beam splitter of the given transmission."""
    t = _check_probability(transmission, "transmission")
    if t == 1.0:
        return state

    weights = loss_matrix(state.n_max, t) @ state.probabilities
    weights = weights / math.fsum(weights)

    if state.profile.tag is ProfileTag.MIXTURE:
        eta = state.profile.eta * t
        # Pin the weights to the profile so the closed forms stay exact
        weights = np.array([1.0 - eta, eta])
        profile = AnalyticProfile(tag=ProfileTag.MIXTURE, eta=eta)
    else:
        profile = AnalyticProfile()
    return FockDiagonalState(tuple(weights.tolist()), profile)


# =============================================================================
# Closed-form optima for the photon/vacuum mixture
# =============================================================================


def _check_positive_eta(eta: float) -> float:
    eta = float(eta)
    if not math.isfinite(eta) or not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    return eta


def nu_opt(eta: float) -> float:
    """Frequency where |F_eta| - exp(-nu^2/8) is largest: sqrt(8 (1 + eta) / eta)."""
    eta = _check_positive_eta(eta)
    return math.sqrt(8.0 * (1.0 + eta) / eta)


def vogel_gap(eta: float) -> float:
    """Largest excess of |F_eta| over the vacuum: 2 eta exp(-(1 + eta) / eta)."""
    eta = _check_positive_eta(eta)
    return 2.0 * eta * math.exp(-(1.0 + eta) / eta)
