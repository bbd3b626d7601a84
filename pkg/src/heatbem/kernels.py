"""Heat kernel of the 3D heat equation, its derivatives and time antiderivatives.

All functions broadcast over numpy arrays.  Distances ``rho`` and time lags
``s`` are plain arrays; displacements ``r`` carry a trailing axis of length 3.

The time antiderivatives

    H1(rho, s) = int_0^s G(rho, sigma) dsigma = erfc(u) / (4 pi alpha rho)
    H2(rho, s) = int_0^s H1(rho, sigma) dsigma
    J1(rho, s) = int_0^s G(rho, sigma) / sigma dsigma

with ``u = rho / (2 sqrt(alpha s))`` all vanish for ``s <= 0``.  H1 and H2
carry a ``1/rho`` singularity that cancels in the time differences used by
the Galerkin weights; :func:`h1_parts` and :func:`h2_parts` expose the split
``F = regular + coeff / (4 pi alpha rho)`` so callers can cancel it exactly.
"""
from dataclasses import dataclass
from enum import Enum
import math

import numpy as np
from scipy.special import erf, erfc

from .errors import DomainError, InvalidArgumentError

__all__ = [
    "KernelParams",
    "KernelValue",
    "Regime",
    "heat_kernel",
    "heat_kernel_gradient",
    "heat_kernel_time_derivative",
    "time_antiderivatives",
    "normal_moment_antiderivative",
    "kernel_rho",
    "dtau_kernel_rho",
    "h1",
    "h2",
    "j1",
    "h1_parts",
    "h2_parts",
    "first_part_bound_constant",
    "time_derivative_bound_constant",
]

_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class KernelParams:
    """Heat capacity coefficient (thermal diffusivity) ``alpha`` in m^2/s."""

    alpha: float = 1.0

    def __post_init__(self):
        a = self.alpha
        if isinstance(a, bool) or not isinstance(a, (int, float, np.floating, np.integer)):
            raise InvalidArgumentError(f"alpha must be a real number, got {a!r}")
        if not math.isfinite(a) or a <= 0:
            raise InvalidArgumentError(f"alpha must be positive and finite, got {a!r}")
        object.__setattr__(self, "alpha", float(a))


class Regime(Enum):
    CAUSAL = "causal"
    VANISHED = "vanished"


@dataclass(frozen=True)
class KernelValue:
    """Kernel value together with the causality flag (``s > 0``)."""

    value: "float | np.ndarray"
    causal: "bool | np.ndarray"

    @property
    def regime(self):
        if np.ndim(self.causal) == 0:
            return Regime.CAUSAL if bool(self.causal) else Regime.VANISHED
        return np.where(self.causal, Regime.CAUSAL.value, Regime.VANISHED.value)

    def __float__(self):
        return float(self.value)


def _check_finite(name, x):
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"{name} must be finite")


def _as_displacement(r):
    r = np.asarray(r, dtype=float)
    if r.shape[-1:] != (3,):
        raise InvalidArgumentError(f"displacement must have trailing dimension 3, got shape {r.shape}")
    _check_finite("r", r)
    return r


def _as_lag(s):
    s = np.asarray(s, dtype=float)
    _check_finite("s", s)
    return s


def _scalarize(x):
    return x.item() if isinstance(x, np.ndarray) and x.ndim == 0 else x


# -- vectorized kernels on distances (no validation; used by assembly) -------

def kernel_rho(rho, s, alpha):
    """G(rho, s) for ``s > 0``, zero otherwise."""
    rho = np.asarray(rho, dtype=float)
    s = np.asarray(s, dtype=float)
    pos = s > 0
    ss = np.where(pos, s, 1.0)
    val = (4.0 * math.pi * alpha * ss) ** -1.5 * np.exp(-rho * rho / (4.0 * alpha * ss))
    return np.where(pos, val, 0.0)


def dtau_kernel_rho(rho, s, alpha):
    """d/dtau G(rho, t - tau) evaluated at lag ``s = t - tau`` (equals -dG/ds)."""
    rho = np.asarray(rho, dtype=float)
    s = np.asarray(s, dtype=float)
    pos = s > 0
    ss = np.where(pos, s, 1.0)
    r2 = rho * rho
    num = 6.0 * alpha * ss - r2
    den = (4.0 * alpha) ** 2.5 * math.pi ** 1.5 * ss ** 3.5
    val = num / den * np.exp(-r2 / (4.0 * alpha * ss))
    return np.where(pos, val, 0.0)


def _u(rho, ss, alpha):
    return rho / (2.0 * np.sqrt(alpha * ss))


def h1_parts(rho, s, alpha):
    """Split ``H1 = regular + coeff / (4 pi alpha rho)``.

    ``coeff`` is 1 for ``s > 0`` and 0 otherwise; ``regular = -erf(u)/(4 pi alpha rho)``
    stays bounded as ``rho -> 0``.
    """
    rho = np.asarray(rho, dtype=float)
    s = np.asarray(s, dtype=float)
    pos = s > 0
    ss = np.where(pos, s, 1.0)
    u = _u(rho, ss, alpha)
    reg = np.where(pos, -erf(u) / (4.0 * math.pi * alpha * rho), 0.0)
    coeff = np.where(pos, 1.0, 0.0)
    return reg, coeff


def h1(rho, s, alpha):
    rho = np.asarray(rho, dtype=float)
    s = np.asarray(s, dtype=float)
    pos = s > 0
    ss = np.where(pos, s, 1.0)
    # erfc evaluated directly; it underflows cleanly to 0 for large u
    val = erfc(_u(rho, ss, alpha)) / (4.0 * math.pi * alpha * rho)
    return np.where(pos, val, 0.0)


def h2_parts(rho, s, alpha):
    """Split ``H2 = regular + coeff / (4 pi alpha rho)`` with ``coeff = max(s, 0)``."""
    rho = np.asarray(rho, dtype=float)
    s = np.asarray(s, dtype=float)
    pos = s > 0
    ss = np.where(pos, s, 1.0)
    u = _u(rho, ss, alpha)
    reg = (
        -ss * erf(u) / (4.0 * math.pi * alpha * rho)
        + rho * erfc(u) / (8.0 * math.pi * alpha * alpha)
        - np.sqrt(ss / (alpha * math.pi)) * np.exp(-u * u) / (4.0 * math.pi * alpha)
    )
    return np.where(pos, reg, 0.0), np.where(pos, ss, 0.0)


def h2(rho, s, alpha):
    rho = np.asarray(rho, dtype=float)
    s = np.asarray(s, dtype=float)
    pos = s > 0
    ss = np.where(pos, s, 1.0)
    u = _u(rho, ss, alpha)
    val = (
        (ss + rho * rho / (2.0 * alpha)) * erfc(u)
        - rho * np.sqrt(ss / (alpha * math.pi)) * np.exp(-u * u)
    ) / (4.0 * math.pi * alpha * rho)
    return np.where(pos, val, 0.0)


def j1(rho, s, alpha):
    rho = np.asarray(rho, dtype=float)
    s = np.asarray(s, dtype=float)
    pos = s > 0
    ss = np.where(pos, s, 1.0)
    u = _u(rho, ss, alpha)
    val = (0.5 * erfc(u) + u * np.exp(-u * u) / _SQRT_PI) / (math.pi * rho ** 3)
    return np.where(pos, val, 0.0)


# -- validated public API -----------------------------------------------------

def heat_kernel(r, s, params):
    """Fundamental solution ``G(r, s) = (4 pi alpha s)^(-3/2) exp(-|r|^2 / (4 alpha s))``.

    Returns a :class:`KernelValue`; the value is exactly zero for ``s <= 0``.
    Requesting ``s == 0`` at ``r == 0`` raises :class:`DomainError`.
    """
    r = _as_displacement(r)
    s = _as_lag(s)
    rho = np.linalg.norm(r, axis=-1)
    if np.any((rho == 0) & (s == 0)):
        raise DomainError("heat kernel is undefined at r = 0, s = 0")
    val = kernel_rho(rho, s, params.alpha)
    return KernelValue(_scalarize(val), _scalarize(np.asarray(s > 0)))


def heat_kernel_gradient(r, s, params):
    """Gradient of G with respect to its spatial argument: ``-r / (2 alpha s) G``."""
    r = _as_displacement(r)
    s = _as_lag(s)
    rho = np.linalg.norm(r, axis=-1)
    if np.any((rho == 0) & (s == 0)):
        raise DomainError("kernel gradient is undefined at r = 0, s = 0")
    pos = s > 0
    ss = np.where(pos, s, 1.0)
    g = kernel_rho(rho, ss, params.alpha)
    fac = np.where(pos, -g / (2.0 * params.alpha * ss), 0.0)
    return fac[..., None] * r


def heat_kernel_time_derivative(r, s, params):
    """``d/dtau G(r, t - tau)`` at lag ``s = t - tau``.

    Zero for ``s <= 0`` when ``r != 0``; :class:`DomainError` for ``s <= 0`` at ``r = 0``.
    """
    r = _as_displacement(r)
    s = _as_lag(s)
    rho = np.linalg.norm(r, axis=-1)
    if np.any((rho == 0) & (s <= 0)):
        raise DomainError("time derivative is undefined for s <= 0 at r = 0")
    return _scalarize(dtau_kernel_rho(rho, s, params.alpha))


def _as_distance(rho):
    rho = np.asarray(rho, dtype=float)
    _check_finite("rho", rho)
    if np.any(rho <= 0):
        raise InvalidArgumentError("rho must be positive")
    return rho


def time_antiderivatives(rho, s, params):
    """Return ``(H1, H2)``; ``dH1/ds = G`` and ``dH2/ds = H1`` for ``s > 0``."""
    rho = _as_distance(rho)
    s = _as_lag(s)
    return _scalarize(h1(rho, s, params.alpha)), _scalarize(h2(rho, s, params.alpha))


def normal_moment_antiderivative(rho, s, params):
    """Return ``J1(rho, s) = int_0^s G(rho, sigma) / sigma dsigma``."""
    rho = _as_distance(rho)
    s = _as_lag(s)
    return _scalarize(j1(rho, s, params.alpha))


def first_part_bound_constant(alpha):
    """c(alpha) in ``6 alpha s * prefactor * exp(...) <= c s^(-7/4) |r|^(-3/2)``."""
    return 0.75 ** 0.75 * math.exp(-0.75) * 3.0 / (2.0 * math.pi ** 1.5 * (4.0 * alpha) ** 0.75)


def time_derivative_bound_constant(alpha):
    """Constant in ``|dG/dtau| <= c s^(-7/4) |r|^(-3/2)``.

    Sum of the bounds for the two parts of the numerator; the second part
    ``|r|^2 ...`` is bounded with ``q^(7/4) exp(-q) <= (7/4)^(7/4) exp(-7/4)``.
    """
    second = 1.75 ** 1.75 * math.exp(-1.75) / (math.pi ** 1.5 * (4.0 * alpha) ** 0.75)
    return first_part_bound_constant(alpha) + second
