"""Matérn (smoothness 3/2) temporal correlation and its derivatives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .exceptions import NumericalError, ValidationError

__all__ = [
    "Matern32Kernel",
    "TemporalDesign",
    "TemporalFactor",
    "correlation_matrix",
    "neg_rho_second_at_zero",
    "rho",
    "rho_prime",
]


def _check_phi1(phi1) -> None:
    if not (np.isfinite(phi1) and phi1 > 0):
        raise ValidationError(f"phi1 must be a positive finite number, got {phi1!r}")


def rho(delta, phi1):
    """Correlation ``(1 + phi1 |d|) exp(-phi1 |d|)``; vectorized over ``delta``."""
    _check_phi1(phi1)
    u = phi1 * np.abs(np.asarray(delta, dtype=float))
    # log1p form keeps the polynomial factor from overflowing at large lags
    with np.errstate(under="ignore"):
        out = np.exp(np.log1p(u) - u)
    return out if out.ndim else float(out)


def rho_prime(delta, phi1):
    """First derivative ``-phi1**2 d exp(-phi1 |d|)``; odd in ``delta``."""
    _check_phi1(phi1)
    d = np.asarray(delta, dtype=float)
    with np.errstate(under="ignore"):
        out = -phi1 * phi1 * d * np.exp(-phi1 * np.abs(d))
    return out if out.ndim else float(out)


def neg_rho_second_at_zero(phi1) -> float:
    """``-rho''(0) = phi1**2``, the variance scale of the derivative process."""
    _check_phi1(phi1)
    return float(phi1) ** 2


@dataclass(frozen=True)
class Matern32Kernel:
    phi1: float
    phi2: float = field(default=1.5, init=False)

    def __post_init__(self):
        _check_phi1(self.phi1)

    def __call__(self, delta):
        return rho(delta, self.phi1)

    def derivative(self, delta):
        return rho_prime(delta, self.phi1)


@dataclass(frozen=True, eq=False)
class TemporalDesign:
    """Strictly increasing observation times.

    ``lags[j, k] = times[j] - times[k]``.
    """

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        if t.size == 0:
            raise ValidationError("design needs at least one time point")
        if not np.all(np.isfinite(t)):
            raise ValidationError("time points must be finite")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            dup = t[1:][np.diff(t) <= 0]
            raise ValidationError(
                f"time points must be strictly increasing (offending: {dup[:5].tolist()})"
            )
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @property
    def n_times(self) -> int:
        return self.times.size

    @property
    def lags(self) -> np.ndarray:
        return self.times[:, None] - self.times[None, :]

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.times[1:] + self.times[:-1])


def correlation_matrix(design: TemporalDesign, phi1: float) -> np.ndarray:
    """``R[j, k] = rho(t_j - t_k)``."""
    R = rho(design.lags, phi1)
    return np.atleast_2d(R)


class TemporalFactor:
    """Cached factorizations of ``R(phi1)`` for one design.

    Raises :class:`~areal_gp.exceptions.NumericalError` on construction if
    ``R`` is numerically singular (very small ``phi1`` over long spans).
    """

    def __init__(self, design: TemporalDesign, phi1: float):
        self.design = design
        self.phi1 = float(phi1)
        self.R = correlation_matrix(design, phi1)
        try:
            self.chol = sla.cholesky(self.R, lower=True, check_finite=False)
        except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
            raise NumericalError(
                f"temporal correlation matrix singular at phi1={phi1:.6g}"
            ) from exc
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        self.R_inv = sla.cho_solve((self.chol, True), np.eye(design.n_times), check_finite=False)
        self._eig = None

    @property
    def eig(self):
        if self._eig is None:
            self._eig = np.linalg.eigh(self.R)
        return self._eig

    def solve(self, B):
        return sla.cho_solve((self.chol, True), B, check_finite=False)
