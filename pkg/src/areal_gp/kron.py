"""Linear algebra for separable space-time covariances.

A latent field is stored as an ``(n_s, n_t)`` matrix ``Z``; its vector form
stacks columns (region index varies fastest), so the covariance
``R kron Q^{-1}`` has time as the outer Kronecker factor. Nothing of size
``n_s n_t x n_s n_t`` is ever factored.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .exceptions import NumericalError, ValidationError

__all__ = [
    "SeparableCovariance",
    "SeparablePlusDiagonal",
    "kron_logdet",
    "kron_quad",
    "kron_sample",
    "kron_solve",
    "unvec",
    "vec",
]


def vec(Z: np.ndarray) -> np.ndarray:
    """Column-stack an ``(n_s, n_t)`` matrix (region fastest)."""
    return np.asarray(Z).reshape(-1, order="F")


def unvec(v: np.ndarray, n_s: int, n_t: int) -> np.ndarray:
    return np.asarray(v).reshape((n_s, n_t), order="F")


def _cholesky(M: np.ndarray, name: str) -> np.ndarray:
    try:
        return sla.cholesky(M, lower=True, check_finite=False)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise NumericalError(f"Cholesky factorization of {name} failed") from exc


class SeparableCovariance:
    """Covariance ``R kron Q^{-1}`` given temporal correlation ``R`` and
    spatial precision ``Q``. Factorizations are computed once, lazily."""

    def __init__(self, R: np.ndarray, Q: np.ndarray):
        R = np.atleast_2d(np.asarray(R, dtype=float))
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if R.shape[0] != R.shape[1] or Q.shape[0] != Q.shape[1]:
            raise ValidationError("R and Q must be square")
        self.R = R
        self.Q = Q
        self.n_t = R.shape[0]
        self.n_s = Q.shape[0]

    @cached_property
    def chol_R(self) -> np.ndarray:
        return _cholesky(self.R, "R (temporal correlation)")

    @cached_property
    def chol_Q(self) -> np.ndarray:
        return _cholesky(self.Q, "Q (spatial precision)")

    @cached_property
    def R_inv(self) -> np.ndarray:
        return sla.cho_solve((self.chol_R, True), np.eye(self.n_t), check_finite=False)

    def _as_matrix(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n_s * self.n_t:
            raise ValidationError(
                f"vector length {v.shape[0]} != n_s*n_t = {self.n_s * self.n_t}"
            )
        return v

    def solve(self, v):
        """``(R kron Q^{-1})^{-1} v = (R^{-1} kron Q) v``.

        ``v`` may be a vector or a matrix of stacked right-hand sides.
        """
        v = self._as_matrix(v)
        if v.ndim == 1:
            V = unvec(v, self.n_s, self.n_t)
            return vec(self.Q @ V @ self.R_inv)
        return np.column_stack([self.solve(v[:, k]) for k in range(v.shape[1])])

    def matvec(self, v):
        """``(R kron Q^{-1}) v``."""
        v = self._as_matrix(v)
        V = unvec(v, self.n_s, self.n_t)
        QinvV = sla.cho_solve((self.chol_Q, True), V, check_finite=False)
        return vec(QinvV @ self.R)

    def logdet(self) -> float:
        """``n_s log det R - n_t log det Q``."""
        ld_R = 2.0 * np.sum(np.log(np.diag(self.chol_R)))
        ld_Q = 2.0 * np.sum(np.log(np.diag(self.chol_Q)))
        return float(self.n_s * ld_R - self.n_t * ld_Q)

    def quad(self, v) -> float:
        """``v' (R kron Q^{-1})^{-1} v = tr(Z' Q Z R^{-1})``."""
        Z = unvec(self._as_matrix(v), self.n_s, self.n_t)
        return float(np.sum((Z @ self.R_inv) * (self.Q @ Z)))

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Exact draw(s) from ``N(0, R kron Q^{-1})``.

        ``vec(C_Q^{-T} E C_R^T)`` with ``E`` i.i.d. standard normal.
        """
        if size is None:
            E = rng.standard_normal((self.n_s, self.n_t))
            X = sla.solve_triangular(self.chol_Q, E, lower=True, trans="T", check_finite=False)
            return vec(X @ self.chol_R.T)
        E = rng.standard_normal((size, self.n_s, self.n_t))
        out = np.empty((size, self.n_s * self.n_t))
        for k in range(size):
            X = sla.solve_triangular(self.chol_Q, E[k], lower=True, trans="T", check_finite=False)
            out[k] = vec(X @ self.chol_R.T)
        return out


def kron_solve(cov: SeparableCovariance, v):
    return cov.solve(v)


def kron_logdet(cov: SeparableCovariance) -> float:
    return cov.logdet()


def kron_quad(cov: SeparableCovariance, v) -> float:
    return cov.quad(v)


def kron_sample(cov: SeparableCovariance, rng: np.random.Generator, size: int | None = None):
    return cov.sample(rng, size)


class SeparablePlusDiagonal:
    """Latent ``Z ~ N(0, R kron S)`` observed through ``Y = Z + E`` with
    ``E`` having per-region variances ``tau2`` constant over time.

    The marginal covariance ``R kron S + I kron T`` and the conditional
    precision ``R^{-1} kron S^{-1} + I kron T^{-1}`` are diagonalized jointly
    by ``U kron T^{1/2} V`` where ``R = U diag(lam) U'`` and
    ``T^{1/2} S^{-1} T^{1/2} = V diag(omega) V'``.

    Parameters
    ----------
    R : (n_t, n_t) temporal correlation.
    Q : (n_s, n_s) spatial precision ``S^{-1}``.
    tau2 : (n_s,) noise variances.
    """

    def __init__(self, R, Q, tau2, *, eig_R=None):
        tau2 = np.asarray(tau2, dtype=float)
        if eig_R is None:
            lam, U = np.linalg.eigh(R)
        else:
            lam, U = eig_R
        # R is PD in exact arithmetic; clamp roundoff for very smooth kernels
        self.lam = np.maximum(lam, 1e-300)
        self.U = U
        self.sqrt_tau2 = np.sqrt(tau2)
        H = self.sqrt_tau2[:, None] * Q * self.sqrt_tau2[None, :]
        omega, V = np.linalg.eigh(0.5 * (H + H.T))
        if omega[0] <= 0:
            raise NumericalError("spatial precision is not positive definite")
        self.omega = omega
        self.V = V
        # prior variance of the rotated latent coordinates, noise variance is 1
        self.prior_var = self.lam[None, :] / self.omega[:, None]
        self.n_s, self.n_t = omega.size, self.lam.size

    def _rotate(self, E):
        """``V' T^{-1/2} E U``."""
        return self.V.T @ (E / self.sqrt_tau2[:, None]) @ self.U

    def _unrotate_scaled(self, F):
        """``T^{1/2} V F U'``."""
        return self.sqrt_tau2[:, None] * (self.V @ F @ self.U.T)

    def marginal_solve(self, E):
        """Apply ``(R kron S + I kron T)^{-1}`` to an ``(n_s, n_t)`` matrix."""
        F = self._rotate(E) / (self.prior_var + 1.0)
        return (self.V @ F @ self.U.T) / self.sqrt_tau2[:, None]

    def marginal_logdet(self) -> float:
        return float(
            self.n_t * 2.0 * np.sum(np.log(self.sqrt_tau2))
            + np.sum(np.log1p(self.prior_var))
        )

    def posterior_moments(self, E):
        """Rotated posterior mean and variance of ``Z`` given ``Y - mean = E``."""
        post_var = self.prior_var / (self.prior_var + 1.0)
        return post_var * self._rotate(E), post_var

    def posterior_sample(self, E, rng: np.random.Generator):
        """Exact draw of ``Z | Y`` for residual matrix ``E = Y - mean``."""
        m, v = self.posterior_moments(E)
        A = m + np.sqrt(v) * rng.standard_normal(m.shape)
        return self._unrotate_scaled(A)

    def posterior_logpdf(self, E, Z) -> float:
        """Log density of ``Z`` under the conditional ``Z | Y``."""
        m, v = self.posterior_moments(E)
        A = self.V.T @ (Z / self.sqrt_tau2[:, None]) @ self.U
        # Jacobian of Z -> A is |det(U kron T^{-1/2} V)| = prod(tau)^{-n_t}
        log_jac = -self.n_t * np.sum(np.log(self.sqrt_tau2))
        r = A - m
        return float(
            -0.5 * np.sum(r * r / v) - 0.5 * np.sum(np.log(2 * np.pi * v)) + log_jac
        )
