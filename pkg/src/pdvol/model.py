"""Model parameters and coefficient functions.

The stock and its EWMA ratio follow

    dS = S sigma(Y) dW,
    dY = b(Y) dt + sigma_tilde(Y) dW,

with ``sigma(y) = -alpha/beta + gamma * y**(-beta)``, ``b(y) = y(1-y)/h`` and
``sigma_tilde(y) = y sigma(y)``.  ``sigma`` is an annualised volatility, ``h``
is measured in trading days and ``b`` is a rate per trading day.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

TRADING_DAYS = 252.0


@dataclass(frozen=True)
class ModelParams:
    """Parameters ``(alpha, beta, gamma, h_days)`` of the volatility map.

    ``gamma == 0`` is admitted as the degenerate constant-volatility member of
    the family (``sigma == -alpha/beta``); it has no singular point and
    ``y_sigma`` is reported as 0.
    """

    alpha: float
    beta: float
    gamma: float
    h_days: float

    def __post_init__(self):
        for name in ("alpha", "beta", "h_days"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be a positive finite number, got {v!r}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise DomainError(f"gamma must be a non-negative finite number, got {self.gamma!r}")

    @property
    def degenerate(self) -> bool:
        return self.gamma == 0.0

    @property
    def y_sigma(self) -> float:
        return y_singular(self)

    def as_tuple(self):
        return (self.alpha, self.beta, self.gamma)


@dataclass(frozen=True)
class TaylorConstants:
    a_beta: float
    b_beta: float
    c_beta: float

    def series_coefficients(self):
        """Coefficients of ``u, u**2, u**3`` implied by these constants.

        The constants enter the expansion of ``beta**2 u**2 [1-(1+u)**beta]**-2``
        as ``1 - 2A u + (2B + A**2) u**2 + 2(C - AB) u**3``.
        """
        a, b, c = self.a_beta, self.b_beta, self.c_beta
        return (-2.0 * a, 2.0 * b + a * a, 2.0 * (c - a * b))


def _positive(y):
    arr = np.asarray(y, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("coefficient evaluated at a non-positive state")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def sigma(params: ModelParams, y):
    """Annualised volatility ``-alpha/beta + gamma * y**-beta``; y must be > 0."""
    y = _positive(y)
    return _out(-params.alpha / params.beta + params.gamma * np.exp(-params.beta * np.log(y)))


def sigma_tilde(params: ModelParams, y):
    y = _positive(y)
    return _out(y * sigma(params, y))


def drift_b(params: ModelParams, y):
    """Mean-reversion drift ``y(1-y)/h`` per trading day."""
    y = np.asarray(y, dtype=float)
    return _out(y * (1.0 - y) / params.h_days)


def y_singular(params: ModelParams) -> float:
    """The zero ``(beta*gamma/alpha)**(1/beta)`` of sigma (0 when gamma == 0)."""
    if params.gamma == 0.0:
        return 0.0
    return math.exp(math.log(params.beta * params.gamma / params.alpha) / params.beta)


def sigma_derivatives(params: ModelParams, y):
    """Return ``(sigma, sigma', sigma'')`` at y > 0."""
    y = _positive(y)
    a, b, g = params.alpha, params.beta, params.gamma
    pw = np.exp(-b * np.log(y))
    s0 = -a / b + g * pw
    s1 = -b * g * pw / y
    s2 = b * (b + 1.0) * g * pw / (y * y)
    return _out(s0), _out(s1), _out(s2)


def sigma_tilde_derivatives(params: ModelParams, y):
    """Return ``(sigma_tilde, sigma_tilde', sigma_tilde'')`` at y > 0."""
    y = _positive(y)
    s0, s1, s2 = (np.asarray(v) for v in sigma_derivatives(params, y))
    return _out(y * s0), _out(s0 + y * s1), _out(2.0 * s1 + y * s2)


def taylor_constants(beta: float) -> TaylorConstants:
    """Closed-form constants ``(A, B, C)`` of the expansion around y_sigma.

    ``A = (beta-1)(beta-2)/2``, ``B = A(A - (beta-3)/3)`` and
    ``C = A(-(beta-3)(beta-4)/12 + (beta-1)(beta-2)(beta-3)/3 - A**2)``.
    The implied series coefficients agree with the actual Taylor series only
    at beta == 1, where everything vanishes; use
    :func:`expansion_coefficients` when the true series is needed.
    """
    if not beta > 0:
        raise DomainError("beta must be positive")
    a = (beta - 1.0) * (beta - 2.0) / 2.0
    b = a * (a - (beta - 3.0) / 3.0)
    c = a * (-(beta - 3.0) * (beta - 4.0) / 12.0
             + (beta - 1.0) * (beta - 2.0) * (beta - 3.0) / 3.0
             - a * a)
    return TaylorConstants(a, b, c)


def expansion_coefficients(beta: float):
    """Series ``1 + c1 u + c2 u**2 + c3 u**3`` of ``beta**2 u**2 [1-(1+u)**beta]**-2``.

    Obtained by writing ``(1+u)**beta - 1 = beta u (1 + p1 u + p2 u**2 + p3 u**3 + ...)``
    and expanding ``(1 + P)**-2``.  The left-side expansion (``1-u`` in place of
    ``1+u``) has coefficients ``(-c1, c2, -c3)``.
    """
    if not beta > 0:
        raise DomainError("beta must be positive")
    p1 = (beta - 1.0) / 2.0
    p2 = (beta - 1.0) * (beta - 2.0) / 6.0
    p3 = (beta - 1.0) * (beta - 2.0) * (beta - 3.0) / 24.0
    c1 = -2.0 * p1
    c2 = 3.0 * p1 * p1 - 2.0 * p2
    c3 = -2.0 * p3 + 6.0 * p1 * p2 - 4.0 * p1 ** 3
    return c1, c2, c3
