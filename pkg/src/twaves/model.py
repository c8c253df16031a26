"""Nonlinearity catalog and background-state quantities.

A medium is described by a scalar function f(rho) acting on the squared
modulus rho = |u|^2.  The stable background is the largest positive zero
of f with negative slope; everything downstream (sound speed, effective
cubic coefficient, potential energy density) derives from f near that zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import (
    DegenerateRoot,
    DegenerateSoundSpeed,
    NoBackgroundRoot,
)

# relative step for difference quotients when derivatives are not supplied
_FD_REL_STEP = 1e-5


@dataclass
class Nonlinearity:
    """Scalar nonlinearity f(rho) with optional analytic derivatives.

    kind is a catalog tag ("gp", "cubic-quintic", "saturating",
    "power-sum", "custom"); params holds the catalog parameters so that
    results can be reproduced from metadata alone.
    """

    kind: str
    f: Callable[[np.ndarray], np.ndarray]
    f_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None
    f_second: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    def prime(self, rho, h=None):
        if self.f_prime is not None:
            return self.f_prime(rho)
        if h is None:
            h = _FD_REL_STEP * max(abs(float(np.max(np.atleast_1d(rho)))), 1.0)
        return (self.f(rho + h) - self.f(rho - h)) / (2.0 * h)

    def second(self, rho, h):
        if self.f_second is not None:
            return self.f_second(rho)
        return (self.f(rho + h) - 2.0 * self.f(rho) + self.f(rho - h)) / h**2


def make_nonlinearity(kind: str, **params) -> Nonlinearity:
    """Build a catalog nonlinearity by name.

    gp:            f(rho) = 1 - rho
    cubic-quintic: f(rho) = -a1 + a3*rho - a5*rho^2,  defaults (1, 3, 2)
    saturating:    f(rho) = b*exp(-rho/alpha) - a,    needs 0 < a < b
    power-sum:     f(rho) = alpha + beta - alpha*rho^nu - beta*rho^(2nu)
                   (constant shifted so f(1) = 0)
    custom:        pass f=..., optionally f_prime=..., f_second=...
    """
    kind = kind.lower().replace("_", "-")
    if kind == "gp":
        return Nonlinearity(
            kind="gp",
            f=lambda rho: 1.0 - rho,
            f_prime=lambda rho: -np.ones_like(np.asarray(rho, dtype=float)),
            f_second=lambda rho: np.zeros_like(np.asarray(rho, dtype=float)),
        )
    if kind == "cubic-quintic":
        a1 = float(params.get("a1", 1.0))
        a3 = float(params.get("a3", 3.0))
        a5 = float(params.get("a5", 2.0))
        return Nonlinearity(
            kind="cubic-quintic",
            f=lambda rho: -a1 + a3 * rho - a5 * rho**2,
            f_prime=lambda rho: a3 - 2.0 * a5 * rho,
            f_second=lambda rho: -2.0 * a5 * np.ones_like(np.asarray(rho, dtype=float)),
            params={"a1": a1, "a3": a3, "a5": a5},
        )
    if kind == "saturating":
        a = float(params.get("a", 0.5))
        b = float(params.get("b", 1.0))
        alpha = float(params.get("alpha", 1.0))
        return Nonlinearity(
            kind="saturating",
            f=lambda rho: b * np.exp(-np.asarray(rho, dtype=float) / alpha) - a,
            f_prime=lambda rho: -(b / alpha) * np.exp(-np.asarray(rho, dtype=float) / alpha),
            f_second=lambda rho: (b / alpha**2) * np.exp(-np.asarray(rho, dtype=float) / alpha),
            params={"a": a, "b": b, "alpha": alpha},
        )
    if kind == "power-sum":
        alpha = float(params.get("alpha", 1.0))
        beta = float(params.get("beta", 1.0))
        nu = float(params.get("nu", 1.0))
        # constant term pins the background at rho = 1
        c0 = alpha + beta
        return Nonlinearity(
            kind="power-sum",
            f=lambda rho: c0 - alpha * np.asarray(rho, dtype=float) ** nu
            - beta * np.asarray(rho, dtype=float) ** (2.0 * nu),
            f_prime=lambda rho: -alpha * nu * np.asarray(rho, dtype=float) ** (nu - 1.0)
            - 2.0 * beta * nu * np.asarray(rho, dtype=float) ** (2.0 * nu - 1.0),
            f_second=lambda rho: -alpha * nu * (nu - 1.0) * np.asarray(rho, dtype=float) ** (nu - 2.0)
            - 2.0 * beta * nu * (2.0 * nu - 1.0) * np.asarray(rho, dtype=float) ** (2.0 * nu - 2.0),
            params={"alpha": alpha, "beta": beta, "nu": nu},
        )
    if kind == "custom":
        f = params.pop("f")
        f_prime = params.pop("f_prime", None)
        f_second = params.pop("f_second", None)
        return Nonlinearity(kind="custom", f=f, f_prime=f_prime,
                            f_second=f_second, params=params)
    raise ValueError(f"unknown nonlinearity kind: {kind!r}")


def find_background(nl: Nonlinearity, slope_tol: float = 1e-10) -> float:
    """Squared background amplitude: largest zero of f with f' < 0 there.

    Catalog kinds use closed forms; custom ones are bracketed and polished
    with brentq.  A zero whose slope is below slope_tol in magnitude is
    degenerate and rejected.
    """
    if nl.kind == "gp":
        return 1.0
    if nl.kind == "cubic-quintic":
        a1, a3, a5 = nl.params["a1"], nl.params["a3"], nl.params["a5"]
        disc = a3**2 - 4.0 * a5 * a1
        if disc < 0.0:
            raise NoBackgroundRoot("cubic-quintic profile never vanishes")
        root = (a3 + np.sqrt(disc)) / (2.0 * a5)
        if root <= 0.0:
            raise NoBackgroundRoot("largest zero is not positive")
        # slope at the larger zero is -sqrt(disc)
        if np.sqrt(disc) <= slope_tol:
            raise DegenerateRoot("double zero: slope vanishes at the background")
        return float(root)
    if nl.kind == "saturating":
        a, b, alpha = nl.params["a"], nl.params["b"], nl.params["alpha"]
        if not (0.0 < a < b) or alpha <= 0.0:
            raise NoBackgroundRoot("saturating profile needs 0 < a < b, alpha > 0")
        return float(alpha * np.log(b / a))
    if nl.kind == "power-sum":
        alpha, beta, nu = nl.params["alpha"], nl.params["beta"], nl.params["nu"]
        if alpha < 0.0 or beta < 0.0 or alpha + beta <= 0.0 or nu <= 0.0:
            raise NoBackgroundRoot("power-sum profile needs nonnegative weights, nu > 0")
        return 1.0
    return _scan_background(nl, slope_tol)


def _scan_background(nl: Nonlinearity, slope_tol: float) -> float:
    # expand the bracket until f is negative at the far end
    hi = 1.0
    for _ in range(60):
        if nl.f(hi) < 0.0:
            break
        hi *= 2.0
    else:
        raise NoBackgroundRoot("f stays nonnegative out to huge rho")
    grid = np.linspace(1e-12, hi, 8193)
    vals = np.asarray([float(nl.f(g)) for g in grid])
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            roots.append(grid[i])
        elif vals[i] * vals[i + 1] < 0.0:
            roots.append(brentq(lambda r: float(nl.f(r)), grid[i], grid[i + 1],
                                xtol=1e-15, rtol=8.9e-16))
    if not roots:
        raise NoBackgroundRoot("no sign change of f on the scanned range")
    root = max(roots)
    slope = float(nl.prime(root, h=_FD_REL_STEP * max(root, 1.0)))
    if abs(slope) <= slope_tol:
        raise DegenerateRoot("slope of f vanishes at the largest zero")
    if slope > 0.0:
        raise NoBackgroundRoot("largest zero of f has positive slope")
    return float(root)


def sound_speed(nl: Nonlinearity) -> float:
    """Speed of long acoustic waves on the background, sqrt(-2 r0^2 f'(r0^2))."""
    r0_sq = find_background(nl)
    cs_sq = -2.0 * r0_sq * float(nl.prime(r0_sq, h=_FD_REL_STEP * r0_sq))
    if cs_sq <= 0.0:
        raise DegenerateSoundSpeed(f"squared sound speed {cs_sq} is not positive")
    return float(np.sqrt(cs_sq))


def gamma_coeff(nl: Nonlinearity) -> float:
    """Effective cubic coefficient of the long-wave reduction.

    gamma = 6 - (4 r0^4 / cs^2) f''(r0^2).  Returned even when it vanishes;
    solvers that need it nonzero must check themselves.
    """
    r0_sq = find_background(nl)
    cs = sound_speed(nl)
    fpp = float(nl.second(r0_sq, h=_FD_REL_STEP * r0_sq))
    return float(6.0 - (4.0 * r0_sq**2 / cs**2) * fpp)


def potential(nl: Nonlinearity, s):
    """Potential energy density V(s) = integral of f from s up to r0^2.

    Closed forms for the catalog kinds; adaptive quadrature (abs tol 1e-12)
    for custom nonlinearities.  Vectorized over s.
    """
    s = np.asarray(s, dtype=float)
    if nl.kind == "gp":
        return 0.5 * (1.0 - s) ** 2
    if nl.kind == "cubic-quintic":
        a1, a3, a5 = nl.params["a1"], nl.params["a3"], nl.params["a5"]
        r0_sq = find_background(nl)

        def antider(t):
            return -a1 * t + 0.5 * a3 * t**2 - (a5 / 3.0) * t**3

        return antider(r0_sq) - antider(s)
    if nl.kind == "saturating":
        a, b, alpha = nl.params["a"], nl.params["b"], nl.params["alpha"]
        r0_sq = find_background(nl)

        def antider(t):
            return -alpha * b * np.exp(-t / alpha) - a * t

        return antider(r0_sq) - antider(s)
    if nl.kind == "power-sum":
        alpha, beta, nu = nl.params["alpha"], nl.params["beta"], nl.params["nu"]

        def antider(t):
            return ((alpha + beta) * t
                    - alpha * t ** (nu + 1.0) / (nu + 1.0)
                    - beta * t ** (2.0 * nu + 1.0) / (2.0 * nu + 1.0))

        return antider(1.0) - antider(s)
    r0_sq = find_background(nl)

    def one(si):
        val, _ = quad(lambda r: float(nl.f(r)), si, r0_sq,
                      epsabs=1e-12, epsrel=1e-12, limit=200)
        return val

    if s.ndim == 0:
        return float(one(float(s)))
    flat = np.asarray([one(si) for si in s.ravel()])
    return flat.reshape(s.shape)


def third_order_remainder(nl: Nonlinearity, r0_sq: float, cs: float, s):
    """Cubic-and-higher remainder of 2*rho*f(rho) expanded about rho = r0^2.

    With s = rho - r0^2 the quadratic Taylor part is
    -cs^2 s + (r0^2 f'' - cs^2/r0^2) s^2, so subtracting it leaves O(s^3).
    """
    s = np.asarray(s, dtype=float)
    fpp = float(nl.second(r0_sq, h=_FD_REL_STEP * r0_sq))
    quad_coef = r0_sq * fpp - cs**2 / r0_sq
    return 2.0 * (r0_sq + s) * nl.f(r0_sq + s) + cs**2 * s - quad_coef * s**2


@dataclass
class Medium:
    """Nonlinearity bundled with its cached background quantities."""

    nl: Nonlinearity
    r0_sq: float
    cs: float
    gamma: float

    @property
    def r0(self) -> float:
        return float(np.sqrt(self.r0_sq))

    def v(self, s):
        return potential(self.nl, s)

    def f(self, rho):
        return self.nl.f(rho)


def make_medium(kind: str, **params) -> Medium:
    nl = make_nonlinearity(kind, **params)
    return Medium(nl=nl, r0_sq=find_background(nl), cs=sound_speed(nl),
                  gamma=gamma_coeff(nl))
