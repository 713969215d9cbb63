"""Carrier statistics: chemical potential h, its inverse g, primitives H and G.

Three families are provided:

* ``Boltzmann``      h = log, g = exp, unbounded densities.
* ``Blakemore``      h(x) = log(x / (1 - gamma x)), densities in (0, 1/gamma).
* ``FermiDiracHalf`` g is the normalised Fermi-Dirac integral of order 1/2,
  evaluated by Gauss-Legendre quadrature; h is obtained by Newton iteration.

H is the primitive of h vanishing at 1 and G the primitive of g vanishing at
minus infinity.  All functions are vectorised over numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import expit, gamma as gamma_fn


class DomainError(ValueError):
    """Raised when a density lies outside the admissible interval (0, a)."""


class MeanKind(str, Enum):
    ENTROPIC = "entropic"
    ARITHMETIC = "arithmetic"


def _check_density(x, upper):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0.0)) or np.any(~(x < upper)):
        bad = x[~((x > 0.0) & (x < upper))]
        raise DomainError(f"density outside (0, {upper}): {bad.ravel()[:5]}")
    return x


class Statistics:
    """Base class. Subclasses implement g, dg, h, dh, H, G."""

    kind: str = ""
    upper_bound: float = math.inf

    def check(self, x):
        return _check_density(x, self.upper_bound)

    # x h(x) - H(x), up to an additive constant; derivative is x h'(x)
    def psi(self, x):
        x = self.check(x)
        return x * self.h(x) - self.H(x)

    def bregman(self, x, y):
        """H(x) - H(y) - h(y)(x - y)."""
        return self.H(x) - self.H(y) - self.h(y) * (np.asarray(x) - np.asarray(y))

    def growth_bound(self, lo=-50.0, hi=50.0, n=2001):
        """Empirical max of g'/g on a uniform grid of [lo, hi]."""
        s = np.linspace(lo, hi, n)
        return float(np.max(self.dg(s) / self.g(s)))


def _log_bregman(x, y):
    # x log(x/y) - x + y, accurate when x is close to y
    u = (x - y) / y
    return y * ((1.0 + u) * np.log1p(u) - u)


@dataclass(frozen=True)
class Boltzmann(Statistics):
    kind: str = "boltzmann"
    upper_bound: float = math.inf

    def g(self, s):
        return np.exp(s)

    def dg(self, s):
        return np.exp(s)

    def h(self, x):
        return np.log(self.check(x))

    def dh(self, x):
        return 1.0 / self.check(x)

    def H(self, x):
        x = self.check(x)
        return x * np.log(x) - x + 1.0

    def G(self, s):
        return np.exp(s)

    def psi(self, x):
        return self.check(x) - 1.0

    def bregman(self, x, y):
        return _log_bregman(self.check(x), self.check(y))


@dataclass(frozen=True)
class Blakemore(Statistics):
    gamma: float = 0.27
    kind: str = "blakemore"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("Blakemore gamma must be positive")

    @property
    def upper_bound(self):
        return 1.0 / self.gamma

    def g(self, s):
        s = np.asarray(s, dtype=float)
        e = np.exp(-np.abs(s))
        # 1/(gamma + e^{-s}) written without overflow for either sign of s
        return np.where(s >= 0, 1.0 / (self.gamma + e), e / (1.0 + self.gamma * e))

    def dg(self, s):
        g = self.g(s)
        return g * (1.0 - self.gamma * g)

    def h(self, x):
        x = self.check(x)
        return np.log(x) - np.log1p(-self.gamma * x)

    def dh(self, x):
        x = self.check(x)
        return 1.0 / (x * (1.0 - self.gamma * x))

    def _F(self, x):
        q = 1.0 - self.gamma * x
        return x * np.log(x) + q * np.log(q) / self.gamma

    def H(self, x):
        x = self.check(x)
        return self._F(x) - self._F(1.0)

    def G(self, s):
        return np.logaddexp(0.0, math.log(self.gamma) + np.asarray(s, dtype=float)) / self.gamma

    def psi(self, x):
        return -np.log1p(-self.gamma * self.check(x)) / self.gamma

    def bregman(self, x, y):
        x, y = self.check(x), self.check(y)
        gm = self.gamma
        return _log_bregman(x, y) + _log_bregman(1.0 - gm * x, 1.0 - gm * y) / gm


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    return np.polynomial.legendre.leggauss(n)


def fermi_dirac_integral(j, s, nodes=16, width=1.5, tail=45.0):
    """Normalised Fermi-Dirac integral 1/Gamma(j+1) int_0^inf z^j / (1 + e^{z-s}) dz.

    The substitution z = t^2 removes the endpoint singularity for j > -1;
    the z-range [0, max(s,0) + tail] is cut into panels of width at most
    ``width`` and each panel is mapped to t-space with ``nodes`` Gauss points.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    upper = np.maximum(s, 0.0) + tail
    panels = max(24, int(math.ceil(float(upper.max()) / width)))
    xi, wi = _gauss_legendre(nodes)
    frac = np.linspace(0.0, 1.0, panels + 1)
    tb = np.sqrt(upper[:, None] * frac[None, :])
    a, b = tb[:, :-1], tb[:, 1:]
    half = 0.5 * (b - a)
    t = (0.5 * (a + b))[:, :, None] + half[:, :, None] * xi[None, None, :]
    w = half[:, :, None] * wi[None, None, :]
    f = 2.0 * t ** (2.0 * j + 1.0) * expit(s[:, None, None] - t * t)
    return (f * w).sum(axis=(1, 2)) / gamma_fn(j + 1.0)


@dataclass(frozen=True)
class FermiDiracHalf(Statistics):
    nodes: int = 16
    tol: float = 1e-13
    max_iter: int = 200
    kind: str = "fermi_dirac_half"
    upper_bound: float = math.inf

    def _shape(self, s, out):
        return out.reshape(np.shape(s)) if np.ndim(s) else float(out[0])

    def g(self, s):
        return self._shape(s, fermi_dirac_integral(0.5, s, self.nodes))

    def dg(self, s):
        return self._shape(s, fermi_dirac_integral(-0.5, s, self.nodes))

    def G(self, s):
        return self._shape(s, fermi_dirac_integral(1.5, s, self.nodes))

    def h(self, x):
        x = self.check(x)
        target = np.log(np.atleast_1d(x)).astype(float)
        # log g is concave and log g(s) <= s, so Newton on log g from
        # s0 = log x approaches the root monotonically from the left
        s = target.copy()
        for _ in range(self.max_iter):
            g = fermi_dirac_integral(0.5, s, self.nodes)
            dg = fermi_dirac_integral(-0.5, s, self.nodes)
            step = (np.log(g) - target) * g / dg
            s = s - step
            if np.all(np.abs(step) <= self.tol * (1.0 + np.abs(s))):
                break
        else:
            raise RuntimeError("Fermi-Dirac inversion did not converge")
        return self._shape(x, s)

    def dh(self, x):
        return 1.0 / self.dg(self.h(x))

    def H(self, x):
        x = self.check(x)
        s = self.h(x)
        s1 = float(self.h(1.0))
        return x * s - self.G(s) - (s1 - float(self.G(s1)))


def parse_statistics(spec: str) -> Statistics:
    """Build a model from ``boltzmann``, ``blakemore:<gamma>`` or ``fermi_dirac_half``."""
    name, _, arg = spec.strip().lower().partition(":")
    if name == "boltzmann" and not arg:
        return Boltzmann()
    if name == "blakemore":
        return Blakemore(float(arg) if arg else 0.27)
    if name in ("fermi_dirac_half", "fd12", "fermi-dirac-half") and not arg:
        return FermiDiracHalf()
    raise ValueError(f"unknown statistics spec {spec!r}")


# Relative proximity in h-space below which the quotient formula for m_h is
# replaced by the midpoint; the midpoint error there is O(dh^2) ~ 1e-11.
MH_DIAGONAL_THRESHOLD = 5e-6


def mean_mh(model: Statistics, x, y):
    """Entropic mean m_h(x, y) = (psi(x) - psi(y)) / (h(x) - h(y)), psi = x h - H."""
    x, y = np.broadcast_arrays(model.check(x), model.check(y))
    hx, hy = model.h(x), model.h(y)
    dh = hx - hy
    near = np.abs(dh) < MH_DIAGONAL_THRESHOLD * (1.0 + np.abs(hx))
    safe = np.where(near, 1.0, dh)
    with np.errstate(invalid="ignore", divide="ignore"):
        quot = (model.psi(x) - model.psi(y)) / safe
    out = np.where(near, 0.5 * (x + y), quot)
    return out if out.ndim else float(out)


def mean_mh_partials(model: Statistics, x, y):
    """Partial derivatives of m_h with respect to x and y."""
    x, y = np.broadcast_arrays(model.check(x), model.check(y))
    m = mean_mh(model, x, y)
    hx, hy = model.h(x), model.h(y)
    dh = hx - hy
    near = np.abs(dh) < MH_DIAGONAL_THRESHOLD * (1.0 + np.abs(hx))
    safe = np.where(near, 1.0, dh)
    dx = np.where(near, 0.5, model.dh(x) * (x - m) / safe)
    dy = np.where(near, 0.5, model.dh(y) * (m - y) / safe)
    return dx, dy


def mean_apply(kind, model: Statistics, x, y):
    kind = MeanKind(kind)
    if kind is MeanKind.ENTROPIC:
        return mean_mh(model, x, y)
    x, y = model.check(x), model.check(y)
    return 0.5 * (x + y)


def mean_partials(kind, model: Statistics, x, y):
    kind = MeanKind(kind)
    if kind is MeanKind.ENTROPIC:
        return mean_mh_partials(model, x, y)
    x, y = np.broadcast_arrays(model.check(x), model.check(y))
    half = np.full(x.shape, 0.5)
    return half, half.copy()
