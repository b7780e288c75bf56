"""Parameters, exponents, special functions and the explicit extremals.

Everything here is a pure function of its inputs. ``GNParams`` is frozen and
stores the interpolation exponent ``theta`` once, so downstream code never
recomputes it from a different expression.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError

__all__ = [
    "Regime",
    "GNParams",
    "RadialProfile",
    "validate_params",
    "theta",
    "theta_formula",
    "sobolev_exponent",
    "dpd_r",
    "log_gamma",
    "closed_form_A",
    "extremal_profile",
    "blowup_regime_equivalence",
]


class Regime(enum.Enum):
    GENERAL_GN = "GeneralGN"
    THEOREM_VALIDITY = "TheoremValidity"
    DEL_PINO_DOLBEAULT = "DelPinoDolbeault"
    BLOWUP_NONVALIDITY = "BlowupNonvalidity"


# strongest first
_REGIME_ORDER = (
    Regime.BLOWUP_NONVALIDITY,
    Regime.DEL_PINO_DOLBEAULT,
    Regime.THEOREM_VALIDITY,
    Regime.GENERAL_GN,
)

# r = p(q-1)/(p-1) is an equality between floats; everything else is strict.
_DPD_R_RTOL = 1e-12


def sobolev_exponent(n: int, p: float) -> float:
    """Return p* = np/(n-p), or ``inf`` when p >= n."""
    if p >= n:
        return math.inf
    return n * p / (n - p)


def theta_formula(n: int, p: float, q: float, r: float) -> float:
    """Interpolation exponent np(r-q) / (r(q(p-n) + np))."""
    return n * p * (r - q) / (r * (q * (p - n) + n * p))


def dpd_r(p: float, q: float) -> float:
    """The exponent r = p(q-1)/(p-1) tied to q in the explicit family."""
    if not p > 1:
        raise DomainError("p must exceed 1")
    return p * (q - 1) / (p - 1)


def _dpd_q_max(n: int, p: float) -> float:
    return p * (n - 1) / (n - p)


def _is_dpd(n, p, q, r) -> bool:
    if not (1 < p < n):
        return False
    if not (p < q < _dpd_q_max(n, p)):
        return False
    return math.isclose(r, dpd_r(p, q), rel_tol=_DPD_R_RTOL, abs_tol=0.0)


def _is_sobolev_endpoint(n, p, q, r) -> bool:
    if not (1 < p < n):
        return False
    q_max = _dpd_q_max(n, p)
    return math.isclose(q, q_max, rel_tol=_DPD_R_RTOL, abs_tol=0.0) and math.isclose(
        r, sobolev_exponent(n, p), rel_tol=_DPD_R_RTOL, abs_tol=0.0
    )


def _is_theorem(n, p, q, r) -> bool:
    p_star = sobolev_exponent(n, p)
    first = 1 < p <= 2 and p < r and 1 <= q < r < p_star
    second = p == r and p > 1 and q >= 1 and p * p / 2 <= q < p
    return first or second


def _is_general(n, p, q, r) -> bool:
    return 1 < p < n and 1 <= q < r <= sobolev_exponent(n, p)


@dataclass(frozen=True)
class GNParams:
    """A validated tuple (n, p, q, r) with its derived exponents.

    Build instances with :func:`validate_params`; the constructor does not
    re-check the constraints.
    """

    n: int
    p: float
    q: float
    r: float
    theta: float
    p_star: float
    regimes: frozenset = field(default_factory=frozenset)

    @property
    def regime(self) -> Regime:
        """The strongest regime the tuple satisfies."""
        for reg in _REGIME_ORDER:
            if reg in self.regimes:
                return reg
        raise AssertionError("GNParams without a regime")

    def has(self, regime: Regime) -> bool:
        return regime in self.regimes

    @property
    def is_dpd(self) -> bool:
        return Regime.DEL_PINO_DOLBEAULT in self.regimes

    @property
    def is_sobolev_endpoint(self) -> bool:
        """q = p(n-1)/(n-p) and r = p*, the closed end of the explicit family."""
        return _is_sobolev_endpoint(self.n, self.p, self.q, self.r)

    @property
    def has_closed_form(self) -> bool:
        """True where the extremals and best constant are explicit."""
        return self.is_dpd or self.is_sobolev_endpoint

    @property
    def q_exponent(self) -> float:
        """Power p(1-theta)/(theta q) carried by the L^q factor."""
        return self.p * (1 - self.theta) / (self.theta * self.q)

    @property
    def r_exponent(self) -> float:
        """Power p/(r theta) carried by the L^r factor."""
        return self.p / (self.r * self.theta)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "q": self.q,
            "r": self.r,
            "theta": self.theta,
            "p_star": self.p_star,
            "regime": self.regime.value,
            "regimes": sorted(reg.value for reg in self.regimes),
        }


def validate_params(n, p, q, r=None) -> GNParams:
    """Validate a raw tuple and classify it.

    When ``r`` is omitted it defaults to ``dpd_r(p, q)``. Raises
    :class:`DomainError` naming the first violated constraint.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 2:
        raise DomainError("n must be an integer >= 2")
    n = int(n)
    for name, val in (("p", p), ("q", q), ("r", r)):
        if val is not None and not math.isfinite(val):
            raise DomainError(f"{name} must be finite")
    if not p > 1:
        raise DomainError("p must exceed 1")
    if not q >= 1:
        raise DomainError("q must be >= 1")
    p, q = float(p), float(q)
    r = dpd_r(p, q) if r is None else float(r)
    if not q < r:
        raise DomainError("q must be < r")

    regimes = set()
    if _is_general(n, p, q, r):
        regimes.add(Regime.GENERAL_GN)
    if _is_theorem(n, p, q, r):
        regimes.add(Regime.THEOREM_VALIDITY)
    if _is_dpd(n, p, q, r):
        regimes.add(Regime.DEL_PINO_DOLBEAULT)
        if p > max(2.0, 2.0 * q / 3.0):
            regimes.add(Regime.BLOWUP_NONVALIDITY)

    p_star = sobolev_exponent(n, p)
    if not regimes:
        if p < n:
            raise DomainError(f"r must be <= p* = {p_star:.12g}")
        if p > 2:
            raise DomainError("p must be < n")
        raise DomainError("for p >= n, r must exceed p (or equal p with p^2/2 <= q < p)")

    return GNParams(
        n=n,
        p=p,
        q=q,
        r=r,
        theta=theta_formula(n, p, q, r),
        p_star=p_star,
        regimes=frozenset(regimes),
    )


def theta(params: GNParams) -> float:
    """The stored interpolation exponent of ``params``."""
    return params.theta


# Lanczos approximation, g = 7, nine coefficients.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def log_gamma(x: float) -> float:
    """Natural log of the Gamma function for x > 0."""
    if not x > 0:
        raise DomainError("log_gamma requires x > 0")
    if x < 0.5:
        # reflection keeps the series in its accurate range
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)
    # Gamma(1) = Gamma(2) = 1 exactly; the series misses by a few ulp there
    if x == 1.0 or x == 2.0:
        return 0.0
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(acc)


def closed_form_A(params: GNParams) -> float:
    """Best constant of the explicit family, evaluated in log space."""
    if not params.has_closed_form:
        raise DomainError(
            "closed form requires p < q <= p(n-1)/(n-p) and r = p(q-1)/(p-1)"
        )
    n, p, q = params.n, params.p, params.q
    np_minus = n * p - q * (n - p)
    log_a = p * math.log((q - p) / (p * math.sqrt(math.pi)))
    log_a += math.log(p * q / (n * (q - p)))
    log_a += params.r_exponent * math.log(np_minus / (p * q))
    log_ratio = (
        log_gamma(q * (p - 1) / (q - p))
        + log_gamma(n / 2 + 1)
        - log_gamma((p - 1) / p * np_minus / (q - p))
        - log_gamma(n * (p - 1) / p + 1)
    )
    log_a += p / n * log_ratio
    return math.exp(log_a)


@dataclass(frozen=True)
class RadialProfile:
    """A radial function rho -> u(rho) with its derivative and tail exponents.

    ``decay_exponent`` d means u(rho) ~ C rho**(-d) as rho -> inf;
    ``math.inf`` marks faster-than-algebraic decay or compact support.
    ``breakpoints`` lists radii where the profile is only finitely smooth;
    quadrature places panel edges there.
    """

    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    decay_exponent: float
    derivative_decay_exponent: float
    breakpoints: tuple = ()

    def evaluate(self, rho):
        return self.value(np.asarray(rho, dtype=float))

    def evaluate_derivative(self, rho):
        return self.derivative(np.asarray(rho, dtype=float))

    def scaled(self, c: float) -> "RadialProfile":
        """The profile c * u."""
        f, df = self.value, self.derivative
        return RadialProfile(
            lambda x: c * f(x),
            lambda x: c * df(x),
            self.decay_exponent,
            self.derivative_decay_exponent,
            self.breakpoints,
        )

    def dilated(self, beta: float) -> "RadialProfile":
        """The profile u(beta * rho)."""
        if not beta > 0:
            raise DomainError("dilation factor must be positive")
        f, df = self.value, self.derivative
        return RadialProfile(
            lambda x: f(beta * x),
            lambda x: beta * df(beta * x),
            self.decay_exponent,
            self.derivative_decay_exponent,
            tuple(b / beta for b in self.breakpoints),
        )

    def plus(self, other: "RadialProfile", weight: float = 1.0) -> "RadialProfile":
        """The profile u + weight * other."""
        f, df = self.value, self.derivative
        g, dg = other.value, other.derivative
        return RadialProfile(
            lambda x: f(x) + weight * g(x),
            lambda x: df(x) + weight * dg(x),
            min(self.decay_exponent, other.decay_exponent),
            min(self.derivative_decay_exponent, other.derivative_decay_exponent),
            tuple(sorted(set(self.breakpoints) | set(other.breakpoints))),
        )


def extremal_profile(params: GNParams) -> RadialProfile:
    """w(rho) = (1 + (q-p)/(p-1) rho^(p/(p-1)))^(-(p-1)/(q-p))."""
    p, q = params.p, params.q
    if not q > p:
        raise DomainError("extremal profile requires q > p")
    a = (q - p) / (p - 1)
    e = p / (p - 1)
    k = (p - 1) / (q - p)

    def value(rho):
        return (1.0 + a * rho**e) ** (-k)

    def derivative(rho):
        # k * a * e = p/(q-p) * ... ; written out to keep the zero at rho = 0
        return -k * a * e * rho ** (e - 1.0) * (1.0 + a * rho**e) ** (-k - 1.0)

    decay = p / (q - p)
    return RadialProfile(value, derivative, decay, decay + 1.0)


def blowup_regime_equivalence(n: int, p: float) -> tuple[bool, bool]:
    """Compare p > max(2, 2q/3) at q = p(n-1)/(n-p) with 2 < p < (n+2)/3."""
    q = _dpd_q_max(n, p)
    first = p > max(2.0, 2.0 * q / 3.0)
    second = 2.0 < p < (n + 2) / 3.0
    return first, second
