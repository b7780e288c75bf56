"""Radial quadrature over R^n and the quantities built on it.

Integrals of radial functions reduce to
    int_{R^n} f(|x|) dx = omega_{n-1} int_0^inf f(rho) rho^(n-1) drho,
which is evaluated with composite Gauss-Legendre panels on [0, R] and a
power-law-adapted tail on [R, inf). The tail relies on the exact decay
exponents attached to every profile.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .core import (
    GNParams,
    RadialProfile,
    closed_form_A,
    extremal_profile,
    log_gamma,
)
from .errors import (
    AccuracyNotMet,
    DomainError,
    ExtremalityViolated,
    TailDivergence,
    ZeroProfile,
)

__all__ = [
    "TailModel",
    "QuadratureScheme",
    "MomentIntegrals",
    "ExtremalityReport",
    "sphere_area",
    "radial_integral",
    "radial_integral_estimate",
    "gn_quotient",
    "gateaux_derivative",
    "moments",
    "blowup_coefficient",
    "bump_perturbation",
    "verify_extremality",
    "gaussian_profile",
    "algebraic_profile",
    "estimate_inverse_constant",
]


class TailModel(enum.Enum):
    POWER_LAW = "PowerLawCorrection"
    DROP = "Drop"


@dataclass(frozen=True)
class QuadratureScheme:
    """Composite Gauss-Legendre configuration on [0, R] plus a tail model."""

    order: int = 16
    truncation_radius: float = 1e4
    panels: int = 64
    tail_model: TailModel = TailModel.POWER_LAW
    target_rel_err: float = 1e-8
    # far end of the mapped tail; beyond it only the leading power law is kept
    tail_span: float = 1e8
    tail_panels: int = 24
    max_refinements: int = 4

    def __post_init__(self):
        if not self.truncation_radius > 0:
            raise DomainError("truncation radius must be positive")
        if self.panels < 1:
            raise DomainError("panel count must be >= 1")
        if self.order < 2:
            raise DomainError("Gauss-Legendre order must be >= 2")
        if not self.target_rel_err > 0:
            raise DomainError("target_rel_err must be positive")

    def refined(self) -> "QuadratureScheme":
        """Same scheme with doubled radius and panel count."""
        return replace(
            self, truncation_radius=2 * self.truncation_radius, panels=2 * self.panels
        )


@lru_cache(maxsize=None)
def _gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n, 2 pi^(n/2) / Gamma(n/2)."""
    return 2.0 * math.exp(0.5 * n * math.log(math.pi) - log_gamma(0.5 * n))


def _panel_edges(scheme: QuadratureScheme, breakpoints=()) -> np.ndarray:
    # geometric grading toward 0 on [0, 1] and toward 1 on [1, R]
    R = scheme.truncation_radius
    inner = max(1, scheme.panels // 2)
    outer = max(1, scheme.panels - inner)
    if R > 1.0:
        left = np.concatenate(([0.0], 2.0 ** -np.arange(inner - 1, -1, -1, dtype=float)))
        right = np.geomspace(1.0, R, outer + 1)[1:]
        edges = np.concatenate((left, right))
    else:
        left = R * 2.0 ** -np.arange(scheme.panels - 1, -1, -1, dtype=float)
        edges = np.concatenate(([0.0], left))
    extra = [b for b in breakpoints if 0.0 < b < R]
    if extra:
        edges = np.union1d(edges, extra)
    return edges


def _panel_sum(g, edges, order):
    x, w = _gauss_legendre(order)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = 0.5 * (b - a)
    nodes = a + half * (x + 1.0)
    vals = g(nodes.ravel()).reshape(nodes.shape)
    contrib = (vals * w).sum(axis=1) * half[:, 0]
    return float(contrib.sum()), float(np.abs(contrib).sum())


def _bisect(edges):
    mid = 0.5 * (edges[:-1] + edges[1:])
    out = np.empty(2 * len(edges) - 1)
    out[0::2] = edges
    out[1::2] = mid
    return out


def _tail(g, n, scheme, decay):
    """int_R^inf g, with g(rho) ~ C rho^(-(decay - n) - 1)."""
    R = scheme.truncation_radius
    m = decay - n
    # t_min is floored so steep tails cannot underflow the geometric panels
    log_t_min = max(-m * math.log(scheme.tail_span), -600.0)
    t_min = math.exp(log_t_min)
    rho_max = R * math.exp(-log_t_min / m)
    # rho = R t^(-1/m) turns a pure power law into a constant in t
    t_edges = np.geomspace(t_min, 1.0, scheme.tail_panels + 1)

    def mapped(t):
        rho = R * t ** (-1.0 / m)
        return g(rho) * (R / m) * t ** (-1.0 / m - 1.0)

    def piece(edges):
        val, mag = _panel_sum(mapped, edges, scheme.order)
        # remainder beyond rho_max from the leading power law
        far = float(g(np.array([rho_max]))[0]) * rho_max / m
        return val + far, mag + abs(far)

    coarse = piece(t_edges)
    fine = piece(_bisect(t_edges))
    return fine[0], fine[1], abs(fine[0] - coarse[0])


def radial_integral_estimate(
    f: Callable[[np.ndarray], np.ndarray],
    n: int,
    scheme: QuadratureScheme | None = None,
    decay_exponent: float = math.inf,
    breakpoints=(),
) -> tuple[float, float]:
    """Return (value, absolute error estimate) of int_{R^n} f(|x|) dx.

    ``decay_exponent`` is d in f(rho) ~ C rho^(-d); ``math.inf`` means the
    tail beyond the truncation radius is negligible.
    """
    scheme = scheme or QuadratureScheme()
    if math.isfinite(decay_exponent) and not decay_exponent > n:
        raise TailDivergence(
            f"integrand decays like rho^-{decay_exponent:.6g}, needs exponent > n = {n}"
        )

    def g(rho):
        return f(rho) * rho ** (n - 1)

    edges = _panel_edges(scheme, breakpoints)
    omega = sphere_area(n)
    use_tail = scheme.tail_model is TailModel.POWER_LAW and math.isfinite(decay_exponent)

    for _ in range(scheme.max_refinements + 1):
        coarse, _ = _panel_sum(g, edges, scheme.order)
        fine, mag = _panel_sum(g, _bisect(edges), scheme.order)
        err = abs(fine - coarse)
        value = fine
        if use_tail:
            t_val, t_mag, t_err = _tail(g, n, scheme, decay_exponent)
            value += t_val
            mag += t_mag
            err += t_err
        err += 64 * np.finfo(float).eps * mag
        if not math.isfinite(value):
            raise TailDivergence("integrand is not finite on the quadrature nodes")
        if err <= scheme.target_rel_err * abs(value) or mag == 0.0:
            return omega * value, omega * err
        edges = _bisect(edges)
    raise AccuracyNotMet(
        f"relative error estimate {err / abs(value):.3g} exceeds "
        f"target {scheme.target_rel_err:.3g} after {scheme.max_refinements} refinements"
    )


def radial_integral(f, n, scheme=None, decay_exponent=math.inf, breakpoints=()) -> float:
    """int_{R^n} f(|x|) dx; see :func:`radial_integral_estimate`."""
    return radial_integral_estimate(f, n, scheme, decay_exponent, breakpoints)[0]


def _quotient_parts(u: RadialProfile, params: GNParams, scheme):
    n, p, q, r = params.n, params.p, params.q, params.r
    bp = u.breakpoints
    grad = radial_integral(
        lambda x: np.abs(u.derivative(x)) ** p, n, scheme,
        p * u.derivative_decay_exponent, bp,
    )
    lq = radial_integral(
        lambda x: np.abs(u.value(x)) ** q, n, scheme, q * u.decay_exponent, bp
    )
    lr = radial_integral(
        lambda x: np.abs(u.value(x)) ** r, n, scheme, r * u.decay_exponent, bp
    )
    return grad, lq, lr


def gn_quotient(u: RadialProfile, params: GNParams, scheme: QuadratureScheme | None = None) -> float:
    """Q(u) = int|grad u|^p (int|u|^q)^(p(1-theta)/(theta q)) / (int|u|^r)^(p/(r theta)).

    The infimum of Q over admissible u is 1/A(p,q,r).
    """
    grad, lq, lr = _quotient_parts(u, params, scheme)
    if lr == 0.0:
        raise ZeroProfile("profile vanishes identically")
    # logs keep huge/small moments from overflowing the powers
    log_q = (
        math.log(grad) if grad > 0 else -math.inf
    ) + params.q_exponent * math.log(lq) - params.r_exponent * math.log(lr)
    return math.exp(log_q)


def gateaux_derivative(u, phi, params, scheme=None, eps=1e-4) -> float:
    """Centered difference [Q(u + eps phi) - Q(u - eps phi)] / (2 eps)."""
    plus = gn_quotient(u.plus(phi, eps), params, scheme)
    minus = gn_quotient(u.plus(phi, -eps), params, scheme)
    return (plus - minus) / (2 * eps)


@dataclass(frozen=True)
class MomentIntegrals:
    I1: float
    I2: float
    I3: float
    I4: float
    I5: float
    errors: tuple = (0.0, 0.0, 0.0, 0.0, 0.0)

    def values(self) -> tuple:
        return (self.I1, self.I2, self.I3, self.I4, self.I5)


def _moment_decays(params: GNParams):
    p, q, r = params.p, params.q, params.r
    d = p / (q - p)
    # (name, integrand decay before the |x|^2 weight, weighted?)
    return (
        ("I1", q * d, False),
        ("I2", p * (d + 1), True),
        ("I3", q * d, True),
        ("I4", p * (d + 1), False),
        ("I5", r * d, True),
    )


def moments(params: GNParams, scheme: QuadratureScheme | None = None) -> MomentIntegrals:
    """The five moment integrals of the extremal profile w.

    I1 = int w^q, I2 = int |grad w|^p |x|^2, I3 = int w^q |x|^2,
    I4 = int |grad w|^p, I5 = int w^r |x|^2.
    """
    if not params.q > params.p:
        raise DomainError("moments require q > p")
    n = params.n
    for name, decay, weighted in _moment_decays(params):
        need = n + 2 if weighted else n
        if not decay > need:
            raise TailDivergence(
                f"{name} diverges: decay exponent {decay:.6g} must exceed {need}"
            )
    w = extremal_profile(params)
    p, q, r = params.p, params.q, params.r
    integrands = (
        lambda x: w.value(x) ** q,
        lambda x: np.abs(w.derivative(x)) ** p * x * x,
        lambda x: w.value(x) ** q * x * x,
        lambda x: np.abs(w.derivative(x)) ** p,
        lambda x: w.value(x) ** r * x * x,
    )
    vals, errs = [], []
    for f, (_, decay, weighted) in zip(integrands, _moment_decays(params)):
        v, e = radial_integral_estimate(f, n, scheme, decay - 2 if weighted else decay)
        vals.append(v)
        errs.append(e)
    return MomentIntegrals(*vals, errors=tuple(errs))


def blowup_coefficient(params: GNParams, scheme: QuadratureScheme | None = None,
                       mom: MomentIntegrals | None = None) -> float:
    """Coefficient of eps^2 in the concentration expansion near a point.

    A (I1^s I2 + s I1 I4 I3^(s-1)) - p/(r theta) I5 with s = p(1-theta)/(theta q)
    and A the closed-form constant. Positive values mean the optimal
    inequality fails wherever the scalar curvature is positive.
    """
    m = mom if mom is not None else moments(params, scheme)
    a_opt = closed_form_A(params)
    s = params.q_exponent
    bracket = m.I1**s * m.I2 + s * m.I1 * m.I4 * m.I3 ** (s - 1)
    return a_opt * bracket - params.r_exponent * m.I5


def bump_perturbation(a: float, b: float, amplitude: float = 1.0) -> RadialProfile:
    """C^2 bump amplitude * ((rho-a)(b-rho))^3 / ((b-a)/2)^6 on [a, b]."""
    if not 0 <= a < b:
        raise DomainError("bump support must satisfy 0 <= a < b")
    scale = amplitude / ((b - a) / 2) ** 6

    def value(rho):
        s = np.clip((rho - a) * (b - rho), 0.0, None)
        return scale * s**3

    def derivative(rho):
        s = np.clip((rho - a) * (b - rho), 0.0, None)
        return scale * 3 * s**2 * (a + b - 2 * rho)

    return RadialProfile(value, derivative, math.inf, math.inf, (a, b))


def gaussian_profile(width: float = 1.0, amplitude: float = 1.0) -> RadialProfile:
    """amplitude * exp(-(rho/width)^2)."""

    def value(rho):
        return amplitude * np.exp(-((rho / width) ** 2))

    def derivative(rho):
        return -2 * amplitude * rho / width**2 * np.exp(-((rho / width) ** 2))

    return RadialProfile(value, derivative, math.inf, math.inf)


def algebraic_profile(k: float, width: float = 1.0, amplitude: float = 1.0) -> RadialProfile:
    """amplitude * (1 + (rho/width)^2)^(-k)."""

    def value(rho):
        return amplitude * (1 + (rho / width) ** 2) ** (-k)

    def derivative(rho):
        return -2 * k * amplitude * rho / width**2 * (1 + (rho / width) ** 2) ** (-k - 1)

    return RadialProfile(value, derivative, 2 * k, 2 * k + 1)


@dataclass
class PerturbationResult:
    seed: int
    support: tuple
    amplitude: float
    q_plus: float
    q_minus: float
    derivative: float
    passed: bool


@dataclass
class ExtremalityReport:
    params: dict
    closed_form_A: float
    q_extremal: float
    gap: float
    gap_tol: float
    eps: float
    min_tol: float
    grad_tol: float
    perturbations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.gap <= self.gap_tol and all(r.passed for r in self.perturbations)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def _random_bump(seed: int, radius: float) -> tuple:
    rng = np.random.default_rng(seed)
    a = float(rng.uniform(0.05, 0.5 * radius))
    b = float(a + rng.uniform(0.2, 0.5 * radius))
    amp = float(rng.uniform(0.05, 0.5) * rng.choice([-1.0, 1.0]))
    return a, b, amp


def verify_extremality(
    params: GNParams,
    scheme: QuadratureScheme | None = None,
    perturbations: int = 20,
    eps: float = 1e-4,
    seed: int = 0,
    min_tol: float = 1e-5,
    grad_tol: float = 1e-3,
    gap_tol: float | None = None,
    bump_radius: float = 4.0,
    raise_on_failure: bool = True,
) -> ExtremalityReport:
    """Check numerically that the explicit profile minimizes the quotient.

    Perturbation ``i`` is a C^2 bump drawn from ``default_rng(seed + i)``.
    ``min_tol`` and ``grad_tol`` are relative to Q(w). ``gap_tol`` defaults to
    100 * scheme.target_rel_err.
    """
    scheme = scheme or QuadratureScheme()
    if not params.has_closed_form:
        raise DomainError("extremality check requires the explicit-extremal range")
    gap_tol = 100 * scheme.target_rel_err if gap_tol is None else gap_tol
    w = extremal_profile(params)
    a_opt = closed_form_A(params)
    q_w = gn_quotient(w, params, scheme)
    report = ExtremalityReport(
        params=params.as_dict(),
        closed_form_A=a_opt,
        q_extremal=q_w,
        gap=abs(q_w * a_opt - 1.0),
        gap_tol=gap_tol,
        eps=eps,
        min_tol=min_tol,
        grad_tol=grad_tol,
    )
    for i in range(perturbations):
        a, b, amp = _random_bump(seed + i, bump_radius)
        phi = bump_perturbation(a, b, amp)
        q_plus = gn_quotient(w.plus(phi, eps), params, scheme)
        q_minus = gn_quotient(w.plus(phi, -eps), params, scheme)
        deriv = (q_plus - q_minus) / (2 * eps)
        ok = (
            min(q_plus, q_minus) >= q_w * (1 - min_tol)
            and abs(deriv) <= grad_tol * q_w
        )
        report.perturbations.append(
            PerturbationResult(seed + i, (a, b), amp, q_plus, q_minus, deriv, ok)
        )
    if raise_on_failure and not report.passed:
        bad = [r.seed for r in report.perturbations if not r.passed]
        raise ExtremalityViolated(
            f"extremality check failed: gap={report.gap:.3g}, failing seeds={bad}",
            report,
        )
    return report


def estimate_inverse_constant(
    params: GNParams,
    scheme: QuadratureScheme | None = None,
    widths=(0.25, 0.5, 1.0, 2.0, 4.0, 8.0),
) -> float:
    """Exploratory upper estimate of inf Q = 1/A(p,q,r) over radial profiles.

    Minimizes Q over nonnegative combinations of Gaussians with the given
    widths. Not certified: the result is an upper bound of the true infimum
    up to quadrature error.
    """
    from scipy.optimize import minimize

    scheme = scheme or QuadratureScheme(target_rel_err=1e-6, tail_model=TailModel.DROP,
                                        truncation_radius=64.0)
    widths = tuple(widths)

    def profile(logc):
        c = np.exp(logc)

        def value(rho):
            return sum(ci * np.exp(-((rho / s) ** 2)) for ci, s in zip(c, widths))

        def derivative(rho):
            return sum(-2 * ci * rho / s**2 * np.exp(-((rho / s) ** 2))
                       for ci, s in zip(c, widths))

        return RadialProfile(value, derivative, math.inf, math.inf)

    def objective(logc):
        return gn_quotient(profile(np.clip(logc, -40, 40)), params, scheme)

    x0 = np.zeros(len(widths))
    res = minimize(objective, x0, method="Nelder-Mead",
                   options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": 4000})
    return float(min(res.fun, objective(x0)))
