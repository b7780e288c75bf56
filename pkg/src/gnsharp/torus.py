"""Penalized minimization on a flat periodic grid of unit volume.

The discrete functional is

    J_alpha(u) = (E_p(u) + alpha int u^p) (int u^q)^(p(1-theta)/(theta q))

over grid fields with ||u||_r = 1 and u >= 0, where E_p is the regularized
forward-difference p-energy. Reductions use ``math.fsum`` so every integral
is exactly invariant under periodic shifts and independent of array layout.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import GNParams, Regime
from .errors import DomainError, NotConverged, ZeroField

__all__ = [
    "TorusGrid",
    "TorusField",
    "SolverOptions",
    "MinimizerDiagnostics",
    "p_dirichlet_energy",
    "lr_normalize",
    "j_alpha",
    "j_alpha_gradient",
    "minimize_j_alpha",
    "alpha_sweep",
    "concentration_profile",
    "sweep_trends",
    "bump_field",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on [0, L)^dim with L^dim = 1."""

    dim: int
    points_per_side: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise DomainError("torus dimension must be 2 or 3")
        if self.points_per_side < 8:
            raise DomainError("points_per_side must be >= 8")

    @property
    def side_length(self) -> float:
        return 1.0

    @property
    def spacing(self) -> float:
        return self.side_length / self.points_per_side

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple:
        return (self.points_per_side,) * self.dim

    @property
    def total_volume(self) -> float:
        return self.cell_volume * self.points_per_side**self.dim

    def integrate(self, values: np.ndarray) -> float:
        """Cell-sum quadrature with an order-independent exact sum."""
        return math.fsum(values.ravel()) * self.cell_volume

    def periodic_distance(self, center) -> np.ndarray:
        """Distance from every cell center to the cell ``center``."""
        N, h = self.points_per_side, self.spacing
        sq = np.zeros(self.shape)
        for axis, c in enumerate(center):
            idx = np.arange(N)
            d = np.abs(idx - c)
            d = np.minimum(d, N - d) * h
            shape = [1] * self.dim
            shape[axis] = N
            sq = sq + d.reshape(shape) ** 2
        return np.sqrt(sq)


@dataclass(frozen=True)
class TorusField:
    """Nonnegative finite values on a :class:`TorusGrid`."""

    values: np.ndarray
    grid: TorusGrid

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise DomainError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("field has non-finite entries")
        if np.any(vals < 0):
            raise DomainError("field must be nonnegative")
        object.__setattr__(self, "values", vals)

    def lr_norm(self, r: float) -> float:
        return self.grid.integrate(self.values**r) ** (1.0 / r)

    def max_index(self) -> tuple:
        """Index of the maximum; ties go to the lowest lexicographic index."""
        flat = int(np.argmax(self.values))
        return tuple(int(i) for i in np.unravel_index(flat, self.grid.shape))


def _forward_diffs(u: np.ndarray, h: float):
    return [(np.roll(u, -1, axis=k) - u) / h for k in range(u.ndim)]


def _grad_sq(u: np.ndarray, h: float) -> np.ndarray:
    return sum(d * d for d in _forward_diffs(u, h))


def p_dirichlet_energy(u: TorusField, p: float, delta: float = 0.0) -> float:
    """sum over cells of (|grad_h u|^2 + delta^2)^(p/2) h^dim."""
    g2 = _grad_sq(u.values, u.grid.spacing)
    return u.grid.integrate((g2 + delta * delta) ** (p / 2))


def lr_normalize(u: TorusField, r: float) -> TorusField:
    """Rescale ``u`` to unit discrete L^r norm."""
    norm = u.lr_norm(r)
    if norm == 0.0:
        raise ZeroField("cannot normalize an identically zero field")
    return TorusField(u.values / norm, u.grid)


@dataclass(frozen=True)
class _Parts:
    grad: float
    pmass: float
    qmass: float
    rmass: float


def _parts(vals: np.ndarray, grid: TorusGrid, params: GNParams, delta: float) -> _Parts:
    p, q, r = params.p, params.q, params.r
    g2 = _grad_sq(vals, grid.spacing)
    return _Parts(
        grad=grid.integrate((g2 + delta * delta) ** (p / 2)),
        pmass=grid.integrate(vals**p),
        qmass=grid.integrate(vals**q),
        rmass=grid.integrate(vals**r),
    )


def _j_from_parts(parts: _Parts, params: GNParams, alpha: float) -> float:
    return (parts.grad + alpha * parts.pmass) * parts.qmass**params.q_exponent


def j_alpha(u: TorusField, params: GNParams, alpha: float, delta: float = 0.0) -> float:
    """(E_p(u) + alpha int u^p) (int u^q)^(p(1-theta)/(theta q))."""
    return _j_from_parts(_parts(u.values, u.grid, params, delta), params, alpha)


def j_alpha_gradient(u: TorusField, params: GNParams, alpha: float, delta: float = 0.0) -> np.ndarray:
    """Exact gradient of :func:`j_alpha` with respect to the grid values."""
    return _gradient(u.values, u.grid, params, alpha, delta)[0]


def _gradient(vals, grid, params, alpha, delta):
    p, q = params.p, params.q
    s = params.q_exponent
    h, vol = grid.spacing, grid.cell_volume
    diffs = _forward_diffs(vals, h)
    g2 = sum(d * d for d in diffs)
    weight = (g2 + delta * delta) ** (p / 2 - 1)
    # adjoint of the forward difference: (D^T v)[j] = (v[j-1] - v[j]) / h
    dgrad = np.zeros_like(vals)
    for k, d in enumerate(diffs):
        flux = weight * d
        dgrad += (np.roll(flux, 1, axis=k) - flux) / h
    dgrad *= p * vol
    parts = _Parts(
        grad=grid.integrate((g2 + delta * delta) ** (p / 2)),
        pmass=grid.integrate(vals**p),
        qmass=grid.integrate(vals**q),
        rmass=grid.integrate(vals ** params.r),
    )
    dp = p * vals ** (p - 1) * vol
    dq = q * vals ** (q - 1) * vol
    qs = parts.qmass**s
    g = (dgrad + alpha * dp) * qs
    g += (parts.grad + alpha * parts.pmass) * s * parts.qmass ** (s - 1) * dq
    return g, parts


def bump_field(grid: TorusGrid, width: float = 0.15, center=None) -> TorusField:
    """exp(-|x - x0|^2 / width^2) with periodic distance, x0 a cell center."""
    if center is None:
        center = tuple(n // 2 for n in grid.shape)
    dist = grid.periodic_distance(center)
    return TorusField(np.exp(-((dist / (width * grid.side_length)) ** 2)), grid)


@dataclass(frozen=True)
class SolverOptions:
    """Projected gradient settings.

    ``delta`` defaults to 1e-8 for p < 2 and 0 for p = 2 when left as None.
    """

    delta: float | None = None
    max_iter: int = 100_000
    rtol: float = 1e-10
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    init_width: float = 0.15
    strict: bool = False

    def resolved_delta(self, p: float) -> float:
        if self.delta is not None:
            return self.delta
        return 0.0 if p == 2 else 1e-8

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class MinimizerDiagnostics:
    alpha: float
    nu_alpha: float
    A_alpha: float
    B_alpha: float
    mu_alpha: float
    grad_energy: float
    penalty: float
    q_mass: float
    max_index: tuple
    concentration: list
    iterations: int
    converged: bool
    step_size: float
    el_residual: float
    start: str = "bump"
    history: list = field(default_factory=list, repr=False)

    @property
    def penalty_share(self) -> float:
        return self.penalty / self.nu_alpha if self.nu_alpha else float("nan")

    def concentration_at(self, radius: float) -> float:
        for rad, frac in self.concentration:
            if math.isclose(rad, radius, rel_tol=1e-12, abs_tol=1e-15):
                return frac
        raise KeyError(radius)

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("history")
        out["max_index"] = list(self.max_index)
        out["concentration"] = [list(c) for c in self.concentration]
        return out


DEFAULT_RADII = (0.05, 0.1, 0.2, 0.3, 0.5)


def concentration_profile(u: TorusField, r: float, radii) -> list:
    """Fraction of int u^r inside periodic balls about the maximum cell."""
    grid = u.grid
    center = u.max_index()
    dist = grid.periodic_distance(center)
    weights = u.values**r
    total = math.fsum(weights.ravel())
    out = []
    for rad in radii:
        inside = math.fsum(weights[dist <= rad].ravel())
        frac = inside / total if total > 0 else 0.0
        out.append((float(rad), min(1.0, frac)))
    return out


def _diagnostics(vals, grid, params, alpha, delta, radii, *, iterations, converged,
                 step, residual, start="bump", history=None):
    parts = _parts(vals, grid, params, delta)
    s = params.q_exponent
    a_alpha = parts.qmass**s
    nu = _j_from_parts(parts, params, alpha)
    b_alpha = (parts.grad + alpha * parts.pmass) * parts.qmass ** (s - 1)
    field_ = TorusField(vals, grid)
    return MinimizerDiagnostics(
        alpha=float(alpha),
        nu_alpha=nu,
        A_alpha=a_alpha,
        B_alpha=b_alpha,
        mu_alpha=nu / params.theta,
        grad_energy=a_alpha * parts.grad,
        penalty=alpha * a_alpha * parts.pmass,
        q_mass=b_alpha * parts.qmass,
        max_index=field_.max_index(),
        concentration=concentration_profile(field_, params.r, radii),
        iterations=iterations,
        converged=converged,
        step_size=step,
        el_residual=residual,
        start=start,
        history=history or [],
    )


def _check_params(params: GNParams, alpha: float):
    if not params.has(Regime.THEOREM_VALIDITY):
        raise DomainError("simulator requires the theorem-validity regime")
    if not params.r < params.p_star:
        raise DomainError("simulator requires r < p*")
    if not 1 < params.p <= 2:
        raise DomainError("simulator requires 1 < p <= 2")
    if not alpha > 0:
        raise DomainError("alpha must be positive")


def _tangent_gradient(vals, grid, params, alpha, delta):
    """Gradient of J / ||u||_r^(p/theta), which is 0-homogeneous and equals J on E."""
    g, parts = _gradient(vals, grid, params, alpha, delta)
    j = _j_from_parts(parts, params, alpha)
    # on the sphere ||u||_r = 1 the correction is (p/theta) J u^(r-1) h^dim
    g = g - (params.p / params.theta) * j * vals ** (params.r - 1) * grid.cell_volume
    return g, j


def _residual(g, vals, grid, params):
    # drop components pushing against the u >= 0 bound
    active = (vals <= 0) & (g > 0)
    res = np.where(active, 0.0, g) / (params.p * grid.cell_volume)
    return math.sqrt(grid.integrate(res * res))


def _descend(u, grid, params, alpha, delta, options, callback=None):
    """Projected gradient descent from a normalized field ``u``."""
    r = params.r

    def project(v):
        v = np.maximum(v, 0.0)
        norm = grid.integrate(v**r) ** (1.0 / r)
        if norm == 0.0:
            return None
        return v / norm

    g, j = _tangent_gradient(u, grid, params, alpha, delta)
    step = 1.0 / max(1e-300, float(np.max(np.abs(g))) / grid.cell_volume)
    t = step
    history = [j]
    converged = False
    it = 0
    while it < options.max_iter:
        it += 1
        t = step
        accepted = None
        for _ in range(options.max_backtracks):
            cand = project(u - t * g)
            if cand is not None:
                j_new = j_alpha(TorusField(cand, grid), params, alpha, delta)
                decrease = math.fsum((g * (u - cand)).ravel())
                if j_new <= j - options.armijo_c1 * decrease:
                    accepted = cand
                    break
            t *= options.backtrack
        if accepted is None:
            # no admissible decrease left: stationary at working precision
            converged = True
            break
        g_new, j_new = _tangent_gradient(accepted, grid, params, alpha, delta)
        # Barzilai-Borwein trial length for the next step
        s_vec = accepted - u
        y_vec = g_new - g
        sy = math.fsum((s_vec * y_vec).ravel())
        ss = math.fsum((s_vec * s_vec).ravel())
        step = ss / sy if sy > 0 else 2.0 * t
        rel_change = abs(j - j_new) / max(abs(j), 1e-300)
        u, g, j = accepted, g_new, j_new
        history.append(j)
        if callback is not None:
            callback(u, j)
        if rel_change < options.rtol:
            converged = True
            break
    return u, j, g, it, converged, t, history


def minimize_j_alpha(
    params: GNParams,
    grid: TorusGrid,
    alpha: float,
    options: SolverOptions | None = None,
    initial: TorusField | None = None,
    radii=DEFAULT_RADII,
    callback=None,
):
    """Projected gradient minimization of J_alpha over ||u||_r = 1, u >= 0.

    Each step descends, clamps negative entries to zero and renormalizes in
    L^r; step lengths come from Armijo backtracking on a Barzilai-Borwein
    trial step. The descent runs from ``initial`` (a warm start, if given)
    and from the centered bump; the constant field, whose value is exactly
    alpha, is kept as a third candidate. The lowest value wins, ties going
    to the earlier candidate. ``callback(values, j)`` is invoked after every
    accepted step. Returns ``(field, diagnostics)``.
    """
    options = options or SolverOptions()
    _check_params(params, alpha)
    delta = options.resolved_delta(params.p)
    r = params.r

    starts = []
    if initial is not None:
        if initial.grid != grid:
            raise DomainError("initial field lives on a different grid")
        starts.append(("warm", lr_normalize(initial, r).values))
    starts.append(("bump", lr_normalize(bump_field(grid, options.init_width), r).values))

    best = None
    total_iter = 0
    for label, u0 in starts:
        u, j, g, it, converged, t, history = _descend(u0, grid, params, alpha, delta, options, callback)
        total_iter += it
        if best is None or j < best[1]:
            best = (u, j, g, converged, t, history, label)
    u, j, g, converged, t, history, label = best

    const = np.ones(grid.shape)
    j_const = j_alpha(TorusField(const, grid), params, alpha, delta)
    if j_const < j:
        u, j, label = const, j_const, "constant"
        g, _ = _tangent_gradient(u, grid, params, alpha, delta)
        converged, history = True, [j_const]

    diag = _diagnostics(
        u, grid, params, alpha, delta, radii,
        iterations=total_iter, converged=converged, step=t,
        residual=_residual(g, u, grid, params), start=label, history=history,
    )
    log.info("alpha=%g nu=%.12g start=%s iterations=%d converged=%s",
             alpha, diag.nu_alpha, label, total_iter, converged)
    if not converged and options.strict:
        raise NotConverged(f"no convergence within {options.max_iter} iterations", diag)
    return TorusField(u, grid), diag


def alpha_sweep(
    params: GNParams,
    grid: TorusGrid,
    alphas,
    options: SolverOptions | None = None,
    radii=DEFAULT_RADII,
):
    """Minimize for increasing alphas, warm-starting each run from the last.

    Returns a list of :class:`MinimizerDiagnostics`.
    """
    alphas = [float(a) for a in alphas]
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise DomainError("alphas must be strictly increasing")
    options = options or SolverOptions()
    records = []
    current = None
    for alpha in alphas:
        current, diag = minimize_j_alpha(params, grid, alpha, options, current, radii)
        records.append(diag)
    return records


def sweep_trends(records, radius: float = 0.2, solver_tol: float = 1e-8) -> dict:
    """Trend checks over a sweep: monotone nu, shrinking penalty share,
    growing concentration over the upper half of the alphas."""
    nus = [d.nu_alpha for d in records]
    top = records[len(records) // 2:] if len(records) > 1 else records
    shares = [d.penalty_share for d in top]
    conc = [d.concentration_at(radius) for d in top]
    return {
        "nu_nondecreasing": all(b >= a - solver_tol * max(1.0, abs(a)) for a, b in zip(nus, nus[1:])),
        "penalty_share_decreasing": all(b < a for a, b in zip(shares, shares[1:])),
        "concentration_nondecreasing": all(b >= a for a, b in zip(conc, conc[1:])),
    }
