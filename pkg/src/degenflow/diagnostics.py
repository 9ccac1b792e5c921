"""Derived quantities for run analysis: scaling exponents, the comparison
ODE and its thresholds, radial characteristics, self-similar reference
solutions, residual verification, and trajectory fits.

The comparison ODE g' = -lambda1 g + C g^sigma is solved in closed form
through the substitution h = g^{1-sigma}, which turns it into a linear
equation.  Thresholds come in two variants that disagree for sigma != 2:
the equilibrium value (lambda1/C)^{1/(sigma-1)} of the ODE itself, used
operationally everywhere, and the alternative exponent 1/sigma, computed
only for reporting.

The self-similar reference solutions come in two variants as well.  The
"verbatim" profile uses the constant ((p-2)/(p-theta)) * (n/beta)^{1/(p-1)}
and no time-decaying amplitude.  The "corrected" variant multiplies the
profile by t^{-n/beta} and replaces n/beta with 1/beta inside the constant,
which is the unique choice that satisfies the radial profile equation
|F'|^{p-1} = (1/beta) * xi^{1-theta} * F, hence the PDE, exactly.
residual_check adjudicates the two numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discretization import (
    MODE_INTERVAL,
    MODE_RADIAL,
    MODE_TENSOR2D,
    Field,
    integrate,
    nodal_gradient,
    quad_weights,
    weight_on_grid,
)
from .errors import ConfigError, DataError, FitError, OutOfRangeError, ShapeError
from .plap_operator import apply_plaplacian
from .weight_models import ball_mass, surface_area


# ---------------------------------------------------------------- exponents


@dataclass(frozen=True)
class Exponents:
    """Scaling exponents of the weighted evolution; all derived values are
    recomputed on access."""

    n: int
    p: float
    mu: float = 1.0
    theta_w: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"dimension must be at least 1, got {self.n}")
        if not self.p >= 2.0:
            raise ConfigError(f"p must be >= 2, got {self.p}")

    @property
    def k(self):
        return self.n * (self.p - 1.0 - self.mu) + self.p

    @property
    def lambda_exp(self):
        return self.n * (2.0 * self.p - 2.0 - self.p * self.mu) + self.p * self.p

    @property
    def beta(self):
        return self.n * (self.p - 2.0) + self.p - self.theta_w


# ------------------------------------------------------------ comparison ODE


@dataclass(frozen=True)
class OdeParams:
    lambda1: float
    C: float
    sigma: float
    g0: float

    def __post_init__(self):
        if self.lambda1 < 0.0:
            raise ConfigError(f"lambda1 must be nonnegative, got {self.lambda1}")
        if not self.C > 0.0:
            raise ConfigError(f"C must be positive, got {self.C}")
        if not self.sigma > 1.0:
            raise ConfigError(f"sigma must exceed 1, got {self.sigma}")
        if self.g0 < 0.0:
            raise ConfigError(f"g0 must be nonnegative, got {self.g0}")


def bernoulli_blowup(params):
    """Exact solution data for g' = -lambda1 g + C g^sigma, g(0) = g0.

    Returns {"blows_up": bool, "T": float or None, "g": evaluator}.  The
    evaluator accepts scalar or array times and returns inf at and past the
    blow-up time.
    """
    lam, c, sig, g0 = params.lambda1, params.C, params.sigma, params.g0
    sm1 = sig - 1.0

    if g0 == 0.0:
        return {"blows_up": False, "T": None, "g": lambda t: np.zeros_like(np.asarray(t, dtype=float))}

    h0 = g0 ** (-sm1)

    if lam == 0.0:
        t_star = h0 / (sm1 * c)

        def g_eval(t):
            t = np.asarray(t, dtype=float)
            h = h0 - sm1 * c * t
            out = np.full(t.shape, np.inf)
            ok = h > 0.0
            out[ok] = h[ok] ** (-1.0 / sm1)
            return out if out.shape else float(out)

        return {"blows_up": True, "T": float(t_star), "g": g_eval}

    h_eq = c / lam  # h-value of the ODE equilibrium g* = (lam/c)^{1/(sm1)}
    blows = h0 < h_eq  # equivalently g0 > g*

    if blows:
        t_star = math.log(h_eq / (h_eq - h0)) / (sm1 * lam)
    else:
        t_star = None

    def g_eval(t):
        t = np.asarray(t, dtype=float)
        h = h_eq + (h0 - h_eq) * np.exp(sm1 * lam * t)
        out = np.full(t.shape, np.inf)
        ok = h > 0.0
        out[ok] = h[ok] ** (-1.0 / sm1)
        return out if out.shape else float(out)

    return {"blows_up": blows, "T": t_star, "g": g_eval}


def blowup_threshold(lambda1, C, sigma):
    """Critical g(0) of the comparison ODE, in both exponent conventions.

    "operative" is the ODE equilibrium (lambda1/C)^{1/(sigma-1)}, which is
    what classifications use; "paper_value" carries the alternative
    exponent 1/sigma and is reported only for side-by-side comparison.
    """
    if lambda1 < 0.0 or not C > 0.0 or not sigma > 1.0:
        raise ConfigError("need lambda1 >= 0, C > 0, sigma > 1")
    ratio = lambda1 / C
    return {
        "operative": ratio ** (1.0 / (sigma - 1.0)),
        "paper_value": ratio ** (1.0 / sigma),
    }


def exp_forced_bound(psi0, C8, sigma):
    """Upper bound psi0^{1-sigma} / (C8 (sigma-1)) on the blow-up time of
    any psi with psi' >= C8 psi^sigma, psi(0) = psi0."""
    if not psi0 > 0.0 or not C8 > 0.0 or not sigma > 1.0:
        raise ConfigError("need psi0 > 0, C8 > 0, sigma > 1")
    return psi0 ** (1.0 - sigma) / (C8 * (sigma - 1.0))


# ------------------------------------------------------------- functionals


def g_functional(u, eig, weight):
    """Weighted projection integral(omega * u0 * u) by trapezoid quadrature."""
    if eig.eigenfunction.grid is not u.grid:
        raise ShapeError("field and eigenfunction live on different grids")
    wvals = weight_on_grid(weight, u.grid)
    return integrate(u, weight=wvals * eig.eigenfunction.values)


def condition_star(u, eig, weight, p):
    """Discrete value of the cross-monotonicity integral

        I = integral omega * sum_i (|grad u|^{p-2} d_i u
                                    - |grad u0|^{p-2} d_i u0) * d_i(u0 omega)

    with nodal centered gradients.  No sign is guaranteed; callers record
    the value per run and check I >= 0 where the theory assumes it.
    """
    grid = u.grid
    if eig.eigenfunction.grid is not grid:
        raise ShapeError("field and eigenfunction live on different grids")
    wvals = weight_on_grid(weight, grid)
    u0 = eig.eigenfunction.values

    du = nodal_gradient(u)
    du0 = nodal_gradient(eig.eigenfunction)
    dprod = nodal_gradient(Field(grid, u0 * wvals))

    mag_u = np.sqrt(sum(d * d for d in du))
    mag_u0 = np.sqrt(sum(d * d for d in du0))
    coef_u = mag_u ** (p - 2.0)
    coef_u0 = mag_u0 ** (p - 2.0)

    integrand = np.zeros(grid.shape)
    for d_u, d_u0, d_w in zip(du, du0, dprod):
        integrand += (coef_u * d_u - coef_u0 * d_u0) * d_w
    return integrate(Field(grid, integrand * wvals))


# ----------------------------------------------------- radial characteristics


def _radius_grid(r, extent, points_per_octave):
    if not r > 0.0:
        raise ConfigError(f"base radius must be positive, got {r}")
    if r > extent:
        raise ConfigError(f"base radius {r} exceeds domain extent {extent}")
    step = 2.0 ** (1.0 / points_per_octave)
    radii = []
    rho = r
    while rho < extent * (1.0 - 1e-12):
        radii.append(rho)
        rho *= step
    radii.append(extent)
    return np.array(radii)


def _ball_dimension(grid):
    return 1 if grid.mode == MODE_INTERVAL else grid.dim


def _sup_on_ball(field, rho):
    rad = field.grid.radius()
    mask = rad <= rho + 1e-12
    if not mask.any():
        return 0.0
    return float(np.abs(field.values[mask]).max())


def _integral_on_ball(field, rho):
    """integral of u over the ball of radius rho (n-dimensional measure)."""
    grid = field.grid
    if grid.mode == MODE_TENSOR2D:
        mask = grid.radius() <= rho + 1e-12
        return float(np.sum(quad_weights(grid) * field.values * mask))
    r = grid.axes[0]
    v = field.values
    n = _ball_dimension(grid)
    sn = surface_area(n)
    integrand = v * r ** (n - 1)
    inside = r <= rho + 1e-12
    m = int(inside.sum())
    if m < 1:
        return 0.0
    total = np.trapezoid(integrand[:m], r[:m]) if m > 1 else 0.0
    if m < len(r) and rho > r[m - 1]:
        # partial cell up to rho, integrand interpolated linearly
        frac = (rho - r[m - 1]) / (r[m] - r[m - 1])
        end_val = integrand[m - 1] + frac * (integrand[m] - integrand[m - 1])
        total += 0.5 * (integrand[m - 1] + end_val) * (rho - r[m - 1])
    return float(sn * total)


def phi_r_characteristic(traj, r, t, exps, weight, points_per_octave=2):
    """Double supremum over stored snapshot times in (0, t] and a geometric
    radius grid of (mass(B_rho)/rho^{n+p})^{1/(p-2)} * sup_{B_rho} |u|."""
    if not exps.p > 2.0:
        raise ConfigError("phi_r characteristic needs p > 2")
    snaps = {ts: f for ts, f in traj.snapshots.items() if 0.0 < ts <= t + 1e-12}
    if not snaps:
        raise DataError("no snapshots stored in (0, t]")
    grid = next(iter(snaps.values())).grid
    radii = _radius_grid(r, grid.extent, points_per_octave)
    n = _ball_dimension(grid)
    expo = 1.0 / (exps.p - 2.0)

    best = 0.0
    factors = [(rho, (ball_mass(weight, rho, n) / rho ** (n + exps.p)) ** expo)
               for rho in radii]
    for f in snaps.values():
        for rho, fac in factors:
            best = max(best, fac * _sup_on_ball(f, rho))
    return best


def triple_norm(u, r, exps, weight, points_per_octave=2):
    """sup over the radius grid of
    rho^{-k/(p-2)} * (mass(B_rho)/rho^{n mu})^{1/(p-2)} * integral_{B_rho} u."""
    if not exps.p > 2.0:
        raise ConfigError("triple norm needs p > 2")
    grid = u.grid
    radii = _radius_grid(r, grid.extent, points_per_octave)
    n = _ball_dimension(grid)
    expo = 1.0 / (exps.p - 2.0)
    best = -np.inf
    for rho in radii:
        fac = rho ** (-exps.k / (exps.p - 2.0))
        fac *= (ball_mass(weight, rho, n) / rho ** (n * exps.mu)) ** expo
        best = max(best, fac * _integral_on_ball(u, rho))
    return float(best)


# ------------------------------------------------------- reference solutions

VARIANT_VERBATIM = "verbatim"
VARIANT_CORRECTED = "corrected"


def _barenblatt_profile(xi, exps, constant):
    gamma = (exps.p - exps.theta_w) / (exps.p - 1.0)
    m = (exps.p - 1.0) / (exps.p - 2.0)
    inner = 1.0 - constant * np.abs(xi) ** gamma
    return np.where(inner > 0.0, np.maximum(inner, 0.0) ** m, 0.0)


def _check_barenblatt_args(t, exps):
    if t <= 0.0:
        raise OutOfRangeError(f"reference solution needs t > 0, got {t}")
    if not exps.p > 2.0:
        raise ConfigError("reference solution needs p > 2")
    if not 0.0 <= exps.theta_w < exps.p:
        raise ConfigError("reference solution needs 0 <= theta_w < p")


def barenblatt_exact(x, t, exps):
    """Self-similar display in its literal form: no amplitude factor and
    constant ((p-2)/(p-theta)) * (n/beta)^{1/(p-1)}."""
    _check_barenblatt_args(t, exps)
    xi = np.abs(np.asarray(x, dtype=float)) / t ** (1.0 / exps.beta)
    const = ((exps.p - 2.0) / (exps.p - exps.theta_w)) * (
        exps.n / exps.beta
    ) ** (1.0 / (exps.p - 1.0))
    out = _barenblatt_profile(xi, exps, const)
    return out if out.shape else float(out)


def barenblatt_corrected(x, t, exps):
    """Amplitude-corrected self-similar solution

        u = t^{-n/beta} (1 - c xi^gamma)_+^{(p-1)/(p-2)},
        c = ((p-2)/(p-theta)) (1/beta)^{1/(p-1)},  xi = |x| / t^{1/beta},

    which satisfies the weight-power evolution exactly."""
    _check_barenblatt_args(t, exps)
    xi = np.abs(np.asarray(x, dtype=float)) / t ** (1.0 / exps.beta)
    const = ((exps.p - 2.0) / (exps.p - exps.theta_w)) * (
        1.0 / exps.beta
    ) ** (1.0 / (exps.p - 1.0))
    out = t ** (-exps.n / exps.beta) * _barenblatt_profile(xi, exps, const)
    return out if out.shape else float(out)


def barenblatt_front(t, exps, variant=VARIANT_CORRECTED):
    """Support radius of the chosen variant at time t."""
    _check_barenblatt_args(t, exps)
    gamma = (exps.p - exps.theta_w) / (exps.p - 1.0)
    base = exps.n if variant == VARIANT_VERBATIM else 1.0
    const = ((exps.p - 2.0) / (exps.p - exps.theta_w)) * (
        base / exps.beta
    ) ** (1.0 / (exps.p - 1.0))
    return float(const ** (-1.0 / gamma) * t ** (1.0 / exps.beta))


# ------------------------------------------------------------ residual check


def _erode(mask, cells):
    out = mask.copy()
    for _ in range(cells):
        shrunk = out.copy()
        for axis in range(out.ndim):
            shifted = np.roll(out, 1, axis=axis)
            _fill_edge(shifted, axis, 0, False)
            shrunk &= shifted
            shifted = np.roll(out, -1, axis=axis)
            _fill_edge(shifted, axis, -1, False)
            shrunk &= shifted
        out = shrunk
    return out


def _fill_edge(arr, axis, index, value):
    sl = [slice(None)] * arr.ndim
    sl[axis] = index
    arr[tuple(sl)] = value


def residual_check(candidate, spec, sample_times, front_margin=1e-3,
                   dt_rel=1e-4, guard_cells=2):
    """Max discrete residual |u_t - L_p u| of a space-time candidate.

    candidate(grid, t) must return nodal values.  u_t is centered
    differencing with half-width dt_rel * t.  Nodes closer than guard_cells
    to the region where the candidate is below front_margin are excluded,
    as is the Dirichlet boundary; the free boundary is not a classical
    point of the equation.
    """
    grid = spec.grid
    worst = 0.0
    for t in sample_times:
        if t <= 0.0:
            raise ConfigError("sample times must be positive")
        delta = dt_rel * t
        vals = np.asarray(candidate(grid, t), dtype=float)
        before = np.asarray(candidate(grid, t - delta), dtype=float)
        after = np.asarray(candidate(grid, t + delta), dtype=float)
        ut = (after - before) / (2.0 * delta)
        lap = apply_plaplacian(
            Field(grid, vals), spec.weight, spec.p, spec.controls.eps_reg
        ).values
        res = np.abs(ut - lap)
        mask = _erode(vals > front_margin, guard_cells) & ~grid.boundary_mask
        if mask.any():
            worst = max(worst, float(res[mask].max()))
    return worst


# -------------------------------------------------------------------- fits

FIT_ALGEBRAIC = "algebraic"
FIT_EXPONENTIAL = "exponential"


def decay_exponent_fit(traj, window, kind=FIT_ALGEBRAIC, time_offset=0.0):
    """Least-squares decay fit of the sup norm over a time window.

    kind "algebraic" fits log sup = a + e log(t + time_offset) and returns
    the exponent e; "exponential" fits log sup = a + e t (so e = -rate).
    The window selects on shifted time t + time_offset, so a trajectory
    started at physical time t0 can be fit against an absolute window by
    passing time_offset=t0.  Returns {"exponent", "stderr", "samples"}.
    """
    t = np.asarray(traj.times, dtype=float)
    s = np.asarray(traj.sup_abs_u, dtype=float)
    t_a, t_b = window
    sel = (t + time_offset >= t_a) & (t + time_offset <= t_b)
    if sel.sum() < 5:
        raise FitError(f"need at least 5 samples in window [{t_a}, {t_b}]")
    tt, ss = t[sel], s[sel]
    if np.any(ss <= 0.0):
        raise FitError("sup norm must be positive throughout the fit window")

    if kind == FIT_ALGEBRAIC:
        shifted = tt + time_offset
        if np.any(shifted <= 0.0):
            raise FitError("algebraic fit needs positive shifted times")
        xs = np.log(shifted)
    elif kind == FIT_EXPONENTIAL:
        xs = tt
    else:
        raise ConfigError(f"unknown fit kind {kind!r}")
    ys = np.log(ss)

    design = np.vstack([np.ones_like(xs), xs]).T
    coef, res, _, _ = np.linalg.lstsq(design, ys, rcond=None)
    dof = max(len(xs) - 2, 1)
    sigma2 = (float(res[0]) if res.size else
              float(np.sum((design @ coef - ys) ** 2))) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return {
        "exponent": float(coef[1]),
        "stderr": float(np.sqrt(cov[1, 1])),
        "samples": int(len(xs)),
    }


def _centered_rates(times, values):
    """(g'(t_i), interior index range) by nonuniform centered differences."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(t) < 3:
        raise FitError("need at least 3 samples to differentiate")
    return (v[2:] - v[:-2]) / (t[2:] - t[:-2])


def fit_bernoulli_constant(traj, lambda1, sigma, early_factor=1.5):
    """Reaction constant C of g' = -lambda1 g + C g^sigma, by least squares
    through the origin of (g' + lambda1 g) against g^sigma over the early
    window g <= early_factor * g(0).  Returns {"C", "samples"}."""
    g = np.asarray(traj.weighted_mass, dtype=float)
    t = np.asarray(traj.times, dtype=float)
    if len(g) < 3:
        raise FitError("trajectory too short to fit the comparison constant")
    rate = _centered_rates(t, g)
    gi = g[1:-1]
    sel = (gi > 0.0) & (gi <= early_factor * g[0])
    if sel.sum() < 3:
        raise FitError("no early-window samples available for the fit")
    y = rate[sel] + lambda1 * gi[sel]
    x = gi[sel] ** sigma
    denom = float(np.sum(x * x))
    if denom == 0.0:
        raise FitError("degenerate early window (g identically zero)")
    c_fit = float(np.sum(x * y) / denom)
    if not c_fit > 0.0:
        raise FitError(f"fitted comparison constant is not positive: {c_fit:.3e}")
    return {"C": c_fit, "samples": int(sel.sum())}


def fit_exp_forced_constant(traj, lambda1, sigma):
    """Largest C8 with psi' >= C8 psi^sigma along the whole trajectory,
    psi = g e^{lambda1 t}: the pointwise minimum of psi'/psi^sigma.
    Keeping the minimum preserves the bound direction of exp_forced_bound.
    Returns {"C8", "psi0", "samples"}."""
    g = np.asarray(traj.weighted_mass, dtype=float)
    t = np.asarray(traj.times, dtype=float)
    if len(g) < 3:
        raise FitError("trajectory too short to fit the forced constant")
    psi = g * np.exp(lambda1 * t)
    rate = _centered_rates(t, psi)
    pi = psi[1:-1]
    sel = pi > 0.0
    if sel.sum() < 1:
        raise FitError("psi is nonpositive everywhere, cannot fit")
    ratios = rate[sel] / pi[sel] ** sigma
    c8 = float(ratios.min())
    if not c8 > 0.0:
        raise FitError(f"psi is not increasing along the run (min ratio {c8:.3e})")
    return {"C8": c8, "psi0": float(psi[0]), "samples": int(sel.sum())}
