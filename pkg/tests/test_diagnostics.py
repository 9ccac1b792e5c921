"""Closed-form ODE comparisons, radial characteristics, reference
solutions, and the trajectory fits."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from degenflow import (
    ConfigError,
    DataError,
    EigenPair,
    Exponents,
    Field,
    FitError,
    OdeParams,
    OutOfRangeError,
    ProblemSpec,
    ReactionSpec,
    ShapeError,
    StepControls,
    Trajectory,
    WeightSpec,
    barenblatt_corrected,
    barenblatt_exact,
    barenblatt_front,
    bernoulli_blowup,
    blowup_threshold,
    build_grid,
    condition_star,
    decay_exponent_fit,
    exp_forced_bound,
    fit_bernoulli_constant,
    fit_exp_forced_constant,
    g_functional,
    phi_r_characteristic,
    residual_check,
    smallest_eigenpair,
    triple_norm,
)


class TestExponents:
    def test_reference_triple(self):
        e = Exponents(n=2, p=3.0)
        assert e.k == 5.0
        assert e.beta == 5.0
        assert e.lambda_exp == 11.0

    def test_theta_shifts_beta_only(self):
        e = Exponents(n=2, p=3.0, theta_w=1.0)
        assert e.beta == 4.0
        assert e.k == 5.0

    def test_k_equals_beta_at_natural_mu(self):
        # mu = 1 + theta_w/n collapses the two exponents
        for n, p, theta in ((2, 3.0, 1.0), (3, 4.0, 2.0), (2, 2.5, 0.5)):
            e = Exponents(n=n, p=p, mu=1.0 + theta / n, theta_w=theta)
            assert e.k == pytest.approx(e.beta, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ConfigError):
            Exponents(n=0, p=3.0)
        with pytest.raises(ConfigError):
            Exponents(n=2, p=1.5)


class TestBernoulliOde:
    def test_blowup_time_log2(self):
        out = bernoulli_blowup(OdeParams(lambda1=1.0, C=1.0, sigma=2.0, g0=2.0))
        assert out["blows_up"]
        assert out["T"] == pytest.approx(math.log(2.0), abs=1e-12)

    def test_closed_form_vs_adaptive_integrator(self):
        """25 seeded random parameter draws against solve_ivp (the
        acceptance suite runs the full 100)."""
        rng = np.random.default_rng(2024)
        for _ in range(25):
            lam = rng.uniform(0.0, 5.0)
            c = rng.uniform(0.1, 3.0)
            sig = rng.uniform(1.2, 3.5)
            g0 = rng.uniform(0.05, 4.0)
            out = bernoulli_blowup(OdeParams(lam, c, sig, g0))
            t_hi = 0.8 * out["T"] if out["blows_up"] else 1.0
            ts = np.linspace(0.0, t_hi, 7)[1:]
            sol = solve_ivp(
                lambda t, y: [-lam * y[0] + c * y[0] ** sig],
                [0.0, t_hi],
                [g0],
                rtol=1e-11,
                atol=1e-13,
                t_eval=ts,
                method="DOP853",
            )
            ours = out["g"](ts)
            rel = np.abs(ours - sol.y[0]) / np.abs(sol.y[0])
            assert rel.max() < 1e-6

    def test_zero_initial_data_stays_zero(self):
        out = bernoulli_blowup(OdeParams(1.0, 1.0, 2.0, 0.0))
        assert not out["blows_up"]
        assert np.all(out["g"](np.linspace(0.0, 10.0, 5)) == 0.0)

    def test_subcritical_decays(self):
        # g0 below the equilibrium (lam/C)^{1/(sigma-1)} = 2
        out = bernoulli_blowup(OdeParams(2.0, 1.0, 2.0, 1.0))
        assert not out["blows_up"]
        assert out["T"] is None
        g = out["g"](np.array([0.0, 1.0, 5.0]))
        assert g[0] == pytest.approx(1.0)
        assert g[2] < g[1] < g[0]

    def test_evaluator_inf_past_blowup(self):
        out = bernoulli_blowup(OdeParams(1.0, 1.0, 2.0, 2.0))
        t_star = out["T"]
        assert np.isinf(out["g"](np.array([t_star + 0.1]))[0])

    def test_zero_lambda_closed_form(self):
        # pure g' = C g^sigma: T = g0^{1-sigma} / ((sigma-1) C)
        out = bernoulli_blowup(OdeParams(0.0, 2.0, 3.0, 1.0))
        assert out["T"] == pytest.approx(1.0 / 4.0)

    def test_params_validation(self):
        with pytest.raises(ConfigError):
            OdeParams(-1.0, 1.0, 2.0, 1.0)
        with pytest.raises(ConfigError):
            OdeParams(1.0, 0.0, 2.0, 1.0)
        with pytest.raises(ConfigError):
            OdeParams(1.0, 1.0, 1.0, 1.0)
        with pytest.raises(ConfigError):
            OdeParams(1.0, 1.0, 2.0, -0.5)


def test_blowup_threshold_conventions():
    out = blowup_threshold(4.0, 1.0, 2.0)
    assert out["operative"] == pytest.approx(4.0)
    assert out["paper_value"] == pytest.approx(2.0)
    # they agree when sigma-1 == sigma never happens; equality only at ratio 1
    out1 = blowup_threshold(3.0, 3.0, 2.5)
    assert out1["operative"] == pytest.approx(out1["paper_value"])


def test_blowup_threshold_validation():
    with pytest.raises(ConfigError):
        blowup_threshold(1.0, 0.0, 2.0)


def test_exp_forced_bound_values():
    assert exp_forced_bound(1.0, 2.0, 2.0) == pytest.approx(0.5)
    assert exp_forced_bound(2.0, 1.0, 3.0) == pytest.approx(1.0 / 8.0)
    with pytest.raises(ConfigError):
        exp_forced_bound(0.0, 1.0, 2.0)


def _unit_eigpair(grid, values):
    return EigenPair(1.0, Field(grid, values), 0.0, 0, 2.0)


def test_g_functional_hand_value():
    g = build_grid("interval", 1.0, 512)
    x = g.axes[0]
    eig = _unit_eigpair(g, np.sin(np.pi * x))
    u = Field(g, np.sin(np.pi * x))
    # integral sin^2(pi x) = 1/2
    assert g_functional(u, eig, None) == pytest.approx(0.5, rel=1e-5)


def test_g_functional_grid_mismatch():
    g1 = build_grid("interval", 1.0, 16)
    g2 = build_grid("interval", 1.0, 16)
    eig = _unit_eigpair(g1, np.zeros(g1.shape))
    with pytest.raises(ShapeError):
        g_functional(Field(g2, np.zeros(g2.shape)), eig, None)


def test_condition_star_vanishes_at_eigenfunction():
    g = build_grid("interval", 1.0, 64)
    pair = smallest_eigenpair(g, None, 2.0)
    val = condition_star(pair.eigenfunction, pair, None, 2.0)
    assert abs(val) < 1e-12


def test_condition_star_positive_for_scaled_state():
    # u = 2 u0: integrand reduces to |grad u0|^{p-2}(2^{p-1}-1)|grad u0|^2 >= 0
    g = build_grid("interval", 1.0, 64)
    pair = smallest_eigenpair(g, None, 3.0)
    u = Field(g, 2.0 * pair.eigenfunction.values)
    assert condition_star(u, pair, None, 3.0) > 0.0


class TestPhiR:
    def test_constant_field_hand_value(self):
        """On the disk with a constant snapshot the factor is
        (pi rho^2 / rho^6)^{1/2} * sup = sqrt(pi)/rho^2 * sup, maximized
        at the base radius."""
        g = build_grid("radial", 2.0, 32, n=2)
        traj = Trajectory()
        traj.snapshots[0.5] = Field(g, np.full(g.shape, 3.0))
        exps = Exponents(n=2, p=4.0)
        got = phi_r_characteristic(traj, 1.0, 1.0, exps, WeightSpec.constant())
        assert got == pytest.approx(3.0 * math.sqrt(math.pi), rel=1e-12)

    def test_requires_snapshot_in_window(self):
        g = build_grid("radial", 2.0, 16, n=2)
        traj = Trajectory()
        traj.snapshots[5.0] = Field(g, np.ones(g.shape))
        with pytest.raises(DataError):
            phi_r_characteristic(traj, 1.0, 1.0, Exponents(2, 4.0), WeightSpec.constant())

    def test_requires_p_above_two(self):
        with pytest.raises(ConfigError):
            phi_r_characteristic(Trajectory(), 1.0, 1.0, Exponents(2, 2.0), None)


def test_triple_norm_hand_value():
    # u = 1, omega = 1, n=2, p=3, mu=1: factor * integral = pi^2 rho^{-3},
    # maximized at the base radius rho = 1
    g = build_grid("radial", 2.0, 64, n=2)
    u = Field(g, np.ones(g.shape))
    exps = Exponents(n=2, p=3.0, mu=1.0)
    got = triple_norm(u, 1.0, exps, WeightSpec.constant())
    assert got == pytest.approx(math.pi**2, rel=1e-10)


def test_triple_norm_requires_p_above_two():
    g = build_grid("radial", 1.0, 16, n=2)
    with pytest.raises(ConfigError):
        triple_norm(Field.zeros(g), 0.5, Exponents(2, 2.0), None)


class TestBarenblatt:
    EXPS0 = Exponents(n=2, p=3.0, theta_w=0.0)  # beta = 5
    EXPS1 = Exponents(n=2, p=3.0, theta_w=1.0)  # beta = 4

    def test_corrected_peak_scaling(self):
        # u(0, t) = t^{-n/beta}
        assert barenblatt_corrected(0.0, 2.0, self.EXPS0) == pytest.approx(2.0 ** (-0.4))
        assert barenblatt_exact(0.0, 2.0, self.EXPS0) == pytest.approx(1.0)

    def test_front_values(self):
        # hand-computed support radii
        assert barenblatt_front(1.0, self.EXPS0, "corrected") == pytest.approx(3.556893, rel=1e-5)
        assert barenblatt_front(1.0, self.EXPS0, "verbatim") == pytest.approx(2.823108, rel=1e-5)
        assert barenblatt_front(1.0, self.EXPS1, "corrected") == pytest.approx(4.0, rel=1e-12)
        assert barenblatt_front(10.0, self.EXPS1, "corrected") == pytest.approx(
            4.0 * 10.0**0.25, rel=1e-12
        )

    def test_support_matches_front(self):
        exps = self.EXPS0
        t = 2.0
        rf = barenblatt_front(t, exps, "corrected")
        assert barenblatt_corrected(rf * 1.001, t, exps) == 0.0
        assert barenblatt_corrected(rf * 0.98, t, exps) > 0.0

    def test_mass_conserved_in_time(self):
        # the evolution is in divergence form, so integral u dx is constant
        for exps in (self.EXPS0, self.EXPS1):
            masses = []
            for t in (1.0, 2.0, 4.0):
                rf = barenblatt_front(t, exps, "corrected")
                r = np.linspace(0.0, rf, 4000)
                u = barenblatt_corrected(r, t, exps)
                masses.append(2.0 * np.pi * np.trapezoid(u * r, r))
            assert masses[1] == pytest.approx(masses[0], rel=1e-6)
            assert masses[2] == pytest.approx(masses[0], rel=1e-6)

    def test_argument_validation(self):
        with pytest.raises(OutOfRangeError):
            barenblatt_corrected(0.0, 0.0, self.EXPS0)
        with pytest.raises(ConfigError):
            barenblatt_corrected(0.0, 1.0, Exponents(n=2, p=2.0))

    def test_residual_check_prefers_corrected(self):
        """The amplitude-corrected variant satisfies the evolution; the
        literal display does not.  Residuals at one resolution already
        separate them by an order of magnitude."""
        exps = self.EXPS0
        g = build_grid("radial", 12.0, 96, n=2)
        phi = Field(g, np.zeros(g.shape))
        spec = ProblemSpec(
            grid=g, weight=None, p=3.0, reaction=ReactionSpec.none(),
            initial=phi, t_end=1.0, dt0=1e-3,
            controls=StepControls(u_cap=10.0),
        )
        times = [1.0, 2.0]

        def corrected(grid, t):
            return barenblatt_corrected(grid.radius(), t, exps)

        def verbatim(grid, t):
            return barenblatt_exact(grid.radius(), t, exps)

        res_c = residual_check(corrected, spec, times)
        res_v = residual_check(verbatim, spec, times)
        assert res_c < 0.1 * res_v


class TestDecayFit:
    def _algebraic_traj(self, exponent=-0.4, t0=0.0):
        traj = Trajectory()
        for t in np.linspace(0.05, 9.0, 120):
            traj.append(t, 0.1, (t + t0) ** exponent if t + t0 > 0 else 1.0,
                        0.0, 0.0, 0.0)
        return traj

    def test_exact_power_law(self):
        traj = self._algebraic_traj(-0.4)
        out = decay_exponent_fit(traj, (1.0, 8.0))
        assert out["exponent"] == pytest.approx(-0.4, abs=1e-10)
        assert out["stderr"] < 1e-10

    def test_window_selects_on_shifted_time(self):
        # trajectory clock starts at 0 but physical time is t + 1
        traj = self._algebraic_traj(-0.7, t0=1.0)
        out = decay_exponent_fit(traj, (1.0, 10.0), time_offset=1.0)
        assert out["exponent"] == pytest.approx(-0.7, abs=1e-10)

    def test_exponential_kind(self):
        traj = Trajectory()
        for t in np.linspace(0.0, 3.0, 50):
            traj.append(t if t > 0 else 1e-9, 0.1, math.exp(-3.0 * t), 0.0, 0.0, 0.0)
        out = decay_exponent_fit(traj, (0.5, 2.5), kind="exponential")
        assert out["exponent"] == pytest.approx(-3.0, abs=1e-9)

    def test_too_few_samples(self):
        traj = Trajectory()
        for t in (1.0, 2.0):
            traj.append(t, 1.0, 1.0, 0.0, 0.0, 0.0)
        with pytest.raises(FitError):
            decay_exponent_fit(traj, (0.0, 3.0))

    def test_unknown_kind(self):
        traj = self._algebraic_traj()
        with pytest.raises(ConfigError):
            decay_exponent_fit(traj, (1.0, 8.0), kind="warp")


class TestConstantFits:
    def _ode_traj(self, lam, c, sig, g0, t_hi, samples=400):
        out = bernoulli_blowup(OdeParams(lam, c, sig, g0))
        traj = Trajectory()
        for t in np.linspace(0.0, t_hi, samples):
            gval = out["g"](np.array([t]))[0]
            traj.append(t if t > 0 else 1e-12, 1e-2, gval, 0.0, gval, 0.0)
        return traj

    def test_bernoulli_constant_recovered(self):
        lam, c = 9.0, 1.3
        traj = self._ode_traj(lam, c, 2.0, 0.5, 0.3)
        fit = fit_bernoulli_constant(traj, lam, 2.0)
        assert fit["C"] == pytest.approx(c, rel=1e-3)
        assert fit["samples"] >= 3

    def test_bernoulli_constant_needs_history(self):
        traj = Trajectory()
        traj.append(0.1, 0.1, 1.0, 0.0, 1.0, 0.0)
        with pytest.raises(FitError):
            fit_bernoulli_constant(traj, 1.0, 2.0)

    def test_exp_forced_constant_exact_series(self):
        # psi' = c8 psi^sigma exactly: g = psi e^{-lam t}
        lam, c8, sig, psi0 = 2.0, 0.8, 2.0, 1.0
        t_star = psi0 ** (1.0 - sig) / (c8 * (sig - 1.0))
        traj = Trajectory()
        for t in np.linspace(0.0, 0.7 * t_star, 300):
            psi = (psi0 ** (1.0 - sig) - c8 * (sig - 1.0) * t) ** (-1.0 / (sig - 1.0))
            traj.append(t if t > 0 else 1e-12, 1e-3, psi, 0.0,
                        psi * math.exp(-lam * t), 0.0)
        fit = fit_exp_forced_constant(traj, lam, sig)
        assert fit["psi0"] == pytest.approx(psi0, rel=1e-6)
        # dense samples recover the constant to differencing accuracy
        assert fit["C8"] == pytest.approx(c8, rel=1e-4)

    def test_exp_forced_rejects_decaying_psi(self):
        traj = Trajectory()
        for t in np.linspace(0.0, 1.0, 30):
            traj.append(t if t > 0 else 1e-12, 0.1, 1.0, 0.0,
                        math.exp(-5.0 * t), 0.0)
        with pytest.raises(FitError):
            fit_exp_forced_constant(traj, 1.0, 2.0)
