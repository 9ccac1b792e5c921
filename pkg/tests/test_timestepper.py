"""Implicit time stepping: oracles, classification, and structural invariants."""

import numpy as np
import pytest

from degenflow import (
    ConfigError,
    Field,
    ProblemSpec,
    ReactionSpec,
    StepControls,
    Trajectory,
    WeightSpec,
    build_grid,
    energy,
    estimate_blowup_time,
    run_simulation,
    step_implicit,
)

PI2 = np.pi**2


def _sin_problem(amplitude=1.0, resolution=64, t_end=0.3, dt0=1e-3, dt_max=5e-3,
                 reaction=None, p=2.0, **ctl_kw):
    g = build_grid("interval", 1.0, resolution)
    phi = Field(g, amplitude * np.sin(np.pi * g.axes[0]))
    phi.values[g.boundary_mask] = 0.0
    controls = StepControls(dt_max=dt_max, **ctl_kw)
    return ProblemSpec(
        grid=g,
        weight=None,
        p=p,
        reaction=reaction if reaction is not None else ReactionSpec.none(),
        initial=phi,
        t_end=t_end,
        dt0=dt0,
        controls=controls,
    )


class TestStepImplicit:
    def test_single_heat_step_matches_resolvent(self):
        """One backward-Euler heat step solves (I - dt L) v = u: for the
        sine mode that is division by (1 + dt pi^2) up to discretization."""
        spec = _sin_problem(resolution=256)
        dt = 1e-3
        stats = {}
        u1 = step_implicit(spec.initial, 0.0, dt, spec, stats=stats)
        lam_h = PI2  # discrete eigenvalue differs at O(h^2)
        expected = spec.initial.values / (1.0 + dt * lam_h)
        assert np.max(np.abs(u1.values - expected)) < 1e-5
        assert stats["newton_iters"] >= 1

    def test_rejects_dt_outside_bounds(self):
        spec = _sin_problem()
        with pytest.raises(ConfigError):
            step_implicit(spec.initial, 0.0, 1.0, spec)

    def test_nonlinear_step_reduces_energy(self):
        spec = _sin_problem(p=3.0)
        u1 = step_implicit(spec.initial, 0.0, 1e-3, spec)
        assert energy(u1, None, 3.0) < energy(spec.initial, None, 3.0)


def test_heat_equation_oracle_res128():
    """Linear heat run tracks A e^{-pi^2 t} sin(pi x); coarse-dt variant
    of the acceptance gate to keep the unit suite fast."""
    spec = _sin_problem(resolution=128, t_end=0.1, dt0=1e-4, dt_max=1e-4)
    out = run_simulation(spec)
    assert out.kind in ("Completed", "Decayed")
    x = spec.grid.axes[0]
    t_final = out.trajectory.times[-1]
    exact = np.exp(-PI2 * t_final) * np.sin(np.pi * x)
    # compare sup norms: trajectory stores the scalar history
    assert out.trajectory.sup_abs_u[-1] == pytest.approx(np.exp(-PI2 * t_final), rel=2e-3)
    assert t_final == pytest.approx(0.1, abs=1e-12)
    assert np.max(np.abs(exact)) > 0.0  # silence unused warning path


def test_decay_classification_and_rate():
    # run long enough for sup to cross the 1e-8 floor
    spec = _sin_problem(amplitude=1.0, resolution=32, t_end=3.0, dt0=1e-3, dt_max=5e-3)
    out = run_simulation(spec)
    assert out.kind == "Decayed"
    assert out.rate_fit == pytest.approx(PI2, rel=0.05)


def test_blowup_classification_and_estimate():
    reaction = ReactionSpec.power(1.0, 2.0)
    spec = _sin_problem(amplitude=100.0, resolution=48, t_end=2.0,
                        dt0=1e-5, dt_max=1e-2, reaction=reaction)
    out = run_simulation(spec)
    assert out.kind == "BlowUp"
    assert np.isfinite(out.t_est)
    assert out.t_lo <= out.t_est <= out.t_hi
    # continuum comparison: blow-up no later than the zero-diffusion ODE
    # u' = u^2 from the peak would suggest ~1/100, diffusion delays it
    assert 0.0 < out.t_est < 0.1


def test_snapshots_land_exactly():
    spec_base = _sin_problem(resolution=32, t_end=0.2)
    spec = ProblemSpec(
        grid=spec_base.grid,
        weight=None,
        p=2.0,
        reaction=ReactionSpec.none(),
        initial=spec_base.initial,
        t_end=0.2,
        dt0=1e-3,
        controls=spec_base.controls,
        snapshot_times=(0.05, 0.1, 0.15),
    )
    out = run_simulation(spec)
    assert set(out.trajectory.snapshots.keys()) == {0.05, 0.1, 0.15}
    times = np.asarray(out.trajectory.times)
    for t_snap, field in out.trajectory.snapshots.items():
        # the stepper must have landed on the requested time exactly
        assert np.min(np.abs(times - t_snap)) < 1e-12
        assert np.all(field.values[spec.grid.boundary_mask] == 0.0)
        # analytic check modulo the O(dt) implicit-Euler bias
        assert field.values.max() == pytest.approx(np.exp(-PI2 * t_snap), rel=5e-2)


def test_outcome_json_contract(tmp_path):
    import json

    spec = _sin_problem(resolution=32, t_end=0.05)
    out = run_simulation(spec)
    path = tmp_path / "outcome.json"
    out.to_json(path)
    payload = json.loads(path.read_text())
    for key in ("kind", "T_est", "T_lo", "T_hi", "rate_fit", "steps", "newton_iters_total"):
        assert key in payload
    assert payload["kind"] == "Completed"
    assert payload["T_est"] is None  # NaN sanitized for strict JSON


def test_trajectory_csv_columns(tmp_path):
    spec = _sin_problem(resolution=32, t_end=0.05)
    out = run_simulation(spec)
    path = tmp_path / "traj.csv"
    out.trajectory.to_csv(path)
    header = [l for l in path.read_text().splitlines() if not l.startswith("#")][0]
    assert header.split(",") == ["t", "dt", "sup_abs_u", "mass", "g", "energy"]


def test_trajectory_append_guards_time_order():
    traj = Trajectory()
    traj.append(0.1, 0.1, 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(Exception):
        traj.append(0.1, 0.1, 1.0, 1.0, 1.0, 1.0)


class TestInvariants:
    """Structural properties of the implicit scheme on benchmark runs."""

    def test_maximum_principle_no_reaction(self):
        for p in (2.0, 3.0):
            spec = _sin_problem(resolution=48, t_end=0.2, p=p)
            out = run_simulation(spec)
            sups = np.asarray(out.trajectory.sup_abs_u)
            assert np.all(np.diff(sups) <= 1e-12), f"p={p}"

    def test_energy_decrease_no_reaction(self):
        for p in (2.0, 3.0):
            spec = _sin_problem(resolution=48, t_end=0.2, p=p)
            out = run_simulation(spec)
            ens = np.asarray(out.trajectory.energy)
            slack = 1e-8 * max(1.0, ens[0])
            assert np.all(np.diff(ens) <= slack), f"p={p}"

    def test_positivity_preserved(self):
        reaction = ReactionSpec.power(1.0, 2.0)
        g = build_grid("interval", 1.0, 48)
        phi = Field(g, 5.0 * np.sin(np.pi * g.axes[0]))
        spec = ProblemSpec(
            grid=g, weight=None, p=2.0, reaction=reaction,
            initial=phi, t_end=0.5, dt0=1e-3,
            controls=StepControls(dt_max=5e-3), snapshot_times=(0.1, 0.3),
        )
        out = run_simulation(spec)
        assert len(out.trajectory.snapshots) == 2
        for field in out.trajectory.snapshots.values():
            assert field.values.min() > -1e-10

    def test_comparison_ordering(self):
        """Ordered initial data stays ordered under the same monotone
        reaction (checked at shared snapshot times)."""
        reaction = ReactionSpec.power(0.5, 2.0)
        snaps = (0.05, 0.1, 0.2)
        outs = []
        for amplitude in (1.0, 2.0):
            g = build_grid("interval", 1.0, 48)
            phi = Field(g, amplitude * np.sin(np.pi * g.axes[0]))
            spec = ProblemSpec(
                grid=g, weight=None, p=2.0, reaction=reaction,
                initial=phi, t_end=0.25, dt0=1e-3,
                controls=StepControls(dt_max=2e-3), snapshot_times=snaps,
            )
            outs.append(run_simulation(spec))
        for t_snap in snaps:
            lo = outs[0].trajectory.snapshots[t_snap].values
            hi = outs[1].trajectory.snapshots[t_snap].values
            assert np.all(lo <= hi + 1e-8), f"ordering violated at t={t_snap}"

    def test_refinement_self_consistency(self):
        """Halving h and dt0 moves sup|u|(t_end) by under 2%."""
        sups = []
        for res, dt in ((32, 2e-3), (64, 1e-3)):
            spec = _sin_problem(resolution=res, t_end=0.3, dt0=dt, dt_max=dt, p=3.0)
            out = run_simulation(spec)
            sups.append(out.trajectory.sup_abs_u[-1])
        assert abs(sups[1] - sups[0]) / sups[1] < 0.02


class TestBlowupEstimate:
    def test_synthetic_inverse_power(self):
        # u(t) = (1 - t)^{-1}, sigma = 2: y = 1 - t exactly, root at 1
        traj = Trajectory()
        ts = np.linspace(0.5, 0.95, 20)
        for t in ts:
            traj.append(t, 1e-2, (1.0 - t) ** -1.0, 0.0, 0.0, 0.0)
        t_est, t_lo, t_hi = estimate_blowup_time(traj, 2.0)
        assert t_est == pytest.approx(1.0, abs=1e-6)
        assert t_lo == pytest.approx(0.95)
        assert t_hi >= t_est

    def test_synthetic_sqrt_blowup(self):
        # u(t) = (2 - t)^{-1/2}, sigma = 3: y = 2 - t, root at 2
        traj = Trajectory()
        for t in np.linspace(1.0, 1.9, 25):
            traj.append(t, 1e-2, (2.0 - t) ** -0.5, 0.0, 0.0, 0.0)
        t_est, _, _ = estimate_blowup_time(traj, 3.0)
        assert t_est == pytest.approx(2.0, abs=1e-6)

    def test_nonmonotone_tail_falls_back(self):
        traj = Trajectory()
        for i, t in enumerate(np.linspace(0.0, 1.0, 12)):
            traj.append(t, 1e-1, 1.0 + 0.1 * (-1.0) ** i, 0.0, 0.0, 0.0)
        t_est, t_lo, t_hi = estimate_blowup_time(traj, 2.0, t_end=5.0)
        assert t_est == t_lo == 1.0
        assert t_hi == 5.0

    def test_short_series_falls_back(self):
        traj = Trajectory()
        for t in (0.1, 0.2, 0.3):
            traj.append(t, 0.1, t + 1.0, 0.0, 0.0, 0.0)
        assert estimate_blowup_time(traj, 2.0, t_end=9.0) == (0.3, 0.3, 9.0)

    def test_sigma_validation(self):
        with pytest.raises(ConfigError):
            estimate_blowup_time(Trajectory(), 1.0)


class TestSpecValidation:
    def test_boundary_violation(self):
        g = build_grid("interval", 1.0, 16)
        bad = Field(g, np.ones(g.shape))
        with pytest.raises(ConfigError):
            ProblemSpec(grid=g, weight=None, p=2.0, reaction=ReactionSpec.none(),
                        initial=bad, t_end=1.0, dt0=1e-3)

    def test_cap_must_clear_initial(self):
        g = build_grid("interval", 1.0, 16)
        phi = Field(g, np.sin(np.pi * g.axes[0]))
        with pytest.raises(ConfigError):
            ProblemSpec(grid=g, weight=None, p=2.0, reaction=ReactionSpec.none(),
                        initial=phi, t_end=1.0, dt0=1e-3,
                        controls=StepControls(u_cap=0.5))

    def test_weight_exponent_window(self):
        g = build_grid("radial", 1.0, 16, n=2)
        phi = Field(g, np.cos(np.pi * g.axes[0] / 2.0))
        phi.values[-1] = 0.0
        with pytest.raises(ConfigError):
            ProblemSpec(grid=g, weight=WeightSpec.power(2.5), p=2.0,
                        reaction=ReactionSpec.none(), initial=phi,
                        t_end=1.0, dt0=1e-3)

    def test_grid_identity_required(self):
        g1 = build_grid("interval", 1.0, 16)
        g2 = build_grid("interval", 1.0, 16)
        phi = Field(g2, np.sin(np.pi * g2.axes[0]))
        with pytest.raises(ConfigError):
            ProblemSpec(grid=g1, weight=None, p=2.0, reaction=ReactionSpec.none(),
                        initial=phi, t_end=1.0, dt0=1e-3)
