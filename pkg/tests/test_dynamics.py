import math
import warnings

import numpy as np
import pytest

from subohmic.bath import SpectralParams, discretize_bath
from subohmic.dynamics import (
    IntegratorConfig,
    NormDriftError,
    classify_series,
    dominant_frequency,
    eom_rhs,
    first_minimum_time,
    integrate,
    steady_value,
    trajectory_difference,
)
from subohmic.state import VariationalState, init_state

COUPLED = discretize_bath(SpectralParams(s=0.25, alpha=0.1), n_modes=16, omega_max=4.0)
FREE = discretize_bath(SpectralParams(s=0.25, alpha=0.0), n_modes=16, omega_max=4.0)
RT_HALF = 1 / math.sqrt(2)


def random_state(rng, n, floor=0.25):
    # amplitudes bounded away from zero so the regularization stays inactive
    theta = rng.uniform(floor, math.pi / 2 - floor)
    a = math.cos(theta) * np.exp(1j * rng.uniform(0, 2 * math.pi))
    b = math.sin(theta) * np.exp(1j * rng.uniform(0, 2 * math.pi))
    return VariationalState(
        a,
        b,
        0.5 * (rng.normal(size=n) + 1j * rng.normal(size=n)),
        0.5 * (rng.normal(size=n) + 1j * rng.normal(size=n)),
    )


class TestRhs:
    def test_bare_rabi(self):
        st0 = VariationalState(RT_HALF, RT_HALF * 1j, np.zeros(16, complex), np.zeros(16, complex))
        d = eom_rhs(st0, FREE, delta=0.4)
        # i dA/dt = -(delta/2) B, i dB/dt = -(delta/2) A
        assert d.da == pytest.approx(1j * 0.2 * st0.b, rel=1e-14)
        assert d.db == pytest.approx(1j * 0.2 * st0.a, rel=1e-14)
        np.testing.assert_array_equal(d.df, 0)
        np.testing.assert_array_equal(d.dg, 0)
        assert not d.regularized

    def test_zero_tunneling_factorized(self):
        st0 = init_state("factorized", COUPLED)
        d = eom_rhs(st0, COUPLED, delta=0.0)
        np.testing.assert_allclose(d.df, -0.5j * COUPLED.coupling, rtol=1e-15)
        assert d.da == 0

    def test_polarized_start(self):
        st0 = init_state("polarized", COUPLED)
        d = eom_rhs(st0, COUPLED, delta=0.1)
        # lambda/2 + omega f(0) = 0 mode by mode; the empty-branch clamp
        # multiplies f - g = 0 so it reports nothing
        np.testing.assert_allclose(d.df, 0, atol=1e-17)
        np.testing.assert_allclose(d.dg, 1j * COUPLED.coupling, rtol=1e-14)
        assert not d.regularized

    def test_regularization_flag(self):
        # empty branch with distinct displacements: the clamp matters
        st0 = VariationalState(
            1.0, 0.0, 0.1 * np.ones(16, complex), -0.1 * np.ones(16, complex)
        )
        assert eom_rhs(st0, COUPLED, delta=0.1).regularized
        assert not eom_rhs(st0, COUPLED, delta=0.0).regularized

    def test_norm_conservation_identity(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            st0 = random_state(rng, 16)
            d = eom_rhs(st0, COUPLED, delta=0.3)
            ddt_norm = 2 * (np.conj(st0.a) * d.da + np.conj(st0.b) * d.db).real
            assert abs(ddt_norm) < 1e-12

    def test_mode_count_mismatch(self):
        st0 = init_state("factorized", COUPLED)
        other = discretize_bath(SpectralParams(s=0.25, alpha=0.1), n_modes=8, omega_max=4.0)
        with pytest.raises(ValueError):
            eom_rhs(st0, other, delta=0.1)


class TestIntegrate:
    def test_isolated_spin_cosine(self):
        cfg = IntegratorConfig(dt=0.01, t_max=20.0, record_every=5)
        tr = integrate(init_state("factorized", FREE), FREE, 0.4, cfg)
        np.testing.assert_allclose(tr.p_z, np.cos(0.4 * tr.t), atol=1e-6)
        assert np.max(np.abs(tr.norm - 1)) < 1e-10

    def test_independent_boson_closed_form(self):
        cfg = IntegratorConfig(dt=0.01, t_max=10.0)
        tr = integrate(init_state("factorized", COUPLED), COUPLED, 0.0, cfg, compute_sigma=True)
        np.testing.assert_allclose(tr.p_z, 1.0, atol=1e-12)
        lam, om = COUPLED.coupling, COUPLED.omega
        for i in (10, 25, -1):
            t = tr.t[i]
            expected = np.sum(lam**2 / (2 * om) * (1 - np.cos(om * t)))
            assert tr.e_bath[i] == pytest.approx(expected, abs=1e-9)
        np.testing.assert_allclose(tr.sigma, 0.0, atol=1e-10)

    def test_records_cover_grid(self):
        cfg = IntegratorConfig(dt=0.01, t_max=1.0, record_every=7)
        tr = integrate(init_state("factorized", COUPLED), COUPLED, 0.1, cfg)
        assert tr.t[0] == 0.0
        assert tr.t[-1] == pytest.approx(1.0)
        assert np.all(np.diff(tr.t) > 0)

    def test_determinism(self):
        cfg = IntegratorConfig(dt=0.01, t_max=5.0)
        runs = [
            integrate(init_state("polarized", COUPLED), COUPLED, 0.1, cfg, compute_sigma=True)
            for _ in range(2)
        ]
        np.testing.assert_array_equal(runs[0].p_z, runs[1].p_z)
        np.testing.assert_array_equal(runs[0].sigma, runs[1].sigma)
        np.testing.assert_array_equal(runs[0].final_state.f, runs[1].final_state.f)

    def test_energy_conservation_short(self):
        cfg = IntegratorConfig(dt=0.01, t_max=20.0)
        tr = integrate(init_state("polarized", COUPLED), COUPLED, 0.2, cfg)
        scale = max(np.max(np.abs(tr.e_total)), np.max(tr.e_bath))
        assert np.max(np.abs(tr.e_total - tr.e_total[0])) / scale < 1e-8

    def test_norm_drift_abort_reports_time(self):
        cfg = IntegratorConfig(dt=0.01, t_max=5.0, norm_drift_tol=1e-17)
        with pytest.raises(NormDriftError) as exc:
            integrate(init_state("factorized", COUPLED), COUPLED, 0.3, cfg)
        assert 0 < exc.value.t <= 5.0

    def test_unresolved_fast_mode_rejected(self):
        cfg = IntegratorConfig(dt=0.2, t_max=5.0)
        with pytest.raises(ValueError, match="omega_max"):
            integrate(init_state("factorized", COUPLED), COUPLED, 0.1, cfg)

    def test_recurrence_warning(self):
        tiny = discretize_bath(SpectralParams(s=0.25, alpha=0.01), n_modes=8, omega_max=4.0)
        cfg = IntegratorConfig(dt=0.01, t_max=2.5 * tiny.recurrence_time)
        with pytest.warns(UserWarning, match="recurrence"):
            integrate(init_state("factorized", tiny), tiny, 0.1, cfg)

    def test_unnormalized_initial_rejected(self):
        bad = VariationalState(1.0, 0.5, np.zeros(16, complex), np.zeros(16, complex))
        with pytest.raises(ValueError, match="normalized"):
            integrate(bad, COUPLED, 0.1, IntegratorConfig(t_max=1.0))

    def test_on_record_callback(self):
        seen = []
        cfg = IntegratorConfig(dt=0.01, t_max=0.5, record_every=10)
        integrate(
            init_state("factorized", COUPLED),
            COUPLED,
            0.1,
            cfg,
            on_record=lambda rec, state: seen.append((rec.t, state.copy())),
        )
        assert [t for t, _ in seen] == pytest.approx([0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
        assert all(s.n_modes == 16 for _, s in seen)

    def test_convergence_is_fourth_order(self):
        bath = discretize_bath(SpectralParams(s=0.5, alpha=0.2), n_modes=8, omega_max=4.0)
        rng = np.random.default_rng(0)
        init = VariationalState(
            math.cos(0.6),
            math.sin(0.6) * np.exp(0.3j),
            0.3 * (rng.normal(size=8) + 1j * rng.normal(size=8)),
            0.3 * (rng.normal(size=8) + 1j * rng.normal(size=8)),
        )

        def endpoint(dt):
            tr = integrate(init, bath, 0.4, IntegratorConfig(dt=dt, t_max=2.0))
            s = tr.final_state
            return np.concatenate([[s.a, s.b], s.f, s.g])

        ref = endpoint(0.0025 / 4)
        err_coarse = np.max(np.abs(endpoint(0.02) - ref))
        err_fine = np.max(np.abs(endpoint(0.01) - ref))
        order = math.log2(err_coarse / err_fine)
        assert 3.6 < order < 4.4

    def test_degenerate_start_converges_at_reduced_order(self):
        # both standard initial conditions sit exactly on the empty-branch
        # point of the ansatz, where the clamped vector field is not smooth;
        # the start costs one order but errors stay tiny at the default dt
        bath = discretize_bath(SpectralParams(s=0.5, alpha=0.2), n_modes=8, omega_max=4.0)
        init = init_state("polarized", bath)

        def endpoint(dt):
            tr = integrate(init, bath, 0.4, IntegratorConfig(dt=dt, t_max=2.0))
            s = tr.final_state
            return np.concatenate([[s.a, s.b], s.f, s.g])

        ref = endpoint(0.0025 / 4)
        err_coarse = np.max(np.abs(endpoint(0.02) - ref))
        err_fine = np.max(np.abs(endpoint(0.01) - ref))
        order = math.log2(err_coarse / err_fine)
        assert order > 2.6
        assert err_fine < 1e-6

    def test_spin_flip_symmetry(self):
        # lambda -> -lambda with (A, f) <-> (B, g) swapped mirrors the
        # trajectory: P_z -> -P_z, P_x -> P_x
        params = SpectralParams(s=0.5, alpha=0.2)
        bath = discretize_bath(params, n_modes=8, omega_max=4.0)
        mirrored = discretize_bath(params, n_modes=8, omega_max=4.0)
        object.__setattr__(mirrored, "coupling", -bath.coupling)
        cfg = IntegratorConfig(dt=0.01, t_max=8.0)
        fwd = integrate(init_state("factorized", bath), bath, 0.3, cfg)
        swapped = VariationalState(0.0, 1.0, np.zeros(8, complex), np.zeros(8, complex))
        mir = integrate(swapped, mirrored, 0.3, cfg)
        np.testing.assert_allclose(mir.p_z, -fwd.p_z, atol=1e-12)
        np.testing.assert_allclose(mir.p_x, fwd.p_x, atol=1e-12)


class TestAnalysis:
    def test_cosine_is_coherent(self):
        t = np.linspace(0, 400, 4001)
        assert classify_series(t, np.cos(0.1 * t), delta=0.1) == "coherent"

    def test_monotone_decay_is_incoherent(self):
        t = np.linspace(0, 400, 4001)
        assert classify_series(t, np.exp(-0.05 * t), delta=0.1) == "incoherent"

    def test_short_series_rejected(self):
        t = np.linspace(0, 50, 501)
        with pytest.raises(ValueError, match="Rabi"):
            classify_series(t, np.cos(0.1 * t), delta=0.1)

    def test_prominence_filters_ripple(self):
        t = np.linspace(0, 400, 4001)
        ripple = np.exp(-0.05 * t) + 1e-5 * np.cos(2.0 * t)
        assert classify_series(t, ripple, delta=0.1) == "incoherent"
        assert classify_series(t, ripple, delta=0.1, prominence=1e-7) == "coherent"

    def test_first_minimum_time(self):
        t = np.linspace(0, 100, 2001)
        assert first_minimum_time(t, np.cos(0.5 * t)) == pytest.approx(2 * math.pi, abs=0.1)
        assert first_minimum_time(t, np.exp(-t)) is None

    def test_dominant_frequency(self):
        t = np.linspace(0, 200, 4001)
        x = 0.3 + np.cos(0.7 * t) * np.exp(-0.01 * t)
        assert dominant_frequency(t, x) == pytest.approx(0.7, rel=0.05)

    def test_steady_value_uses_tail(self):
        t = np.linspace(0, 100, 1001)
        x = np.where(t < 75, 5.0, 1.0)
        assert steady_value(t, x) == pytest.approx(1.0, rel=1e-2)

    def test_trajectory_difference(self):
        t = np.linspace(0, 1, 101)
        metrics = trajectory_difference(t, np.ones_like(t), np.zeros_like(t))
        assert metrics["max_abs_diff"] == 1.0
        assert metrics["integrated_abs_diff"] == pytest.approx(1.0)
