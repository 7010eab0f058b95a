"""Energy/dissipation functionals against Parseval and quadrature oracles."""

import math

import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss

from polyflow.errors import (
    ParameterError,
    PositivityError,
    UnsupportedModelError,
    VacuumError,
)
from polyflow.state import (
    FlowState,
    ModelParams,
    build_report,
    dissipation_D,
    energy_E,
    energy_eta,
    mean_in_q,
    min_one_plus_g,
    mixed_norm_sq,
    norm_engine,
    random_smooth_state,
    total_energy_and_dissipation,
)


class TestModelParams:
    def test_defaults_validate(self):
        ModelParams().validate()

    def test_viscosity_constraint(self):
        with pytest.raises(ParameterError):
            ModelParams(mu=0.0, xi=0.0).validate()

    def test_gamma_constraint(self):
        with pytest.raises(ParameterError):
            ModelParams(gamma=0.5).validate()

    def test_diagnostic_construction_unchecked(self):
        # decoupled limits stay constructible for oracle tests
        assert ModelParams(lam=0.0).lam == 0.0


class TestEnergy:
    def test_zero_state(self, basis1, grid64, params):
        s = FlowState.zero(grid64, basis1)
        e, er, eu, eg = energy_E(s, basis1, grid64)
        assert e == er == eu == eg == 0.0
        d = dissipation_D(s, basis1, grid64, params)[0]
        assert d == 0.0

    def test_density_mode_parseval(self, basis1, grid64):
        eps, k = 1e-3, 2
        x = grid64.coords()[0]
        s = FlowState.zero(grid64, basis1).copy_with(rho=eps * np.sin(k * x))
        _, e_rho, _, _ = energy_E(s, basis1, grid64)
        expect = eps**2 * sum(k ** (2 * j) for j in range(4)) * math.pi
        assert e_rho == pytest.approx(expect, rel=1e-12)

    def test_uniform_g_mode_quadrature_oracle(self, basis1, grid64):
        # g = eps * phi_1, uniform in x; independent brute-force quadrature
        # of the weighted norms of phi_1 = q and its derivative.
        eps = 1e-3
        s = FlowState.zero(grid64, basis1)
        s.g[..., 1] = eps
        _, _, _, e_g = energy_E(s, basis1, grid64)
        x, w = hermegauss(200)
        w = w / np.sqrt(2 * np.pi)
        beta0 = np.sum(w * (1 + x**2) * x**2)      # |<q> q|^2
        beta1 = np.sum(w * (1 + x**2) * 1.0)       # |<q> dq/dq|^2
        expect = eps**2 * (beta0 + beta1) * 2 * math.pi
        assert e_g == pytest.approx(expect, rel=1e-10)
        assert e_g == pytest.approx(eps**2 * 6.0 * 2 * math.pi, rel=1e-10)

    def test_velocity_mode_dissipation(self, basis1, grid64, params):
        eps, k = 1e-3, 2
        x = grid64.coords()[0]
        s = FlowState.zero(grid64, basis1)
        s.u[..., 0] = eps * np.sin(k * x)
        d, d_visc, d_div, d_g = dissipation_D(s, basis1, grid64, params)
        factor = eps**2 * k**2 * sum(k ** (2 * j) for j in range(4)) * math.pi
        assert d_visc == pytest.approx(params.mu * factor, rel=1e-12)
        assert d_div == pytest.approx((params.mu + params.xi) * factor, rel=1e-12)
        assert d_g == 0.0

    def test_uniform_g_dissipation_quadrature(self, basis1, grid64, params):
        eps = 1e-3
        s = FlowState.zero(grid64, basis1)
        s.g[..., 2] = eps  # phi_2
        d_g = dissipation_D(s, basis1, grid64, params)[3]
        # oracle: sum over q-derivative blocks of |<q> d^(b+1) phi_2|^2 with
        # phi_2 = (q^2 - 1)/sqrt(2): first derivative sqrt(2) q, second
        # sqrt(2), higher ones vanish
        x, w = hermegauss(200)
        w = w / np.sqrt(2 * np.pi)
        d1 = np.sum(w * (1 + x**2) * 2.0 * x**2)
        d2 = np.sum(w * (1 + x**2) * 2.0)
        expect = eps**2 * (d1 + d2) * 2 * math.pi
        assert d_g == pytest.approx(expect, rel=1e-10)
        assert d_g == pytest.approx(eps**2 * 12.0 * 2 * math.pi, rel=1e-10)

    def test_engine_matches_reference(self, basis3, grid32, rng):
        s = random_smooth_state(grid32, basis3, rng, eps=1e-2)
        eng = norm_engine(basis3, grid32)
        fast = eng.all_g_norms(s.g, 0.3)
        assert fast["e_g"] == pytest.approx(
            mixed_norm_sq(s.g, basis3, grid32, weighted=True), rel=1e-12
        )
        assert fast["d_g"] == pytest.approx(
            sum(mixed_norm_sq(s.g @ d.T, basis3, grid32) for d in basis3.D),
            rel=1e-12,
        )
        coef = lambda b: 0.3 if sum(b) == 0 else 0.3 ** sum(b)
        assert fast["e_g_eta"] == pytest.approx(
            mixed_norm_sq(s.g, basis3, grid32, weighted=True, beta_coef=coef),
            rel=1e-12,
        )

    def test_mixed_derivative_order_immaterial(self, basis3, grid32, rng):
        # q-derivative matrices and x-multipliers act on different indices
        s = random_smooth_state(grid32, basis3, rng, eps=1e-2)
        d0 = basis3.D[0]
        a = grid32.deriv(s.g @ d0.T, (1,))
        b = grid32.deriv(s.g, (1,)) @ d0.T
        assert np.max(np.abs(a - b)) < 1e-12


class TestEtaFunctionals:
    def test_zero_state(self, basis1, grid64, params):
        s = FlowState.zero(grid64, basis1)
        e_eta, d_eta, cross = energy_eta(s, basis1, grid64, params, 0.1)
        assert e_eta == d_eta == cross == 0.0

    def test_near_one_upper_bound(self, basis1, grid64, params, rng):
        s = random_smooth_state(grid64, basis1, rng, eps=1e-2)
        e = energy_E(s, basis1, grid64)[0]
        e_eta = energy_eta(s, basis1, grid64, params, 0.999)[0]
        assert e_eta <= 2.0 * e

    @pytest.mark.parametrize("eta", [0.5, 0.1, 0.01])
    def test_equivalence_window(self, basis1, grid64, params, rng, eta):
        for _ in range(10):
            s = random_smooth_state(grid64, basis1, rng, eps=10 ** rng.uniform(-4, 0))
            e = energy_E(s, basis1, grid64)[0]
            e_eta = energy_eta(s, basis1, grid64, params, eta)[0]
            assert eta**3 * e <= e_eta <= 2.0 * e

    def test_eta_range_validated(self, basis1, grid64, params):
        s = FlowState.zero(grid64, basis1)
        with pytest.raises(ParameterError):
            energy_eta(s, basis1, grid64, params, 1.0)


class TestTotals:
    def test_zero_state_baseline(self, basis3, grid64, params):
        s = FlowState.zero(grid64, basis3)
        bal = total_energy_and_dissipation(s, params, basis3, grid64)
        assert bal.e_total_rel == 0.0
        assert bal.d_total == 0.0
        assert bal.mass_entropy_rel == 0.0
        # baseline: pressure part + equilibrium entropy -sigma log Z per volume
        expect = grid64.volume * (1.0 - basis3.potential.log_norm)
        assert bal.baseline == pytest.approx(expect, rel=1e-12)

    def test_constant_velocity_kinetic(self, basis1, grid64, params):
        eps = 1e-3
        s = FlowState.zero(grid64, basis1)
        s.u[..., 0] = eps
        bal = total_energy_and_dissipation(s, params, basis1, grid64)
        assert bal.e_total_rel == pytest.approx(
            0.5 * grid64.volume * eps**2, rel=1e-12
        )
        assert bal.d_total == 0.0

    def test_entropy_positive_for_single_mode(self, basis1, grid64, params):
        s = FlowState.zero(grid64, basis1)
        s.g[..., 1] = 1e-2
        bal = total_energy_and_dissipation(s, params, basis1, grid64)
        assert bal.entropy_rel > 0.0

    def test_gamma_one_unsupported(self, basis1, grid64):
        s = FlowState.zero(grid64, basis1)
        with pytest.raises(UnsupportedModelError):
            total_energy_and_dissipation(
                s, ModelParams(gamma=1.0), basis1, grid64
            )

    def test_positivity_guard(self, basis1, grid64, params):
        s = FlowState.zero(grid64, basis1)
        s.g[..., 0] = -1.5
        with pytest.raises(PositivityError):
            total_energy_and_dissipation(s, params, basis1, grid64)

    def test_vacuum_guard_names_point(self, basis1, grid64, params):
        s = FlowState.zero(grid64, basis1)
        s.rho[5] = -1.2
        with pytest.raises(VacuumError) as err:
            total_energy_and_dissipation(s, params, basis1, grid64)
        assert err.value.point == (5,)


class TestDiagnostics:
    def test_mean_in_q(self, basis1, grid64):
        s = FlowState.zero(grid64, basis1)
        assert np.all(mean_in_q(s) == 0.0)
        s.g[..., 1] = 0.3  # non-constant mode: Maxwellian mean stays zero
        assert np.all(mean_in_q(s) == 0.0)
        s.g[..., 0] = 0.25
        assert np.allclose(mean_in_q(s), 0.25)

    def test_min_one_plus_g(self, basis1, grid64):
        s = FlowState.zero(grid64, basis1)
        assert min_one_plus_g(s, basis1) == 1.0
        s.g[..., 1] = 0.1  # odd mode dips below 1 somewhere in q
        assert min_one_plus_g(s, basis1) < 1.0

    def test_report_zero_state(self, basis1, grid64, params):
        s = FlowState.zero(grid64, basis1)
        rep = build_report(s, params, basis1, grid64)
        for name in ("E", "D", "E_eta", "D_eta", "E_tot_rel", "D_tot",
                     "cross_term", "max_abs_m"):
            assert getattr(rep, name) == 0.0
        assert rep.min_one_plus_g == 1.0

    def test_constant_mode_only_energy(self, basis1, grid64):
        # g supported on the constant mode with zero Maxwellian mean is the
        # zero microscopic state: E reduces to the fluid part exactly.
        eps = 1e-3
        x = grid64.coords()[0]
        s = FlowState.zero(grid64, basis1)
        s.rho = eps * np.sin(x)
        s.u[..., 0] = eps * np.cos(x)
        e, e_rho, e_u, e_g = energy_E(s, basis1, grid64)
        assert e_g == 0.0
        assert e == pytest.approx(e_rho + e_u, rel=1e-15)
