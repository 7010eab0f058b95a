"""Closed conformation solver vs the kinetic discretization.

The closure is exact for the quadratic spring, so the two solvers must
agree to round-off once schemes are matched; the relaxation part has closed
forms that serve as scalar/matrix ODE oracles.
"""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from polyflow.closure import (
    MomentState,
    closed_moment_rhs,
    closure_compare,
    kinetic_from_moments,
    moments_from_kinetic,
    relaxation_and_stretch,
    step_moment_imex,
)
from polyflow.dynamics import rhs_perturbation
from polyflow.errors import ParameterError, UnsupportedModelError
from polyflow.potential import make_fene, make_hookean
from polyflow.qbasis import build_basis
from polyflow.state import FlowState, ModelParams, random_smooth_state
from polyflow.stepper import StepConfig
from polyflow.xgrid import TorusGrid


@pytest.fixture(scope="module")
def setup():
    pot = make_hookean(1.0, 1.0, 3)
    basis = build_basis(pot, 6)
    grid = TorusGrid((32,))
    return ModelParams(), basis, grid


def quadratic_state(basis, grid, rng, eps=1e-2, with_mass=True):
    s = random_smooth_state(grid, basis, rng, eps=eps, mean_zero_g=not with_mass)
    g = np.zeros_like(s.g)
    for k, deg in enumerate(basis.degrees):
        if deg <= 2:
            g[..., k] = s.g[..., k]
    return s.copy_with(g=g)


class TestLocalRelaxation:
    def test_equilibrium_stationary(self, params):
        out = relaxation_and_stretch(np.eye(3), 1.0, np.zeros((1, 1)), params)
        assert np.max(np.abs(out)) == 0.0

    def test_pure_relaxation_closed_form(self, params):
        # u = 0, n = 1: every component relaxes like exp(-2 t / r)
        rng = np.random.default_rng(7)
        c0 = np.eye(3) + 0.1 * (lambda a: a + a.T)(rng.standard_normal((3, 3)))

        def rhs(t, y):
            c = y.reshape(3, 3)
            return relaxation_and_stretch(c, 1.0, np.zeros((1, 1)), params).ravel()

        sol = solve_ivp(rhs, (0.0, 0.8), c0.ravel(), rtol=1e-12, atol=1e-14)
        exact = np.eye(3) + (c0 - np.eye(3)) * math.exp(-2 * 0.8 / params.r)
        assert np.max(np.abs(sol.y[:, -1].reshape(3, 3) - exact)) < 1e-10

    def test_pure_relaxation_nonunit_damping(self):
        p = ModelParams(r=2.5, sigma=0.7)
        sr = p.sigma * p.r
        c0 = sr * np.eye(3) * 1.3

        def rhs(t, y):
            return relaxation_and_stretch(
                y.reshape(3, 3), 1.0, np.zeros((1, 1)), p
            ).ravel()

        sol = solve_ivp(rhs, (0.0, 1.0), c0.ravel(), rtol=1e-12, atol=1e-14)
        exact = sr * np.eye(3) + (c0 - sr * np.eye(3)) * math.exp(-2.0 / p.r)
        assert np.max(np.abs(sol.y[:, -1].reshape(3, 3) - exact)) < 1e-9

    def test_uniform_shear_steady_state(self, params):
        # constant velocity gradient: the steady conformation solves the
        # linear matrix equation; oracle via a long matrix-ODE integration
        kappa = np.zeros((3, 3))
        kappa[0, 1] = 0.4

        def rhs(t, y):
            return relaxation_and_stretch(y.reshape(3, 3), 1.0, kappa, params).ravel()

        sol = solve_ivp(rhs, (0.0, 40.0), np.eye(3).ravel(), rtol=1e-12, atol=1e-13)
        steady = sol.y[:, -1].reshape(3, 3)
        assert np.max(np.abs(rhs(0.0, steady.ravel()))) < 1e-9
        # analytic steady state of the shear problem
        expect = np.eye(3)
        expect[0, 1] = expect[1, 0] = 0.4 * params.r / 2.0
        expect[0, 0] = 1.0 + 2.0 * (0.4 * params.r / 2.0) ** 2 / 1.0
        # C_xx = 1 + r kappa C_xy: solve exactly
        cxy = 0.4 * params.r / 2.0
        expect[0, 0] = 1.0 + params.r * 0.4 * cxy
        assert np.max(np.abs(steady - expect)) < 1e-9

    def test_trace_balance_at_rest(self, setup, rng):
        # u = 0: d(trace C)/dt = 2 sigma d n - (2/r) trace C
        p, basis, grid = setup
        ms = moments_from_kinetic(quadratic_state(basis, grid, rng), basis)
        ms.u[:] = 0.0
        _, _, dC, _ = closed_moment_rhs(ms, p, basis, grid)
        trace_dot = np.trace(dC, axis1=-2, axis2=-1)
        expect = 2.0 * p.sigma * 3 * ms.n - (2.0 / p.r) * np.trace(
            ms.C, axis1=-2, axis2=-1
        )
        assert np.max(np.abs(trace_dot - expect)) < 1e-12


class TestMapping:
    def test_round_trip(self, setup, rng):
        p, basis, grid = setup
        s = quadratic_state(basis, grid, rng)
        ms = moments_from_kinetic(s, basis)
        back = moments_from_kinetic(kinetic_from_moments(ms, basis), basis)
        assert np.max(np.abs(back.C - ms.C)) < 1e-14
        assert np.max(np.abs(back.n - ms.n)) < 1e-14

    def test_equilibrium_moment_is_identity(self, setup):
        p, basis, grid = setup
        s = FlowState.zero(grid, basis)
        ms = moments_from_kinetic(s, basis)
        assert np.max(np.abs(ms.C - np.eye(3))) < 1e-13
        assert np.allclose(ms.n, 1.0)


class TestDerivationIdentity:
    def test_quadratic_data(self, setup, rng):
        p, basis, grid = setup
        s = quadratic_state(basis, grid, rng)
        ms = moments_from_kinetic(s, basis)
        rhs = rhs_perturbation(s, p, basis, grid)
        dC_kin = moments_from_kinetic(s.copy_with(g=rhs.dg), basis).C - np.eye(3)
        drho, du, dC, dn = closed_moment_rhs(ms, p, basis, grid)
        scale = np.max(np.abs(dC))
        assert np.max(np.abs(dC_kin - dC)) / scale < 1e-9
        assert np.max(np.abs(rhs.dg[..., 0] - dn)) < 1e-9 * max(np.max(np.abs(dn)), 1e-9)
        assert np.max(np.abs(rhs.du - du)) < 1e-9 * np.max(np.abs(du))
        assert np.max(np.abs(rhs.drho - drho)) == 0.0

    def test_general_degree_data(self, setup, rng):
        # truncation never touches the tracked moments: the identity holds
        # for arbitrary coefficient content, not just quadratic states
        p, basis, grid = setup
        s = random_smooth_state(grid, basis, rng, eps=1e-2, mean_zero_g=False)
        ms = moments_from_kinetic(s, basis)
        rhs = rhs_perturbation(s, p, basis, grid)
        dC_kin = moments_from_kinetic(s.copy_with(g=rhs.dg), basis).C - np.eye(3)
        _, _, dC, _ = closed_moment_rhs(ms, p, basis, grid)
        assert np.max(np.abs(dC_kin - dC)) / np.max(np.abs(dC)) < 1e-9

    def test_nonunit_parameters(self, rng):
        p = ModelParams(sigma=0.8, r=1.7, lam=0.6, de=1.3, mu=0.4, xi=0.2, gamma=3.0)
        pot = make_hookean(p.sigma, p.r, 3)
        basis = build_basis(pot, 5)
        grid = TorusGrid((16,))
        s = quadratic_state(basis, grid, rng, eps=5e-3)
        ms = moments_from_kinetic(s, basis)
        rhs = rhs_perturbation(s, p, basis, grid)
        sr = p.sigma * p.r
        dC_kin = moments_from_kinetic(s.copy_with(g=rhs.dg), basis).C - sr * np.eye(3)
        _, du, dC, _ = closed_moment_rhs(ms, p, basis, grid)
        assert np.max(np.abs(dC_kin - dC)) / np.max(np.abs(dC)) < 1e-9
        assert np.max(np.abs(rhs.du - du)) / np.max(np.abs(du)) < 1e-9


class TestComparison:
    def test_zero_fluctuation(self, setup):
        p, basis, grid = setup
        comp = closure_compare(
            p, basis, grid, StepConfig(dt=0.02, t_end=0.1), FlowState.zero(grid, basis)
        )
        assert comp.max_deviation == 0.0

    @pytest.mark.parametrize("order", [1, 2])
    def test_modal_data_matched_schemes(self, setup, order):
        p, basis, grid = setup
        x = grid.coords()[0]
        init = FlowState.zero(grid, basis)
        init.u[..., 0] = 1e-3 * np.sin(x)
        init.g[..., 1] = 1e-3 * np.cos(x)
        deg2 = int(np.nonzero(basis.degrees == 2)[0][0])
        init.g[..., deg2] = 1e-3 * np.sin(2 * x)
        comp = closure_compare(
            p, basis, grid, StepConfig(dt=0.01, t_end=1.0, order=order), init
        )
        assert comp.max_deviation < 1e-6
        assert comp.max_deviation < 1e-12  # matched schemes agree to round-off

    def test_rejects_high_degree_data(self, setup, rng):
        p, basis, grid = setup
        s = random_smooth_state(grid, basis, rng, eps=1e-3)
        with pytest.raises(ParameterError):
            closure_compare(p, basis, grid, StepConfig(dt=0.01, t_end=0.05), s)

    def test_fene_unsupported(self):
        pot = make_fene(2.0, 1.0)
        basis = build_basis(pot, 6)
        grid = TorusGrid((16,))
        p = ModelParams()
        with pytest.raises(UnsupportedModelError, match="closed"):
            closure_compare(
                p, basis, grid, StepConfig(dt=0.01, t_end=0.05),
                FlowState.zero(grid, basis),
            )

    def test_moment_step_relaxation(self, setup):
        # spatially uniform relaxation through the moment stepper matches
        # the scalar resolvent exactly (first-order scheme)
        p, basis, grid = setup
        dt = 0.05
        c0 = np.eye(3)
        c0 = np.broadcast_to(c0, grid.dims + (3, 3)).copy()
        c0[..., 0, 0] = 1.4
        ms = MomentState(
            rho=np.zeros(grid.dims),
            u=np.zeros(grid.dims + (1,)),
            C=c0,
            n=np.ones(grid.dims),
        )
        out = step_moment_imex(ms, p, basis, grid, dt)
        expect = (1.4 + 2 * dt) / (1 + 2 * dt)
        assert np.allclose(out.C[..., 0, 0], expect, rtol=1e-13)
        assert np.allclose(out.C[..., 1, 1], 1.0, rtol=1e-13)
