"""Time integration of the perturbation dynamics and its instrumentation.

Two schemes share one right-hand side assembly:

* ``imex`` -- the workhorse.  Stiff linear blocks are implicit: the
  configuration-space diffusion (a symmetric positive definite solve per
  grid point, factorized once per step size), the viscous operator and the
  acoustic pressure/divergence pair linearized about the equilibrium (both
  diagonal per wavenumber after a longitudinal/transverse split).  All
  transport, stretching and variable-coefficient corrections are explicit.
  First order by default; an optional second-order variant uses the
  trapezoid rule on the stiff part and the midpoint rule on the rest.

* ``picard`` -- one backward-Euler step computed by the frozen-coefficient
  iteration: each iterate solves the linear system whose transport and
  scaling coefficients come from the previous iterate (the previous
  velocity advects and stretches the new unknowns, the new stress forces
  the new velocity), starting from the state at the step start.  Successive
  low-norm difference energies are recorded; their ratios measure the
  contraction that the small-data theory predicts, and a run of ratios at
  or above one aborts the step as out of the contraction regime.

The stepper also audits the primitive energy law each step: the discrete
residual (E(t+dt) - E(t))/dt + D(midpoint) converges to zero at the
scheme's order for resolved data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import LinearOperator, gmres

from .dynamics import rhs_perturbation, stress_divergence, velocity_gradient, _pair_mats
from .errors import CflError, NonContractionError, ParameterError, PolyflowError
from .qbasis import QBasis
from .state import (
    FlowState,
    ModelParams,
    build_report,
    total_energy_and_dissipation,
)
from .xgrid import TorusGrid, write_snapshot

__all__ = [
    "StepConfig",
    "PicardTrace",
    "TrajectoryRecord",
    "Stepper",
    "step_imex",
    "step_picard",
    "energy_audit",
    "simulate",
    "build_initial_state",
]


@dataclass
class StepConfig:
    """Time integration controls."""

    dt: float = 1e-2
    t_end: float = 1.0
    scheme: str = "imex"          # imex | picard
    order: int = 1                # 1 | 2, imex variant
    picard_tol: float = 1e-10     # on the successive-difference energy
    picard_max_iter: int = 8
    cfl_safety: float = 0.5
    check_cfl: bool = True
    audit: bool = True
    eta: float = 0.1
    positivity_floor: float = 1e-12
    audit_floor: float = 1e-14
    snapshot_every: int = 0

    def validate(self) -> "StepConfig":
        if not self.dt > 0:
            raise ParameterError("dt must be positive")
        if not self.t_end >= 0:
            raise ParameterError("t_end must be nonnegative")
        if self.scheme not in ("imex", "picard"):
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        if self.order not in (1, 2):
            raise ParameterError("imex order must be 1 or 2")
        if not self.picard_tol > 0:
            raise ParameterError("picard tolerance must be positive")
        if self.picard_max_iter < 2:
            raise ParameterError("picard max iterations must be at least 2")
        if not 0 < self.eta < 1:
            raise ParameterError("eta must lie in (0, 1)")
        return self


@dataclass
class PicardTrace:
    """Successive-difference energies of one frozen-coefficient solve."""

    diffs: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stop_reason: str = ""


@dataclass
class TrajectoryRecord:
    """Recorded run: per-step reports plus trajectory-level measurements."""

    times: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    picard_traces: list = field(default_factory=list)
    termination: str = "completed"
    monotone_violations: int = 0
    max_energy_ratio: float = 1.0
    zero_energy: bool = False
    int_D: float = 0.0
    max_mass_drift: float = 0.0
    final_state: FlowState | None = None


class Stepper:
    """Shared machinery for both schemes over one (params, basis, grid)."""

    def __init__(self, p: ModelParams, basis: QBasis, grid: TorusGrid):
        if grid.dim_x > basis.dim_q:
            raise ParameterError("configuration dimension must be >= flow dimension")
        self.p = p
        self.basis = basis
        self.grid = grid
        self._g_solves = {}
        k2 = np.zeros(grid.dims)
        for ax in range(grid.dim_x):
            k2 = k2 + np.broadcast_to(grid.k[ax] ** 2, grid.dims)
        self._k2 = k2
        self._kabs = np.sqrt(k2)

    # -- implicit blocks -----------------------------------------------------

    def _g_factor(self, dt: float):
        # The resolvent (I + dt sigma/De L)^{-1} is SPD and perfectly
        # conditioned, so the cached explicit inverse applied as one GEMM
        # across all grid points is both safe and fastest.
        key = round(float(dt), 15)
        if key not in self._g_solves:
            mat = np.eye(self.basis.n_b) + dt * (self.p.sigma / self.p.de) * self.basis.L
            self._g_solves[key] = cho_solve(cho_factor(mat), np.eye(self.basis.n_b))
        return self._g_solves[key]

    def implicit_g(self, g_star: np.ndarray, dt: float) -> np.ndarray:
        """Solve (I + dt (sigma/De) L) g = g_star per grid point."""
        return g_star @ self._g_factor(dt).T

    def implicit_fluid(self, rho_star, u_star, dt: float):
        """Solve the backward-Euler acoustic/viscous block about equilibrium.

        Longitudinal modes couple density and the parallel velocity through
        the linearized pressure; transverse modes see plain shear viscosity.
        Diagonal per wavenumber, solved in closed form.
        """
        p, grid = self.p, self.grid
        c2 = p.sound_speed_sq
        rh = grid.fft(rho_star)
        uh = grid.fft(u_star)
        k2, kabs = self._k2, self._kabs
        safe = np.where(kabs > 0, kabs, 1.0)
        khat = [np.broadcast_to(grid.k[ax], grid.dims) / safe for ax in range(grid.dim_x)]

        v_star = sum(khat[ax] * uh[..., ax] for ax in range(grid.dim_x))
        denom_l = 1.0 + dt * (2 * p.mu + p.xi) * k2 + dt**2 * c2 * k2
        v_new = (v_star - dt * c2 * 1j * kabs * rh) / denom_l
        rh_new = rh - dt * 1j * kabs * v_new

        uh_new = np.empty_like(uh)
        denom_t = 1.0 + dt * p.mu * k2
        for ax in range(grid.dim_x):
            trans = uh[..., ax] - khat[ax] * v_star
            uh_new[..., ax] = trans / denom_t + khat[ax] * v_new
        return grid.ifft(rh_new), grid.ifft(uh_new)

    def stiff_apply(self, state: FlowState):
        """The implicitly-treated linear generator applied to a state."""
        p, grid = self.p, self.grid
        divu = grid.div(state.u)
        a_rho = -divu
        a_u = np.empty_like(state.u)
        for i in range(grid.dim_x):
            lap = None
            for ax in range(grid.dim_x):
                e = [0] * grid.dim_x
                e[ax] = 2
                term = grid.deriv(state.u[..., i], e)
                lap = term if lap is None else lap + term
            a_u[..., i] = (
                -p.sound_speed_sq * grid.dx(state.rho, i)
                + p.mu * lap
                + (p.mu + p.xi) * grid.dx(divu, i)
            )
        a_g = -(p.sigma / p.de) * (state.g @ self.basis.L.T)
        return a_rho, a_u, a_g

    def explicit_rhs(self, state: FlowState):
        """Full right-hand side minus the stiff linear generator."""
        rhs = rhs_perturbation(state, self.p, self.basis, self.grid)
        a_rho, a_u, a_g = self.stiff_apply(state)
        return rhs.drho - a_rho, rhs.du - a_u, rhs.dg - a_g

    # -- stability bound -------------------------------------------------------

    def cfl_bound(self, state: FlowState, safety: float) -> float:
        """Advective bound: transport across a cell and ladder growth of the
        stretching term, whose stiffness scales with the degree cutoff."""
        vmax = float(np.max(np.abs(state.u)))
        kap = velocity_gradient(self.grid, state.u)
        gmax = float(np.max(np.abs(kap)))
        dx = min(self.grid.spacing)
        bound = math.inf
        if vmax > 0:
            bound = min(bound, dx / vmax)
        if gmax > 0:
            bound = min(bound, 1.0 / (gmax * (self.basis.nq + 1)))
        return safety * bound

    def _require_cfl(self, state, dt, cfg: StepConfig):
        if not cfg.check_cfl:
            return
        bound = self.cfl_bound(state, cfg.cfl_safety)
        if dt > bound:
            raise CflError(
                f"dt = {dt:g} exceeds the advective bound {bound:g}",
                suggested_dt=bound,
            )

    # -- schemes -------------------------------------------------------------

    def step_imex(self, state: FlowState, dt: float, cfg: StepConfig) -> FlowState:
        self._require_cfl(state, dt, cfg)
        if cfg.order == 1:
            e_rho, e_u, e_g = self.explicit_rhs(state)
            rho1, u1 = self.implicit_fluid(
                state.rho + dt * e_rho, state.u + dt * e_u, dt
            )
            g1 = self.implicit_g(state.g + dt * e_g, dt)
            return FlowState(rho=rho1, u=u1, g=g1, t=state.t + dt)

        # Second-order variant: trapezoid on the stiff part, midpoint on the
        # explicit part, sharing one half-step factorization.
        h = 0.5 * dt
        e_rho, e_u, e_g = self.explicit_rhs(state)
        rho_h, u_h = self.implicit_fluid(state.rho + h * e_rho, state.u + h * e_u, h)
        g_h = self.implicit_g(state.g + h * e_g, h)
        half = FlowState(rho=rho_h, u=u_h, g=g_h, t=state.t + h)

        m_rho, m_u, m_g = self.explicit_rhs(half)
        a_rho, a_u, a_g = self.stiff_apply(state)
        rho1, u1 = self.implicit_fluid(
            state.rho + dt * m_rho + h * a_rho,
            state.u + dt * m_u + h * a_u,
            h,
        )
        g1 = self.implicit_g(state.g + dt * m_g + h * a_g, h)
        return FlowState(rho=rho1, u=u1, g=g1, t=state.t + dt)

    # -- frozen-coefficient iteration ------------------------------------------

    def _low_norm_energy(self, d_rho, d_u, d_g) -> float:
        """Order-zero energy of a difference: |drho|^2 + |du|^2 + |<q> dg|^2."""
        grid, basis = self.grid, self.basis
        quad = np.einsum("...i,ij,...j->...", d_g, basis.W, d_g)
        return (
            grid.integral(d_rho**2)
            + grid.integral(np.sum(d_u**2, axis=-1))
            + grid.integral(quad)
        )

    def _solve_g_linear(self, frozen: FlowState, g_n, dt):
        """Backward-Euler microscopic equation with frozen coefficients."""
        p, grid, basis = self.p, self.grid, self.basis
        cache = _pair_mats(basis)
        d = grid.dim_x
        kap = velocity_gradient(grid, frozen.u)
        divu = np.trace(kap, axis1=-2, axis2=-1)
        shape = g_n.shape
        n = g_n.size

        def op(vec):
            g = vec.reshape(shape)
            out = g / dt
            out = out + sum(
                grid.product(frozen.u[..., ax, None], grid.dx(g, ax)) for ax in range(d)
            )
            out = out + (p.sigma / p.de) * (g @ basis.L.T)
            out = out + 2.0 * grid.product(divu[..., None], g)
            for i in range(d):
                for j in range(d):
                    kij = kap[..., i, j, None]
                    out = out + grid.product(kij, g @ cache["qd"][i][j].T)
                    out = out - grid.product(kij, g @ cache["qa"][i][j].T)
            return out.ravel()

        forcing = g_n / dt
        e0_term = np.zeros(shape)
        e0_term[..., 0] = -2.0 * divu
        for i in range(d):
            for j in range(d):
                e0_term += kap[..., i, j, None] * cache["w"][i][j]
        forcing = forcing + grid.dealias(e0_term)

        lin = LinearOperator((n, n), matvec=op)
        pre = LinearOperator(
            (n, n), matvec=lambda v: dt * self.implicit_g(v.reshape(shape), dt).ravel()
        )
        sol, info = gmres(
            lin, forcing.ravel(), M=pre, rtol=1e-12, atol=0.0,
            restart=100, maxiter=20,
        )
        if info != 0:
            raise NonContractionError(
                "frozen-coefficient microscopic system is no longer reliably "
                "solvable at this step size; data too large for the "
                "small-data regime"
            )
        return sol.reshape(shape)

    def _solve_fluid_linear(self, frozen: FlowState, g_new, rho_n, u_n, dt):
        """Backward-Euler fluid equations with frozen transport/scaling."""
        p, grid, basis = self.p, self.grid, self.basis
        d = grid.dim_x
        dens_k = 1.0 + frozen.rho
        inv_k = 1.0 / dens_k
        press_k = p.a * p.gamma * dens_k ** (p.gamma - 2.0) / p.ma**2
        nr = rho_n.size
        shape_u = u_n.shape

        def op(vec):
            rho = vec[:nr].reshape(rho_n.shape)
            u = vec[nr:].reshape(shape_u)
            divu = grid.div(u)
            out_r = rho / dt
            out_r = out_r + sum(
                grid.product(frozen.u[..., ax], grid.dx(rho, ax)) for ax in range(d)
            )
            out_r = out_r + grid.product(dens_k, divu)
            out_u = np.empty_like(u)
            for i in range(d):
                lap = None
                for ax in range(d):
                    e = [0] * d
                    e[ax] = 2
                    term = grid.deriv(u[..., i], e)
                    lap = term if lap is None else lap + term
                visc = p.mu * lap + (p.mu + p.xi) * grid.dx(divu, i)
                out_u[..., i] = (
                    u[..., i] / dt
                    + sum(
                        grid.product(frozen.u[..., ax], grid.dx(u[..., i], ax))
                        for ax in range(d)
                    )
                    + grid.product(press_k, grid.dx(rho, i))
                    - grid.product(inv_k, visc)
                )
            return np.concatenate([out_r.ravel(), out_u.ravel()])

        carrier = FlowState(rho=frozen.rho, u=frozen.u, g=g_new, t=frozen.t)
        div_tau = stress_divergence(carrier, p, basis, grid, check=False)
        b_u = np.empty_like(u_n)
        for i in range(d):
            b_u[..., i] = u_n[..., i] / dt + grid.product(inv_k, div_tau[..., i])
        rhs = np.concatenate([(rho_n / dt).ravel(), b_u.ravel()])

        def pre(vec):
            rho = vec[:nr].reshape(rho_n.shape)
            u = vec[nr:].reshape(shape_u)
            r2, u2 = self.implicit_fluid(dt * rho, dt * u, dt)
            return np.concatenate([r2.ravel(), u2.ravel()])

        n_tot = rhs.size
        lin = LinearOperator((n_tot, n_tot), matvec=op)
        sol, info = gmres(
            lin,
            rhs,
            M=LinearOperator((n_tot, n_tot), matvec=pre),
            rtol=1e-12,
            atol=0.0,
            restart=100,
            maxiter=20,
        )
        if info != 0:
            raise NonContractionError(
                "frozen-coefficient fluid system is no longer reliably "
                "solvable at this step size; data too large for the "
                "small-data regime"
            )
        return sol[:nr].reshape(rho_n.shape), sol[nr:].reshape(shape_u)

    def step_picard(
        self, state: FlowState, dt: float, cfg: StepConfig
    ) -> tuple[FlowState, PicardTrace]:
        """One backward-Euler step via the frozen-coefficient iteration.

        Stops on the first of: difference energy below tolerance, the
        iteration cap, or three consecutive non-contracting ratios (the
        small-data guard, raised as an error).  Leaving the small-data
        regime has a second, harder discrete signature: the lagged linear
        systems themselves stop being reliably solvable; that case is
        rejected through the same non-contraction error, since both say the
        data is too large for this step size.
        """
        self._require_cfl(state, dt, cfg)
        trace = PicardTrace()
        prev = state
        bad_run = 0
        for it in range(1, cfg.picard_max_iter + 1):
            g_new = self._solve_g_linear(prev, state.g, dt)
            rho_new, u_new = self._solve_fluid_linear(
                prev, g_new, state.rho, state.u, dt
            )
            new = FlowState(rho=rho_new, u=u_new, g=g_new, t=state.t + dt)
            diff = self._low_norm_energy(
                new.rho - prev.rho, new.u - prev.u, new.g - prev.g
            )
            trace.diffs.append(diff)
            trace.iterations = it
            if len(trace.diffs) >= 2 and trace.diffs[-2] > 0:
                ratio = diff / trace.diffs[-2]
                trace.ratios.append(ratio)
                # Ratios wobble around 1 once the iteration sits on the
                # round-off floor; only count non-contraction while the
                # difference has made no net progress from its first value.
                stalled = diff >= 0.5 * trace.diffs[0]
                bad_run = bad_run + 1 if (ratio >= 1.0 and stalled) else 0
                if bad_run >= 3:
                    trace.stop_reason = "non-contraction"
                    raise NonContractionError(
                        "successive-difference ratios stayed >= 1 for three "
                        "consecutive iterates; data too large for the "
                        "contraction regime at this step size"
                    )
            prev = new
            if diff < cfg.picard_tol:
                trace.converged = True
                trace.stop_reason = "tolerance"
                return new, trace
        trace.stop_reason = "max-iterations"
        return prev, trace


# ---------------------------------------------------------------------------
# Spec-level convenience wrappers
# ---------------------------------------------------------------------------


def step_imex(state, p, basis, grid, dt, cfg: StepConfig | None = None) -> FlowState:
    cfg = cfg or StepConfig(dt=dt)
    return Stepper(p, basis, grid).step_imex(state, dt, cfg)


def step_picard(state, p, basis, grid, dt, tol=1e-10, max_iter=8, cfg=None):
    cfg = cfg or StepConfig(dt=dt, picard_tol=tol, picard_max_iter=max_iter)
    return Stepper(p, basis, grid).step_picard(state, dt, cfg)


def energy_audit(s0: FlowState, s1: FlowState, p, basis, grid, dt, floor=1e-14):
    """Discrete energy-law residual between two consecutive states.

    r = (E(t+dt) - E(t))/dt + D(midpoint) on the audited energy (total
    energy completed by the number-density entropy, which the compressible
    transport exchanges with; identical to the plain total when the
    configuration mass stays pointwise normalized).  The midpoint
    dissipation is the trapezoid average; also returns |r| normalized by
    the dissipation magnitude plus a floor.
    """
    b0 = total_energy_and_dissipation(s0, p, basis, grid)
    b1 = total_energy_and_dissipation(s1, p, basis, grid)
    d_mid = 0.5 * (b0.d_total + b1.d_total)
    r = (b1.e_audit_rel - b0.e_audit_rel) / dt + d_mid
    return r, abs(r) / (abs(d_mid) + floor)


# ---------------------------------------------------------------------------
# Trajectory driver
# ---------------------------------------------------------------------------


def simulate(
    p: ModelParams,
    basis: QBasis,
    grid: TorusGrid,
    cfg: StepConfig,
    state0: FlowState,
    snapshot_dir=None,
    csv_writer=None,
) -> TrajectoryRecord:
    """Advance to t_end recording an EnergyReport per accepted step.

    Any step error terminates the run with the reason recorded.  Flags
    accumulated along the way: energy-monotonicity violations beyond the
    audit tolerance, the largest observed E(t)/E(0), the time integral of
    D, and the largest drift of the total polymer mass.
    """
    cfg.validate()
    stepper = Stepper(p, basis, grid)
    rec = TrajectoryRecord()
    audit_ok = cfg.audit and p.gamma > 1.0

    state = state0
    try:
        bal = (
            total_energy_and_dissipation(state, p, basis, grid, cfg.positivity_floor)
            if audit_ok
            else None
        )
        rep = build_report(
            state, p, basis, grid, eta=cfg.eta, audit=audit_ok, balance=bal
        )
    except PolyflowError as err:
        rec.termination = f"{type(err).__name__}: {err}"
        rec.final_state = state
        return rec
    rec.times.append(state.t)
    rec.reports.append(rep)
    if csv_writer:
        csv_writer(rep)

    e0 = rep.E
    rec.zero_energy = e0 <= 0.0
    mass0 = grid.integral(state.g[..., 0])
    d_prev = rep.D
    n_steps = int(round(cfg.t_end / cfg.dt))

    for n in range(n_steps):
        try:
            if cfg.scheme == "picard":
                new_state, trace = stepper.step_picard(state, cfg.dt, cfg)
                rec.picard_traces.append(trace)
            else:
                new_state = stepper.step_imex(state, cfg.dt, cfg)
                trace = None
            bal_new = (
                total_energy_and_dissipation(
                    new_state, p, basis, grid, cfg.positivity_floor
                )
                if audit_ok
                else None
            )
        except PolyflowError as err:
            rec.termination = f"{type(err).__name__}: {err}"
            break

        rep = build_report(
            new_state, p, basis, grid, eta=cfg.eta, audit=audit_ok, balance=bal_new
        )
        if audit_ok:
            d_mid = 0.5 * (bal.d_total + bal_new.d_total)
            r = (bal_new.e_audit_rel - bal.e_audit_rel) / cfg.dt + d_mid
            rep.audit_residual = r
            rep.audit_residual_norm = abs(r) / (abs(d_mid) + cfg.audit_floor)
            bal = bal_new
        if trace is not None:
            rep.picard_iters = float(trace.iterations)
            rep.picard_last_ratio = trace.ratios[-1] if trace.ratios else math.nan

        prev_e = rec.reports[-1].E
        if rep.E > prev_e * (1.0 + 1e-10) + 1e-14:
            rec.monotone_violations += 1
        if not rec.zero_energy:
            rec.max_energy_ratio = max(rec.max_energy_ratio, rep.E / e0)
        rec.int_D += 0.5 * (d_prev + rep.D) * cfg.dt
        d_prev = rep.D
        mass = grid.integral(new_state.g[..., 0])
        rec.max_mass_drift = max(rec.max_mass_drift, abs(mass - mass0))

        rec.times.append(new_state.t)
        rec.reports.append(rep)
        if csv_writer:
            csv_writer(rep)
        if snapshot_dir and cfg.snapshot_every and (n + 1) % cfg.snapshot_every == 0:
            _dump_snapshot(snapshot_dir, new_state, basis, grid, n + 1)
        state = new_state

    rec.final_state = state
    return rec


def _dump_snapshot(directory, state, basis, grid, step_index):
    import os

    path = os.path.join(directory, f"snapshot_{step_index:06d}.pfs")
    meta = {
        "t": state.t,
        "step": step_index,
        "grid": {"dims": list(grid.dims), "lengths": list(grid.lengths)},
        "basis": {
            "potential": basis.potential.name,
            "dim_q": basis.dim_q,
            "nq": basis.nq,
            "n_b": basis.n_b,
            "sigma": basis.potential.sigma,
            "r": basis.potential.r,
            "params": basis.potential.params,
        },
    }
    write_snapshot(path, {"rho": state.rho, "u": state.u, "g": state.g}, meta)


# ---------------------------------------------------------------------------
# Built-in initial data
# ---------------------------------------------------------------------------


def build_initial_state(
    grid: TorusGrid,
    basis: QBasis,
    family: str = "zero",
    eps: float = 0.0,
    mode=(1,),
    rho_amp: float = 0.0,
    u_amp: float = 1.0,
    g_amp: float = 1.0,
    g_mode: int = 1,
    snapshot_path=None,
) -> FlowState:
    """Built-in initial-data families.

    ``zero``: the equilibrium itself.  ``modal``: a single resolved Fourier
    mode sin(k.x) with amplitude eps split across the velocity's first
    component, the density, and one basis coefficient of g (mean-zero in q
    whenever g_mode >= 1).  ``snapshot``: reload saved fields.
    """
    if family == "zero":
        return FlowState.zero(grid, basis)
    if family == "snapshot":
        from .xgrid import read_snapshot

        arrays, meta = read_snapshot(snapshot_path)
        expected = {
            "dims": list(grid.dims),
            "nb": basis.n_b,
        }
        if list(arrays["rho"].shape) != expected["dims"]:
            raise ParameterError(
                f"snapshot grid {list(arrays['rho'].shape)} does not match "
                f"configured grid {expected['dims']}"
            )
        if arrays["g"].shape[-1] != basis.n_b:
            raise ParameterError("snapshot basis size does not match configuration")
        return FlowState(
            rho=arrays["rho"], u=arrays["u"], g=arrays["g"], t=float(meta.get("t", 0.0))
        )
    if family != "modal":
        raise ParameterError(f"unknown initial-data family {family!r}")

    mode = tuple(int(m) for m in np.atleast_1d(mode))
    if len(mode) != grid.dim_x:
        raise ParameterError("mode must have one entry per spatial dimension")
    if not 0 <= g_mode < basis.n_b:
        raise ParameterError(f"g_mode must be within 0..{basis.n_b - 1}")
    coords = grid.coords()
    phase = sum(
        2.0 * math.pi * m / ln * xx for m, ln, xx in zip(mode, grid.lengths, coords)
    )
    wave = np.sin(phase)
    state = FlowState.zero(grid, basis)
    state.rho = eps * rho_amp * wave
    state.u[..., 0] = eps * u_amp * wave
    state.g[..., g_mode] = eps * g_amp * wave
    # keep fields inside the dealiased band
    state.rho = grid.dealias(state.rho)
    state.u = grid.dealias(state.u)
    state.g = grid.dealias(state.g)
    return state
