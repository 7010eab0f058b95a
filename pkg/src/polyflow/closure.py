"""Closed second-moment (conformation) solver for the quadratic spring.

For the quadratic potential the second moment C(x) = int q x q Psi dq of the
distribution obeys a closed evolution equation; no information about higher
moments enters.  Multiplying the kinetic equation by q_a q_b and integrating
by parts in q gives

    d_t C + div(u C) = kappa C + C kappa^T + (1/De) (2 sigma n Id - (2/r) C),

with kappa = grad u, n = int Psi dq (which obeys plain continuity), and the
elastic stress tau = (lam/(r De)) (C - sigma r Id), whose divergence forces
the same fluid equations the kinetic solver uses.  The derivation is spelled
out in docs/moment_closure.md; the test-suite checks the pointwise algebraic
identity between the moment of the kinetic right-hand side and this closed
right-hand side, which holds to round-off for degree cutoffs >= 3.

Because the closure is exact, running this solver side by side with the
kinetic one (same grid, matched time scheme) measures pure discretization
agreement; it is the independent oracle for the coupled code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import velocity_gradient
from .errors import ParameterError, UnsupportedModelError
from .qbasis import QBasis
from .state import FlowState, ModelParams
from .stepper import StepConfig, Stepper
from .xgrid import TorusGrid

__all__ = [
    "MomentState",
    "closed_moment_rhs",
    "relaxation_and_stretch",
    "moments_from_kinetic",
    "kinetic_from_moments",
    "step_moment_imex",
    "closure_compare",
    "ClosureComparison",
]


@dataclass
class MomentState:
    """Macroscopic closure state: fluid fields plus conformation moment.

    ``n`` is the configuration-space mass int Psi dq; it cannot be recovered
    from C and is needed by the relaxation term, so it travels with the
    state (n = 1 at the reference equilibrium).
    """

    rho: np.ndarray                 # (*grid,)
    u: np.ndarray                   # (*grid, dim_x)
    C: np.ndarray                   # (*grid, dim_q, dim_q), symmetric
    n: np.ndarray                   # (*grid,)
    t: float = 0.0


def _require_hookean(basis: QBasis):
    if basis.potential.name != "hookean":
        raise UnsupportedModelError(
            "the second-moment closure is exact only for the quadratic "
            "spring; other potentials couple to higher moments and have no "
            "closed conformation equation"
        )


def _second_moment_vectors(basis: QBasis) -> np.ndarray:
    """P2[a, b] = basis coefficients of q_a q_b (exact for degree >= 2)."""
    cache = getattr(basis, "_p2_cache", None)
    if cache is None:
        d = basis.dim_q
        cache = np.empty((d, d, basis.n_b))
        for a in range(d):
            for b in range(d):
                cache[a, b] = basis.project(
                    lambda pts: pts[..., a] * pts[..., b]
                )
        basis._p2_cache = cache
    return cache


def moments_from_kinetic(state: FlowState, basis: QBasis) -> MomentState:
    """Map a kinetic state to (rho, u, C, n); exact on any coefficient g."""
    p2 = _second_moment_vectors(basis)
    sr = basis.potential.scale
    d = basis.dim_q
    shape = state.rho.shape
    c = np.empty(shape + (d, d))
    for a in range(d):
        for b in range(d):
            c[..., a, b] = state.g @ p2[a, b]
            if a == b:
                c[..., a, b] += sr
    return MomentState(
        rho=state.rho.copy(),
        u=state.u.copy(),
        C=c,
        n=1.0 + state.g[..., 0],
        t=state.t,
    )


def kinetic_from_moments(ms: MomentState, basis: QBasis) -> FlowState:
    """Quadratic-in-q kinetic state with the prescribed moments.

    Solves the small Gram system expressing (mass, first moments = 0,
    second moments) through the coefficients of total degree <= 2; this is
    the exact inverse of :func:`moments_from_kinetic` on quadratic data.
    """
    d = basis.dim_q
    sr = basis.potential.scale
    quad_idx = [k for k, deg in enumerate(basis.degrees) if deg <= 2]
    p2 = _second_moment_vectors(basis)

    moment_rows = [np.zeros(basis.n_b)]
    moment_rows[0][0] = 1.0  # <1, phi_K>
    for a in range(d):
        moment_rows.append(basis.project(lambda pts, a=a: pts[..., a]))
    pairs = [(a, b) for a in range(d) for b in range(a, d)]
    for a, b in pairs:
        moment_rows.append(p2[a, b])
    mat = np.stack(moment_rows)[:, quad_idx]
    if mat.shape[0] != mat.shape[1]:
        raise ParameterError("degree cutoff too small to carry quadratic data")

    shape = ms.rho.shape
    rhs = np.empty(shape + (len(moment_rows),))
    rhs[..., 0] = ms.n - 1.0
    for a in range(d):
        rhs[..., 1 + a] = 0.0
    for i, (a, b) in enumerate(pairs):
        rhs[..., 1 + d + i] = ms.C[..., a, b] - sr * (a == b)
    coeffs = np.linalg.solve(mat, rhs[..., None])[..., 0]
    g = np.zeros(shape + (basis.n_b,))
    g[..., quad_idx] = coeffs
    return FlowState(rho=ms.rho.copy(), u=ms.u.copy(), g=g, t=ms.t)


def relaxation_and_stretch(C, n, kappa, p: ModelParams):
    """Configuration-local part of the moment equation (no transport):

        kappa C + C kappa^T + (1/De)(2 sigma n Id - (2/r) C)

    kappa may cover fewer dimensions than C (flow gradients only stretch
    the flow block); pure function usable on single tensors or fields.
    """
    C = np.asarray(C, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    dq = C.shape[-1]
    dx = kappa.shape[-1]
    if dx < dq:
        pad = np.zeros(kappa.shape[:-2] + (dq, dq))
        pad[..., :dx, :dx] = kappa
        kappa = pad
    out = kappa @ C + C @ np.swapaxes(kappa, -1, -2)
    out += (2.0 * p.sigma / p.de) * np.asarray(n)[..., None, None] * np.eye(dq)
    out -= (2.0 / (p.r * p.de)) * C
    return out


def closed_moment_rhs(
    ms: MomentState, p: ModelParams, basis: QBasis, grid: TorusGrid
):
    """Full moment-system right-hand side (drho, du, dC, dn).

    Fluid equations are identical to the kinetic solver's with the stress
    built from C; transport terms are dealiased exactly like their kinetic
    counterparts so the two solvers stay algebraically comparable.
    """
    _require_hookean(basis)
    d = grid.dim_x
    dq = basis.dim_q
    sr = basis.potential.scale
    kap = velocity_gradient(grid, ms.u)
    divu = np.trace(kap, axis1=-2, axis2=-1)
    dens = 1.0 + ms.rho
    inv_dens = 1.0 / dens

    drho = -sum(grid.product(ms.u[..., ax], grid.dx(ms.rho, ax)) for ax in range(d))
    drho -= grid.product(dens, divu)

    dn = -sum(grid.product(ms.u[..., ax], grid.dx(ms.n, ax)) for ax in range(d))
    dn -= grid.product(ms.n, divu)

    tau = (p.lam / (p.r * p.de)) * (ms.C - sr * np.eye(dq))
    press = p.a * p.gamma * dens ** (p.gamma - 2.0) / p.ma**2
    du = np.empty_like(ms.u)
    for i in range(d):
        adv = sum(
            grid.product(ms.u[..., ax], grid.dx(ms.u[..., i], ax)) for ax in range(d)
        )
        lap = None
        for ax in range(d):
            e = [0] * d
            e[ax] = 2
            term = grid.deriv(ms.u[..., i], e)
            lap = term if lap is None else lap + term
        visc = p.mu * lap + (p.mu + p.xi) * grid.dx(divu, i)
        div_tau = sum(grid.dx(tau[..., i, j], j) for j in range(d))
        du[..., i] = (
            -adv
            - grid.product(press, grid.dx(ms.rho, i))
            + grid.product(inv_dens, visc)
            + grid.product(inv_dens, div_tau)
        )

    dC = -sum(
        grid.product(ms.u[..., ax, None, None], grid.dx(ms.C, ax)) for ax in range(d)
    )
    dC -= grid.product(divu[..., None, None], ms.C)
    kap_field = np.zeros(ms.rho.shape + (dq, dq))
    kap_field[..., :d, :d] = kap
    dC += grid.dealias(kap_field @ ms.C + ms.C @ np.swapaxes(kap_field, -1, -2))
    dC += (2.0 * p.sigma / p.de) * ms.n[..., None, None] * np.eye(dq)
    dC -= (2.0 / (p.r * p.de)) * ms.C
    return drho, du, dC, dn


class MomentStepper:
    """IMEX stepping of the closed moment system, matched to the kinetic
    scheme: same fluid implicit block, and the conformation relaxation
    solved implicitly by the scalar resolvent that the configuration-space
    diffusion applies to degree-two coefficients."""

    def __init__(self, p: ModelParams, basis: QBasis, grid: TorusGrid):
        _require_hookean(basis)
        self.p = p
        self.basis = basis
        self.grid = grid
        self.fluid = Stepper(p, basis, grid)

    def _relax_solve(self, C_star, n_new, dt):
        """(I - dt * relaxation)^{-1} with n frozen at its updated value."""
        p = self.p
        sr = self.basis.potential.scale
        dq = self.basis.dim_q
        tau2 = 2.0 * dt / (p.r * p.de)
        src = (2.0 * dt * p.sigma / p.de) * n_new[..., None, None] * np.eye(dq)
        return (C_star + src) / (1.0 + tau2)

    def _explicit(self, ms: MomentState):
        drho, du, dC, dn = closed_moment_rhs(ms, self.p, self.basis, self.grid)
        a_rho, a_u = self._stiff_fluid(ms)
        a_C = self._stiff_C(ms)
        return drho - a_rho, du - a_u, dC - a_C, dn

    def _stiff_fluid(self, ms):
        grid, p = self.grid, self.p
        divu = grid.div(ms.u)
        a_rho = -divu
        a_u = np.empty_like(ms.u)
        for i in range(grid.dim_x):
            lap = None
            for ax in range(grid.dim_x):
                e = [0] * grid.dim_x
                e[ax] = 2
                term = grid.deriv(ms.u[..., i], e)
                lap = term if lap is None else lap + term
            a_u[..., i] = (
                -p.sound_speed_sq * grid.dx(ms.rho, i)
                + p.mu * lap
                + (p.mu + p.xi) * grid.dx(divu, i)
            )
        return a_rho, a_u

    def _stiff_C(self, ms):
        p = self.p
        dq = self.basis.dim_q
        return (2.0 * p.sigma / p.de) * ms.n[..., None, None] * np.eye(dq) - (
            2.0 / (p.r * p.de)
        ) * ms.C

    def step(self, ms: MomentState, dt: float, cfg: StepConfig) -> MomentState:
        if cfg.order == 1:
            e_rho, e_u, e_C, e_n = self._explicit(ms)
            n1 = ms.n + dt * e_n
            rho1, u1 = self.fluid.implicit_fluid(
                ms.rho + dt * e_rho, ms.u + dt * e_u, dt
            )
            C1 = self._relax_solve(ms.C + dt * e_C, n1, dt)
            return MomentState(rho=rho1, u=u1, C=C1, n=n1, t=ms.t + dt)

        h = 0.5 * dt
        e_rho, e_u, e_C, e_n = self._explicit(ms)
        n_h = ms.n + h * e_n
        rho_h, u_h = self.fluid.implicit_fluid(ms.rho + h * e_rho, ms.u + h * e_u, h)
        C_h = self._relax_solve(ms.C + h * e_C, n_h, h)
        half = MomentState(rho=rho_h, u=u_h, C=C_h, n=n_h, t=ms.t + h)

        m_rho, m_u, m_C, m_n = self._explicit(half)
        a_rho, a_u = self._stiff_fluid(ms)
        a_C = self._stiff_C(ms)
        n1 = ms.n + dt * m_n
        rho1, u1 = self.fluid.implicit_fluid(
            ms.rho + dt * m_rho + h * a_rho, ms.u + dt * m_u + h * a_u, h
        )
        C1 = self._relax_solve(ms.C + dt * m_C + h * a_C, n1, h)
        return MomentState(rho=rho1, u=u1, C=C1, n=n1, t=ms.t + dt)


def step_moment_imex(ms, p, basis, grid, dt, cfg=None) -> MomentState:
    cfg = cfg or StepConfig(dt=dt)
    return MomentStepper(p, basis, grid).step(ms, dt, cfg)


@dataclass
class ClosureComparison:
    """Kinetic vs closed-moment deviation time series."""

    times: list = field(default_factory=list)
    deviations: list = field(default_factory=list)
    max_deviation: float = 0.0

    def record(self, t, dev):
        self.times.append(t)
        self.deviations.append(dev)
        self.max_deviation = max(self.max_deviation, dev)


def closure_compare(
    p: ModelParams,
    basis: QBasis,
    grid: TorusGrid,
    cfg: StepConfig,
    initial: FlowState,
) -> ClosureComparison:
    """Run the kinetic and the closed-moment solver side by side.

    The initial kinetic state must carry quadratic-in-q data so both
    representations describe the same distribution; the report holds the
    relative Frobenius deviation of the conformation fields over time.
    """
    _require_hookean(basis)
    max_deg = int(np.max(basis.degrees[np.any(initial.g != 0.0, axis=tuple(range(initial.g.ndim - 1)))])) if np.any(initial.g) else 0
    if max_deg > 2:
        raise ParameterError(
            "closure comparison needs quadratic-in-q initial data; got "
            f"coefficients up to degree {max_deg}"
        )
    kin = Stepper(p, basis, grid)
    mom = MomentStepper(p, basis, grid)
    ms = moments_from_kinetic(initial, basis)
    state = initial

    comp = ClosureComparison()

    def dev(a: FlowState, b: MomentState) -> float:
        ca = moments_from_kinetic(a, basis).C
        diff = float(np.sqrt(np.sum((ca - b.C) ** 2)))
        scale = float(np.sqrt(np.sum(ca**2))) + 1e-300
        return diff / scale

    comp.record(state.t, dev(state, ms))
    n_steps = int(round(cfg.t_end / cfg.dt))
    for _ in range(n_steps):
        state = kin.step_imex(state, cfg.dt, cfg)
        ms = mom.step(ms, cfg.dt, cfg)
        comp.record(state.t, dev(state, ms))
    return comp
