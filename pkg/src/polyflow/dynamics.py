"""Right-hand side of the perturbation dynamics near global equilibrium.

Unknowns are the density fluctuation rho, velocity u and microscopic
fluctuation g (distribution = M(1+g)).  The system solved here is

    d_t rho = -u.grad rho - (1+rho) div u
    d_t u   = -u.grad u - P'(1+rho)/(Ma^2(1+rho)) grad rho
              + div Sigma(u)/(1+rho) + div tau(g)/(1+rho)
    d_t g   = -u.grad g - (grad u q).grad_q g - (sigma/De) L g
              - 2(1+g) div u + (1+g) (grad u q).grad_q U_eff

with Sigma(u) = mu(grad u + grad u^T) + xi div u Id and the elastic stress
tau_ij = (lam/(r De)) int dU/dq_i q_j g M dq.  The velocity-gradient
convention is kappa_ij = du_i/dx_j, which is exactly the convention under
which the discrete stress/stretching cancellation identity below holds.

In coefficients, the stretching term expands as sum_ij kappa_ij Q_j D_i g
and the source as sum_ij kappa_ij Q_j A_i (e0 + g), where adding the
constant-mode unit vector e0 realizes the (1+g) factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, ParameterError
from .qbasis import QBasis
from .state import FlowState, ModelParams, mean_in_q
from .xgrid import TorusGrid

__all__ = [
    "Rhs",
    "velocity_gradient",
    "stress_tau",
    "stress_divergence",
    "rhs_perturbation",
    "cancellation_residual",
    "CancellationResult",
]


@dataclass
class Rhs:
    """Time derivative of (rho, u, g) at one state."""

    drho: np.ndarray
    du: np.ndarray
    dg: np.ndarray


def _pair_mats(basis: QBasis):
    """Cache of Q_j D_i, Q_j A_i products and the stress row vectors."""
    cache = getattr(basis, "_pair_cache", None)
    if cache is None:
        dim = basis.dim_q
        cache = {
            "qd": [[basis.Q[j] @ basis.D[i] for j in range(dim)] for i in range(dim)],
            "qa": [[basis.Q[j] @ basis.A[i] for j in range(dim)] for i in range(dim)],
        }
        e0 = np.zeros(basis.n_b)
        e0[0] = 1.0
        cache["w"] = [[cache["qa"][i][j] @ e0 for j in range(dim)] for i in range(dim)]
        cache["v"] = [
            [basis.D[i].T @ (basis.Q[j] @ e0) for j in range(dim)] for i in range(dim)
        ]
        cache["e0"] = e0
        basis._pair_cache = cache
    return cache


def velocity_gradient(grid: TorusGrid, u: np.ndarray) -> np.ndarray:
    """kappa[..., i, j] = du_i/dx_j, exact spectral derivatives."""
    d = grid.dim_x
    kap = np.empty(grid.dims + (d, d))
    for i in range(d):
        for j in range(d):
            kap[..., i, j] = grid.dx(u[..., i], j)
    return kap


def stress_tau(state: FlowState, p: ModelParams, basis: QBasis) -> np.ndarray:
    """Elastic stress tau_ij(x) = (lam/(r De)) int dU/dq_i q_j g M dq.

    In coefficients this is (lam sigma / De) e0^T A_i Q_j g(x), since the
    basis force matrices represent the scaled potential U/(sigma r).
    """
    cache = _pair_mats(basis)
    d = state.u.shape[-1]
    if d > basis.dim_q:
        raise ParameterError("configuration dimension must be >= flow dimension")
    coef = p.lam * p.sigma / p.de
    tau = np.empty(state.rho.shape + (d, d))
    for i in range(d):
        for j in range(d):
            tau[..., i, j] = coef * (state.g @ cache["w"][i][j])
    return tau


def stress_divergence(
    state: FlowState,
    p: ModelParams,
    basis: QBasis,
    grid: TorusGrid,
    check: bool = True,
    m_gate: float = 1e-10,
) -> np.ndarray:
    """Row divergence of the elastic stress, (div tau)_i = d_j tau_ij.

    When the Maxwellian mean of g vanishes (max |m| below `m_gate`), the
    moment identity d_j tau_ij = (lam sigma/De) int q_j d^2 g/(dq_i dx_j) M dq
    holds; with `check` enabled both routes are evaluated and compared.
    """
    tau = stress_tau(state, p, basis)
    d = tau.shape[-1]
    div = np.empty(state.rho.shape + (d,))
    for i in range(d):
        div[..., i] = sum(grid.dx(tau[..., i, j], j) for j in range(d))
    if check:
        max_m = float(np.max(np.abs(mean_in_q(state))))
        if max_m < m_gate:
            cache = _pair_mats(basis)
            coef = p.lam * p.sigma / p.de
            alt = np.zeros_like(div)
            for j in range(d):
                gx = grid.dx(state.g, j)
                for i in range(d):
                    alt[..., i] += coef * (gx @ cache["v"][i][j])
            scale = float(np.max(np.abs(div))) + 1e-300
            err = float(np.max(np.abs(div - alt))) / scale
            if err > 1e-8:
                raise ConsistencyError(
                    f"stress-divergence routes disagree by {err:.3e} although "
                    f"max|m| = {max_m:.3e}"
                )
    return div


def rhs_perturbation(
    state: FlowState, p: ModelParams, basis: QBasis, grid: TorusGrid
) -> Rhs:
    """Assemble the full perturbation right-hand side (all products dealiased)."""
    state.require_no_vacuum()
    cache = _pair_mats(basis)
    d = grid.dim_x
    u, rho, g = state.u, state.rho, state.g

    kap = velocity_gradient(grid, u)
    divu = np.trace(kap, axis1=-2, axis2=-1)
    dens = 1.0 + rho
    inv_dens = 1.0 / dens

    drho = -sum(grid.product(u[..., ax], grid.dx(rho, ax)) for ax in range(d))
    drho -= grid.product(dens, divu)

    press = p.a * p.gamma * dens ** (p.gamma - 2.0) / p.ma**2
    div_tau = stress_divergence(state, p, basis, grid, check=False)
    du = np.empty_like(u)
    for i in range(d):
        adv = sum(grid.product(u[..., ax], grid.dx(u[..., i], ax)) for ax in range(d))
        # div Sigma(u) = mu lap u + (mu+xi) grad div u, exact in spectral space
        visc = p.mu * _laplacian(grid, u[..., i]) + (p.mu + p.xi) * grid.dx(divu, i)
        du[..., i] = (
            -adv
            - grid.product(press, grid.dx(rho, i))
            + grid.product(inv_dens, visc)
            + grid.product(inv_dens, div_tau[..., i])
        )

    g1 = g.copy()
    g1[..., 0] += 1.0  # coefficients of 1 + g
    dg = -sum(
        grid.product(u[..., ax, None], grid.dx(g, ax)) for ax in range(d)
    )
    dg -= (p.sigma / p.de) * (g @ basis.L.T)
    dg -= 2.0 * grid.product(divu[..., None], g1)
    for i in range(d):
        for j in range(d):
            kij = kap[..., i, j, None]
            dg -= grid.product(kij, g @ cache["qd"][i][j].T)
            dg += grid.product(kij, g1 @ cache["qa"][i][j].T)
    return Rhs(drho=drho, du=du, dg=dg)


def _laplacian(grid: TorusGrid, f):
    out = None
    for ax in range(grid.dim_x):
        e = [0] * grid.dim_x
        e[ax] = 2
        term = grid.deriv(f, e)
        out = term if out is None else out + term
    return out


@dataclass
class CancellationResult:
    """Discrete check of the stress/stretching pairing at one x-order."""

    order: int
    residual: float
    term_fluid: float
    term_micro: float
    degenerate: bool
    max_abs_m: float


def cancellation_residual(
    state: FlowState, basis: QBasis, grid: TorusGrid, order: int
) -> CancellationResult:
    """Normalized defect of the micro-macro cancellation identity.

    For every x-multi-index alpha of the given total order, the stress
    divergence tested against the velocity derivative must cancel the
    stretching source tested against the microscopic derivative:

        <div d^alpha tau~, d^alpha u> + <d^alpha(kappa q gradU_eff), d^alpha g>_M = 0

    with tau~ the unscaled stress moment.  Returned is the sum of both
    terms over alpha normalized by the sum of their magnitudes; exact zero
    with a degenerate flag when both vanish.
    """
    if not 0 <= order <= 3:
        raise ParameterError("cancellation order must be within 0..3")
    cache = _pair_mats(basis)
    d = grid.dim_x
    kap = velocity_gradient(grid, state.u)
    tau = np.empty(state.rho.shape + (d, d))
    for i in range(d):
        for j in range(d):
            tau[..., i, j] = state.g @ cache["w"][i][j]

    term_fluid = 0.0
    term_micro = 0.0
    from itertools import product as iproduct

    for alpha in iproduct(range(order + 1), repeat=d):
        if sum(alpha) != order:
            continue
        ua = np.stack([grid.deriv(state.u[..., i], alpha) for i in range(d)], axis=-1)
        for i in range(d):
            div_a = sum(
                grid.dx(grid.deriv(tau[..., i, j], alpha), j) for j in range(d)
            )
            term_fluid += grid.l2_inner(div_a, ua[..., i])
            for j in range(d):
                term_micro += grid.l2_inner(
                    grid.deriv(kap[..., i, j], alpha),
                    grid.deriv(tau[..., i, j], alpha),
                )
    mass = abs(term_fluid) + abs(term_micro)
    max_m = float(np.max(np.abs(mean_in_q(state))))
    if mass < 1e-300:
        return CancellationResult(order, 0.0, term_fluid, term_micro, True, max_m)
    return CancellationResult(
        order, (term_fluid + term_micro) / mass, term_fluid, term_micro, False, max_m
    )
