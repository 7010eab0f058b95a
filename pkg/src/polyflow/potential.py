"""Elastic spring potentials and their equilibrium configuration density.

A :class:`Potential` bundles the physical spring energy ``U(q)`` with the
normalized equilibrium weight (Maxwellian) of the configuration-space drift
``-(1/r) grad U`` under diffusion ``sigma``, i.e.

    M(q) = exp(-U(q)/(sigma*r)) / Z,       Z = integral exp(-U/(sigma*r)) dq.

All weighted-space machinery downstream (orthonormal bases, operator
matrices) is built against this measure, so the scaled potential
``U_eff = U/(sigma*r)`` is the one whose gradient enters integration by
parts.  At the default ``sigma = r = 1`` the two coincide.

The module also ships a numeric validator for the structural inequalities
the stability theory needs from ``U`` (sub-quadratic Laplacian, finite force
and extension moments, bounded derivatives of the stretching weight).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import roots_jacobi

from .errors import ParameterError

__all__ = [
    "Support",
    "Potential",
    "SampleSpec",
    "CheckResult",
    "AssumptionReport",
    "make_hookean",
    "make_fene",
    "validate_assumptions",
]


@dataclass(frozen=True)
class Support:
    """Configuration-space support: all of R^d or a centred ball."""

    kind: str  # "all-space" | "ball"
    radius: float = math.inf

    def __post_init__(self):
        if self.kind not in ("all-space", "ball"):
            raise ParameterError(f"unknown support kind {self.kind!r}")
        if self.kind == "ball" and not self.radius > 0:
            raise ParameterError("ball support needs a positive radius")


@dataclass
class Potential:
    """Spring potential with evaluators and its normalized Maxwellian.

    Evaluators accept points of shape ``(..., dim_q)`` and return arrays of
    shape ``(...)`` (``grad`` returns ``(..., dim_q)``).  They are pure and
    hold no mutable state, so they are safe to call concurrently.
    """

    name: str
    dim_q: int
    support: Support
    sigma: float
    r: float
    separable: bool
    u: Callable[[np.ndarray], np.ndarray]
    grad_u: Callable[[np.ndarray], np.ndarray]
    lap_u: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)

    # Cached normalization (per 1-D factor and full dimension).
    _z1: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.dim_q not in (1, 2, 3):
            raise ParameterError("dim_q must be 1, 2 or 3")
        if not (self.sigma > 0 and self.r > 0):
            raise ParameterError("sigma and r must be positive")
        x, w = self._raw_rule_1d(200)
        self._z1 = float(np.sum(w))
        if not np.isfinite(self._z1) or self._z1 <= 0:
            raise ParameterError("exp(-U/(sigma*r)) is not integrable")

    # -- scaled potential -------------------------------------------------

    @property
    def scale(self) -> float:
        """sigma*r, the factor between U and the Maxwellian exponent."""
        return self.sigma * self.r

    def u_eff(self, q):
        return self.u(q) / self.scale

    def grad_u_eff(self, q):
        return self.grad_u(q) / self.scale

    def lap_u_eff(self, q):
        return self.lap_u(q) / self.scale

    @property
    def log_norm(self) -> float:
        """log of the full-dimensional normalization Z."""
        return self.dim_q * math.log(self._z1)

    def maxwellian(self, q):
        return np.exp(-self.u_eff(q) - self.log_norm)

    # -- quadrature factories ---------------------------------------------

    def _raw_rule_1d(self, n):
        """Nodes/weights with sum(w) = integral of the 1-D factor weight."""
        raise NotImplementedError  # set per family below

    def rule_1d(self, n):
        """Gauss rule for the normalized 1-D Maxwellian factor (sum w = 1)."""
        x, w = self._raw_rule_1d(n)
        return x, w / self._z1

    def force_rule_1d(self, n):
        """Signed rule integrating h against (d/dq U_eff) * m1(q).

        Exact for polynomial h up to degree 2n-1 for the Hookean family and
        2n-2 for the ball-supported family.
        """
        raise NotImplementedError

    def truncation_radius(self, tiny=1e-14):
        """|q| range covering the support up to factor-weight mass `tiny`."""
        if self.support.kind == "ball":
            return self.support.radius
        # Gaussian factor: solve m1(R) = tiny for the Hookean family.
        s2 = self.scale
        val = -2.0 * s2 * math.log(tiny * math.sqrt(2 * math.pi * s2))
        return math.sqrt(max(val, 1.0))


class _Hookean(Potential):
    def _raw_rule_1d(self, n):
        x, w = hermegauss(n)
        s = math.sqrt(self.scale)
        # weight e^{-y^2/2} dy with q = s y: measure e^{-q^2/(2 s^2)} dq
        return s * x, s * w

    def force_rule_1d(self, n):
        x, w = self.rule_1d(n)
        return x, w * x / self.scale


class _Fene(Potential):
    def _raw_rule_1d(self, n):
        b0 = self.support.radius
        k_eff = self.params["k"] / self.scale
        x, w = roots_jacobi(n, k_eff, k_eff)
        # weight (1-x^2)^k_eff on [-1,1]; q = b0 x
        return b0 * x, b0 * w

    def force_rule_1d(self, n):
        b0 = self.support.radius
        k_eff = self.params["k"] / self.scale
        x, w = roots_jacobi(n, k_eff - 1.0, k_eff - 1.0)
        q = b0 * x
        v = (2.0 * k_eff / (b0 * self._z1)) * w * x
        return q, v


def make_hookean(sigma: float, r: float, dim_q: int) -> Potential:
    """Quadratic spring U(q) = |q|^2 / 2 on all of R^dim_q.

    The Maxwellian is the Gaussian with per-component variance sigma*r,
    the stationary density of the linear drift -(1/r) q under diffusion
    sigma.
    """
    if not (sigma > 0 and r > 0):
        raise ParameterError("make_hookean: sigma and r must be positive")
    if dim_q not in (1, 2, 3):
        raise ParameterError("make_hookean: dim_q must be 1, 2 or 3")

    def u(q):
        q = np.asarray(q, dtype=float)
        return 0.5 * np.sum(q * q, axis=-1)

    def grad_u(q):
        return np.asarray(q, dtype=float).copy()

    def lap_u(q):
        q = np.asarray(q, dtype=float)
        return np.full(q.shape[:-1], float(dim_q))

    return _Hookean(
        name="hookean",
        dim_q=dim_q,
        support=Support("all-space"),
        sigma=sigma,
        r=r,
        separable=True,
        u=u,
        grad_u=grad_u,
        lap_u=lap_u,
    )


def make_fene(
    k: float,
    b0: float,
    sigma: float = 1.0,
    r: float = 1.0,
    check_stiffness: bool = True,
) -> Potential:
    """Finitely extensible spring U(q) = -k log(1 - q^2/b0^2) on (-b0, b0).

    One-dimensional Cartesian mode only.  Requires k > sigma*r: the
    equilibrium weight vanishes like (1 - q^2/b0^2)^(k/(sigma*r)) at the
    boundary, and the squared spring force is integrable against it only
    when that exponent exceeds one.  ``check_stiffness=False`` skips the
    guard so that :func:`validate_assumptions` can demonstrate the failure
    on under-stiff springs; such potentials must not be simulated.
    """
    if not b0 > 0:
        raise ParameterError("make_fene: b0 must be positive")
    if check_stiffness and not k > sigma * r:
        raise ParameterError(
            "make_fene: need k > sigma*r so that the squared spring force "
            "has a finite Maxwellian moment; "
            f"got k={k}, sigma*r={sigma * r}"
        )
    if not k > 0:
        raise ParameterError("make_fene: k must be positive")

    b2 = b0 * b0

    def u(q):
        q = np.asarray(q, dtype=float)
        q2 = np.sum(q * q, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return -k * np.log(1.0 - q2 / b2)

    def grad_u(q):
        q = np.asarray(q, dtype=float)
        q2 = np.sum(q * q, axis=-1)
        return 2.0 * k * q / (b2 - q2)[..., None]

    def lap_u(q):
        q = np.asarray(q, dtype=float)
        q2 = np.sum(q * q, axis=-1)
        return 2.0 * k * (b2 + q2) / (b2 - q2) ** 2

    return _Fene(
        name="fene",
        dim_q=1,
        support=Support("ball", b0),
        sigma=sigma,
        r=r,
        separable=True,
        u=u,
        grad_u=grad_u,
        lap_u=lap_u,
        params={"k": k, "b0": b0},
    )


# ---------------------------------------------------------------------------
# Structural-assumption validator
# ---------------------------------------------------------------------------


@dataclass
class SampleSpec:
    """Where the pointwise inequalities are sampled.

    All-space supports are truncated at the radius where the 1-D Maxwellian
    factor drops below `mass_tiny`; ball supports are sampled up to a
    geometric sequence of boundary offsets down to `boundary_offset`.
    """

    n_points: int = 2001
    mass_tiny: float = 1e-14
    boundary_offset: float = 1e-6
    n_grid_fd: int = 4001
    quad_nodes: tuple = (40, 80, 160, 320)
    delta_grid: tuple = tuple(np.round(np.arange(0.0, 1.0, 0.025), 3))

    def describe(self, p: Potential) -> str:
        if p.support.kind == "ball":
            return (
                f"{self.n_points} interior points plus geometric boundary "
                f"approach down to offset {self.boundary_offset:g} of the "
                f"ball radius {p.support.radius:g}"
            )
        return (
            f"{self.n_points} points per ray on |q| <= "
            f"{p.truncation_radius(self.mass_tiny):.4g} "
            f"(1-D Maxwellian factor < {self.mass_tiny:g} beyond)"
        )


@dataclass
class CheckResult:
    name: str
    passed: bool
    constants: dict
    witness: tuple | None = None
    detail: str = ""


@dataclass
class AssumptionReport:
    potential: str
    passed: bool
    checks: list
    sample_grid: str
    fd_step: float

    def to_text(self) -> str:
        lines = [
            f"potential assumption report: {self.potential}",
            f"samples: {self.sample_grid}",
            f"finite-difference step: {self.fd_step:.3e}",
            "-" * 72,
        ]
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            consts = ", ".join(f"{k}={v:.6g}" for k, v in c.constants.items())
            lines.append(f"{status:4s}  {c.name:34s} {consts}")
            if c.witness is not None:
                pt = ", ".join(f"{x:.4g}" for x in c.witness)
                lines.append(f"      at q = ({pt})")
            if c.detail:
                lines.append(f"      {c.detail}")
        lines.append("-" * 72)
        lines.append(f"overall: {'pass' if self.passed else 'FAIL'}")
        return "\n".join(lines)

    def to_kv(self) -> str:
        rows = [f"potential = {self.potential}", f"passed = {int(self.passed)}"]
        for c in self.checks:
            key = c.name.replace(" ", "_")
            rows.append(f"{key}.passed = {int(c.passed)}")
            for k, v in c.constants.items():
                rows.append(f"{key}.{k} = {v:.12g}")
        return "\n".join(rows) + "\n"


def _sample_points(p: Potential, spec: SampleSpec, refine: int = 1):
    """Return sample points of shape (n, dim_q) covering the support."""
    n = spec.n_points * refine
    if p.support.kind == "ball":
        b0 = p.support.radius
        offs = spec.boundary_offset / refine
        base = np.linspace(-b0 * (1 - 1e-3), b0 * (1 - 1e-3), n)
        decades = np.geomspace(1e-3, offs, 12 + 4 * refine)
        edge = b0 * (1.0 - decades)
        pts = np.concatenate([base, edge, -edge])
        return pts[:, None]
    radius = p.truncation_radius(spec.mass_tiny)
    radii = np.linspace(-radius, radius, n)
    if p.dim_q == 1:
        return radii[:, None]
    dirs = [np.eye(p.dim_q)[i] for i in range(p.dim_q)]
    dirs.append(np.ones(p.dim_q) / math.sqrt(p.dim_q))
    if p.dim_q == 3:
        dirs.append(np.array([1.0, 1.0, 0.0]) / math.sqrt(2))
    return np.concatenate([radii[:, None] * d[None, :] for d in dirs])


def _tensor_moment(p: Potential, fn, n: int) -> float:
    """Integral of fn(q) against the full-dimensional Maxwellian.

    Ball supports integrate the explicit product fn*M with a plain Gauss-
    Legendre rule so that boundary-singular integrands show up as honest
    non-convergence under node doubling rather than as slow weighted-rule
    drift.  All-space supports use the Maxwellian-weighted Gauss rule.
    """
    if p.support.kind == "ball":
        b0 = p.support.radius
        x, w = np.polynomial.legendre.leggauss(n)
        pts = (b0 * x)[:, None]
        return float(np.sum(b0 * w * fn(pts) * p.maxwellian(pts)))
    x, w = p.rule_1d(n)
    if p.dim_q == 1:
        pts = x[:, None]
        wt = w
    else:
        grids = np.meshgrid(*([x] * p.dim_q), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        wts = np.meshgrid(*([w] * p.dim_q), indexing="ij")
        wt = np.prod(np.stack([g.ravel() for g in wts], axis=0), axis=0)
    return float(np.sum(wt * fn(pts)))


def _converged_moment(p, fn, spec):
    """Moment with a node-doubling convergence check.

    Returns (value, converged, history).  Non-convergence is a diagnostic
    failure of the corresponding assumption, not an exception.
    """
    vals = [_tensor_moment(p, fn, n) for n in spec.quad_nodes]
    rel = abs(vals[-1] - vals[-2]) / max(abs(vals[-1]), 1.0)
    return vals[-1], bool(rel < 1e-6 and np.isfinite(vals[-1])), vals


def _axis_factor(p: Potential):
    """Derivative of the 1-D factor (or of the full 1-D potential)."""

    def du(q1):
        pts = np.zeros(q1.shape + (p.dim_q,))
        pts[..., 0] = q1
        return p.grad_u_eff(pts)[..., 0]

    return du


def validate_assumptions(p: Potential, spec: SampleSpec | None = None) -> AssumptionReport:
    """Check the structural inequalities the energy estimates rely on.

    Pointwise bounds are sampled on the grid described by `spec`; moment
    bounds use Gauss quadrature with node-count doubling, and failure to
    converge marks the check failed.  Derivative bounds (orders 1..3 of the
    stretching weight) are evaluated on the 1-D factor of the potential by
    nested central differencing.
    """
    spec = spec or SampleSpec()
    pts = _sample_points(p, spec)
    checks = []

    grad = p.grad_u_eff(pts)
    gnorm = np.linalg.norm(grad, axis=-1)
    qnorm = np.linalg.norm(pts, axis=-1)
    lap = p.lap_u_eff(pts)

    # |q| <= c (1 + |grad U|): record the witnessing constant.
    ratio = qnorm / (1.0 + gnorm)
    i = int(np.argmax(ratio))
    checks.append(
        CheckResult(
            "extension vs force bound",
            bool(np.isfinite(ratio[i])),
            {"c": float(ratio[i])},
            tuple(pts[i]),
        )
    )

    # lap U <= C + delta |grad U|^2 with delta < 1, best pair on a grid.
    deltas = np.asarray(spec.delta_grid)
    cs = np.array([np.max(lap - d * gnorm**2) for d in deltas])
    c_min = float(np.min(cs))
    admissible = cs <= max(2.0 * c_min, c_min + 1.0)
    j = int(np.argmax(admissible))  # smallest admissible delta
    delta_star, c_star = float(deltas[j]), float(cs[j])
    # Stability under sample refinement toward the boundary / far field.
    pts2 = _sample_points(p, spec, refine=2)
    g2 = np.linalg.norm(p.grad_u_eff(pts2), axis=-1)
    c2 = float(np.max(p.lap_u_eff(pts2) - delta_star * g2**2))
    stable = abs(c2 - c_star) <= 0.1 * max(1.0, abs(c_star))
    iw = int(np.argmax(lap - delta_star * gnorm**2))
    checks.append(
        CheckResult(
            "laplacian growth bound",
            bool(delta_star < 1.0 and stable and np.isfinite(c_star)),
            {"C": max(c_star, c2), "delta": delta_star},
            tuple(pts[iw]),
            detail="" if stable else "constant not stable under sample refinement",
        )
    )

    # Moment bounds: integral |grad U|^2 M and integral |q|^4 M.
    val_f, ok_f, hist_f = _converged_moment(
        p, lambda q: np.sum(p.grad_u_eff(q) ** 2, axis=-1), spec
    )
    checks.append(
        CheckResult(
            "force moment",
            ok_f,
            {"integral_grad_sq": val_f},
            detail="" if ok_f else f"no convergence under node doubling: {hist_f}",
        )
    )
    val_q, ok_q, hist_q = _converged_moment(
        p, lambda q: np.sum(q * q, axis=-1) ** 2, spec
    )
    checks.append(
        CheckResult(
            "extension moment",
            ok_q,
            {"integral_q4": val_q},
            detail="" if ok_q else f"no convergence under node doubling: {hist_q}",
        )
    )

    # Derivative bounds of the stretching weight, 1-D factor, orders 1..3.
    du = _axis_factor(p)
    if p.support.kind == "ball":
        b0 = p.support.radius
        lo, hi = -b0 * (1 - 1e-4), b0 * (1 - 1e-4)
    else:
        radius = p.truncation_radius(spec.mass_tiny)
        lo, hi = -radius, radius
    ok_all = True
    consts = {}
    for level, ng in ((1, spec.n_grid_fd), (2, 2 * spec.n_grid_fd)):
        q1 = np.linspace(lo, hi, ng)
        h = q1[1] - q1[0]
        d1 = du(q1)
        m1 = np.exp(-_u1(p, q1) - math.log(p._z1))
        s_fun = q1 * d1                      # q * dU_eff/dq
        t_fun = s_fun * np.sqrt(m1)          # stretching weight x sqrt(M)
        w_fun = _lap1(p, q1) - 0.5 * d1**2   # Laplacian minus half squared force
        bound1 = 1.0 + np.abs(q1) * np.abs(d1)
        bound2 = 1.0 + d1**2
        dk_s, dk_t, dk_w = s_fun, t_fun, w_fun
        margin = 0
        for k in (1, 2, 3):
            # One-sided stencils pollute the ends; trim before differencing
            # again and evaluate everything on the shrinking interior.
            dk_s = np.gradient(dk_s, h)
            dk_t = np.gradient(dk_t, h)
            dk_w = np.gradient(dk_w, h)
            margin += 4
            sl = slice(margin, -margin)
            consts[f"c_stretch_d{k}"] = float(np.max(np.abs(dk_s[sl]) / bound1[sl]))
            consts[f"int_weight_d{k}"] = float(np.trapezoid(dk_t[sl] ** 2, q1[sl]))
            consts[f"c_combo_d{k}"] = float(np.max(np.abs(dk_w[sl]) / bound2[sl]))
        if level == 1:
            ref = {k: v for k, v in consts.items() if k.startswith("int_")}
        else:
            for k, v in ref.items():
                # Floor absorbs pure finite-difference noise on exact zeros.
                drift = abs(consts[k] - v) / max(abs(v), 1e-3)
                if drift > 5e-2 or not np.isfinite(consts[k]):
                    ok_all = False
    ok_all = ok_all and all(np.isfinite(v) for v in consts.values())
    checks.append(
        CheckResult(
            "stretching weight derivatives",
            bool(ok_all),
            consts,
            detail=(
                "nested central differences with edge trimming, orders 1..3, "
                f"step {h:.3e}; ratio constants are witnesses on the declared "
                "grid, the pass criterion is convergence of the squared-"
                "derivative integrals"
            ),
        )
    )

    return AssumptionReport(
        potential=p.name,
        passed=all(c.passed for c in checks),
        checks=checks,
        sample_grid=spec.describe(p),
        fd_step=float(h),
    )


def _u1(p: Potential, q1):
    """1-D factor of the scaled potential along the first axis.

    Both built-in families have factors vanishing at the origin, so the
    axis restriction equals the factor itself.
    """
    pts = np.zeros(q1.shape + (p.dim_q,))
    pts[..., 0] = q1
    return p.u_eff(pts)


def _lap1(p: Potential, q1):
    """Second derivative of the 1-D factor via the full Laplacian."""
    pts = np.zeros(q1.shape + (p.dim_q,))
    pts[..., 0] = q1
    if p.dim_q == 1:
        return p.lap_u_eff(pts)
    # separable: axis contribution = full Laplacian minus the flat factors
    origin = np.zeros_like(pts)
    return p.lap_u_eff(pts) - (p.dim_q - 1) / p.dim_q * p.lap_u_eff(origin)
