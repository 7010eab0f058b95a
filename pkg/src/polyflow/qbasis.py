"""Orthonormal polynomial basis of the Maxwellian-weighted configuration space.

The basis diagonalizes the weighted L2 geometry: with functions orthonormal
against ``M dq``, every weighted inner product becomes a Euclidean dot
product of coefficient vectors.  Recurrence coefficients are computed by the
discretized Stieltjes procedure against the potential's weight, and the
Gauss rule comes from the eigen-decomposition of the resulting Jacobi matrix
(Golub-Welsch).  Separable multi-dimensional potentials are handled by
tensorization with total-degree truncation.

Operator matrices carried by the basis (all dense, size n_b x n_b):

* ``D[i]``  -- differentiation in q_i (exact: polynomials are closed under it),
* ``Q[i]``  -- multiplication by q_i (Galerkin-truncated),
* ``A[i]``  -- multiplication by d/dq_i of the scaled potential,
* ``L``     -- Galerkin matrix of g -> -(1/M) div_q(M grad_q g), assembled as
  ``sum_i D[i]^T D[i]``, which is its exact weak form on the span.

Integration by parts against the weight gives the matrix identity
``D[i]^T = -D[i] + A[i]``; it is asserted by the test-suite and used
throughout the dynamics.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal

from .errors import (
    ConstructionError,
    DegenerateSpectrumError,
    ParameterError,
)
from .potential import Potential

__all__ = [
    "QBasis",
    "build_basis",
    "weighted_inner",
    "apply_L",
    "poincare_constant",
    "spectrum",
    "weighted_poincare_check",
    "stieltjes_recurrence",
    "gauss_rule",
]


def stieltjes_recurrence(x, w, n_terms):
    """Three-term recurrence coefficients of the measure sum_j w_j delta(x_j).

    Returns monic-recurrence arrays ``a[0:n], b[0:n]`` with ``b[0]`` the
    total mass, computed by the discretized Stieltjes iteration.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    a = np.zeros(n_terms)
    b = np.zeros(n_terms)
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    nrm_prev = 1.0
    for k in range(n_terms):
        nrm = float(np.sum(w * p * p))
        if not (nrm > 0 and np.isfinite(nrm)):
            raise ConstructionError(
                f"Stieltjes breakdown at degree {k}: lost positivity of the "
                "discretized measure; lower the degree cutoff or use a "
                "higher-precision quadrature"
            )
        a[k] = float(np.sum(w * x * p * p)) / nrm
        b[k] = nrm if k == 0 else nrm / nrm_prev
        p_next = (x - a[k]) * p - (b[k] if k > 0 else 0.0) * p_prev
        p_prev, p = p, p_next
        nrm_prev = nrm
    return a, b


def gauss_rule(a, b, n):
    """n-point Gauss rule from recurrence coefficients (Golub-Welsch).

    Nodes are the eigenvalues of the symmetric Jacobi matrix built from the
    recurrence; weights come from the first components of its eigenvectors.
    """
    if n > len(a):
        raise ParameterError("not enough recurrence coefficients for the rule")
    nodes, vecs = eigh_tridiagonal(a[:n], np.sqrt(b[1:n]))
    weights = b[0] * vecs[0, :] ** 2
    return nodes, weights


class _Basis1d:
    """Orthonormal 1-D factor basis with its operator matrices."""

    def __init__(self, pot: Potential, nq: int):
        self.nq = nq
        n_terms = nq + 2
        xf, wf = pot.rule_1d(max(4 * n_terms, 60))
        self.a, self.b = stieltjes_recurrence(xf, wf, n_terms)
        self.nodes, self.weights = gauss_rule(self.a, self.b, nq + 2)

        v = self.eval_all(self.nodes)
        dv = self.eval_deriv(self.nodes)
        self.dmat = v.T @ (self.weights[:, None] * dv)
        self.qmat = (
            np.diag(self.a[: nq + 1])
            + np.diag(np.sqrt(self.b[1 : nq + 1]), 1)
            + np.diag(np.sqrt(self.b[1 : nq + 1]), -1)
        )
        xa, va = pot.force_rule_1d(nq + 2)
        fa = self.eval_all(xa)
        self.amat = fa.T @ (va[:, None] * fa)

        gram = v.T @ (self.weights[:, None] * v)
        dev = float(np.max(np.abs(gram - np.eye(nq + 1))))
        if dev > 1e-10:
            raise ConstructionError(
                f"orthogonality loss {dev:.2e} at degree {nq}; lower the "
                "degree cutoff or use a higher-precision quadrature"
            )

    def eval_all(self, x):
        """Values phi_0..phi_nq at points x, shape (len(x), nq+1)."""
        x = np.asarray(x, dtype=float)
        out = np.empty((x.size, self.nq + 1))
        p_prev = np.zeros_like(x)
        p = np.full_like(x, 1.0 / math.sqrt(self.b[0]))
        out[:, 0] = p
        for k in range(self.nq):
            p_next = ((x - self.a[k]) * p - math.sqrt(self.b[k]) * p_prev) / math.sqrt(
                self.b[k + 1]
            )
            p_prev, p = p, p_next
            out[:, k + 1] = p
        return out

    def eval_deriv(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros((x.size, self.nq + 1))
        p_prev = np.zeros_like(x)
        p = np.full_like(x, 1.0 / math.sqrt(self.b[0]))
        d_prev = np.zeros_like(x)
        d = np.zeros_like(x)
        for k in range(self.nq):
            rb = math.sqrt(self.b[k + 1])
            p_next = ((x - self.a[k]) * p - math.sqrt(self.b[k]) * p_prev) / rb
            d_next = (p + (x - self.a[k]) * d - math.sqrt(self.b[k]) * d_prev) / rb
            p_prev, p = p, p_next
            d_prev, d = d, d_next
            out[:, k + 1] = d
        return out


@dataclass
class QBasis:
    """Immutable spectral basis of L2(M dq) with operator matrices."""

    potential: Potential
    nq: int
    dim_q: int
    indices: np.ndarray          # (n_b, dim_q) multi-indices, total degree <= nq
    D: list                      # differentiation matrices, one per dimension
    Q: list                      # coordinate multiplication matrices
    A: list                      # scaled-force multiplication matrices
    L: np.ndarray                # Galerkin configuration-space diffusion
    W: np.ndarray                # <q>-weight Gram: I + sum_i Q_i^2
    quad_x: np.ndarray           # tensor Gauss nodes, (n_nodes, dim_q)
    quad_w: np.ndarray           # tensor Gauss weights (sum = 1)
    V: np.ndarray                # basis values at quad nodes, (n_nodes, n_b)
    Vd: list                     # basis q-derivatives at quad nodes
    _dbeta: dict = field(default_factory=dict, repr=False)

    @property
    def n_b(self) -> int:
        return self.indices.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.indices.sum(axis=1)

    def index_of(self, multi) -> int:
        hits = np.nonzero((self.indices == np.asarray(multi)).all(axis=1))[0]
        if hits.size == 0:
            raise ParameterError(f"multi-index {multi} not in the basis")
        return int(hits[0])

    def deriv_matrix(self, beta) -> np.ndarray:
        """Matrix of the mixed q-derivative with multi-index beta (cached)."""
        beta = tuple(int(b) for b in beta)
        if len(beta) != self.dim_q:
            raise ParameterError("beta must have one entry per q-dimension")
        if beta not in self._dbeta:
            m = np.eye(self.n_b)
            for i, bi in enumerate(beta):
                for _ in range(bi):
                    m = self.D[i] @ m
            self._dbeta[beta] = m
        return self._dbeta[beta]

    def project(self, fn) -> np.ndarray:
        """Coefficients of a pointwise function via the tensor Gauss rule."""
        vals = fn(self.quad_x)
        return self.V.T @ (self.quad_w * vals)

    def reconstruct(self, coeffs) -> np.ndarray:
        """Values at the tensor Gauss nodes (coeffs may be batched ...xn_b)."""
        return np.asarray(coeffs) @ self.V.T


def build_basis(p: Potential, nq: int) -> QBasis:
    """Construct the orthonormal basis and all operator matrices.

    Requires ``nq >= 2`` and a separable potential (or one q-dimension).
    The tensor quadrature uses nq+2 nodes per dimension, exact for
    polynomials of per-dimension degree up to 2 nq + 3.
    """
    if nq < 2:
        raise ParameterError("build_basis: need nq >= 2")
    if not (p.separable or p.dim_q == 1):
        raise ParameterError("build_basis: potential must be separable or 1-D")

    b1 = _Basis1d(p, nq)
    dim = p.dim_q

    indices = [
        idx
        for idx in itertools.product(range(nq + 1), repeat=dim)
        if sum(idx) <= nq
    ]
    indices.sort(key=lambda t: (sum(t), t))
    indices = np.asarray(indices, dtype=int)
    n_b = indices.shape[0]
    pos = {tuple(idx): k for k, idx in enumerate(indices)}

    def lift(mat1d, axis):
        out = np.zeros((n_b, n_b))
        for col, idx in enumerate(indices):
            for m in range(nq + 1):
                entry = mat1d[m, idx[axis]]
                if entry == 0.0:
                    continue
                key = list(idx)
                key[axis] = m
                row = pos.get(tuple(key))
                if row is not None:
                    out[row, col] = entry
        return out

    D = [lift(b1.dmat, i) for i in range(dim)]
    Q = [lift(b1.qmat, i) for i in range(dim)]
    A = [lift(b1.amat, i) for i in range(dim)]
    L = sum(d.T @ d for d in D)
    W = np.eye(n_b) + sum(q @ q for q in Q)

    # Tensor quadrature and basis values.
    nodes1, w1 = b1.nodes, b1.weights
    v1 = b1.eval_all(nodes1)
    dv1 = b1.eval_deriv(nodes1)
    grids = np.meshgrid(*([nodes1] * dim), indexing="ij")
    quad_x = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([w1] * dim), indexing="ij")
    quad_w = np.prod(np.stack([g.ravel() for g in wgrids], axis=0), axis=0)
    n_nodes = quad_x.shape[0]
    node_idx = np.stack(
        [g.ravel() for g in np.meshgrid(*([np.arange(len(nodes1))] * dim), indexing="ij")],
        axis=-1,
    )
    V = np.ones((n_nodes, n_b))
    for axis in range(dim):
        V *= v1[node_idx[:, axis]][:, indices[:, axis]]
    Vd = []
    for i in range(dim):
        vdi = np.ones((n_nodes, n_b))
        for axis in range(dim):
            tab = dv1 if axis == i else v1
            vdi *= tab[node_idx[:, axis]][:, indices[:, axis]]
        Vd.append(vdi)

    basis = QBasis(
        potential=p,
        nq=nq,
        dim_q=dim,
        indices=indices,
        D=D,
        Q=Q,
        A=A,
        L=L,
        W=W,
        quad_x=quad_x,
        quad_w=quad_w,
        V=V,
        Vd=Vd,
    )
    gram = V.T @ (quad_w[:, None] * V)
    dev = float(np.max(np.abs(gram - np.eye(n_b))))
    if dev > 1e-10:
        raise ConstructionError(
            f"tensor basis orthogonality loss {dev:.2e}; lower the degree "
            "cutoff or use a higher-precision quadrature"
        )
    return basis


def weighted_inner(b: QBasis, f, g) -> float:
    """Weighted L2(M dq) inner product of two coefficient vectors."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (b.n_b,) or g.shape != (b.n_b,):
        raise ParameterError("coefficient vectors do not match the basis size")
    return float(f @ g)


def apply_L(b: QBasis, g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != b.n_b:
        raise ParameterError("coefficient vector does not match the basis size")
    return g @ b.L.T


def _sorted_eigs(b: QBasis):
    return eigh(b.L, eigvals_only=True)


def spectrum(b: QBasis, count: int = 10) -> np.ndarray:
    """Lowest eigenvalues of the Galerkin configuration-space operator."""
    return _sorted_eigs(b)[: min(count, b.n_b)]


def poincare_constant(b: QBasis) -> float:
    """1 / spectral gap of L on the mean-zero complement of the constant."""
    eigs = _sorted_eigs(b)
    gap = float(eigs[1])
    if gap < 1e-12:
        raise DegenerateSpectrumError(
            f"spectral gap {gap:.3e} is numerically degenerate"
        )
    return 1.0 / gap


@dataclass
class PoincareCheck:
    """Empirical constants for the weighted compactness inequalities."""

    trials: int
    skipped: int
    max_ratios: dict
    rows: list

    def to_text(self) -> str:
        lines = [f"weighted inequality check, {self.trials} random mean-zero draws"]
        if self.skipped:
            lines.append(f"  skipped {self.skipped} zero draws (0/0 ratios)")
        for k, v in self.max_ratios.items():
            lines.append(f"  max {k}: {v:.6g}")
        return "\n".join(lines)


def weighted_poincare_check(b: QBasis, trials: int, rng=None) -> PoincareCheck:
    """Measure the constants in the mean-zero weighted inequalities.

    For random mean-zero coefficient vectors g the four ratios

        |force g| / |grad g|,    |q g| / |grad g|,
        |q.force g| / |<q> grad g|,    ||q|^2 g| / |<q> grad g|

    are recorded; the maxima are the empirical discrete constants.  Zero
    draws are skipped (0/0).  Report-only: never raises.
    """
    if not hasattr(rng, "standard_normal"):
        rng = np.random.default_rng(rng)
    s_mat = sum(q @ a for q, a in zip(b.Q, b.A))
    q2_mat = sum(q @ q for q in b.Q)
    keys = ("force_vs_grad", "ext_vs_grad", "qforce_vs_wgrad", "ext2_vs_wgrad")
    maxima = dict.fromkeys(keys, 0.0)
    rows = []
    skipped = 0
    for _ in range(trials):
        g = rng.standard_normal(b.n_b)
        g[0] = 0.0
        if not np.any(g):
            skipped += 1
            continue
        grad = math.sqrt(sum(float(np.sum((d @ g) ** 2)) for d in b.D))
        wgrad = math.sqrt(
            sum(
                float(np.sum((d @ g) ** 2))
                + sum(float(np.sum((q @ (d @ g)) ** 2)) for q in b.Q)
                for d in b.D
            )
        )
        if grad == 0.0 or wgrad == 0.0:
            skipped += 1
            continue
        vals = {
            "force_vs_grad": math.sqrt(sum(float(np.sum((a @ g) ** 2)) for a in b.A)) / grad,
            "ext_vs_grad": math.sqrt(sum(float(np.sum((q @ g) ** 2)) for q in b.Q)) / grad,
            "qforce_vs_wgrad": float(np.linalg.norm(s_mat @ g)) / wgrad,
            "ext2_vs_wgrad": float(np.linalg.norm(q2_mat @ g)) / wgrad,
        }
        rows.append(vals)
        for k in keys:
            maxima[k] = max(maxima[k], vals[k])
    return PoincareCheck(trials=trials, skipped=skipped, max_ratios=maxima, rows=rows)
