"""Reduced three-body operators on ``L^2([0, r_eps]; x dx)`` (two copies).

Every kernel carries the factor ``g_z(s) g_z(t)``; with the Nystrom weights
it enters as ``G_i = g_z(s_i) sqrt(w_i)``, assembled from ``ln g^2`` and
``ln w`` so that nothing underflows on deep-infrared grids.  The remaining
factors are dimensionless: ``s^2/(s^2+t^2)`` is a logistic function of
``ln s - ln t`` and ``psi0*(s/sqrt3) psi0(2s/sqrt3)/s^2 = c0^2/6 + omega(s)``.

Step kernels ``chi_{s<=t}`` take the value 1/2 on the diagonal.  With that
convention the decomposition

    T+ = S - (2 pi c0^2/3) T + 4 pi E(B3 - B1 - B2),
    E(B) = [[B + B^T, B^T], [B, 0]]

holds entrywise on the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh, svds
from scipy.special import expit

from .counting import count_above, singular_count
from .numerics import (InvalidArgument, LogScalar, RadialGrid, composite_gauss, log_grid,
                       loglog_grid, symmetric_eigen)
from .potential import omega as omega_fn
from .two_body import IR_FLOOR_FACTOR, TwoBodySolution, WeightSpec, log_g2, xi

__all__ = [
    "BlockOperator",
    "SpectrumReport",
    "operator_grid",
    "g_factors",
    "script_t_matrix",
    "script_t_prime_matrix",
    "t_pm_matrix",
    "t_a_matrix",
    "remainder_ops",
    "embed",
    "assemble_comparison",
    "d_norm_check",
    "w_transform_norms",
    "spectrum_report",
    "double_log_abscissa",
    "mode_shape_residuals",
]

SELF_ADJOINT = {"Tplus", "Tminus", "scriptT", "Ta", "S"}


@dataclass
class BlockOperator:
    """Discretized block integral operator and its Nystrom factors."""

    blocks: list
    grid: RadialGrid
    weighting: np.ndarray
    label: str

    @property
    def shape(self):
        n = len(self.grid)
        k = len(self.blocks)
        return (k * n, k * n)

    def full(self) -> np.ndarray:
        n = len(self.grid)
        k = len(self.blocks)
        out = np.zeros((k * n, k * n))
        for i, row in enumerate(self.blocks):
            for j, blk in enumerate(row):
                if blk is not None:
                    out[i * n:(i + 1) * n, j * n:(j + 1) * n] = blk
        return out

    def _chiral(self) -> bool:
        b = self.blocks
        return (len(b) == 2 and b[0][0] is None and b[1][1] is None
                and b[0][1] is not None and b[1][0] is not None
                and np.array_equal(b[1][0], b[0][1].T))

    def eigenvalues(self, method: str = "auto") -> np.ndarray:
        """Eigenvalues in descending order.

        With zero diagonal blocks and transposed off-diagonal blocks the
        spectrum is ``+-`` the singular values of the upper block; ``"auto"``
        uses that route, ``"dense"`` always diagonalizes the full matrix.
        """
        if method == "auto" and self._chiral():
            sv = np.linalg.svd(self.blocks[0][1], compute_uv=False)
            return np.concatenate([sv, -sv[::-1]])
        return symmetric_eigen(self.full())[::-1]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n = len(self.grid)
        out = np.zeros(len(self.blocks) * n)
        for i, row in enumerate(self.blocks):
            for j, blk in enumerate(row):
                if blk is not None:
                    out[i * n:(i + 1) * n] += blk @ x[j * n:(j + 1) * n]
        return out

    def top_eigenvalues(self, k: int, dense_below: int = 1500) -> np.ndarray:
        """The ``k`` largest eigenvalues, descending.

        Large operators go through ARPACK (Lanczos) on the block structure:
        singular values of the upper block for zero-diagonal operators,
        the largest algebraic eigenvalues of the block matvec otherwise.
        """
        size = self.shape[0]
        k = min(k, size)
        if size <= dense_below or k >= size // 4:
            return symmetric_eigen(self.full(), subset_by_index=[size - k, size - 1])[::-1]
        if self._chiral():
            sv = svds(self.blocks[0][1], k=k, return_singular_vectors=False, tol=0)
            return np.sort(sv)[::-1]
        op = LinearOperator((size, size), matvec=self.matvec, dtype=float)
        vals = eigsh(op, k=k, which="LA", return_eigenvectors=False, tol=0)
        return np.sort(vals)[::-1]

    def eigenvalues_above(self, a: float) -> np.ndarray:
        vals = symmetric_eigen(self.full(), subset_by_value=[a, np.inf])
        return np.sort(vals)[::-1]

    def hs_norm(self) -> float:
        return float(np.linalg.norm(self.full()))

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.full(), compute_uv=False)


@dataclass
class SpectrumReport:
    label: str
    z_log: float
    r_eps: float
    eigenvalues: np.ndarray
    negative: np.ndarray
    counting: dict = field(default_factory=dict)
    singular_counting: dict = field(default_factory=dict)
    L: float = 0.0
    fit: Optional[tuple] = None


def double_log_abscissa(log_z: float) -> float:
    """``|ln|ln z^2||`` from ``ln z``."""
    return abs(math.log(abs(2.0 * log_z)))


def spectrum_report(op: BlockOperator, spec: WeightSpec, thresholds=(1.0,)) -> SpectrumReport:
    vals = op.eigenvalues()
    rep = SpectrumReport(op.label, spec.log_z, spec.r_eps, vals[vals > 0], -vals[vals < 0][::-1],
                         L=double_log_abscissa(spec.log_z))
    m = op.full()
    for a in thresholds:
        rep.counting[a] = count_above(vals, a)
        rep.singular_counting[a] = singular_count(m, a)
    return rep


# --------------------------------------------------------------------------
# grids and weight factors
# --------------------------------------------------------------------------

def operator_grid(spec: WeightSpec, n: int, scheme: str = "loglog", order: int = 1,
                  s_min_factor: float = IR_FLOOR_FACTOR) -> RadialGrid:
    """Midpoint grid on ``[s_min_factor * z, r_eps]``.

    ``"loglog"`` is uniform in ``ln(1 + ln r_eps - ln s)``, which spreads
    nodes roughly evenly in ``xi`` however small z is.
    """
    if not 0 < s_min_factor <= 1:
        raise InvalidArgument("s_min_factor must lie in (0, 1]")
    lo = spec.log_z + math.log(s_min_factor)
    if scheme == "log":
        return log_grid(lo, spec.r_eps, n, order)
    if scheme == "loglog":
        return loglog_grid(lo, spec.r_eps, n, order)
    raise InvalidArgument(f"unknown operator grid scheme {scheme!r}")


def g_factors(spec: WeightSpec, grid: RadialGrid) -> np.ndarray:
    """``g_z(s_i) sqrt(w_i)`` computed in the log domain."""
    u = grid.log_nodes
    if np.any(u > math.log(spec.r_eps) + 1e-12):
        raise InvalidArgument("grid extends beyond r_eps")
    return np.exp(0.5 * (log_g2(spec, u) + grid.log_w))


def _step(u, strict: bool, lower: bool):
    """Half-diagonal step matrix: ``chi_{s<=t}`` (lower=False) or ``chi_{s>=t}``."""
    d = u[:, None] - u[None, :]
    m = (d > 0) if lower else (d < 0)
    m = m.astype(float)
    m[np.diag_indices_from(m)] = 0.5
    return m


def script_t_matrix(spec: WeightSpec, grid: RadialGrid) -> BlockOperator:
    """Nystrom matrix of the model operator with kernels
    ``chi_{s<=t} g(s) g(t)`` (upper right) and ``chi_{s>=t} g(s) g(t)``."""
    G = g_factors(spec, grid)
    u = grid.log_nodes
    upper = _step(u, False, lower=False) * np.outer(G, G)
    return BlockOperator([[None, upper], [upper.T.copy(), None]], grid, G, "scriptT")


def script_t_prime_matrix(spec: WeightSpec, grid: RadialGrid) -> BlockOperator:
    """Non-symmetric companion with kernels ``chi_{s<=t} g^2(t)`` and
    ``chi_{s>=t} g^2(t)`` acting on nodal values."""
    u = grid.log_nodes
    g2w = np.exp(log_g2(spec, u) + grid.log_w)
    upper = _step(u, False, lower=False) * g2w[None, :]
    lower = _step(u, False, lower=True) * g2w[None, :]
    return BlockOperator([[None, upper], [lower, None]], grid, np.sqrt(g2w), "scriptTprime")


def _q_values(solution: TwoBodySolution, grid: RadialGrid, zero_omega: bool = False):
    """``c0^2/6 + omega(s_i)``, omega taken as zero where the linear law applies."""
    u = grid.log_nodes
    om = np.zeros(len(u))
    if not zero_omega:
        active = u > math.log(solution.p_switch)
        if np.any(active):
            om[active] = omega_fn(solution, np.exp(u[active]))
    return solution.c0_squared / 6.0 + om, om


def _check_source(solution: TwoBodySolution, spec: WeightSpec):
    if abs(solution.c0_squared - spec.c0_squared) > 1e-12 * solution.c0_squared:
        raise InvalidArgument("weight spec and solution disagree on c0^2")
    if spec.source and spec.source != solution.fingerprint:
        raise InvalidArgument("weight spec was built from a different solution")


def t_pm_matrix(solution: TwoBodySolution, spec: WeightSpec, grid: RadialGrid,
                sign: int = 1, zero_omega: bool = False) -> BlockOperator:
    """Partial-wave channel operator ``T+`` (sign=+1) or ``T-`` (sign=-1)."""
    _check_source(solution, spec)
    G = g_factors(spec, grid)
    u = grid.log_nodes
    q, _ = _q_values(solution, grid, zero_omega)
    e_st = expit(2.0 * (u[:, None] - u[None, :]))  # s^2/(s^2+t^2)
    gg = np.outer(G, G)
    c = -4.0 * math.pi
    t11 = c * (q[:, None] * e_st + q[None, :] * e_st.T) * gg
    t21 = c * q[:, None] * e_st * gg
    t12 = t21.T.copy()
    if sign > 0:
        blocks = [[t11, t12], [t21, None]]
        label = "Tplus"
    else:
        blocks = [[None, t21], [t12, t11]]
        label = "Tminus"
    return BlockOperator(blocks, grid, G, label)


def embed(b: np.ndarray) -> np.ndarray:
    """``[[B + B^T, B^T], [B, 0]]``."""
    n = len(b)
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = b + b.T
    out[:n, n:] = b.T
    out[n:, :n] = b
    return out


def remainder_ops(solution: TwoBodySolution, spec: WeightSpec, grid: RadialGrid,
                  zero_omega: bool = False) -> dict:
    """Remainder kernels B1, B2, B3 (single-copy) and the rank-3 operator S."""
    _check_source(solution, spec)
    G = g_factors(spec, grid)
    u = grid.log_nodes
    q, om = _q_values(solution, grid, zero_omega)
    e_st = expit(2.0 * (u[:, None] - u[None, :]))
    gg = np.outer(G, G)
    lt = _step(u, True, lower=False)      # chi_{s<t}
    ge = 1.0 - lt                          # chi_{s>=t}
    le = lt                                # chi_{s<=t}; equal to chi_{s<t} under the half rule
    b1 = q[:, None] * e_st * lt * gg
    b2 = q[:, None] * ge * (e_st - 1.0) * gg
    b3 = om[:, None] * le * gg

    # S = -4 pi [ (c0^2/6) a a^T + b a^T + a b^T + a f^T + f a^T ]
    n = len(G)
    zero = np.zeros(n)
    a = np.concatenate([G, zero])
    bv = np.concatenate([om * G, zero])
    fv = np.concatenate([zero, om * G])
    factors = np.column_stack([a, bv, fv])
    core = -4.0 * math.pi * np.array([[solution.c0_squared / 6.0, 1.0, 1.0],
                                      [1.0, 0.0, 0.0],
                                      [1.0, 0.0, 0.0]])
    s_full = factors @ core @ factors.T
    s_blocks = [[s_full[:n, :n], s_full[:n, n:]], [s_full[n:, :n], None]]
    return {
        "B1": BlockOperator([[b1]], grid, G, "B1"),
        "B2": BlockOperator([[b2]], grid, G, "B2"),
        "B3": BlockOperator([[b3]], grid, G, "B3"),
        "S": BlockOperator(s_blocks, grid, G, "S"),
        "S_factors": (factors, core),
    }


def t_a_matrix(solution: TwoBodySolution, spec: WeightSpec, grid: RadialGrid,
               zero_omega: bool = False) -> BlockOperator:
    """``T+`` with the remainders B1, B2 removed (upper-triangular reduction)."""
    tp = t_pm_matrix(solution, spec, grid, +1, zero_omega).full()
    rem = remainder_ops(solution, spec, grid, zero_omega)
    b = rem["B1"].full() + rem["B2"].full()
    ta = tp + 4.0 * math.pi * embed(b)
    n = len(grid)
    return BlockOperator([[ta[:n, :n], ta[:n, n:]], [ta[n:, :n], None]], grid,
                         g_factors(spec, grid), "Ta")


def assemble_comparison(solution: TwoBodySolution, spec: WeightSpec, grid: RadialGrid,
                        a: float = 1.0, eps_rel: float = 0.1, k_top: int = 10) -> dict:
    """Compare ``T+`` with ``-(2 pi c0^2/3) T`` through the Weyl inequalities.

    With ``T+ = X + S + R`` (``X`` the scaled model operator, ``R`` the embedded
    remainders) and ``eps = eps_rel * a`` split evenly between S and R:

        n(T+, a) <= n(X, a - eps) + n(S, eps/2) + n_mu(R, eps/2)
        n(X, a + eps) <= n(T+, a) + n(-S, eps/2) + n_mu(R, eps/2)
    """
    _check_source(solution, spec)
    scale = 2.0 * math.pi * solution.c0_squared / 3.0
    tp = t_pm_matrix(solution, spec, grid, +1)
    tm = t_pm_matrix(solution, spec, grid, -1)
    st = script_t_matrix(spec, grid)
    rem = remainder_ops(solution, spec, grid)

    tp_full = tp.full()
    x_full = -scale * st.full()
    s_full = rem["S"].full()
    r_full = 4.0 * math.pi * embed(rem["B3"].full() - rem["B1"].full() - rem["B2"].full())

    ev_tp = symmetric_eigen(tp_full)[::-1]
    ev_tm = symmetric_eigen(tm.full())[::-1]
    ev_x = symmetric_eigen(x_full)[::-1]
    ev_s = symmetric_eigen(s_full)[::-1]
    sv_s = np.linalg.svd(s_full, compute_uv=False)
    s_norm = sv_s[0] if len(sv_s) else 0.0
    rank_s = int(np.sum(sv_s > 1e-10 * s_norm)) if s_norm > 0 else 0

    eps = eps_rel * a
    n_tp = count_above(ev_tp, a)
    n_x = count_above(ev_x, a)
    n_mu_r = singular_count(r_full, eps / 2)
    upper = count_above(ev_x, a - eps) + count_above(ev_s, eps / 2) + n_mu_r
    lower = count_above(ev_x, a + eps) - count_above(-ev_s, eps / 2) - n_mu_r
    identity_residual = float(np.max(np.abs(tp_full - (s_full + x_full + r_full))))

    return {
        "z_log": spec.log_z,
        "r_eps": spec.r_eps,
        "n": len(grid),
        "a": a,
        "eps_rel": eps_rel,
        "scale": scale,
        "eig_Tplus": [float(v) for v in ev_tp[:k_top]],
        "eig_Tminus": [float(v) for v in ev_tm[:k_top]],
        "eig_model": [float(v) for v in ev_x[:k_top]],
        "hs_B1": rem["B1"].hs_norm(),
        "hs_B2": rem["B2"].hs_norm(),
        "hs_B3": rem["B3"].hs_norm(),
        "rank_S": rank_s,
        "singular_S": [float(v) for v in sv_s[:5]],
        "count_Tplus": n_tp,
        "count_model": n_x,
        "n_mu_R": n_mu_r,
        "weyl_upper": upper,
        "weyl_lower": lower,
        "weyl_ok": bool(lower <= n_tp <= upper),
        "discrepancy": abs(n_tp - n_x),
        "discrepancy_bound": rank_s + n_mu_r,
        "identity_residual": identity_residual,
    }


def mode_shape_residuals(spec: WeightSpec, grid: RadialGrid, k: int = 3) -> list:
    """Relative L^2 misfit of the top ``k`` eigenvectors of the model operator
    against ``(cos(x/lam), sin(x/lam))`` in the variable ``x = xi(s)``.

    With ``phi_i = g h_i`` the eigen-equations reduce to ``h1' = -h2/lam``,
    ``h2' = h1/lam`` on ``[0, xi(r_eps)]``; in Nystrom form ``v = G h`` and
    ``dx = G^2`` at the nodes.
    """
    op = script_t_matrix(spec, grid)
    m = op.full()
    n = len(grid)
    vals, vecs = symmetric_eigen(m, vectors=True, subset_by_index=[2 * n - k, 2 * n - 1])
    G = op.weighting
    dx = G**2
    x = xi(spec, LogScalar.from_log(grid.meta["log_s_min"])) + np.cumsum(dx) - 0.5 * dx
    out = []
    for j in range(k - 1, -1, -1):
        lam = vals[j]
        h1 = vecs[:n, j] / G
        h2 = vecs[n:, j] / G
        ref = np.concatenate([np.cos(x / lam), np.sin(x / lam)])
        h = np.concatenate([h1, h2])
        wt = np.concatenate([dx, dx])
        c = np.sum(wt * h * ref) / np.sum(wt * ref * ref)
        out.append(float(math.sqrt(np.sum(wt * (h - c * ref) ** 2) / np.sum(wt * h * h))))
    return out


# --------------------------------------------------------------------------
# the operator D(x, x') = 1/(x^2 + x'^2) on L^2((0,1); x dx)
# --------------------------------------------------------------------------

def d_norm_check(n: int = 512, depth: float = 40.0) -> float:
    """Largest singular value of the Nystrom matrix of ``1/(x^2+x'^2)``.

    Nodes are midpoints in ``t = -ln x`` on ``[0, depth]``, where the
    weighted matrix is ``dt / (2 cosh(t_i - t_j))``.
    """
    if n < 16:
        raise InvalidArgument("d_norm_check needs n >= 16")
    g = log_grid(-depth, 1.0, n, 1)
    u = g.log_nodes
    m = np.exp(0.5 * (g.log_w[:, None] + g.log_w[None, :])
               - np.logaddexp(2 * u[:, None], 2 * u[None, :]))
    return float(np.max(np.abs(symmetric_eigen(m))))


def w_transform_norms(f, depth: float = 60.0, n_panels: int = 600, order: int = 16):
    """``(||f||_{L^2(x dx)}, ||W f||_{L^2(0, inf)})`` with ``[Wf](t) = e^{-t} f(e^{-t})``.

    Both norms by composite Gauss quadrature in their own variable.
    """
    x, wx = composite_gauss(np.linspace(0.0, 1.0, n_panels + 1), order)
    lhs = math.sqrt(np.sum(wx * x * np.abs(f(x)) ** 2))
    t, wt = composite_gauss(np.linspace(0.0, depth, n_panels + 1), order)
    wf = np.exp(-t) * f(np.exp(-t))
    rhs = math.sqrt(np.sum(wt * np.abs(wf) ** 2))
    return lhs, rhs
