"""Radial Birman-Schwinger operators of the pair, p-wave resonance tuning,
the top eigenvalue mu(z), and the infrared weight g_z with its integral xi.

Discretization
--------------
The l-th angular component of ``(2 pi)^-1 K_0(z|x-y|)`` is
``I_l(z r_<) K_l(z r_>)`` on ``L^2(r dr)``.  Rows are integrated with a
Nystrom rule plus a diagonal correction: the exact row integral of the
kernel against ``|v|`` (split at the kink ``r' = r_i``) replaces the Nystrom
row sum.  The correction is diagonal, so the matrix stays symmetric, and the
error drops from O(h^2) to roughly O(h^3).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .numerics import (InvalidArgument, LogScalar, RadialGrid, as_log, bessel_i_k_product,
                       composite_gauss, symmetric_eigen, uniform_grid)
from .potential import PotentialModel, evaluate

__all__ = [
    "NoResonance",
    "DegenerateWeight",
    "TwoBodySolution",
    "WeightSpec",
    "MuModel",
    "two_body_grid",
    "bs_radial_matrix",
    "tune_resonance",
    "mu_of_z",
    "one_minus_mu",
    "fit_mu_slope",
    "build_mu_table",
    "make_weight_spec",
    "weight_g",
    "log_g2",
    "xi",
    "envelope_constants",
    "save_solution",
    "load_solution",
]

ASYMPTOTIC_SWITCH = 1e-6
IR_FLOOR_FACTOR = 1e-3
MAX_ABS_LOG_Z = 1e12


class NoResonance(RuntimeError):
    pass


class DegenerateWeight(RuntimeError):
    pass


def two_body_grid(potential: PotentialModel, n: int = 800, order: int = 8,
                  extent: float = 40.0) -> RadialGrid:
    """Composite Gauss grid on ``[0, extent/alpha2]``."""
    return uniform_grid(0.0, extent / potential.alpha2, n, order)


# --------------------------------------------------------------------------
# BS matrices
# --------------------------------------------------------------------------

def _kernel(l, z, r, rp):
    return bessel_i_k_product(l, z, np.minimum(r, rp), np.maximum(r, rp))


# reference rule for row integrals on [0, 1]; mapped onto [0, r_i] and [r_i, R]
_ROW_X, _ROW_W = composite_gauss(np.linspace(0.0, 1.0, 21), 16)


def _row_integrals(potential, l, z, r, r_max):
    """Exact-to-quadrature ``int_0^R K_l(r_i, r') |v(r')| r' dr'`` for every node."""
    out = np.zeros(len(r))
    for lo, hi in ((np.zeros_like(r), r), (r, np.full_like(r, r_max))):
        span = (hi - lo)[:, None]
        x = lo[:, None] + span * _ROW_X[None, :]
        w = span * _ROW_W[None, :]
        x = np.maximum(x, 1e-300)
        vals = _kernel(l, z, r[:, None], x) * np.abs(evaluate(potential, x)) * x
        out += np.sum(vals * w, axis=1)
    return out


def bs_radial_matrix(potential: PotentialModel, l: int, z, grid: RadialGrid,
                     corrected: bool = True) -> np.ndarray:
    """Symmetric Nystrom matrix of the l-th radial BS operator at energy ``-z^2``."""
    if l == 0:
        raise InvalidArgument("l = 0 is excluded on the antisymmetric space")
    if l < 0:
        raise InvalidArgument("l must be positive")
    r = grid.nodes
    w = grid.weights
    sv = np.sqrt(np.abs(evaluate(potential, r)))
    K = _kernel(l, z, r[:, None], r[None, :])
    a = np.sqrt(w) * sv
    M = a[:, None] * K * a[None, :]
    if corrected:
        r_max = grid.meta.get("b", float(r[-1]))
        exact = _row_integrals(potential, l, z, r, r_max)
        nystrom = K @ (sv**2 * w)
        M[np.diag_indices_from(M)] += exact - nystrom
    M = 0.5 * (M + M.T)
    return M


# --------------------------------------------------------------------------
# tuned pair
# --------------------------------------------------------------------------

@dataclass
class TwoBodySolution:
    """Tuned p-wave resonance of the pair.

    ``potential`` is the untuned model; the resonant potential is
    ``lambda_star`` times it.  ``eta0`` holds radial samples normalised by
    ``2 pi int eta0^2 r dr = 1`` and chosen positive.  ``mu_table`` rows are
    ``(z, mu, 1 - mu)``; the last column is computed without cancellation.
    """

    potential: PotentialModel
    grid: RadialGrid
    lambda_star: float
    eta0: np.ndarray
    c0_squared: float
    mu0: float
    mu_table: list = field(default_factory=list)
    slope_fit: Optional[float] = None
    p_switch: float = 1e-3
    _m0: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def tuned_potential(self) -> PotentialModel:
        return self.potential.with_coupling(self.potential.coupling * self.lambda_star)

    @property
    def sqrt_v(self) -> np.ndarray:
        return np.sqrt(np.abs(evaluate(self.tuned_potential, self.grid.nodes)))

    @property
    def c0(self) -> float:
        return math.sqrt(self.c0_squared)

    @property
    def fingerprint(self) -> str:
        payload = json.dumps([self.potential.to_dict(), self.lambda_star, self.c0_squared,
                              len(self.grid)], sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def tuned_matrix(self, z) -> np.ndarray:
        if _is_zero(z):
            if self._m0 is None:
                self._m0 = bs_radial_matrix(self.tuned_potential, 1, 0.0, self.grid)
            return self._m0
        return bs_radial_matrix(self.tuned_potential, 1, z, self.grid)

    def to_dict(self) -> dict:
        return {
            "potential": self.potential.to_dict(),
            "grid": self.grid.to_dict(),
            "lambda_star": self.lambda_star,
            "eta0": [float(x) for x in self.eta0],
            "c0_squared": self.c0_squared,
            "mu0": self.mu0,
            "mu_table": [[float(v) for v in row] for row in self.mu_table],
            "slope_fit": self.slope_fit,
            "p_switch": self.p_switch,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TwoBodySolution":
        return cls(PotentialModel.from_dict(d["potential"]), RadialGrid.from_dict(d["grid"]),
                   float(d["lambda_star"]), np.array(d["eta0"], dtype=float),
                   float(d["c0_squared"]), float(d["mu0"]),
                   [tuple(row) for row in d.get("mu_table", [])],
                   d.get("slope_fit"), float(d.get("p_switch", 1e-3)))


def _is_zero(z) -> bool:
    if isinstance(z, LogScalar):
        return z.sign == 0
    return z == 0


def save_solution(solution: TwoBodySolution, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(solution.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_solution(path) -> TwoBodySolution:
    with open(path, encoding="utf-8") as fh:
        return TwoBodySolution.from_dict(json.load(fh))


def tune_resonance(potential: PotentialModel, grid: RadialGrid,
                   fit_slope: bool = False, p_switch: Optional[float] = None) -> TwoBodySolution:
    """Scale the coupling so that the l=1 BS operator at z=0 has norm one."""
    if potential.kind == "exponential" and potential.alpha1 == 0:
        raise NoResonance("zero potential has no resonance")
    sv = np.sqrt(np.abs(evaluate(potential, grid.nodes)))
    if not np.any(sv > 0):
        raise NoResonance("potential vanishes on the grid")
    M = bs_radial_matrix(potential, 1, 0.0, grid)
    vals, vecs = symmetric_eigen(M, vectors=True, subset_by_index=[len(M) - 1, len(M) - 1])
    top = float(vals[-1])
    if not (np.isfinite(top) and top > 0):
        raise NoResonance(f"largest BS eigenvalue is {top}")
    lam = 1.0 / top
    m0 = lam * M
    mu0 = float(symmetric_eigen(m0, subset_by_index=[len(M) - 1, len(M) - 1])[-1])

    phi = vecs[:, -1]
    eta = phi / np.sqrt(grid.weights)
    if eta.sum() < 0:
        eta = -eta
    eta /= math.sqrt(2 * math.pi * np.dot(grid.weights, eta**2))
    sv_tuned = math.sqrt(lam) * sv
    c0 = float(np.dot(grid.weights * grid.nodes, sv_tuned * eta))

    if p_switch is None:
        p_switch = 1e-3 * potential.alpha2
    sol = TwoBodySolution(potential, grid, lam, eta, c0 * c0, mu0, [], None, p_switch, m0)
    if fit_slope:
        sol.slope_fit = fit_mu_slope(sol)[0]
    return sol


def one_minus_mu(solution: TwoBodySolution, z) -> float:
    """``1 - mu(z)`` from the Rayleigh quotient of ``k(z) - k(0)``.

    Forming the difference first keeps full relative precision when
    ``1 - mu`` is far below machine epsilon times ``mu``.
    """
    if not isinstance(z, LogScalar) and z < 0:
        raise InvalidArgument("z must be non-negative")
    m0 = solution.tuned_matrix(0.0)
    if _is_zero(z):
        return 1.0 - solution.mu0
    mz = solution.tuned_matrix(z)
    n = len(mz)
    _, vec = symmetric_eigen(mz, vectors=True, subset_by_index=[n - 1, n - 1])
    p = vec[:, -1]
    drop = -(p @ (mz - m0) @ p) - (p @ m0 @ p - solution.mu0)
    return (1.0 - solution.mu0) + drop


def mu_of_z(solution: TwoBodySolution, z) -> float:
    """Largest eigenvalue of the tuned l=1 BS matrix at ``z``; recorded in ``mu_table``."""
    if not isinstance(z, LogScalar) and z < 0:
        raise InvalidArgument("z must be non-negative")
    om = one_minus_mu(solution, z)
    mu = 1.0 - om
    zf = float(z) if not isinstance(z, LogScalar) else z.to_float()
    solution.mu_table.append((zf, mu, om))
    solution.mu_table.sort(key=lambda row: row[0])
    return mu


def fit_mu_slope(solution: TwoBodySolution, zs: Optional[Sequence[float]] = None):
    """Least-squares ``mu(z) - 1 = A z^2 ln z + B z^2``; returns ``(A, B)``."""
    if zs is None:
        zs = np.geomspace(1e-6, 1e-3, 7)
    zs = np.asarray(zs, dtype=float)
    y = -np.array([one_minus_mu(solution, z) for z in zs])
    y -= solution.mu0 - 1.0
    design = np.column_stack([zs**2 * np.log(zs), zs**2])
    scale = np.abs(design).max(axis=0)
    coef = np.linalg.lstsq(design / scale, y, rcond=None)[0] / scale
    return float(coef[0]), float(coef[1])


def mu_table_points(w_min: float = 1e-6, w_max: float = 0.4, n: int = 24) -> np.ndarray:
    """Log-spaced below 0.02, linear above, where ``1 - mu`` bends away from its envelope."""
    knee = min(0.02, w_max)
    n_lin = max(2, n * 5 // 12) if w_max > knee else 0
    lo = np.geomspace(w_min, knee, n - n_lin + (1 if n_lin else 0))
    hi = np.linspace(knee, w_max, n_lin) if n_lin else np.empty(0)
    return np.unique(np.concatenate([lo, hi]))


def build_mu_table(solution: TwoBodySolution, w_min: float = 1e-6, w_max: float = 0.4,
                   n: int = 24) -> list:
    """Fill ``mu_table`` for the numeric weight."""
    for w in mu_table_points(w_min, w_max, n):
        mu_of_z(solution, float(w))
    return solution.mu_table


# --------------------------------------------------------------------------
# infrared weight
# --------------------------------------------------------------------------

class MuModel:
    """Interpolant of ``ln(1 - mu(w))``.

    The spline acts on the residual ``ln(1 - mu) - 2 ln w - ln|ln w^2|``,
    which stays smooth and slowly varying down to ``w -> 0``.
    """

    def __init__(self, table):
        rows = sorted((r for r in table if 0 < r[0] < 1), key=lambda r: r[0])
        ln_w = np.log([r[0] for r in rows])
        om = np.array([r[2] for r in rows])
        if np.any(om <= 0):
            raise DegenerateWeight("mu >= 1 in the tabulated range")
        keep = np.concatenate([[True], np.diff(ln_w) > 0])
        self.ln_w = ln_w[keep]
        self.ln_om = np.log(om[keep])
        if len(self.ln_w) < 4:
            raise InvalidArgument("mu table needs at least 4 points")
        if np.any(np.diff(self.ln_om) <= 0):
            raise InvalidArgument("mu table is not strictly decreasing in z")
        resid = self.ln_om - self._envelope(self.ln_w)
        self._f = CubicSpline(self.ln_w, resid)
        dense = np.linspace(self.ln_w[0], self.ln_w[-1], 40 * len(self.ln_w))
        if np.any(np.diff(self._f(dense) + self._envelope(dense)) <= 0):
            # fall back to a shape-preserving fit of the residual
            self._f = PchipInterpolator(self.ln_w, resid)

    @staticmethod
    def _envelope(ln_w):
        return 2.0 * ln_w + np.log(-2.0 * ln_w)

    def log_one_minus_mu(self, ln_w):
        ln_w = np.asarray(ln_w, dtype=float)
        if np.any(ln_w < self.ln_w[0] - 1e-12) or np.any(ln_w > self.ln_w[-1] + 1e-12):
            raise InvalidArgument(
                f"argument outside tabulated range [{math.exp(self.ln_w[0]):.3g}, "
                f"{math.exp(self.ln_w[-1]):.3g}]")
        x = np.clip(ln_w, self.ln_w[0], self.ln_w[-1])
        return self._f(x) + self._envelope(x)


@dataclass(frozen=True)
class WeightSpec:
    """The weight ``g_z(s) = (1 - mu(sqrt(s^2+z^2)))^(-1/2)`` for ``s <= r_eps``.

    ``z`` is held as ``log_z`` so that arbitrarily small energies stay
    representable.  ``mode="unit"`` is a test hook fixing ``g = 1``.
    """

    mode: str
    r_eps: float
    log_z: float
    c0_squared: float
    delta: float
    delta_prime: float
    mu_model: Optional[MuModel] = None
    source: str = ""

    @property
    def z(self) -> LogScalar:
        return LogScalar.from_log(self.log_z)

    @property
    def log_floor(self) -> float:
        return self.log_z + math.log(IR_FLOOR_FACTOR)


def make_weight_spec(solution: Optional[TwoBodySolution], z, r_eps: float = 0.2,
                     mode: str = "auto", c0_squared: Optional[float] = None,
                     switch: float = ASYMPTOTIC_SWITCH) -> WeightSpec:
    """Build a :class:`WeightSpec`; ``mode="auto"`` picks numeric above ``switch``."""
    if not 0 < r_eps < 0.25:
        raise InvalidArgument("r_eps must lie in (0, 1/4)")
    log_z = as_log(z)
    if log_z > math.log(r_eps):
        raise InvalidArgument("z must lie in (0, r_eps]")
    if log_z < -MAX_ABS_LOG_Z:
        # ln s is resolved to ~1e-4 near ln z only while |ln z| stays below this
        raise InvalidArgument(f"|ln z| must not exceed {MAX_ABS_LOG_Z:g}")
    if c0_squared is None:
        if solution is None:
            raise InvalidArgument("need a solution or c0_squared")
        c0_squared = solution.c0_squared
    if mode == "auto":
        mode = "numeric" if log_z >= math.log(switch) else "asymptotic"
    source = solution.fingerprint if solution is not None else ""
    d_asym = 4.0 / (math.pi * c0_squared)
    if mode == "asymptotic" or mode == "unit":
        return WeightSpec(mode, r_eps, log_z, c0_squared, d_asym, d_asym, None, source)
    if mode != "numeric":
        raise InvalidArgument(f"unknown weight mode {mode!r}")
    if solution is None:
        raise InvalidArgument("numeric mode needs a tuned solution")
    w_need_lo = math.exp(log_z)
    w_need_hi = math.sqrt(2.0) * r_eps
    have = [row[0] for row in solution.mu_table]
    if not have or min(have) > w_need_lo * (1 + 1e-12) or max(have) < w_need_hi:
        build_mu_table(solution, min(w_need_lo, 1e-6), max(0.4, w_need_hi))
    model = MuModel(solution.mu_table)
    hi, lo = envelope_constants(model, r_eps, c0_squared)
    return WeightSpec("numeric", r_eps, log_z, c0_squared, hi, lo, model, source)


def envelope_constants(model: MuModel, r_eps: float, c0_squared: float):
    """Sharp ``(delta, delta')`` for ``z, s`` in ``(0, r_eps]``.

    ``g^2 (s^2+z^2)|ln(s^2+z^2)|`` depends on ``w = sqrt(s^2+z^2)`` only;
    its range over ``w <= sqrt(2) r_eps`` is sampled on the table range and
    joined with the ``w -> 0`` limit ``4/(pi c0^2)``.
    """
    ln_w = np.linspace(model.ln_w[0], math.log(math.sqrt(2.0) * r_eps), 2000)
    h = np.exp(np.log(2.0 * np.abs(ln_w)) + 2.0 * ln_w - model.log_one_minus_mu(ln_w))
    limit = 4.0 / (math.pi * c0_squared)
    return float(max(h.max(), limit)), float(min(h.min(), limit))


def log_g2(spec: WeightSpec, u):
    """``ln g_z^2`` at log-momenta ``u = ln s``; ``-inf`` above ``r_eps``."""
    u = np.asarray(u, dtype=float)
    out = np.full(u.shape, -np.inf)
    inside = u <= math.log(spec.r_eps) + 1e-15
    if spec.mode == "unit":
        out[inside] = 0.0
        return out
    uu = u[inside]
    ln_w2 = np.logaddexp(2.0 * uu, 2.0 * spec.log_z)
    if spec.mode == "asymptotic":
        # 1 - mu(w) = (pi/2) c0^2 w^2 |ln w|
        ln_om = math.log(0.25 * math.pi * spec.c0_squared) + ln_w2 + np.log(-ln_w2)
    else:
        ln_om = spec.mu_model.log_one_minus_mu(0.5 * ln_w2)
    out[inside] = -ln_om
    return out


def weight_g(spec: WeightSpec, s) -> LogScalar:
    """``g_z(s)`` as a :class:`LogScalar`."""
    u = as_log(s)
    if u > math.log(spec.r_eps) + 1e-15:
        return LogScalar(0)
    if spec.mode == "numeric":
        w = math.exp(0.5 * float(np.logaddexp(2 * u, 2 * spec.log_z)))
        if float(spec.mu_model.log_one_minus_mu(math.log(w))) == -math.inf:
            raise DegenerateWeight("mu >= 1")
    val = float(log_g2(spec, np.array([u]))[0])
    if not np.isfinite(val):
        raise DegenerateWeight("weight is not finite")
    return LogScalar.from_log(0.5 * val)


def _xi_panels(lo: float, hi: float, log_z: float) -> np.ndarray:
    """Panel edges in ``u``: graded towards ``lo``, refined around ``ln z``."""
    span = hi - lo
    y = np.linspace(0.0, math.log1p(span), 400)
    edges = hi - np.expm1(y)
    local = np.arange(log_z - 10.0, log_z + 10.0 + 1e-9, 0.25)
    local = local[(local > lo) & (local < hi)]
    fine = np.arange(hi, max(lo, hi - 4.0), -0.05)
    edges = np.unique(np.concatenate([edges, local, fine, [lo, hi]]))
    return edges[(edges >= lo) & (edges <= hi)]


def _xi_quad(spec: WeightSpec, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    x, w = composite_gauss(_xi_panels(lo, hi, spec.log_z), 12)
    return float(np.sum(w * np.exp(log_g2(spec, x) + 2.0 * x)))


def _xi_tail(spec: WeightSpec) -> float:
    """``int_0^s_floor g^2 t dt`` from the local envelope below the floor."""
    uf = spec.log_floor
    g2f = float(log_g2(spec, np.array([uf]))[0])
    if spec.mode == "unit":
        return 0.5 * math.exp(2 * uf + g2f)
    ln_w2f = float(np.logaddexp(2 * uf, 2 * spec.log_z))
    d_loc = math.exp(g2f + ln_w2f + math.log(-ln_w2f))
    a = -2.0 * spec.log_z
    b = -ln_w2f
    return 0.5 * d_loc * (-math.log1p((b - a) / a))


def xi(spec: WeightSpec, s) -> float:
    """``xi(s) = int_0^s g_z^2(t) t dt`` for ``0 < s <= r_eps``."""
    u = as_log(s)
    if u > math.log(spec.r_eps) + 1e-12:
        raise InvalidArgument("xi needs s <= r_eps")
    uf = spec.log_floor
    if u <= uf:
        # g^2 is flat to O(s^2/z^2) this far below z
        return 0.5 * math.exp(2 * u + float(log_g2(spec, np.array([u]))[0]))
    return _xi_tail(spec) + _xi_quad(spec, uf, u)


def xi_between(spec: WeightSpec, s1, s2) -> float:
    """Direct quadrature of ``g^2 t dt`` over ``[s1, s2]``."""
    return _xi_quad(spec, as_log(s1), as_log(s2))
