"""Pair potentials and the momentum-space form factor of the resonant pair.

The form factor is the order-one Hankel transform

    psi0(p) = -i * int_0^inf |v(r)|^(1/2) eta0(r) J_1(p r) r dr,

so that the planar transform of ``|v|^(1/2) eta0(r) e^{+i phi}`` equals
``psi0(|p|) e^{+i phi_p}``.  Below ``p_switch`` the linear law
``psi0(p) = -(i/2) c0 p`` is used.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator

from .numerics import InvalidArgument

__all__ = [
    "PotentialModel",
    "PsiTransform",
    "evaluate",
    "sqrt_abs_v",
    "psi0",
    "omega",
    "psi_transform",
    "planar_psi_hat",
]


class StateError(RuntimeError):
    """Raised when an object lacks the data an operation needs."""


@dataclass(frozen=True)
class PotentialModel:
    """Radial pair potential ``coupling * v(r)`` with ``v <= 0``.

    ``kind="exponential"`` gives ``v(r) = -alpha1 exp(-alpha2 r)``.
    ``kind="tabulated"`` interpolates ``table_v`` on ``table_r`` (monotone
    cubic) and vanishes beyond the last node; every node must satisfy
    ``v <= 0`` and the envelope ``|v| <= alpha1 exp(-alpha2 r)``.
    """

    kind: str = "exponential"
    alpha1: float = 3.8
    alpha2: float = 1.0
    coupling: float = 1.0
    table_r: Optional[tuple] = None
    table_v: Optional[tuple] = None
    _interp: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise InvalidArgument("alpha1 and alpha2 must be positive")
        if self.coupling <= 0:
            raise InvalidArgument("coupling must be positive")
        if self.kind == "exponential":
            return
        if self.kind != "tabulated":
            raise InvalidArgument(f"unknown potential kind {self.kind!r}")
        if self.table_r is None or self.table_v is None:
            raise InvalidArgument("tabulated potential needs table_r and table_v")
        r = np.asarray(self.table_r, dtype=float)
        v = np.asarray(self.table_v, dtype=float)
        if r.shape != v.shape or r.ndim != 1 or len(r) < 2:
            raise InvalidArgument("table_r and table_v must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(r) <= 0) or r[0] < 0:
            raise InvalidArgument("table_r must be non-negative and strictly increasing")
        if np.any(v > 0):
            raise InvalidArgument("tabulated potential must satisfy v(r) <= 0")
        env = self.alpha1 * np.exp(-self.alpha2 * r)
        bad = np.nonzero(np.abs(v) > env * (1 + 1e-12))[0]
        if bad.size:
            i = int(bad[0])
            raise InvalidArgument(
                f"envelope |v| <= alpha1 exp(-alpha2 r) violated at r={r[i]:g} "
                f"(|v|={abs(v[i]):g} > {env[i]:g})")
        object.__setattr__(self, "_interp", PchipInterpolator(r, v, extrapolate=False))

    def with_coupling(self, coupling: float) -> "PotentialModel":
        return PotentialModel(self.kind, self.alpha1, self.alpha2, coupling,
                              self.table_r, self.table_v)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "alpha1": self.alpha1, "alpha2": self.alpha2,
             "coupling": self.coupling}
        if self.kind == "tabulated":
            d["table_r"] = [float(x) for x in self.table_r]
            d["table_v"] = [float(x) for x in self.table_v]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialModel":
        tr = d.get("table_r")
        tv = d.get("table_v")
        return cls(d.get("kind", "exponential"), float(d.get("alpha1", 3.8)),
                   float(d.get("alpha2", 1.0)), float(d.get("coupling", 1.0)),
                   None if tr is None else tuple(tr), None if tv is None else tuple(tv))


def evaluate(potential: PotentialModel, r):
    """``coupling * v(r)``; raises on negative radii."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise InvalidArgument("radius must be non-negative")
    if potential.kind == "exponential":
        out = -potential.coupling * potential.alpha1 * np.exp(-potential.alpha2 * r_arr)
    else:
        out = potential._interp(r_arr)
        out = potential.coupling * np.nan_to_num(out, nan=0.0)
    return out if out.ndim else float(out)


def sqrt_abs_v(potential: PotentialModel, r):
    return np.sqrt(np.abs(evaluate(potential, r)))


# --------------------------------------------------------------------------
# momentum-space form factor
# --------------------------------------------------------------------------

def _require_eta(solution):
    if getattr(solution, "eta0", None) is None:
        raise StateError("solution carries no eta0 samples")


def _hankel_f(solution, p):
    """Real profile F with psi0 = -i F, by quadrature on the two-body grid."""
    r = solution.grid.nodes
    f = solution.grid.weights * solution.sqrt_v * solution.eta0
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return special.j1(np.multiply.outer(p, r)) @ f


def _profile(solution, p):
    p = np.asarray(p, dtype=float)
    flat = np.atleast_1d(p).ravel()
    out = np.empty_like(flat)
    lin = flat < solution.p_switch
    out[lin] = 0.5 * solution.c0 * flat[lin]
    if np.any(~lin):
        out[~lin] = _hankel_f(solution, flat[~lin])
    return out.reshape(p.shape) if p.ndim else float(out[0])


def psi0(solution, p):
    """Radial form factor ``psi0(p)`` (complex, purely imaginary)."""
    _require_eta(solution)
    if np.any(np.asarray(p) < 0):
        raise InvalidArgument("momentum must be non-negative")
    return -1j * _profile(solution, p)


def omega(solution, s, return_imag: bool = False):
    """``s^-2 psi0*(s/sqrt3) psi0(2s/sqrt3) - c0^2/6``, clamped to its real part."""
    _require_eta(solution)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise InvalidArgument("omega needs s > 0")
    a = psi0(solution, s / math.sqrt(3.0))
    b = psi0(solution, 2.0 * s / math.sqrt(3.0))
    prod = np.conj(a) * b / s**2
    val = prod.real - solution.c0_squared / 6.0
    if return_imag:
        return val, np.abs(prod.imag)
    return val


def planar_psi_hat(solution, px: float, py: float, sign: int = 1,
                   n_phi: int = 256) -> complex:
    """Direct planar transform ``(2 pi)^-1 int e^{-i p.r} psi_pm(r) d^2 r``.

    Tensor quadrature: the two-body radial grid times a periodic trapezoid
    rule in the angle.  Independent of the Hankel route in :func:`psi0`.
    """
    _require_eta(solution)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    r = solution.grid.nodes
    radial = solution.grid.weights * solution.sqrt_v * solution.eta0
    x = np.multiply.outer(r, np.cos(phi))
    y = np.multiply.outer(r, np.sin(phi))
    phase = np.exp(-1j * (px * x + py * y)) * np.exp(1j * sign * phi)[None, :]
    return complex(radial @ phase.sum(axis=1) * (2 * np.pi / n_phi) / (2 * np.pi))


@dataclass
class PsiTransform:
    """Tabulated form factor with the constants bounding it on a momentum range."""

    psi0_slope: complex
    p_grid: np.ndarray
    samples: np.ndarray
    alpha_bound: float
    beta_bound: float
    gamma_bound: float
    p_switch: float
    omega_imag_max: float = 0.0


def psi_transform(solution, p_max: float = 10.0, n: int = 400,
                  r_eps: float = 0.2, n_beta: int = 24) -> PsiTransform:
    """Sample ``psi0`` and estimate the constants alpha, beta, gamma.

    ``alpha = max |psi0(p)|/p`` over ``(0, p_max]``; ``gamma = max |omega(s)|/s^2``
    over ``(0, r_eps]``; ``beta`` from the two-dimensional near-additivity
    defect on an ``n_beta x n_beta`` sample of momentum pairs.
    """
    p = np.geomspace(solution.p_switch * 1e-2, p_max, n)
    vals = psi0(solution, p)
    alpha = float(np.max(np.abs(vals) / p))

    s = np.geomspace(solution.p_switch * 1e-2, r_eps, n)
    om, im = omega(solution, s, return_imag=True)
    gamma = float(np.max(np.abs(om) / s**2))

    mags = np.geomspace(1e-2, p_max / 2, n_beta)
    angles = np.linspace(0, 2 * np.pi, n_beta, endpoint=False)
    beta = 0.0
    for k, pm in enumerate(mags):
        qm = mags[::-1][k]
        for th in angles:
            pv = np.array([pm, 0.0])
            qv = qm * np.array([math.cos(th), math.sin(th)])
            defect = abs(_psi_hat_vec(solution, pv + qv) - _psi_hat_vec(solution, pv)
                         - _psi_hat_vec(solution, qv))
            beta = max(beta, defect / (pm * qm))
    return PsiTransform(-0.5j * solution.c0, p, vals, alpha, float(beta), gamma,
                        solution.p_switch, float(np.max(im)))


def _psi_hat_vec(solution, pv, sign: int = 1) -> complex:
    pm = float(np.hypot(pv[0], pv[1]))
    if pm == 0.0:
        return 0j
    return complex(psi0(solution, pm)) * complex(math.cos(sign * math.atan2(pv[1], pv[0])),
                                                 math.sin(sign * math.atan2(pv[1], pv[0])))
