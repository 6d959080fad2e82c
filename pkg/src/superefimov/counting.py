"""Counting functions, Weyl-type inequalities and the double-log fitter."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .numerics import InvalidArgument

__all__ = [
    "InsufficientData",
    "CountingScan",
    "count_above",
    "singular_count",
    "weyl_property_suite",
    "double_log_fit",
    "closed_form_count",
    "count_sandwich",
    "double_log",
]


class InsufficientData(ValueError):
    """Too few usable points for a fit."""


def _check_threshold(a):
    if not (a > 0):
        raise InvalidArgument(f"threshold must be positive, got {a!r}")


def count_above(eigenvalues: Sequence[float], a: float) -> int:
    """Number of entries strictly greater than ``a``."""
    _check_threshold(a)
    ev = np.asarray(eigenvalues, dtype=float)
    return int(np.count_nonzero(ev > a))


def singular_count(matrix, a: float) -> int:
    """Number of singular values of ``matrix`` strictly greater than ``a``."""
    _check_threshold(a)
    m = np.asarray(matrix, dtype=float)
    if m.size == 0:
        return 0
    return int(np.count_nonzero(np.linalg.svd(m, compute_uv=False) > a))


def double_log(z: float = None, log_z: float = None) -> float:
    """``|ln|ln z^2||``; pass ``log_z`` for arguments below float range."""
    if log_z is None:
        if z is None or not (0 < z < 1):
            raise InvalidArgument("need 0 < z < 1")
        log_z = math.log(z)
    return abs(math.log(abs(2.0 * log_z)))


def closed_form_count(xi: float, a: float) -> int:
    """``max{k : xi/((pi/2) + pi(k-1)) > a}`` (0 when the set is empty)."""
    _check_threshold(a)
    # xi/(pi(k - 1/2)) > a  <=>  k < xi/(pi a) + 1/2
    k = math.ceil(xi / (math.pi * a) + 0.5) - 1
    # guard the strict inequality against rounding at the boundary
    while k >= 1 and not xi / (math.pi / 2 + math.pi * (k - 1)) > a:
        k -= 1
    while xi / (math.pi / 2 + math.pi * k) > a:
        k += 1
    return max(k, 0)


# --------------------------------------------------------------------------
# Weyl-type inequalities
# --------------------------------------------------------------------------

def _random_symmetric(rng, d):
    m = rng.standard_normal((d, d))
    return 0.5 * (m + m.T)


def weyl_property_suite(trials: int = 1000, dimension: int = 20, seed: int = 0) -> dict:
    """Randomized check of three counting inequalities.

    * ``n(A1 + A2, a1 + a2) <= n(A1, a1) + n(A2, a2)`` for symmetric A1, A2;
    * the singular-value analogue for general square A1, A2;
    * ``n_mu(A B, a) <= n_mu(A, a / ||B||)``.

    Returns a report with the number of trials, violation count and the
    first witness of each kind.
    """
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    rng = np.random.default_rng(seed)
    violations = {"eigen_sum": 0, "singular_sum": 0, "product": 0}
    witnesses = {}
    for t in range(trials):
        a1, a2 = rng.uniform(0.05, 3.0, size=2)
        scale = rng.uniform(0.2, 3.0)
        A1 = scale * _random_symmetric(rng, dimension)
        A2 = scale * _random_symmetric(rng, dimension)
        lhs = count_above(np.linalg.eigvalsh(A1 + A2), a1 + a2)
        rhs = count_above(np.linalg.eigvalsh(A1), a1) + count_above(np.linalg.eigvalsh(A2), a2)
        if lhs > rhs:
            violations["eigen_sum"] += 1
            witnesses.setdefault("eigen_sum", {"trial": t, "a1": a1, "a2": a2,
                                               "A1": A1.tolist(), "A2": A2.tolist()})

        G1 = scale * rng.standard_normal((dimension, dimension))
        G2 = scale * rng.standard_normal((dimension, dimension))
        lhs = singular_count(G1 + G2, a1 + a2)
        rhs = singular_count(G1, a1) + singular_count(G2, a2)
        if lhs > rhs:
            violations["singular_sum"] += 1
            witnesses.setdefault("singular_sum", {"trial": t, "a1": a1, "a2": a2,
                                                  "A1": G1.tolist(), "A2": G2.tolist()})

        B = rng.standard_normal((dimension, dimension))
        nb = np.linalg.norm(B, 2)
        lhs = singular_count(G1 @ B, a1)
        rhs = singular_count(G1, a1 / nb)
        if lhs > rhs:
            violations["product"] += 1
            witnesses.setdefault("product", {"trial": t, "a": a1, "A": G1.tolist(),
                                             "B": B.tolist()})
    total = sum(violations.values())
    return {"trials": trials, "dimension": dimension, "seed": seed,
            "violations": violations, "total_violations": total,
            "passed": total == 0, "witnesses": witnesses}


# --------------------------------------------------------------------------
# scans and fits
# --------------------------------------------------------------------------

@dataclass
class CountingScan:
    """Counts ``n(A(z), a)`` against ``L = |ln|ln z^2||``.

    ``log_z`` holds ``ln z`` so that scans can extend below float range.
    """

    log_z: list
    a: float
    counts: list
    label: str = "TplusTminus"
    target: Optional[float] = None
    slope: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_threshold(self.a)
        if len(self.log_z) != len(self.counts):
            raise InvalidArgument("log_z and counts differ in length")

    @property
    def L_values(self) -> np.ndarray:
        return np.array([double_log(log_z=lz) for lz in self.log_z])

    @property
    def z_list(self) -> list:
        return [math.exp(lz) for lz in self.log_z]

    def monotone(self) -> bool:
        """Counts non-decreasing as z decreases."""
        order = np.argsort(-np.asarray(self.log_z))
        c = np.asarray(self.counts)[order]
        return bool(np.all(np.diff(c) >= 0))


def _jump_points(L, counts):
    """Staircase points from the jump locations: ``(edge, count just before + step/2)``."""
    order = np.argsort(L)
    L = np.asarray(L, float)[order]
    c = np.asarray(counts, float)[order]
    jumps = np.nonzero(np.diff(c) != 0)[0]
    xs = 0.5 * (L[jumps] + L[jumps + 1])
    ys = 0.5 * (c[jumps] + c[jumps + 1])
    return xs, ys


def double_log_fit(scan: CountingScan, method: str = "auto") -> dict:
    """Least-squares line of counts against ``L``.

    ``method``: ``"raw"`` fits every point; ``"staircase"`` fits the
    mid-step points of the count staircase (needs two or more jumps);
    ``"auto"`` uses the staircase when it is available.
    """
    L = scan.L_values
    counts = np.asarray(scan.counts, dtype=float)
    if len(L) < 5 or len(np.unique(L)) < 5:
        raise InsufficientData(f"need at least 5 points with distinct L, got {len(np.unique(L))}")
    used = "raw"
    x, y = L, counts
    if method in ("auto", "staircase"):
        jx, jy = _jump_points(L, counts)
        if len(jx) >= 2:
            x, y, used = jx, jy, "staircase"
        elif method == "staircase":
            raise InsufficientData("staircase fit needs at least two count jumps")
    elif method != "raw":
        raise InvalidArgument(f"unknown fit method {method!r}")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ np.array([slope, intercept])
    resid = float(np.sqrt(np.mean((pred - y) ** 2)))
    # one count of staircase ambiguity spread across the L range
    span = float(np.ptp(L))
    out = {"slope": float(slope), "intercept": float(intercept), "residual": resid,
           "method": used, "points": int(len(x)), "L_span": span,
           "slope_uncertainty": float(1.0 / span) if span > 0 else math.inf}
    scan.slope = out["slope"]
    if scan.target is not None:
        out["target"] = scan.target
        out["relative_gap"] = abs(out["slope"] - scan.target) / scan.target
    return out


def count_sandwich(reference_eigs, perturbed_eigs, a: float, epsilon: float,
                     rank_cap: int) -> dict:
    """Sandwich ``n(ref, a + 2 eps) - cap <= n(K, a) <= n(ref, a - 2 eps) + cap``."""
    _check_threshold(a)
    if epsilon < 0 or 2 * epsilon >= a:
        raise InvalidArgument("need 0 <= 2 epsilon < a")
    n_k = count_above(perturbed_eigs, a)
    lo = count_above(reference_eigs, a + 2 * epsilon) - rank_cap
    hi = count_above(reference_eigs, a - 2 * epsilon) + rank_cap
    return {"count": n_k, "lower": lo, "upper": hi, "passed": bool(lo <= n_k <= hi)}
