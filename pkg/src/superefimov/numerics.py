"""Grids, quadrature, eigensolver wrappers, modified Bessel products and
log-domain scalars shared by the rest of the package.

All radial grids integrate against the measure ``x dx``; their weights already
contain the factor ``x``.  Deep-infrared grids additionally carry the
log-coordinates ``u = ln x`` and ``ln(weight)`` so that nodes far below the
smallest representable double can still be used.
"""
from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg
from scipy import special

__all__ = [
    "InvalidArgument",
    "LogScalar",
    "RadialGrid",
    "gauss_legendre",
    "composite_gauss",
    "uniform_grid",
    "log_grid",
    "loglog_grid",
    "symmetric_eigen",
    "bessel_i_k_product",
    "log_sum_exp",
]

SCHEMES = ("uniform-composite-Gauss", "log-composite-Gauss", "loglog-composite-Gauss")

# below this value of z*r_large the leading small-argument form of I_l K_l is
# exact to double precision (relative correction ~ t^2 |ln t|)
_SMALL_T = 1e-8
_TINY = float(np.finfo(float).tiny)


class InvalidArgument(ValueError):
    """Raised when an operation receives arguments outside its domain."""


# --------------------------------------------------------------------------
# log-domain scalar
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LogScalar:
    """A real number stored as ``sign * exp(log_magnitude)``.

    When the value is a normal double it is also kept as ``value``, so that
    round trips through :meth:`from_float` are exact; a rounded log alone
    loses about ``|ln x| * eps`` in relative precision.
    """

    sign: int
    log_magnitude: float = 0.0
    value: Optional[float] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise InvalidArgument(f"sign must be -1, 0 or +1, got {self.sign}")
        if self.sign == 0:
            object.__setattr__(self, "log_magnitude", -math.inf)
            object.__setattr__(self, "value", 0.0)

    @classmethod
    def from_float(cls, x: float) -> "LogScalar":
        x = float(x)
        if x == 0.0:
            return cls(0)
        if not math.isfinite(x):
            raise InvalidArgument(f"cannot represent {x}")
        return cls(1 if x > 0 else -1, math.log(abs(x)), x)

    @classmethod
    def from_log(cls, log_magnitude: float, sign: int = 1) -> "LogScalar":
        return cls(sign, float(log_magnitude))

    def to_float(self) -> float:
        if self.value is not None:
            return self.value
        try:
            return self.sign * math.exp(self.log_magnitude)
        except OverflowError:
            return self.sign * math.inf

    def __float__(self):
        return self.to_float()

    @staticmethod
    def _native(a, b, op):
        """Exact-double result of ``op`` when both operands carry one and it stays normal."""
        if a.value is None or b.value is None:
            return None
        try:
            r = op(a.value, b.value)
        except (OverflowError, ZeroDivisionError):
            return None
        if r == 0.0 or (math.isfinite(r) and abs(r) >= _TINY):
            return r
        return None

    def __mul__(self, other):
        other = _as_log_scalar(other)
        if self.sign == 0 or other.sign == 0:
            return LogScalar(0)
        return LogScalar(self.sign * other.sign, self.log_magnitude + other.log_magnitude,
                         self._native(self, other, operator.mul))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_log_scalar(other)
        if other.sign == 0:
            raise ZeroDivisionError("division by LogScalar zero")
        if self.sign == 0:
            return LogScalar(0)
        return LogScalar(self.sign * other.sign, self.log_magnitude - other.log_magnitude,
                         self._native(self, other, operator.truediv))

    def __neg__(self):
        return LogScalar(-self.sign, self.log_magnitude,
                         None if self.value is None else -self.value)

    def __add__(self, other):
        other = _as_log_scalar(other)
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        if self.sign == other.sign:
            return LogScalar(self.sign, log_sum_exp(self.log_magnitude, other.log_magnitude),
                             self._native(self, other, operator.add))
        big, small = (self, other) if self.log_magnitude >= other.log_magnitude else (other, self)
        native = self._native(self, other, operator.add)
        if native == 0.0:
            return LogScalar(0)
        diff = small.log_magnitude - big.log_magnitude
        if diff == 0.0:
            return LogScalar(0)
        return LogScalar(big.sign, big.log_magnitude + math.log(-math.expm1(diff)), native)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-_as_log_scalar(other))

    def __rsub__(self, other):
        return _as_log_scalar(other) - self

    def __pow__(self, p: float):
        if self.sign < 0:
            raise InvalidArgument("fractional power of a negative LogScalar")
        if self.sign == 0:
            return LogScalar(0) if p > 0 else LogScalar(1, math.inf)
        return LogScalar(1, self.log_magnitude * p)

    def log(self) -> float:
        if self.sign <= 0:
            raise InvalidArgument("log of a non-positive LogScalar")
        return self.log_magnitude


def _as_log_scalar(x) -> LogScalar:
    if isinstance(x, LogScalar):
        return x
    return LogScalar.from_float(float(x))


def as_log(z: Union[float, LogScalar]) -> float:
    """Natural log of a positive float or LogScalar."""
    if isinstance(z, LogScalar):
        return z.log()
    if z <= 0:
        raise InvalidArgument(f"expected a positive value, got {z}")
    return math.log(z)


def log_sum_exp(a: float, b: float) -> float:
    """``ln(e^a + e^b)`` without overflow."""
    return float(np.logaddexp(a, b))


# --------------------------------------------------------------------------
# quadrature and grids
# --------------------------------------------------------------------------

def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0):
    """Gauss-Legendre nodes and weights on ``[a, b]``."""
    if int(n) != n or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n}")
    if not a < b:
        raise InvalidArgument(f"need a < b, got a={a}, b={b}")
    x, w = np.polynomial.legendre.leggauss(int(n))
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


def composite_gauss(edges: Sequence[float], order: int):
    """Composite Gauss rule on consecutive panels ``[edges[k], edges[k+1]]``."""
    edges = np.asarray(edges, dtype=float)
    if np.any(np.diff(edges) <= 0):
        raise InvalidArgument("panel edges must be strictly increasing")
    x, w = np.polynomial.legendre.leggauss(int(order))
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w
    return nodes.ravel(), np.broadcast_to(weights, nodes.shape).ravel().copy()


@dataclass(frozen=True)
class RadialGrid:
    """Quadrature grid for integrals against ``x dx`` on a radial interval.

    ``weights`` contain the factor ``x``.  Log schemes also keep
    ``u_nodes = ln(nodes)`` and ``log_weights = ln(weights)``; these stay
    finite when the nodes themselves underflow.
    """

    nodes: np.ndarray
    weights: np.ndarray
    scheme: str
    u_nodes: Optional[np.ndarray] = None
    log_weights: Optional[np.ndarray] = None
    order: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidArgument(f"unknown grid scheme {self.scheme!r}")
        if self.u_nodes is None:
            nodes = np.asarray(self.nodes, dtype=float)
            if np.any(nodes <= 0) or np.any(np.diff(nodes) <= 0):
                raise InvalidArgument("nodes must be positive and strictly increasing")
            if np.any(np.asarray(self.weights) <= 0):
                raise InvalidArgument("weights must be positive")
        else:
            if np.any(np.diff(self.u_nodes) <= 0):
                raise InvalidArgument("log-nodes must be strictly increasing")

    def __len__(self):
        return len(self.nodes)

    @property
    def log_nodes(self) -> np.ndarray:
        return self.u_nodes if self.u_nodes is not None else np.log(self.nodes)

    @property
    def log_w(self) -> np.ndarray:
        return self.log_weights if self.log_weights is not None else np.log(self.weights)

    def integrate(self, values) -> float:
        """Integral of sampled values against ``x dx``."""
        return float(np.dot(self.weights, values))

    def to_dict(self) -> dict:
        d = {"scheme": self.scheme, "order": self.order,
             "nodes": [float(x) for x in self.nodes],
             "weights": [float(x) for x in self.weights]}
        if self.u_nodes is not None:
            d["u_nodes"] = [float(x) for x in self.u_nodes]
            d["log_weights"] = [float(x) for x in self.log_weights]
        d["meta"] = dict(self.meta)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RadialGrid":
        u = d.get("u_nodes")
        lw = d.get("log_weights")
        return cls(np.array(d["nodes"], dtype=float), np.array(d["weights"], dtype=float),
                   d["scheme"],
                   None if u is None else np.array(u, dtype=float),
                   None if lw is None else np.array(lw, dtype=float),
                   int(d.get("order", 1)), dict(d.get("meta", {})))


def uniform_grid(a: float, b: float, n: int, order: int = 8) -> RadialGrid:
    """Composite Gauss grid with equal panels on ``[a, b]`` (``n`` rounded to panels)."""
    if not 0 <= a < b:
        raise InvalidArgument(f"need 0 <= a < b, got {a}, {b}")
    panels = max(1, int(round(n / order)))
    x, w = composite_gauss(np.linspace(a, b, panels + 1), order)
    return RadialGrid(x, w * x, "uniform-composite-Gauss", order=order,
                      meta={"a": a, "b": b, "panels": panels})


def _from_log_rule(u, du_w, scheme, order, meta) -> RadialGrid:
    log_w = 2.0 * u + np.log(du_w)
    with np.errstate(under="ignore"):
        nodes = np.exp(u)
        weights = np.exp(log_w)
    return RadialGrid(nodes, weights, scheme, u, log_w, order, meta)


def log_grid(log_s_min: float, s_max: float, n: int, order: int = 1) -> RadialGrid:
    """Nodes uniform in ``u = ln s`` between ``log_s_min`` and ``ln(s_max)``.

    ``order=1`` is the composite midpoint rule.
    """
    u_max = math.log(s_max)
    if not log_s_min < u_max:
        raise InvalidArgument("log_s_min must lie below ln(s_max)")
    panels = max(1, int(round(n / order)))
    u, wu = composite_gauss(np.linspace(log_s_min, u_max, panels + 1), order)
    return _from_log_rule(u, wu, "log-composite-Gauss", order,
                          {"log_s_min": log_s_min, "s_max": s_max, "panels": panels})


def loglog_grid(log_s_min: float, s_max: float, n: int, order: int = 1,
                offset: float = 1.0) -> RadialGrid:
    """Nodes uniform in ``y = ln(offset + ln(s_max) - ln s)``.

    The spacing in ``u = ln s`` grows linearly with the distance from
    ``s_max``, which keeps the node count proportional to ``ln|ln s_min|``.
    """
    u_max = math.log(s_max)
    if not log_s_min < u_max:
        raise InvalidArgument("log_s_min must lie below ln(s_max)")
    y_max = math.log(offset + u_max - log_s_min)
    y_min = math.log(offset)
    panels = max(1, int(round(n / order)))
    y, wy = composite_gauss(np.linspace(y_min, y_max, panels + 1), order)
    u = u_max + offset - np.exp(y)
    wu = wy * np.exp(y)
    idx = np.argsort(u)
    return _from_log_rule(u[idx], wu[idx], "loglog-composite-Gauss", order,
                          {"log_s_min": log_s_min, "s_max": s_max, "panels": panels,
                           "offset": offset})


# --------------------------------------------------------------------------
# eigensolver
# --------------------------------------------------------------------------

def symmetric_eigen(matrix, vectors: bool = False, subset_by_value=None,
                    subset_by_index=None, rtol: float = 1e-12):
    """Eigen-decomposition of a dense real symmetric matrix, ascending order.

    LAPACK's symmetric drivers do the work; ``subset_by_value`` /
    ``subset_by_index`` forward to :func:`scipy.linalg.eigh`.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgument(f"matrix must be square, got shape {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale > 0 and np.max(np.abs(a - a.T)) > rtol * scale:
        raise InvalidArgument("matrix is not symmetric")
    kw = {}
    if subset_by_value is not None:
        kw["subset_by_value"] = subset_by_value
    if subset_by_index is not None:
        kw["subset_by_index"] = subset_by_index
    if vectors:
        return scipy.linalg.eigh(a, check_finite=True, **kw)
    return scipy.linalg.eigh(a, eigvals_only=True, check_finite=True, **kw)


# --------------------------------------------------------------------------
# modified Bessel functions
# --------------------------------------------------------------------------

def bessel_i_k_product(l: int, z, r_small, r_large):
    """``I_l(z r_small) K_l(z r_large)`` for ``r_small <= r_large``.

    ``z`` may be a float, a :class:`LogScalar`, or ``0`` for the ``z -> 0``
    limit ``r_small^l / (2 l r_large^l)``.  Products are formed from the
    exponentially scaled functions, so neither factor overflows.
    """
    l = int(l)
    if l < 0:
        raise InvalidArgument("l must be non-negative")
    rs = np.asarray(r_small, dtype=float)
    rl = np.asarray(r_large, dtype=float)
    if np.any(rs <= 0) or np.any(rs > rl):
        raise InvalidArgument("need 0 < r_small <= r_large")

    if isinstance(z, LogScalar):
        if z.sign == 0:
            log_z = -math.inf
        elif z.sign < 0:
            raise InvalidArgument("z must be positive")
        else:
            log_z = z.log_magnitude
    else:
        if z < 0:
            raise InvalidArgument("z must be non-negative")
        log_z = -math.inf if z == 0 else math.log(z)

    if l == 0 and log_z == -math.inf:
        raise InvalidArgument("l = 0 kernel diverges logarithmically as z -> 0")

    small_limit = (rs / rl) ** l / (2 * l) if l > 0 else None
    if log_z == -math.inf:
        return small_limit

    tmax = np.log(rl) + log_z
    out = np.empty(np.broadcast(rs, rl).shape)
    rs_b, rl_b = np.broadcast_arrays(rs, rl)
    tiny = tmax < math.log(_SMALL_T) if l > 0 else np.zeros(out.shape, bool)
    tiny = np.broadcast_to(tiny, out.shape)
    if l > 0:
        out[tiny] = np.broadcast_to(small_limit, out.shape)[tiny]
    big = ~tiny
    if np.any(big):
        z_f = math.exp(log_z)
        ts = z_f * rs_b[big]
        tl = z_f * rl_b[big]
        out[big] = special.ive(l, ts) * special.kve(l, tl) * np.exp(ts - tl)
    return out if out.ndim else float(out)
