"""Second-order increments, rescaled quadratic variation and the theta estimator."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .kernels import ConstantMode, HurstLike, HurstParam, as_hurst, qv_limit_constant
from .wave_sim import DiffusionSpec, LatticeField, to_original, to_rotated


class DegenerateDiffusion(ValueError):
    pass


@dataclass(frozen=True)
class QVarReport:
    N: int
    H: HurstParam
    q_value: float
    riemann_F2: float
    limit_constant: float
    constant_mode: ConstantMode


@dataclass(frozen=True)
class ThetaEstimate:
    N: int
    theta_hat: float
    inputs: QVarReport


@dataclass(frozen=True)
class RateFit:
    levels: Tuple[Tuple[float, float], ...]
    slope: float
    intercept: float
    r_squared: float


# ---------------------------------------------------------------------------
# Increments
# ---------------------------------------------------------------------------

def second_diff(field, i: int, j: int, m: int = 1) -> float:
    """f(i+m, j+m) - f(i+m, j) - f(i, j+m) + f(i, j) on a matrix."""
    f = np.asarray(field)
    if m < 1:
        raise ValueError("step must be >= 1")
    if i < 0 or j < 0 or i + m >= f.shape[0] or j + m >= f.shape[1]:
        raise IndexError(f"stencil ({i}, {j}) + {m} outside the grid")
    return float(f[i + m, j + m] - f[i + m, j] - f[i, j + m] + f[i, j])


def second_diffs(field, m: int = 1) -> np.ndarray:
    """All unit-cell (or m-cell) second differences of a matrix."""
    f = np.asarray(field, dtype=float)
    return f[m:, m:] - f[m:, :-m] - f[:-m, m:] + f[:-m, :-m]


def _lookup(field: LatticeField, t: float, x: float) -> float:
    """Value at the lattice node whose image is (t, x)."""
    tau, lam = to_rotated(t, x)
    h = field.lattice.h
    a, b = tau / h, lam / h
    i, j = round(a), round(b)
    if abs(a - i) > 1e-9 or abs(b - j) > 1e-9:
        raise IndexError(f"point ({t}, {x}) is not a lattice node")
    return field(i, j)


def original_diff_1(field: LatticeField, i: int, j: int, m: int) -> float:
    """Delta^(1)_eps f(t, x) with (t, x) the image of node (i, j), sqrt2*eps = m*h.

    f(t, x+2e) - f(t-e, x+e) - f(t+e, x+e) + f(t, x)
    """
    h = field.lattice.h
    t, x = to_original(i * h, j * h)
    e = m * h / math.sqrt(2.0)
    return (_lookup(field, t, x + 2 * e) - _lookup(field, t - e, x + e)
            - _lookup(field, t + e, x + e) + _lookup(field, t, x))


def original_diff_2(field: LatticeField, i: int, j: int, m: int) -> float:
    """Delta^(2)_eps f(t, x) = f(t+2e, x) - f(t+e, x-e) - f(t+e, x+e) + f(t, x)."""
    h = field.lattice.h
    t, x = to_original(i * h, j * h)
    e = m * h / math.sqrt(2.0)
    return (_lookup(field, t + 2 * e, x) - _lookup(field, t + e, x - e)
            - _lookup(field, t + e, x + e) + _lookup(field, t, x))


def rotated_diff(field: LatticeField, i, j, m: int, sign: int = 1):
    """delta^(1)_{sign*m h} delta^(2)_{m h} of a lattice field at node(s) (i, j)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    k = sign * m
    return field(i + k, j + m) - field(i + k, j) - field(i, j + m) + field(i, j)


# ---------------------------------------------------------------------------
# Quadratic variation and the estimator
# ---------------------------------------------------------------------------

def _check_square(field) -> np.ndarray:
    f = np.asarray(field, dtype=float)
    if f.ndim != 2 or f.shape[0] != f.shape[1] or f.shape[0] < 2:
        raise ValueError("field must be an (N+1) x (N+1) matrix with N >= 1")
    return f


def qvar(field, H: HurstLike) -> float:
    """N^(2H-1) * sum of squared unit second differences over the N x N grid."""
    f = _check_square(field)
    N = f.shape[0] - 1
    d = second_diffs(f, 1)
    return float(N ** (2 * as_hurst(H).h - 1) * np.sum(d * d))


def riemann_F2(field, F: DiffusionSpec) -> float:
    """N^-2 sum of F(field)^2 over the lower-left nodes; theta excluded."""
    f = _check_square(field)
    N = f.shape[0] - 1
    vals = F.F(f[:-1, :-1])
    return float(np.sum(vals * vals) / N ** 2)


def qvar_report(field, F: DiffusionSpec, H: HurstLike,
                mode=ConstantMode.DERIVED_NORMALIZATION) -> QVarReport:
    H = as_hurst(H)
    mode = ConstantMode.parse(mode)
    f = _check_square(field)
    return QVarReport(f.shape[0] - 1, H, qvar(f, H), riemann_F2(f, F),
                      qv_limit_constant(H, mode), mode)


def estimate_theta(field, F: DiffusionSpec, H: HurstLike,
                   mode=ConstantMode.DERIVED_NORMALIZATION) -> ThetaEstimate:
    rep = qvar_report(field, F, H, mode)
    if rep.riemann_F2 <= 0:
        raise DegenerateDiffusion("Riemann sum of F^2 vanishes; theta is not identifiable")
    theta_hat = math.sqrt(rep.q_value / (rep.limit_constant * rep.riemann_F2))
    return ThetaEstimate(rep.N, theta_hat, rep)


def remainder(v: LatticeField, V: LatticeField, F: DiffusionSpec, i, j, m: int, sign: int = 1):
    """Local-linearisation remainder at node(s) (i, j) for step m*h."""
    coeff = F.theta * F.F(v(i, j))
    out = rotated_diff(v, i, j, m, sign) - coeff * rotated_diff(V, i, j, m, sign)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Monte Carlo helpers
# ---------------------------------------------------------------------------

def lp_norm_mc(samples: Sequence[float], p: float) -> float:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("need at least one sample")
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(np.mean(np.abs(x) ** p) ** (1.0 / p))


def rate_fit(levels: Sequence[Tuple[float, float]]) -> RateFit:
    """Least-squares line through (log scale, log error)."""
    pts = tuple((float(a), float(b)) for a, b in levels)
    if len(pts) < 3:
        raise ValueError("rate fit needs at least 3 levels")
    arr = np.array(pts)
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise ValueError("scales and errors must be positive and finite")
    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(pts, float(slope), float(intercept), min(1.0, max(0.0, r2)))
