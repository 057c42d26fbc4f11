"""Light-cone solver for the 1-D stochastic wave equation in rotated coordinates.

With (tau, lam) = ((t-x)/sqrt2, (t+x)/sqrt2) the wave operator becomes a mixed
derivative, and the mild solution satisfies, over every lattice cell,

    v(i+1, j+1) - v(i+1, j) - v(i, j+1) + v(i, j) = 1/2 * theta F(v) W(cell).

The scheme freezes F at the cell's lower-left node (its earliest point in
time), which keeps the update adapted: the cell's noise is independent of
every value it multiplies.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .kernels import SQRT2
from .noise import DiamondField, DiamondLatticeSpec, SeedInfo


class NumericalBlowup(FloatingPointError):
    def __init__(self, i: int, j: int):
        super().__init__(f"non-finite value at node ({i}, {j})")
        self.node = (i, j)


def to_rotated(t, x):
    return (t - x) / SQRT2, (t + x) / SQRT2


def to_original(tau, lam):
    return (tau + lam) / SQRT2, (lam - tau) / SQRT2


class DiffusionKind(enum.Enum):
    CONSTANT = "constant"
    AFFINE = "affine"
    ONE_PLUS_SIN = "one_plus_sin"


@dataclass(frozen=True)
class DiffusionSpec:
    """Diffusion coefficient theta * F(u).

    ``params`` is (c,) for CONSTANT, (a, b) for AFFINE (F(u) = a u + b) and
    empty for ONE_PLUS_SIN.
    """

    kind: DiffusionKind
    params: Tuple[float, ...] = ()
    theta: float = 1.0

    def __post_init__(self):
        kind = DiffusionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        params = tuple(float(p) for p in self.params)
        want = {DiffusionKind.CONSTANT: 1, DiffusionKind.AFFINE: 2, DiffusionKind.ONE_PLUS_SIN: 0}[kind]
        if len(params) != want:
            raise ValueError(f"{kind.value} needs {want} parameter(s), got {params}")
        object.__setattr__(self, "params", params)
        if not (self.theta >= 0 and math.isfinite(self.theta)):
            raise ValueError("theta must be finite and >= 0")
        object.__setattr__(self, "theta", float(self.theta))

    @classmethod
    def constant(cls, c: float = 1.0, theta: float = 1.0) -> "DiffusionSpec":
        return cls(DiffusionKind.CONSTANT, (c,), theta)

    @classmethod
    def affine(cls, a: float, b: float, theta: float = 1.0) -> "DiffusionSpec":
        return cls(DiffusionKind.AFFINE, (a, b), theta)

    @classmethod
    def one_plus_sin(cls, theta: float = 1.0) -> "DiffusionSpec":
        return cls(DiffusionKind.ONE_PLUS_SIN, (), theta)

    def with_theta(self, theta: float) -> "DiffusionSpec":
        return replace(self, theta=theta)

    @property
    def lipschitz(self) -> float:
        if self.kind is DiffusionKind.CONSTANT:
            return 0.0
        if self.kind is DiffusionKind.AFFINE:
            return abs(self.params[0])
        return 1.0

    def F(self, u):
        """F(u) without theta."""
        u = np.asarray(u, dtype=float)
        if self.kind is DiffusionKind.CONSTANT:
            return np.full_like(u, self.params[0])
        if self.kind is DiffusionKind.AFFINE:
            return self.params[0] * u + self.params[1]
        return 1.0 + np.sin(u)

    def describe(self) -> str:
        if self.params:
            return f"{self.kind.value}({','.join(repr(p) for p in self.params)})"
        return self.kind.value


LINEAR = DiffusionSpec.constant(1.0, 1.0)


@dataclass(frozen=True)
class LatticeField:
    """Node values ``values[i + size, j + size]``; zero on and below i + j = 0."""

    lattice: DiamondLatticeSpec
    values: np.ndarray
    kind: str = "nonlinear"
    seed_info: SeedInfo = SeedInfo(None, None, "manual")
    hurst: float = float("nan")
    diffusion: Optional[DiffusionSpec] = None

    def __post_init__(self):
        n = self.lattice.n_cells + 1
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (n, n):
            raise ValueError(f"values must have shape {(n, n)}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __call__(self, i, j):
        s = self.lattice.size
        i = np.asarray(i)
        j = np.asarray(j)
        if np.any((i < -s) | (i > s) | (j < -s) | (j > s)):
            raise IndexError("node outside the lattice")
        out = self.values[i + s, j + s]
        return float(out) if out.ndim == 0 else out

    def square(self) -> np.ndarray:
        """Values on the observation square, nodes 0..size in both directions."""
        s = self.lattice.size
        return self.values[s:, s:]

    def to_csv(self, path) -> None:
        s, h = self.lattice.size, self.lattice.h
        info = self.seed_info
        F = self.diffusion.describe() if self.diffusion else "none"
        theta = self.diffusion.theta if self.diffusion else float("nan")
        lines = [f"# N_sim={s} h={h!r} H={self.hurst!r} F={F} theta={theta!r} "
                 f"seed={info.seed} stream={info.stream_id} backend={info.backend} kind={self.kind}",
                 "i,j,tau,lambda,t,x,value"]
        for a in range(2 * s + 1):
            for b in range(max(0, 2 * s - a), 2 * s + 1):
                i, j = a - s, b - s
                tau, lam = i * h, j * h
                t, x = to_original(tau, lam)
                lines.append(f"{i},{j},{tau!r},{lam!r},{t!r},{x!r},{float(self.values[a, b])!r}")
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def initialize_first_lines(noise: DiamondField, F: DiffusionSpec) -> np.ndarray:
    """Node array with the lines i + j = 0 and i + j = 1 filled in.

    Line 0 is the initial data (zero); a node on line 1 sees only the boundary
    triangle below it, with F frozen at the zero initial field.
    """
    s = noise.lattice.size
    n = 2 * s + 1
    tri = noise.boundary_masses
    if tri.shape != (2 * s,) or not np.all(np.isfinite(tri)):
        raise ValueError("noise field lacks boundary triangle masses")
    v = np.zeros((n, n))
    coeff = 0.5 * F.theta * float(F.F(0.0))
    # cell (i, -1-i) has its top node (i+1, -i) on line 1
    m = np.arange(2 * s)
    v[m + 1, 2 * s - m] = coeff * tri
    return v


def march(noise: DiamondField, F: DiffusionSpec) -> LatticeField:
    """March the light-cone recursion in increasing anti-diagonal order."""
    s = noise.lattice.size
    n = 2 * s + 1
    v = initialize_first_lines(noise, F)
    flat = v.ravel()
    cells = noise.cells.ravel()
    half_theta = 0.5 * F.theta
    w = n  # row stride of the node array
    c = 2 * s  # row stride of the cell array
    with np.errstate(over="ignore", invalid="ignore"):  # blowups are reported below
        for D in range(2 * s, 4 * s - 1):  # D = (i+s) + (j+s) for cells with i + j = D - 2s >= 0
            lo = max(0, D - (c - 1))
            hi = min(c - 1, D)
            k = hi - lo + 1
            base = lo * w + (D - lo)          # node (I, J) = (lo, D-lo)
            cbase = lo * c + (D - lo)
            sl = slice(base, base + (k - 1) * (w - 1) + 1, w - 1)
            vij = flat[sl]
            up = flat[base + w: base + w + (k - 1) * (w - 1) + 1: w - 1]      # (I+1, J)
            right = flat[base + 1: base + 1 + (k - 1) * (w - 1) + 1: w - 1]   # (I, J+1)
            m = cells[cbase: cbase + (k - 1) * (c - 1) + 1: c - 1]
            flat[base + w + 1: base + w + 1 + (k - 1) * (w - 1) + 1: w - 1] = (
                up + right - vij + half_theta * F.F(vij) * m)
    if not np.all(np.isfinite(v)):
        bad = np.argwhere(~np.isfinite(v))
        order = np.argsort(bad.sum(axis=1), kind="stable")
        a, b = bad[order[0]]
        raise NumericalBlowup(int(a - s), int(b - s))
    kind = "linear" if F == LINEAR else "nonlinear"
    return LatticeField(noise.lattice, v, kind, noise.seed_info, noise.hurst, F)


def simulate_pair(noise: DiamondField, F: DiffusionSpec) -> Tuple[LatticeField, LatticeField]:
    """Nonlinear field and its linearisation on the same noise."""
    return march(noise, F), march(noise, LINEAR)


def restrict(field: LatticeField, n_obs: int) -> np.ndarray:
    """Values on the (n_obs+1)^2 observation grid of the unit square."""
    s = field.lattice.size
    if n_obs < 1 or s % n_obs:
        raise ValueError(f"N_sim={s} is not divisible by N_obs={n_obs}")
    step = s // n_obs
    return np.array(field.square()[::step, ::step])
