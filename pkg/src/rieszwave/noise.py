"""Gaussian noise masses on the characteristic lattice.

Two backends produce a :class:`DiamondField`:

* ``aggregate``: fractional Gaussian noise on a fine square grid (rows
  independent in time, circulant embedding across space) summed over the
  cells whose centres fall in each diamond. Slow, slightly biased at the
  diamond edges, but needs nothing beyond the fGn autocovariance.
* ``exact``: every diamond is split into a lower and an upper half-triangle.
  Each half lives in a single time slab of height h/sqrt(2); slabs are
  independent and share one covariance matrix, so one factorisation serves
  every slab and every replicate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy import sparse

from .kernels import (SQRT2, HurstLike, as_hurst, fgn_covariance, interval_cross_covariance,
                      slab_triangle_covariance)

EMBED_TOL = 1e-9
CONDITIONAL_TOL = 1e-8


class NoiseError(RuntimeError):
    """Covariance factorisation failed beyond round-off."""


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self, *sub: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *sub))
        return np.random.Generator(np.random.PCG64(ss))


class SeedInfo(NamedTuple):
    seed: Optional[int]
    stream_id: Optional[int]
    backend: str


# ---------------------------------------------------------------------------
# Lattice and fine grid geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiamondLatticeSpec:
    """Characteristic lattice covering [0, size*h]^2 in rotated coordinates.

    Nodes are (i*h, j*h) for i, j in [-size, size] with i + j >= 0; cell (i, j)
    is the rotated square with lower-left node (i, j). Cells with i + j = -1
    straddle t = 0 and only their upper half (a triangle) carries noise.
    """

    size: int
    h: Optional[float] = None

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValueError("lattice size must be a positive integer")
        object.__setattr__(self, "size", int(self.size))
        if self.h is None:
            object.__setattr__(self, "h", 1.0 / self.size)
        if not self.h > 0:
            raise ValueError("lattice step must be positive")

    @property
    def slab(self) -> float:
        """Time height of a half-diamond, h/sqrt(2)."""
        return self.h / SQRT2

    @property
    def n_cells(self) -> int:
        return 2 * self.size

    def cell_indices(self):
        """Integer arrays (i, j) for the full (2 size)^2 block of cells."""
        r = np.arange(-self.size, self.size)
        return np.meshgrid(r, r, indexing="ij")

    def domain_mask(self) -> np.ndarray:
        i, j = self.cell_indices()
        return i + j >= -1


@dataclass(frozen=True)
class FineGridSpec:
    dt: float
    dx: float
    t_cells: int
    x_cells: int
    x_origin: float

    def __post_init__(self):
        if not (self.dt > 0 and self.dx > 0):
            raise ValueError("cell sizes must be positive")
        if self.t_cells < 1 or self.x_cells < 1:
            raise ValueError("fine grid must have at least one cell")


def fine_grid_for(lattice: DiamondLatticeSpec, refinement: int) -> FineGridSpec:
    """Square fine grid exactly covering the lattice footprint."""
    r = int(refinement)
    if r != refinement or r < 1:
        raise ValueError("refinement must be a positive integer")
    s, T = lattice.size, lattice.slab
    dx = T / r
    return FineGridSpec(dt=dx, dx=dx, t_cells=2 * s * r, x_cells=4 * s * r, x_origin=-2 * s * T)


# ---------------------------------------------------------------------------
# Fractional Gaussian noise rows
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _embedding_sqrt_eigs(n: int, dx: float, h: float) -> np.ndarray:
    gamma = np.atleast_1d(fgn_covariance(np.arange(n), dx, h))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.fft.fft(row).real
    if eig.min() < -EMBED_TOL:
        raise NoiseError(f"embedding failed: eigenvalue {eig.min():.3e}")
    eig = np.clip(eig, 0.0, None)
    out = np.sqrt(eig / len(row))
    out.setflags(write=False)
    return out


def sample_fgn_rows(n: int, dx: float, H: HurstLike, rng: np.random.Generator,
                    rows: int) -> np.ndarray:
    """``rows`` independent fGn vectors of length n via circulant embedding.

    Real and imaginary parts of one complex FFT give two independent rows.
    """
    if n < 1:
        raise ValueError("row length must be >= 1")
    h = as_hurst(H).h
    if n == 1:
        return rng.standard_normal((rows, 1)) * dx ** h
    lam = _embedding_sqrt_eigs(n, float(dx), h)
    m = len(lam)
    pairs = (rows + 1) // 2
    z = rng.standard_normal((pairs, 2, m))
    y = np.fft.fft(lam * (z[:, 0] + 1j * z[:, 1]), axis=-1)[:, :n]
    out = np.empty((2 * pairs, n))
    out[0::2] = y.real
    out[1::2] = y.imag
    return out[:rows]


def sample_fgn_row(n: int, dx: float, H: HurstLike, rng: RngStream) -> np.ndarray:
    """Centred Gaussian vector with covariance fgn_covariance(|j-k|, dx, H)."""
    return sample_fgn_rows(n, dx, H, rng.generator(), 1)[0]


def sample_fine_field(spec: FineGridSpec, H: HurstLike, rng: RngStream) -> np.ndarray:
    """Noise masses of the fine cells; entry (k, m) covers
    [k dt, (k+1) dt] x [x_origin + m dx, x_origin + (m+1) dx]."""
    rows = sample_fgn_rows(spec.x_cells, spec.dx, H, rng.generator(), spec.t_cells)
    return math.sqrt(spec.dt) * rows


# ---------------------------------------------------------------------------
# The diamond field
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiamondField:
    """Noise masses of lattice cells.

    ``cells[i + size, j + size]`` holds the diamond mass for i + j >= 0, the
    boundary triangle mass for i + j = -1, and 0 below the initial line.
    """

    lattice: DiamondLatticeSpec
    cells: np.ndarray
    hurst: float
    seed_info: SeedInfo = field(default_factory=lambda: SeedInfo(None, None, "manual"))

    def __post_init__(self):
        n = self.lattice.n_cells
        cells = np.array(self.cells, dtype=float)
        if cells.shape != (n, n):
            raise ValueError(f"cells must have shape {(n, n)}, got {cells.shape}")
        mask = self.lattice.domain_mask()
        if not np.all(np.isfinite(cells[mask])):
            raise ValueError("noise masses must be finite")
        cells[~mask] = 0.0
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def boundary_masses(self) -> np.ndarray:
        """Triangle masses indexed by m = i + size for the cell (i, -1 - i)."""
        n = self.lattice.n_cells
        m = np.arange(n)
        return self.cells[m, n - 1 - m]

    def mass(self, i: int, j: int) -> float:
        s = self.lattice.size
        if not (-s <= i < s and -s <= j < s) or i + j < -1:
            raise IndexError(f"cell ({i}, {j}) outside the lattice domain")
        return float(self.cells[i + s, j + s])

    def to_csv(self, path) -> None:
        s = self.lattice.size
        info = self.seed_info
        lines = [f"# h={self.lattice.h!r} size={s} H={self.hurst!r} seed={info.seed} "
                 f"stream={info.stream_id} backend={info.backend}",
                 "i,j,mass"]
        for a in range(2 * s):
            for b in range(max(0, 2 * s - 1 - a), 2 * s):
                lines.append(f"{a - s},{b - s},{float(self.cells[a, b])!r}")
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def scaled_field(noise: DiamondField, factor: float) -> DiamondField:
    return DiamondField(noise.lattice, noise.cells * factor, noise.hurst, noise.seed_info)


# ---------------------------------------------------------------------------
# Aggregation backend
# ---------------------------------------------------------------------------

def _aggregation_matrix(spec: FineGridSpec, lattice: DiamondLatticeSpec) -> sparse.csr_matrix:
    """Sparse 0/1 map from flattened fine cells to flattened lattice cells."""
    s, T = lattice.size, lattice.slab
    r = T / spec.dx
    if abs(spec.dt - spec.dx) > 1e-12 * spec.dx:
        raise ValueError("aggregation needs square fine cells (dt == dx)")
    if abs(r - round(r)) > 1e-9 or round(r) < 2:
        raise ValueError(f"refinement ratio must be an integer >= 2, got {r}")
    r = int(round(r))
    q = spec.x_origin / spec.dx
    if abs(q - round(q)) > 1e-9:
        raise ValueError("fine grid must be aligned with the lattice nodes")
    q = int(round(q))
    if spec.t_cells < 2 * s * r or q > -2 * s * r or q + spec.x_cells < 2 * s * r:
        raise ValueError("fine grid does not cover the lattice footprint")
    k, m = np.meshgrid(np.arange(2 * s * r), np.arange(spec.x_cells), indexing="ij")
    # cell centre (k+1/2, m+1/2+q) in units of dx; tau/h and lam/h have integer numerators
    i = np.floor_divide(k - m - q, 2 * r)
    j = np.floor_divide(k + m + 1 + q, 2 * r)
    keep = (i >= -s) & (i < s) & (j >= -s) & (j < s)
    rows = ((i + s) * (2 * s) + (j + s))[keep]
    cols = (k * spec.x_cells + m)[keep]
    data = np.ones(len(rows))
    shape = ((2 * s) ** 2, spec.t_cells * spec.x_cells)
    return sparse.csr_matrix((data, (rows, cols)), shape=shape)


def aggregate_to_diamonds(fine: np.ndarray, spec: FineGridSpec, lattice: DiamondLatticeSpec,
                          hurst: float = float("nan"),
                          seed_info: Optional[SeedInfo] = None) -> DiamondField:
    """Sum fine-cell masses over each lattice cell (cell-centre rule)."""
    fine = np.asarray(fine, dtype=float)
    if fine.shape != (spec.t_cells, spec.x_cells):
        raise ValueError("fine field shape does not match its grid spec")
    A = _aggregation_matrix(spec, lattice)
    cells = (A @ fine.ravel()).reshape(lattice.n_cells, lattice.n_cells)
    r = int(round(lattice.slab / spec.dx))
    info = seed_info or SeedInfo(None, None, f"aggregate({r})")
    return DiamondField(lattice, cells, hurst, info)


def sample_diamonds_aggregate(lattice: DiamondLatticeSpec, H: HurstLike, rng: RngStream,
                              refinement: int = 32) -> DiamondField:
    H = as_hurst(H)
    spec = fine_grid_for(lattice, refinement)
    fine = sample_fine_field(spec, H, rng)
    info = SeedInfo(rng.seed, rng.stream_id, f"aggregate({refinement})")
    return aggregate_to_diamonds(fine, spec, lattice, H.h, info)


def aggregate_cell_covariance(lattice: DiamondLatticeSpec, H: HurstLike, refinement: int,
                              cells_a, cells_b) -> np.ndarray:
    """Exact covariance of aggregated masses between two lists of cells.

    Fine rows are independent, so only same-row pairs contribute; within a
    row, the fine cells of one lattice cell form a contiguous run and the
    covariance of two runs is an interval cross-covariance.
    """
    H = as_hurst(H)
    spec = fine_grid_for(lattice, refinement)
    A = _aggregation_matrix(spec, lattice).tocsr()
    s = lattice.size

    def runs(cell):
        i, j = cell
        idx = A[(i + s) * (2 * s) + (j + s)].indices
        k, m = np.divmod(idx, spec.x_cells)
        out = {}
        for row in np.unique(k):
            ms = m[k == row]
            out[int(row)] = (ms.min() * spec.dx, (ms.max() + 1) * spec.dx)
        return out

    ra = [runs(c) for c in cells_a]
    rb = [runs(c) for c in cells_b]

    cov = np.zeros((len(ra), len(rb)))
    for x, da in enumerate(ra):
        for y, db in enumerate(rb):
            total = 0.0
            for row in sorted(set(da) & set(db)):
                a, b = da[row]
                c, d = db[row]
                total += interval_cross_covariance(a, b, c, d, H)
            cov[x, y] = spec.dt * total
    return cov


# ---------------------------------------------------------------------------
# Exact backend
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _slab_factor(count: int, h: float) -> np.ndarray:
    cov = slab_triangle_covariance(count, h, True)
    eig, vec = np.linalg.eigh(cov)
    if eig.min() < -CONDITIONAL_TOL * max(1.0, eig.max()):
        raise NoiseError(f"slab covariance not PSD: eigenvalue {eig.min():.3e}")
    factor = vec * np.sqrt(np.clip(eig, 0.0, None))
    factor.setflags(write=False)
    return factor


@lru_cache(maxsize=8)
def _exact_layout(size: int):
    """Row/column indices into the slab sample matrix for each cell half."""
    s = size
    r = np.arange(-s, s)
    i, j = np.meshgrid(r, r, indexing="ij")
    d = i + j
    pos = (j - i) + (2 * s - 1)

    def shift(k):
        # position 0 is an upward triangle exactly in odd slabs
        return np.where(k % 2 == 1, 0, 1)

    lower_ok = d >= 0
    upper_ok = d >= -1
    lower = (np.where(lower_ok, pos + shift(d), 0), np.where(lower_ok, d, 0))
    upper = (np.where(upper_ok, pos + shift(d + 1), 0), np.where(upper_ok, d + 1, 0))
    return lower, lower_ok, upper, upper_ok


def sample_diamonds_exact(lattice: DiamondLatticeSpec, H: HurstLike, rng: RngStream) -> DiamondField:
    """Exact-in-distribution diamond and boundary-triangle masses."""
    H = as_hurst(H)
    s = lattice.size
    count = 4 * s
    if count > 8192:
        raise ValueError("lattice too large for the exact backend")
    gen = rng.generator()
    if H.white_noise:
        # slab covariance is diagonal (triangle area); skip the factorisation
        x = gen.standard_normal((count, 2 * s))
    else:
        x = _slab_factor(count, H.h) @ gen.standard_normal((count, 2 * s))
    lower, lower_ok, upper, upper_ok = _exact_layout(s)
    cells = np.where(lower_ok, x[lower], 0.0) + np.where(upper_ok, x[upper], 0.0)
    cells *= lattice.slab ** (H.h + 0.5)
    return DiamondField(lattice, cells, H.h, SeedInfo(rng.seed, rng.stream_id, "exact"))


def sample_diamonds(lattice: DiamondLatticeSpec, H: HurstLike, rng: RngStream,
                    backend: str = "exact", refinement: int = 32) -> DiamondField:
    if backend == "exact":
        return sample_diamonds_exact(lattice, H, rng)
    if backend.startswith("aggregate"):
        return sample_diamonds_aggregate(lattice, H, rng, refinement)
    raise ValueError(f"unknown noise backend {backend!r}")
