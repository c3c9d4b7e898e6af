"""Box domains and uniform grid discretizations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def as_points(x, dim: int) -> np.ndarray:
    """Coerce a single point or an (m, d) batch to a 2-D float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo_i, hi_i]`` per input dimension."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-D arrays of equal length")
        if np.any(hi <= lo):
            raise ValueError("box must have positive width in every dimension")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, x, atol: float = 1e-12) -> np.ndarray:
        pts = as_points(x, self.dim)
        ok = (pts >= self.lo - atol) & (pts <= self.hi + atol)
        return ok.all(axis=1)

    def clip(self, x) -> np.ndarray:
        pts = as_points(x, self.dim)
        return np.clip(pts, self.lo, self.hi)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(count, self.dim))


@dataclass(frozen=True)
class GridDomain:
    """Uniform discretization of a box, flattened to a point list.

    Points are ordered row-major over dimensions (first axis slowest), so
    indices are stable across identical constructions.
    """

    box: Box
    points_per_dim: tuple
    points: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ppd = self.points_per_dim
        if np.isscalar(ppd):
            ppd = (int(ppd),) * self.box.dim
        ppd = tuple(int(p) for p in ppd)
        if len(ppd) != self.box.dim or any(p < 2 for p in ppd):
            raise ValueError("need at least 2 points per dimension")
        axes = [np.linspace(self.box.lo[i], self.box.hi[i], ppd[i]) for i in range(self.box.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts.setflags(write=False)
        object.__setattr__(self, "points_per_dim", ppd)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def snap_index(self, x) -> int:
        """Index of the grid point nearest to ``x`` (Euclidean)."""
        pts = as_points(x, self.box.dim)
        d2 = ((self.points - pts[0]) ** 2).sum(axis=1)
        return int(np.argmin(d2))
