"""Uniform rectangular state-space grids and cell sets.

A :class:`Grid` is a product of :class:`Axis` objects.  States project onto
the nearest node (ties break toward the lower index).  What happens when a
state leaves the grid window is an axis property: a side marked ``outside``
treats the corresponding constraint as binding (projection reports the state
as lost), while a side marked ``clamp`` snaps the coordinate back onto the
edge node.  Lake scenarios clamp the truncated upper inflow edge and the
``P >= 0`` floor; everything else defaults to ``outside``.

Cell sets are dense boolean bitmaps over the grid, supporting exact bitwise
set algebra and Chebyshev (box) dilation/erosion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

OUTSIDE = -1

_POLICIES = ("outside", "clamp")


@dataclass(frozen=True)
class Axis:
    """One grid axis: ``count`` nodes evenly spaced on [lo, hi]."""

    name: str
    lo: float
    hi: float
    count: int
    lower_policy: str = "outside"
    upper_policy: str = "outside"

    def __post_init__(self):
        if self.count < 2:
            raise ContractViolation(f"axis {self.name}: count must be >= 2")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ContractViolation(f"axis {self.name}: bounds must be finite")
        if not self.hi > self.lo:
            raise ContractViolation(f"axis {self.name}: upper bound must exceed lower")
        for p in (self.lower_policy, self.upper_policy):
            if p not in _POLICIES:
                raise ContractViolation(f"axis {self.name}: unknown edge policy {p!r}")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)

    def nodes(self) -> np.ndarray:
        """Node coordinates, elementwise identical to scalar ``lo + k*h``."""
        return self.lo + np.arange(self.count) * self.spacing

    def project_scalar(self, x: float) -> int:
        """Nearest-node index for one coordinate, or OUTSIDE."""
        if x < self.lo:
            return 0 if self.lower_policy == "clamp" else OUTSIDE
        if x > self.hi:
            return self.count - 1 if self.upper_policy == "clamp" else OUTSIDE
        t = (x - self.lo) / self.spacing
        k = int(math.ceil(t - 0.5))  # ties toward the lower index
        if k < 0:
            k = 0
        elif k > self.count - 1:
            k = self.count - 1
        return k

    def project_array(self, x: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`project_scalar`; bit-identical per element."""
        x = np.asarray(x, dtype=float)
        t = (x - self.lo) / self.spacing
        k = np.ceil(t - 0.5)
        k = np.clip(k, 0, self.count - 1).astype(np.int64)
        below = x < self.lo
        above = x > self.hi
        if self.lower_policy == "clamp":
            k[below] = 0
        else:
            k[below] = OUTSIDE
        if self.upper_policy == "clamp":
            k[above] = self.count - 1
        else:
            k[above] = OUTSIDE
        return k


@dataclass(frozen=True)
class Grid:
    axes: tuple[Axis, ...]

    def __post_init__(self):
        if not self.axes:
            raise ContractViolation("grid needs at least one axis")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ContractViolation("axis names must be unique")

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis(self, name: str) -> Axis:
        for a in self.axes:
            if a.name == name:
                return a
        raise KeyError(name)

    def node(self, index) -> tuple[float, ...]:
        """Coordinates of the node at a multi-index or flat index."""
        if isinstance(index, (int, np.integer)):
            index = self.unravel(int(index))
        return tuple(a.lo + int(k) * a.spacing for a, k in zip(self.axes, index))

    def ravel(self, index) -> int:
        flat = 0
        for a, k in zip(self.axes, index):
            flat = flat * a.count + int(k)
        return flat

    def unravel(self, flat: int) -> tuple[int, ...]:
        out = []
        for a in reversed(self.axes):
            out.append(flat % a.count)
            flat //= a.count
        return tuple(reversed(out))

    def project(self, x) -> int:
        """Flat cell index of the nearest node, or OUTSIDE.

        A coordinate beyond an ``outside`` edge loses the whole state; a
        coordinate beyond a ``clamp`` edge snaps to the edge node.
        """
        if len(x) != self.ndim:
            raise ContractViolation("state dimension does not match grid")
        flat = 0
        for a, xi in zip(self.axes, x):
            k = a.project_scalar(float(xi))
            if k == OUTSIDE:
                return OUTSIDE
            flat = flat * a.count + k
        return flat

    def project_many(self, X: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`project` over rows of ``X`` (n, ndim)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.ndim:
            raise ContractViolation("expected array of shape (n, ndim)")
        flat = np.zeros(X.shape[0], dtype=np.int64)
        lost = np.zeros(X.shape[0], dtype=bool)
        for j, a in enumerate(self.axes):
            k = a.project_array(X[:, j])
            lost |= k == OUTSIDE
            flat = flat * a.count + np.where(k == OUTSIDE, 0, k)
        flat[lost] = OUTSIDE
        return flat

    def node_arrays(self) -> list[np.ndarray]:
        return [a.nodes() for a in self.axes]

    def empty_set(self) -> "CellSet":
        return CellSet(self, np.zeros(self.shape, dtype=bool))

    def full_set(self) -> "CellSet":
        return CellSet(self, np.ones(self.shape, dtype=bool))


def _dilate_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    """Chebyshev dilation by ``radius`` cells, clipped at the grid edge."""
    if radius == 0:
        return mask.copy()
    out = mask.copy()
    for axis in range(mask.ndim):
        acc = out.copy()
        for s in range(1, radius + 1):
            src_fwd = [slice(None)] * mask.ndim
            dst_fwd = [slice(None)] * mask.ndim
            src_fwd[axis] = slice(s, None)
            dst_fwd[axis] = slice(None, -s)
            acc[tuple(dst_fwd)] |= out[tuple(src_fwd)]
            src_bwd = [slice(None)] * mask.ndim
            dst_bwd = [slice(None)] * mask.ndim
            src_bwd[axis] = slice(None, -s)
            dst_bwd[axis] = slice(s, None)
            acc[tuple(dst_bwd)] |= out[tuple(src_bwd)]
        out = acc
    return out


@dataclass(eq=False)
class CellSet:
    """Subset of grid cells as a dense boolean bitmap."""

    grid: Grid
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.mask.shape != self.grid.shape:
            raise ContractViolation("bitmap shape does not match grid")
        if self.mask.dtype != np.bool_:
            object.__setattr__(self, "mask", self.mask.astype(bool))

    def _check(self, other: "CellSet"):
        if self.grid != other.grid:
            raise ContractViolation("cell sets live on different grids")

    def __and__(self, other: "CellSet") -> "CellSet":
        self._check(other)
        return CellSet(self.grid, self.mask & other.mask)

    def __or__(self, other: "CellSet") -> "CellSet":
        self._check(other)
        return CellSet(self.grid, self.mask | other.mask)

    def difference(self, other: "CellSet") -> "CellSet":
        self._check(other)
        return CellSet(self.grid, self.mask & ~other.mask)

    def symmetric_difference(self, other: "CellSet") -> "CellSet":
        self._check(other)
        return CellSet(self.grid, self.mask ^ other.mask)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CellSet):
            return NotImplemented
        return self.grid == other.grid and bool(np.array_equal(self.mask, other.mask))

    def issubset(self, other: "CellSet") -> bool:
        self._check(other)
        return not bool((self.mask & ~other.mask).any())

    @property
    def popcount(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def is_empty(self) -> bool:
        return not bool(self.mask.any())

    def copy(self) -> "CellSet":
        return CellSet(self.grid, self.mask.copy())

    def contains_flat(self, flat: int) -> bool:
        return flat != OUTSIDE and bool(self.mask.flat[flat])

    def flat_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask.reshape(-1))

    def dilate(self, radius: int) -> "CellSet":
        """Chebyshev box dilation, clipped to the grid."""
        if radius < 0:
            raise ContractViolation("dilation radius must be >= 0")
        return CellSet(self.grid, _dilate_mask(self.mask, radius))

    def erode(self, radius: int) -> "CellSet":
        """Chebyshev erosion; out-of-grid neighbors are treated as members.

        Grid edges already encode the constraint boundary via projection
        policies, so erosion does not penalize them a second time.
        """
        if radius < 0:
            raise ContractViolation("erosion radius must be >= 0")
        return CellSet(self.grid, ~_dilate_mask(~self.mask, radius))

    def boundary(self) -> "CellSet":
        """Member cells with at least one non-member in-grid Chebyshev-1 neighbor."""
        return self.difference(self.erode(1))

    @classmethod
    def from_flat(cls, grid: Grid, flat: np.ndarray) -> "CellSet":
        mask = np.zeros(grid.size, dtype=bool)
        mask[np.asarray(flat, dtype=np.int64)] = True
        return cls(grid, mask.reshape(grid.shape))


def chebyshev_hausdorff(a: CellSet, b: CellSet) -> float:
    """Hausdorff distance between two cell sets in cell-index units.

    Distance between cells is the Chebyshev distance of their multi-indices.
    Returns ``inf`` when exactly one set is empty and 0 when both are.
    """
    if a.grid != b.grid:
        raise ContractViolation("cell sets live on different grids")
    if a.is_empty and b.is_empty:
        return 0.0
    if a.is_empty or b.is_empty:
        return math.inf
    from scipy.ndimage import distance_transform_cdt

    # distance_transform_cdt computes distance to the nearest zero cell,
    # so feed it the complement of each set.
    dist_to_a = distance_transform_cdt(~a.mask, metric="chessboard")
    dist_to_b = distance_transform_cdt(~b.mask, metric="chessboard")
    d_ab = float(dist_to_b[a.mask].max())
    d_ba = float(dist_to_a[b.mask].max())
    return max(d_ab, d_ba)
