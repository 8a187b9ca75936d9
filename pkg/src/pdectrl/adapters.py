"""Action descriptors and the adapter maps from k action scalars to an
executable action field.

Three adapter families are provided: Gaussian linear interpolation,
nearest-descriptor (Voronoi) partition lookup, and the fixed block-repeat
layout that fills the 4x50 conditioner bank of the heat-invader room.
"""

import numpy as np

from .errors import ConfigurationError, DomainError, ShapeMismatchError

EXECUTABLE_ROWS = 4
EXECUTABLE_COLS = 50
EXECUTABLE_DIMS = EXECUTABLE_ROWS * EXECUTABLE_COLS

REPEAT_WIDTHS = (1, 25, 50, 100, 200)


class DescriptorSet:
    """Ordered set of k descriptor coordinates, each in R^m (m in {1, 2}).

    Order is meaningful: descriptor i pairs with action scalar u[i].
    """

    __slots__ = ("coords",)

    def __init__(self, coords):
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] < 1:
            raise ShapeMismatchError(f"descriptors must be a (k, m) array, got {coords.shape}")
        if len(np.unique(coords, axis=0)) != coords.shape[0]:
            raise ValueError("descriptors must be distinct")
        self.coords = coords

    @property
    def k(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def to_text(self) -> str:
        lines = [f"{self.k} {self.dim}"]
        for row in self.coords:
            lines.append(" ".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DescriptorSet":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        k, m = (int(x) for x in lines[0].split())
        if len(lines) != k + 1:
            raise ValueError(f"expected {k} descriptor rows, got {len(lines) - 1}")
        rows = [[float(x) for x in ln.split()] for ln in lines[1:]]
        coords = np.array(rows)
        if coords.shape != (k, m):
            raise ValueError("descriptor rows do not match the declared k, m")
        return cls(coords)

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "DescriptorSet":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_text(fh.read())


class Partition:
    """Nearest-descriptor cells over an axis-aligned box domain.

    Every point of the domain belongs to exactly one cell; distance ties go
    to the lower descriptor index (np.argmin picks the first minimum).
    """

    __slots__ = ("descriptors", "lo", "hi")

    def __init__(self, descriptors: DescriptorSet, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
        if lo.shape != (descriptors.dim,) or hi.shape != (descriptors.dim,):
            raise ShapeMismatchError("domain bounds must match the descriptor dimension")
        if np.any(hi <= lo):
            raise ValueError("domain upper bounds must exceed lower bounds")
        self.descriptors = descriptors
        self.lo = lo
        self.hi = hi

    def assign(self, queries) -> np.ndarray:
        """Cell index for each query point; DomainError if any point is outside."""
        q = _as_points(queries, self.descriptors.dim)
        if np.any(q < self.lo) or np.any(q > self.hi):
            raise DomainError("query point outside the partitioned domain")
        # (n, k) squared distances; argmin ties resolve to the lower index
        d2 = np.sum((q[:, None, :] - self.descriptors.coords[None, :, :]) ** 2, axis=2)
        return np.argmin(d2, axis=1)


def _as_points(queries, dim: int) -> np.ndarray:
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim == 1:
        q = q[:, None]
    if q.ndim != 2 or q.shape[1] != dim:
        raise ShapeMismatchError(f"queries must be (n, {dim}) points, got {q.shape}")
    return q


def gaussian_adapter(descriptors: DescriptorSet, u, sigma: float, queries) -> np.ndarray:
    """Unnormalized Gaussian interpolation sum_i exp(-|z - c_i|^2 / 2 sigma^2) u[i]."""
    u = np.asarray(u, dtype=np.float64).ravel()
    if u.shape[0] != descriptors.k:
        raise ShapeMismatchError(f"expected {descriptors.k} action scalars, got {u.shape[0]}")
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    q = _as_points(queries, descriptors.dim)
    d2 = np.sum((q[:, None, :] - descriptors.coords[None, :, :]) ** 2, axis=2)
    w = np.exp(-d2 / (2.0 * sigma * sigma))
    return w @ u


def partition_adapter(descriptors: DescriptorSet, partition: Partition, u, queries) -> np.ndarray:
    """Piecewise-constant lookup: each query returns u[i] of its cell, exactly."""
    if partition.descriptors is not descriptors:
        raise ValueError("partition was built from a different descriptor set")
    u = np.asarray(u, dtype=np.float64).ravel()
    if u.shape[0] != descriptors.k:
        raise ShapeMismatchError(f"expected {descriptors.k} action scalars, got {u.shape[0]}")
    return u[partition.assign(queries)]


def repeat_adapter(u) -> np.ndarray:
    """Block-repeat k action scalars onto the 200-entry (4 rows x 50 cols,
    row-major) executable layout.

    k=200: identity. k=100: two rows of 50, each duplicated onto two adjacent
    rows. k=50: one row of 50 copied to all four rows. k=25: each value
    duplicated onto two adjacent columns, then copied to all four rows.
    k=1: constant fill.
    """
    u = np.asarray(u, dtype=np.float64).ravel()
    k = u.shape[0]
    if k == 200:
        grid = u.reshape(EXECUTABLE_ROWS, EXECUTABLE_COLS)
    elif k == 100:
        grid = np.repeat(u.reshape(2, EXECUTABLE_COLS), 2, axis=0)
    elif k == 50:
        grid = np.tile(u, (EXECUTABLE_ROWS, 1))
    elif k == 25:
        grid = np.tile(np.repeat(u, 2), (EXECUTABLE_ROWS, 1))
    elif k == 1:
        grid = np.full((EXECUTABLE_ROWS, EXECUTABLE_COLS), u[0])
    else:
        raise ConfigurationError(f"repeat adapter supports k in {REPEAT_WIDTHS}, got {k}")
    return grid.reshape(EXECUTABLE_DIMS).copy()


def make_descriptors(domain: str, k: int) -> DescriptorSet:
    """Build the standard descriptor layout for a domain.

    pde_model: a sqrt(k) x sqrt(k) regular lattice over [-0.5, 0.5]^2,
    ordered row-major (y outer, x inner) to pair with grid cells.

    heat_invader: k <= 50 puts k points evenly on the segment [-1, 1];
    k = 100 uses (x, y) pairs with x in {-1, 1} and 50 even y values;
    k = 200 extends x to {-1, -1/3, 1/3, 1}.
    """
    if domain == "pde_model":
        side = int(round(np.sqrt(k)))
        if side * side != k:
            raise ConfigurationError(f"pde_model needs a square k, got {k}")
        axis = np.linspace(-0.5, 0.5, side)
        ys, xs = np.meshgrid(axis, axis, indexing="ij")
        return DescriptorSet(np.column_stack([xs.ravel(), ys.ravel()]))
    if domain == "heat_invader":
        if 1 <= k <= 50:
            pts = np.array([0.0]) if k == 1 else np.linspace(-1.0, 1.0, k)
            return DescriptorSet(pts)
        if k in (100, 200):
            xs = np.array([-1.0, 1.0]) if k == 100 else np.array([-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0])
            ys = np.linspace(-1.0, 1.0, EXECUTABLE_COLS)
            coords = [(x, y) for x in xs for y in ys]
            return DescriptorSet(np.array(coords))
        raise ConfigurationError(f"heat_invader supports k <= 50 or k in (100, 200), got {k}")
    raise ConfigurationError(f"unknown descriptor domain {domain!r}")
