"""Dense 2D scalar fields and the finite-difference operators used by both
PDE environments.

Grid convention, used consistently everywhere: row index i is the y
coordinate, column j is the x coordinate. Values outside the grid are zero
(Dirichlet ghost cells).

Note on the Laplacian: the stencil sum is divided by the spacing, not the
spacing squared. That is the update rule this artifact is built around; the
time step scaling absorbs the difference.
"""

import numpy as np

from .errors import NonFiniteFieldError, ShapeMismatchError


class ScalarField2D:
    """A d x d grid of real values with uniform spatial spacing.

    Value object: operations never mutate a field, they return new ones.
    Construction validates shape and finiteness, so any operator producing
    NaN/Inf fails loudly at the point it happens.
    """

    __slots__ = ("values", "spacing")

    def __init__(self, values, spacing):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ShapeMismatchError(f"expected a square grid, got shape {values.shape}")
        if values.shape[0] < 2:
            raise ShapeMismatchError(f"grid side must be >= 2, got {values.shape[0]}")
        spacing = float(spacing)
        if not spacing > 0.0:
            raise ValueError(f"spacing must be positive, got {spacing}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteFieldError("field contains non-finite entries")
        self.values = values
        self.spacing = spacing

    @property
    def side(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "ScalarField2D":
        return ScalarField2D(self.values.copy(), self.spacing)

    def __repr__(self):
        return f"ScalarField2D(side={self.side}, spacing={self.spacing})"


class VelocityField2D:
    """Cell-centered velocity components (vx along x/columns, vy along y/rows)."""

    __slots__ = ("vx", "vy")

    def __init__(self, vx, vy):
        vx = np.asarray(vx, dtype=np.float64)
        vy = np.asarray(vy, dtype=np.float64)
        if vx.shape != vy.shape or vx.ndim != 2:
            raise ShapeMismatchError(
                f"vx and vy must be the same 2D shape, got {vx.shape} and {vy.shape}"
            )
        if not (np.all(np.isfinite(vx)) and np.all(np.isfinite(vy))):
            raise NonFiniteFieldError("velocity field contains non-finite entries")
        self.vx = vx
        self.vy = vy

    @property
    def shape(self):
        return self.vx.shape

    def max_speeds(self) -> tuple[float, float]:
        """(max |vx|, max |vy|), used for CFL substep sizing."""
        return float(np.max(np.abs(self.vx))), float(np.max(np.abs(self.vy)))


def _laplacian_values(v: np.ndarray, spacing: float) -> np.ndarray:
    """Stencil kernel on a raw array; the public op wraps and validates."""
    out = -4.0 * v
    out[:-1, :] += v[1:, :]
    out[1:, :] += v[:-1, :]
    out[:, :-1] += v[:, 1:]
    out[:, 1:] += v[:, :-1]
    out /= spacing
    return out


def laplacian(field: ScalarField2D) -> ScalarField2D:
    """5-point stencil (sum of the four neighbours minus 4x) / spacing.

    Out-of-range neighbours contribute zero, so boundary cells see a
    restoring pull toward zero.
    """
    return ScalarField2D(_laplacian_values(field.values, field.spacing), field.spacing)


def _advect_values(t: np.ndarray, vx: np.ndarray, vy: np.ndarray, spacing: float) -> np.ndarray:
    """Upwind divergence kernel on raw arrays."""
    fx = vx * t
    fy = vy * t

    fx_left = np.zeros_like(fx)
    fx_left[:, 1:] = fx[:, :-1]
    fx_right = np.zeros_like(fx)
    fx_right[:, :-1] = fx[:, 1:]
    dfx = np.where(vx >= 0.0, fx - fx_left, fx_right - fx)

    fy_up = np.zeros_like(fy)
    fy_up[1:, :] = fy[:-1, :]
    fy_down = np.zeros_like(fy)
    fy_down[:-1, :] = fy[1:, :]
    dfy = np.where(vy >= 0.0, fy - fy_up, fy_down - fy)

    return (dfx + dfy) / spacing


def advect(field: ScalarField2D, vel: VelocityField2D) -> ScalarField2D:
    """Discrete divergence of (v * T) with first-order upwind differencing.

    At each cell the flux difference is taken against the upwind neighbour,
    chosen by the sign of the local velocity component; fluxes outside the
    grid are zero.
    """
    if vel.shape != field.values.shape:
        raise ShapeMismatchError(
            f"velocity shape {vel.shape} does not match field shape {field.values.shape}"
        )
    return ScalarField2D(
        _advect_values(field.values, vel.vx, vel.vy, field.spacing), field.spacing
    )


def l2_norm(field: ScalarField2D) -> float:
    """Frobenius norm sqrt(sum of squared entries).

    Computed with max-abs scaling so that subnormal entries do not
    underflow to a spurious zero.
    """
    m = float(np.max(np.abs(field.values)))
    if m == 0.0:
        return 0.0
    scaled = field.values / m
    return m * float(np.sqrt(np.sum(scaled * scaled)))


def save_field(field: ScalarField2D, path) -> None:
    """Write the plain-text grid format: 'd spacing' header, then d rows."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(field_to_text(field))


def load_field(path) -> ScalarField2D:
    with open(path, "r", encoding="ascii") as fh:
        return field_from_text(fh.read())


def field_to_text(field: ScalarField2D) -> str:
    lines = [f"{field.side} {field.spacing!r}"]
    for row in field.values:
        lines.append(" ".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def field_from_text(text: str) -> ScalarField2D:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty field text")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError(f"malformed field header: {lines[0]!r}")
    d = int(head[0])
    spacing = float(head[1])
    if len(lines) != d + 1:
        raise ValueError(f"expected {d} data rows, got {len(lines) - 1}")
    rows = [[float(x) for x in ln.split()] for ln in lines[1:]]
    return ScalarField2D(np.array(rows), spacing)
