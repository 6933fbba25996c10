"""Semi-analytic kernel boundary for 2-D point-parameter lake models.

For the continuous-time problem the kernel boundary off the ``L = L_min``
edge is the integral curve of the dynamics under the strongest reduction
effort ``u = u_min``.  Two cases, decided by whether the equilibria curve
``L(P) = b P - r·recycle(P)`` crosses the ``P = P_max`` ceiling to the
right of ``L_min``:

* it does, at ``(L_e, P_max)``: boundary = the ``L_min`` edge up to
  ``P_max``, the ceiling over to ``L_e``, and the ``u_min`` curve
  arriving at ``(L_e, P_max)``;
* it does not: boundary = the ``L_min`` edge up to the highest
  equilibrium ``P_e`` under the ceiling and the ``u_min`` curve through
  ``(L_min, P_e)``.

The kernel is empty when even the lowest equilibrium at ``L_min`` sits
above ``P_max``.  The curve "arriving at" its anchor is produced by
integrating the negated field from the anchor.  Used to validate the grid
solver; the tychastic case has no analytic boundary here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .dynamics import DynamicsSpec, equilibria_inflow
from .errors import ContractViolation
from .grid import CellSet, Grid

CASE_EMPTY = "empty"
CASE_MEETS_PMAX = "equilibria-curve-meets-pmax"
CASE_BELOW_PMAX = "equilibria-curve-below-pmax"
CASE_UNSUPPORTED = "unsupported-equilibria-shape"


@dataclass(frozen=True)
class KernelBoundary:
    """Closed boundary polyline of the kernel region, with case metadata."""

    vertices: np.ndarray  # (n, 2) columns (L, P); empty for empty kernels
    case: str
    anchor: tuple[float, float] | None = None

    @property
    def is_empty(self) -> bool:
        return self.case == CASE_EMPTY

    @property
    def is_supported(self) -> bool:
        return self.case not in (CASE_UNSUPPORTED,)


def equilibria_roots(model: DynamicsSpec, inflow: float, p_max: float,
                     scan_step: float = 1e-3) -> list[float]:
    """P-values solving ``equilibria_inflow(P) = inflow`` on [0, p_max]."""
    n = max(int(math.ceil(p_max / scan_step)), 8)
    ps = np.linspace(0.0, p_max, n + 1)
    vals = np.array([equilibria_inflow(model, float(p)) - inflow for p in ps])
    roots = []
    for k in range(n):
        a, b = vals[k], vals[k + 1]
        if a == 0.0:
            roots.append(float(ps[k]))
        elif a * b < 0:
            roots.append(
                float(brentq(lambda p: equilibria_inflow(model, p) - inflow,
                             ps[k], ps[k + 1], xtol=1e-12))
            )
    if vals[-1] == 0.0:
        roots.append(float(ps[-1]))
    # collapse near-duplicates from scan nodes that are roots
    out: list[float] = []
    for r in roots:
        if not out or r - out[-1] > scan_step * 1e-3:
            out.append(r)
    return out


def integrate_curve(
    model,
    start: tuple[float, float],
    u: float,
    direction: str = "forward",
    window: tuple[float, float, float, float] = (-math.inf, math.inf, -math.inf, math.inf),
    max_arclen: float | None = None,
    rtol: float = 1e-8,
    max_vertex_spacing: float | None = None,
) -> np.ndarray:
    """Integral curve of the dynamics under fixed control ``u``.

    Adaptive 4th/5th-order integration (relative tolerance ``rtol``);
    stops when the curve leaves ``window`` (L_lo, L_hi, P_lo, P_hi), or
    after ``max_arclen`` of arc length.  ``direction="backward"`` negates
    the field.  Returns an (n, 2) polyline, densified so consecutive
    vertices are at most ``max_vertex_spacing`` apart when requested.
    """
    if getattr(model, "tyche_dim", 0):
        raise ContractViolation("integral curves need point parameters")
    sign = 1.0 if direction == "forward" else -1.0
    L_lo, L_hi, P_lo, P_hi = window

    def rhs(_t, y):
        fL, fP = model.vector_field((y[0], y[1]), u)
        return (sign * fL, sign * fP)

    def make_event(fn, direction):
        # directional so a curve anchored exactly on a window edge can leave it
        fn.terminal = True
        fn.direction = direction
        return fn

    events = [
        make_event(lambda _t, y: y[0] - L_lo, -1),
        make_event(lambda _t, y: y[0] - L_hi, +1),
        make_event(lambda _t, y: y[1] - P_lo, -1),
        make_event(lambda _t, y: y[1] - P_hi, +1),
    ]
    span = max(L_hi - L_lo if math.isfinite(L_hi - L_lo) else 1.0,
               P_hi - P_lo if math.isfinite(P_hi - P_lo) else 1.0, 1.0)
    horizon = max_arclen if max_arclen is not None else 50.0 * span
    # crude speed floor to convert the arc-length cap into a time cap
    f0 = rhs(0.0, np.asarray(start, dtype=float))
    speed0 = math.hypot(*f0)
    t_end = horizon / max(speed0, 1e-6)
    sol = solve_ivp(
        rhs, (0.0, t_end), np.asarray(start, dtype=float),
        method="RK45", rtol=rtol, atol=1e-10, events=events, dense_output=True,
    )
    if sol.status < 0:
        raise ContractViolation(f"curve integration failed: {sol.message}")
    ts = list(sol.t)
    if sol.t_events is not None:
        for te in sol.t_events:
            if len(te):
                ts.append(float(te[0]))
    t_final = min(max(ts), t_end)
    samples = np.asarray(sol.t)
    samples = samples[samples <= t_final]
    if samples.size == 0 or samples[-1] < t_final:
        samples = np.append(samples, t_final)
    pts = sol.sol(samples).T
    if max_vertex_spacing is not None and len(pts) > 1:
        dense = [pts[0]]
        for a, b, ta, tb in zip(pts[:-1], pts[1:], samples[:-1], samples[1:]):
            gap = float(np.abs(b - a).max())
            if gap > max_vertex_spacing:
                n_extra = int(math.ceil(gap / max_vertex_spacing))
                tt = np.linspace(ta, tb, n_extra + 1)[1:]
                dense.extend(sol.sol(tt).T)
            else:
                dense.append(b)
        pts = np.asarray(dense)
    return pts


def analytic_boundary(
    model: DynamicsSpec,
    l_min: float,
    p_max: float,
    u_min: float,
    l_window_max: float,
    max_vertex_spacing: float | None = None,
) -> KernelBoundary:
    """Kernel boundary polygon for a point-parameter model, or empty/unsupported."""
    if getattr(model, "tyche_dim", 0):
        raise ContractViolation("analytic boundary needs point parameters")
    roots = equilibria_roots(model, l_min, p_max)
    if len(roots) > 3:
        return KernelBoundary(np.empty((0, 2)), CASE_UNSUPPORTED)
    if not roots or min(roots) > p_max:
        return KernelBoundary(np.empty((0, 2)), CASE_EMPTY)
    window = (l_min, l_window_max, 0.0, p_max * (1.0 + 1e-9))
    l_at_pmax = equilibria_inflow(model, p_max)
    if l_at_pmax >= l_min:
        anchor = (float(l_at_pmax), float(p_max))
        curve = integrate_curve(
            model, anchor, u_min, direction="backward", window=window,
            max_vertex_spacing=max_vertex_spacing,
        )
        verts = [(l_min, 0.0), (l_min, p_max)]
        if anchor[0] > l_min:
            verts.append(anchor)
        verts.extend((float(L), float(P)) for L, P in curve[1:])
        case = CASE_MEETS_PMAX
    else:
        p_e = max(r for r in roots if r <= p_max)
        anchor = (float(l_min), float(p_e))
        curve = integrate_curve(
            model, anchor, u_min, direction="backward", window=window,
            max_vertex_spacing=max_vertex_spacing,
        )
        verts = [(l_min, 0.0), anchor]
        verts.extend((float(L), float(P)) for L, P in curve[1:])
        case = CASE_BELOW_PMAX
    # close along P = 0 back to the start
    last = verts[-1]
    if last[1] > 0.0:
        verts.append((last[0], 0.0))
    verts.append(verts[0])
    return KernelBoundary(np.asarray(verts, dtype=float), case, anchor=anchor)


def contains_points(boundary: KernelBoundary, points: np.ndarray,
                    edge_tol: float = 1e-9) -> np.ndarray:
    """Even-odd membership of points in the boundary polygon.

    Points on the straight edges (L = L_min, P = P_max ceiling, P = 0
    floor) count as inside; the kernel is a closed set.
    """
    pts = np.asarray(points, dtype=float)
    if boundary.is_empty or len(boundary.vertices) < 4:
        return np.zeros(len(pts), dtype=bool)
    verts = boundary.vertices
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    x0, y0 = verts[:-1, 0], verts[:-1, 1]
    x1, y1 = verts[1:, 0], verts[1:, 1]
    for ax, ay, bx, by in zip(x0, y0, x1, y1):
        crosses = (ay > y) != (by > y)
        if not crosses.any():
            continue
        t = (y[crosses] - ay) / (by - ay)
        x_hit = ax + t * (bx - ax)
        flip = np.zeros(len(pts), dtype=bool)
        flip[crosses] = x[crosses] < x_hit
        inside ^= flip

    l_min = verts[0, 0]
    p_lo = verts[0, 1]
    p_ceiling = verts[:, 1].max()
    span_p = verts[:, 1]
    on_left = (np.abs(x - l_min) <= edge_tol) & (y >= p_lo - edge_tol) & (
        y <= span_p.max() + edge_tol
    )
    # restrict the left edge to the actual segment height
    left_top = max(v[1] for v in verts[:-1] if abs(v[0] - l_min) <= edge_tol)
    on_left &= y <= left_top + edge_tol
    on_floor = (np.abs(y - p_lo) <= edge_tol) & (x >= l_min - edge_tol) & (
        x <= verts[:, 0].max() + edge_tol
    )
    floor_right = max(
        (v[0] for v in verts[:-1] if abs(v[1] - p_lo) <= edge_tol), default=l_min
    )
    on_floor &= x <= floor_right + edge_tol
    inside |= on_left | on_floor
    if boundary.case == CASE_MEETS_PMAX:
        ceil_right = max(
            (v[0] for v in verts[:-1] if abs(v[1] - p_ceiling) <= edge_tol),
            default=l_min,
        )
        on_ceiling = (
            (np.abs(y - p_ceiling) <= edge_tol)
            & (x >= l_min - edge_tol)
            & (x <= ceil_right + edge_tol)
        )
        inside |= on_ceiling
    return inside


def rasterize_region(boundary: KernelBoundary, grid: Grid) -> CellSet:
    """Cells whose node lies in the enclosed region (boundary inclusive)."""
    if grid.ndim != 2:
        raise ContractViolation("region rasterization expects a 2-D grid")
    if boundary.is_empty:
        return grid.empty_set()
    l_nodes, p_nodes = grid.node_arrays()
    LL, PP = np.meshgrid(l_nodes, p_nodes, indexing="ij")
    pts = np.column_stack([LL.reshape(-1), PP.reshape(-1)])
    h = min(a.spacing for a in grid.axes)
    inside = contains_points(boundary, pts, edge_tol=1e-6 * h)
    return CellSet(grid, inside.reshape(grid.shape))


def boundary_to_csv(boundary: KernelBoundary) -> str:
    """Two-column comma-separated polyline (L, P) for plotting overlays."""
    lines = ["L,P"]
    for L, P in boundary.vertices:
        lines.append(f"{L!r},{P!r}")
    return "\n".join(lines) + "\n"
