"""Discrete viability and guaranteed-viability kernel solver.

The kernel is the largest fixed point of the sweep

    G_{n+1} = { c in G_n : exists u sampled, for all v sampled,
                successor cell of one Euler step from node(c) lies in M(G_n) }

where ``M`` is ``G_n`` itself at dilation radius 0, its Chebyshev dilation
in ``optimistic`` mode, or its erosion in ``guaranteed-safe`` mode.  Plain
viability is the singleton-tyche case.

Sweeps are synchronous (every cell tested against the previous
generation), so results are independent of worker count and the removal
telemetry is well defined.  Each sweep only re-tests cells that could
have changed: a cell's outcome moves only if one of its successors was
removed in the previous sweep, and successor positions are bounded by
per-axis ranges, so a summed-area table over the removed set gives a
cheap conservative dirty set.

For 2-D lake-family dynamics successors split as ``L' = L + tau*u`` and
``P' = P + tau*(drift_v(P) + L)``; drift tables are precomputed per tyche
by scalar evaluation so vector sweeps replicate ``step_discrete`` bit for
bit.  Anything else (ball embeddings, toy 1-D systems) takes a plain
per-cell path sized for small grids.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DEFAULT_TAU, drift_table
from .errors import (
    ContractViolation,
    InternalInconsistency,
    JobCancelled,
    NonConvergence,
    NumericOverflow,
)
from .grid import OUTSIDE, CellSet, Grid, _dilate_mask

_DILATION_MODES = ("optimistic", "guaranteed-safe")


@dataclass(frozen=True)
class DiscreteProblem:
    """One kernel computation: dynamics, grid, constraints and sampling."""

    dynamics: object
    grid: Grid
    constraint: CellSet
    controls: tuple[float, ...]
    tyches: tuple[tuple[float, ...], ...] = ((),)
    tau: float = DEFAULT_TAU
    dilation_radius: int = 0
    dilation_mode: str = "optimistic"

    def __post_init__(self):
        if not self.controls:
            raise ContractViolation("control sample list must not be empty")
        if not self.tyches:
            raise ContractViolation("tyche sample list must not be empty")
        if not self.tau > 0:
            raise ContractViolation("tau must be positive")
        if self.constraint.grid != self.grid:
            raise ContractViolation("constraint set lives on a different grid")
        if self.dilation_radius < 0:
            raise ContractViolation("dilation radius must be >= 0")
        if self.dilation_mode not in _DILATION_MODES:
            raise ContractViolation(f"unknown dilation mode {self.dilation_mode!r}")

    def with_tyches(self, tyches) -> "DiscreteProblem":
        return DiscreteProblem(
            self.dynamics, self.grid, self.constraint, self.controls,
            tuple(tyches), self.tau, self.dilation_radius, self.dilation_mode,
        )


@dataclass(eq=False)
class RegulationMap:
    """Per-cell bitmask of viable control sample indices."""

    grid: Grid
    controls: tuple[float, ...]
    masks: np.ndarray = field(repr=False)  # uint64, flat over grid

    def __post_init__(self):
        if len(self.controls) > 64:
            raise ContractViolation("regulation bitmasks support at most 64 controls")
        if self.masks.shape != (self.grid.size,):
            raise ContractViolation("regulation mask array must be flat over the grid")

    def allowed(self, flat: int) -> tuple[int, ...]:
        if flat == OUTSIDE:
            return ()
        m = int(self.masks[flat])
        return tuple(k for k in range(len(self.controls)) if m >> k & 1)

    def domain(self) -> CellSet:
        return CellSet(self.grid, (self.masks != 0).reshape(self.grid.shape))

    def restrict(self, cells: CellSet) -> "RegulationMap":
        if cells.grid != self.grid:
            raise ContractViolation("domain lives on a different grid")
        masks = np.where(cells.mask.reshape(-1), self.masks, np.uint64(0))
        return RegulationMap(self.grid, self.controls, masks)


@dataclass
class SolveReport:
    kernel: CellSet
    iterations: int
    removed_per_iteration: list[int]
    wall_time: float
    empty: bool
    regulation: RegulationMap | None = None

    def summary_lines(self) -> list[str]:
        return [
            f"iterations {self.iterations}",
            "removed " + " ".join(str(r) for r in self.removed_per_iteration),
            f"kernel_cells {self.kernel.popcount}",
            f"empty {str(self.empty).lower()}",
            f"wall_time_s {self.wall_time:.3f}",
        ]


class _Engine:
    """Successor machinery for one problem, shared across sweeps."""

    def __init__(self, problem: DiscreteProblem):
        self.problem = problem
        self.grid = problem.grid
        g = self.grid
        self.separable = (
            g.ndim == 2
            and hasattr(problem.dynamics, "p_drift")
            and self._hashable(problem.dynamics)
        )
        if self.separable:
            l_axis, p_axis = g.axes
            self._nP = p_axis.count
            self._Lnodes = l_axis.nodes()
            self._Pnodes = p_axis.nodes()
            self._p_axis = p_axis
            tau = problem.tau
            self._jL = []
            for u in problem.controls:
                col = np.empty(l_axis.count, dtype=np.int64)
                for k in range(l_axis.count):
                    col[k] = l_axis.project_scalar(self._Lnodes[k] + tau * u)
                self._jL.append(col)
            self._drifts = [
                np.asarray(drift_table(problem.dynamics, v, p_axis))
                for v in problem.tyches
            ]
            for v, table in zip(problem.tyches, self._drifts):
                if not np.isfinite(table).all():
                    bad = int(np.flatnonzero(~np.isfinite(table))[0])
                    raise NumericOverflow(
                        f"non-finite drift at P node {bad} for tyche {v}",
                        state=(None, float(self._Pnodes[bad])),
                    )
            stack = np.stack(self._drifts)
            self._drift_min = stack.min(axis=0)
            self._drift_max = stack.max(axis=0)

    @staticmethod
    def _hashable(dyn) -> bool:
        try:
            hash(dyn)
            return True
        except TypeError:
            return False

    def successor_flat(self, cells: np.ndarray, u_idx: int, v_idx: int) -> np.ndarray:
        """Flat successor cell per candidate cell, OUTSIDE where lost."""
        if self.separable:
            nP = self._nP
            iL = cells // nP
            iP = cells - iL * nP
            jL = self._jL[u_idx][iL]
            fP = self._drifts[v_idx][iP] + self._Lnodes[iL]
            Pp = self._Pnodes[iP] + self.problem.tau * fP
            jP = self._p_axis.project_array(Pp)
            out = jL * nP + jP
            out[(jL == OUTSIDE) | (jP == OUTSIDE)] = OUTSIDE
            return out
        u = self.problem.controls[u_idx]
        v = self.problem.tyches[v_idx]
        tau = self.problem.tau
        dyn = self.problem.dynamics
        out = np.empty(cells.shape, dtype=np.int64)
        for i, c in enumerate(cells):
            x = self.grid.node(int(c))
            nxt = dyn.step(x, u, v, tau)
            if not all(math.isfinite(comp) for comp in nxt):
                raise NumericOverflow(
                    f"non-finite successor at cell {int(c)} (node {x})", state=x
                )
            out[i] = self.grid.project(nxt)
        return out

    def test_cells(self, cells: np.ndarray, member_flat: np.ndarray) -> np.ndarray:
        """Exists-u-for-all-v survival test against a membership bitmap."""
        survivors = np.zeros(cells.size, dtype=bool)
        active = np.arange(cells.size)
        for u_idx in range(len(self.problem.controls)):
            if active.size == 0:
                break
            alive = active
            for v_idx in range(len(self.problem.tyches)):
                succ = self.successor_flat(cells[alive], u_idx, v_idx)
                ok = succ != OUTSIDE
                ok[ok] = member_flat[succ[ok]]
                alive = alive[ok]
                if alive.size == 0:
                    break
            if alive.size:
                survivors[alive] = True
                active = active[~survivors[active]]
        return survivors

    def control_pass_table(self, cells: np.ndarray, member_flat: np.ndarray) -> np.ndarray:
        """Boolean (n_cells, n_controls): control passes the for-all-v test."""
        nu = len(self.problem.controls)
        table = np.zeros((cells.size, nu), dtype=bool)
        for u_idx in range(nu):
            alive = np.arange(cells.size)
            for v_idx in range(len(self.problem.tyches)):
                succ = self.successor_flat(cells[alive], u_idx, v_idx)
                ok = succ != OUTSIDE
                ok[ok] = member_flat[succ[ok]]
                alive = alive[ok]
                if alive.size == 0:
                    break
            table[alive, u_idx] = True
        return table

    def dirty_after_removal(self, members: np.ndarray, removed_mask: np.ndarray) -> np.ndarray:
        """Members whose successor range can reach a removed cell (superset)."""
        if not self.separable:
            return members
        pad = self.problem.dilation_radius
        nL, nP = self.grid.shape
        counts = removed_mask.reshape(nL, nP).astype(np.int64)
        sat = np.zeros((nL + 1, nP + 1), dtype=np.int64)
        sat[1:, 1:] = counts.cumsum(axis=0).cumsum(axis=1)

        jl = np.stack(self._jL)
        jl_masked = np.where(jl == OUTSIDE, np.iinfo(np.int64).max, jl)
        row_lo_axis = np.clip(jl_masked.min(axis=0) - pad, 0, nL - 1)
        jl_masked = np.where(jl == OUTSIDE, np.iinfo(np.int64).min, jl)
        row_hi_axis = np.clip(jl_masked.max(axis=0) + pad, 0, nL - 1)

        iL = members // nP
        iP = members - iL * nP
        tau = self.problem.tau
        lo_val = self._Pnodes[iP] + tau * (self._drift_min[iP] + self._Lnodes[iL])
        hi_val = self._Pnodes[iP] + tau * (self._drift_max[iP] + self._Lnodes[iL])
        col_lo = np.clip(self._p_axis.project_array(lo_val), 0, nP - 1) - pad
        col_hi = np.clip(self._p_axis.project_array(hi_val), 0, nP - 1) + pad
        col_lo = np.clip(col_lo, 0, nP - 1)
        col_hi = np.clip(col_hi, 0, nP - 1)
        r0 = row_lo_axis[iL]
        r1 = row_hi_axis[iL]
        hit = (
            sat[r1 + 1, col_hi + 1]
            - sat[r0, col_hi + 1]
            - sat[r1 + 1, col_lo]
            + sat[r0, col_lo]
        ) > 0
        # A cell whose own membership image changed is handled implicitly:
        # removed cells leave G before the next sweep.
        return members[hit]


def _membership_image(mask: np.ndarray, radius: int, mode: str) -> np.ndarray:
    if radius == 0:
        return mask
    if mode == "optimistic":
        return _dilate_mask(mask, radius)
    return ~_dilate_mask(~mask, radius)


def _run_test(engine: _Engine, cells: np.ndarray, member_flat: np.ndarray,
              workers: int, pool: ThreadPoolExecutor | None) -> np.ndarray:
    if pool is None or workers <= 1 or cells.size < 4096:
        return engine.test_cells(cells, member_flat)
    chunks = np.array_split(cells, workers)
    parts = list(pool.map(lambda ch: engine.test_cells(ch, member_flat), chunks))
    return np.concatenate(parts)


def _solve(problem: DiscreteProblem, workers: int = 1, progress=None, cancel=None) -> SolveReport:
    t0 = time.perf_counter()
    K = problem.constraint
    grid = problem.grid
    if K.is_empty:
        return SolveReport(
            kernel=K.copy(), iterations=0, removed_per_iteration=[],
            wall_time=time.perf_counter() - t0, empty=True,
        )
    engine = _Engine(problem)
    G = K.mask.reshape(-1).copy()
    cap = 10 * max(a.count for a in grid.axes)
    removed_counts: list[int] = []
    dirty = np.flatnonzero(G)
    iteration = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while True:
            if cancel is not None and cancel.is_set():
                raise JobCancelled("solve cancelled")
            iteration += 1
            if iteration > cap:
                raise NonConvergence(
                    f"no fixed point after {cap} sweeps; this indicates a bug"
                )
            member_flat = _membership_image(
                G.reshape(grid.shape), problem.dilation_radius, problem.dilation_mode
            ).reshape(-1)
            surv = _run_test(engine, dirty, member_flat, workers, pool)
            removed = dirty[~surv]
            removed_counts.append(int(removed.size))
            if removed.size == 0:
                break
            G[removed] = False
            if not G.any():
                break
            removed_mask = np.zeros(grid.size, dtype=bool)
            removed_mask[removed] = True
            members = np.flatnonzero(G)
            dirty = engine.dirty_after_removal(members, removed_mask)
            if progress is not None:
                progress(iteration, int(removed.size), int(members.size))
    finally:
        if pool is not None:
            pool.shutdown(wait=False)
    kernel = CellSet(grid, G.reshape(grid.shape))
    return SolveReport(
        kernel=kernel,
        iterations=iteration,
        removed_per_iteration=removed_counts,
        wall_time=time.perf_counter() - t0,
        empty=kernel.is_empty,
    )


def viability_kernel(problem: DiscreteProblem, workers: int = 1, progress=None,
                     cancel=None) -> SolveReport:
    """Largest viable subset of the constraint set (singleton tyche)."""
    if len(problem.tyches) != 1:
        raise ContractViolation(
            "viability_kernel expects a singleton tyche list; "
            "use guaranteed_kernel for tychastic problems"
        )
    return _solve(problem, workers=workers, progress=progress, cancel=cancel)


def guaranteed_kernel(problem: DiscreteProblem, workers: int = 1, progress=None,
                      cancel=None) -> SolveReport:
    """Largest subset where one control works against every sampled tyche."""
    return _solve(problem, workers=workers, progress=progress, cancel=cancel)


def extract_regulation(problem: DiscreteProblem, kernel: CellSet) -> RegulationMap:
    """Controls passing the successor test against the kernel, per kernel cell.

    ``kernel`` must be a fixed point of the solve rule; a kernel cell with
    no viable control is an internal inconsistency.
    """
    if kernel.grid != problem.grid:
        raise ContractViolation("kernel lives on a different grid")
    masks = np.zeros(problem.grid.size, dtype=np.uint64)
    cells = kernel.flat_indices()
    if cells.size == 0:
        return RegulationMap(problem.grid, problem.controls, masks)
    engine = _Engine(problem)
    member_flat = _membership_image(
        kernel.mask, problem.dilation_radius, problem.dilation_mode
    ).reshape(-1)
    table = engine.control_pass_table(cells, member_flat)
    bits = (table.astype(np.uint64) << np.arange(table.shape[1], dtype=np.uint64)).sum(
        axis=1, dtype=np.uint64
    )
    if not bits.all():
        bad = int(cells[int(np.flatnonzero(bits == 0)[0])])
        raise InternalInconsistency(
            f"kernel cell {bad} has no viable control; fixed point violated"
        )
    masks[cells] = bits
    return RegulationMap(problem.grid, problem.controls, masks)


def intersect_regulation(maps: list[RegulationMap], domain: CellSet) -> RegulationMap:
    """Per-cell intersection of control sets, restricted to ``domain``."""
    if not maps:
        raise ContractViolation("need at least one regulation map")
    first = maps[0]
    for m in maps[1:]:
        if m.grid != first.grid:
            raise ContractViolation("regulation maps live on different grids")
        if m.controls != first.controls:
            raise ContractViolation("regulation maps use different control samples")
    if domain.grid != first.grid:
        raise ContractViolation("domain lives on a different grid")
    acc = first.masks.copy()
    for m in maps[1:]:
        acc &= m.masks
    acc = np.where(domain.mask.reshape(-1), acc, np.uint64(0))
    return RegulationMap(first.grid, first.controls, acc)
