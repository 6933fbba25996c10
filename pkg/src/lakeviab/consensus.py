"""Multi-member analysis: member kernels, consensus checking, counterexamples.

The intersection of member kernels is the intuitive group proposal, but a
state on the part of the intersection boundary contributed by member i's
kernel may, under the only control every member still accepts there, be
driven out of the intersection by member i's own dynamics.  Consensus is
therefore checked directly: a candidate set is a consensus solution when
every cell keeps at least one shared control and the set is viable for
each member under the shared map.  A guaranteed kernel of the group
embedding passes by construction; intersections generally do not.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .grid import OUTSIDE, CellSet
from .solver import (
    DiscreteProblem,
    RegulationMap,
    SolveReport,
    _Engine,
    _membership_image,
    extract_regulation,
    guaranteed_kernel,
    intersect_regulation,
)


@dataclass
class MemberResult:
    member_id: str
    problem: DiscreteProblem
    report: SolveReport
    kind: str  # "viability" | "guaranteed"

    @property
    def kernel(self) -> CellSet:
        return self.report.kernel


@dataclass
class ConsensusVerdict:
    ok: bool
    degenerate: bool
    coverage_ok: bool
    uncovered_cells: np.ndarray
    member_failures: dict[str, np.ndarray]
    radius: int

    def summary_lines(self) -> list[str]:
        lines = [
            f"consensus {str(self.ok).lower()}",
            f"degenerate {str(self.degenerate).lower()}",
            f"radius {self.radius}",
            f"uncovered_cells {len(self.uncovered_cells)}",
        ]
        for mid, cells in sorted(self.member_failures.items()):
            lines.append(f"member_fail {mid} {len(cells)}")
        return lines


def member_kernels(scenario, nodes: int | None = None, workers: int = 1,
                   solve_workers: int = 1, progress=None) -> list[MemberResult]:
    """Solve each member's own kernel on the shared grid.

    Members with point beliefs get plain viability kernels; interval
    beliefs get guaranteed kernels over their own sampled boxes.  Member
    solves are independent and run concurrently when ``workers > 1``.
    """
    problems = []
    for m in scenario.members:
        prob = scenario.member_problem(m.id, nodes)
        kind = "viability" if len(prob.tyches) == 1 else "guaranteed"
        problems.append((m.id, prob, kind))

    def run(entry):
        mid, prob, kind = entry
        report = guaranteed_kernel(prob, workers=solve_workers, progress=progress)
        return MemberResult(mid, prob, report, kind)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, problems))
    else:
        results = [run(entry) for entry in problems]
    return results


def check_consensus(
    candidate: CellSet,
    member_problems: list[tuple[str, DiscreteProblem]],
    shared: RegulationMap,
    radius: int | None = None,
) -> ConsensusVerdict:
    """Is ``candidate`` a consensus solution under the shared control map?

    Two conditions: (a) every candidate cell keeps at least one shared
    control; (b) for each member, from every candidate cell some shared
    control sends all of that member's sampled successors back into the
    candidate (dilated by ``radius`` cells).  An empty candidate is
    vacuously true and flagged degenerate.
    """
    if shared.grid != candidate.grid:
        raise ContractViolation("shared map lives on a different grid")
    if radius is None:
        radius = member_problems[0][1].dilation_radius if member_problems else 0
    cells = candidate.flat_indices()
    if cells.size == 0:
        return ConsensusVerdict(
            ok=True, degenerate=True, coverage_ok=True,
            uncovered_cells=np.empty(0, dtype=np.int64),
            member_failures={}, radius=radius,
        )
    shared_bits = shared.masks[cells]
    uncovered = cells[shared_bits == 0]
    coverage_ok = uncovered.size == 0

    member_failures: dict[str, np.ndarray] = {}
    member_flat = _membership_image(candidate.mask, radius, "optimistic").reshape(-1)
    for mid, prob in member_problems:
        if prob.grid != candidate.grid:
            raise ContractViolation(f"member {mid} problem lives on a different grid")
        if prob.controls != shared.controls:
            raise ContractViolation(
                f"member {mid} problem uses different control samples"
            )
        engine = _Engine(prob)
        table = engine.control_pass_table(cells, member_flat)
        bits = (
            table.astype(np.uint64) << np.arange(table.shape[1], dtype=np.uint64)
        ).sum(axis=1, dtype=np.uint64)
        failing = cells[(bits & shared_bits) == 0]
        if failing.size:
            member_failures[mid] = failing
    ok = coverage_ok and not member_failures
    return ConsensusVerdict(
        ok=ok, degenerate=False, coverage_ok=coverage_ok,
        uncovered_cells=uncovered, member_failures=member_failures, radius=radius,
    )


@dataclass
class Witness:
    member_id: str
    start_cell: int
    tyche: tuple[float, ...]
    reason: str  # "exit" | "no-shared-control"
    path: np.ndarray  # (n, 2) node states walked
    controls: np.ndarray  # (n-1,) controls applied

    def to_csv(self) -> str:
        lines = ["step,L,P,u"]
        for k, (L, P) in enumerate(self.path):
            u = repr(float(self.controls[k])) if k < len(self.controls) else ""
            lines.append(f"{k},{L!r},{P!r},{u}")
        return "\n".join(lines) + "\n"


def intersection_map(results: list[MemberResult]) -> tuple[CellSet, RegulationMap]:
    """Intersection of member kernels and of their regulation maps on it."""
    if not results:
        raise ContractViolation("need at least one member result")
    inter = results[0].kernel.copy()
    for r in results[1:]:
        inter = inter & r.kernel
    maps = []
    for r in results:
        reg = r.report.regulation
        if reg is None:
            reg = extract_regulation(r.problem, r.kernel)
        maps.append(reg)
    return inter, intersect_regulation(maps, inter)


def find_counterexample(
    results: list[MemberResult],
    horizon: int = 200,
    radius: int = 0,
) -> Witness | None:
    """Search the intersection boundary for a member-escaping cell.

    Walks the node chain: from each boundary cell, repeatedly picks the
    first shared control whose member successor cell stays in the
    (dilated) intersection; a cell where none does yields a witness whose
    illustrative path continues under the lowest shared control until it
    exits.  Cells proven safe are cached, so the scan is near-linear.
    """
    if len(results) < 2:
        raise ContractViolation("counterexample search needs at least two members")
    inter, shared = intersection_map(results)
    if inter.is_empty:
        raise ContractViolation("member kernels do not intersect")
    member_flat = _membership_image(inter.mask, radius, "optimistic").reshape(-1)
    grid = inter.grid
    scan = np.sort(inter.boundary().flat_indices())
    for mid_prob in [(r.member_id, r.problem) for r in results]:
        mid, prob = mid_prob
        engine = _Engine(prob)
        for v_idx, v in enumerate(prob.tyches):
            safe: set[int] = set()
            for start in scan:
                c = int(start)
                visited: list[int] = []
                for _ in range(horizon):
                    if c in safe:
                        break
                    visited.append(c)
                    allowed = shared.allowed(c)
                    if not allowed:
                        return _make_witness(
                            grid, engine, mid, int(start), v, v_idx,
                            visited, [], "no-shared-control",
                        )
                    nxt = None
                    for u_idx in allowed:
                        succ = int(
                            engine.successor_flat(
                                np.asarray([c], dtype=np.int64), u_idx, v_idx
                            )[0]
                        )
                        if succ != OUTSIDE and member_flat[succ]:
                            nxt = (u_idx, succ)
                            break
                    if nxt is None:
                        return _escape_witness(
                            grid, engine, shared, member_flat, mid,
                            int(start), v, v_idx, horizon,
                        )
                    c = nxt[1]
                    if not inter.mask.reshape(-1)[c]:
                        break  # inside the dilated fringe; map undefined there
                safe.update(visited)
    return None


def _escape_witness(grid, engine, shared, member_flat, mid, start, v, v_idx, horizon):
    path = [grid.node(start)]
    controls = []
    c = start
    for _ in range(horizon):
        allowed = shared.allowed(c)
        if not allowed:
            break
        u_idx = allowed[0]
        succ = int(
            engine.successor_flat(np.asarray([c], dtype=np.int64), u_idx, v_idx)[0]
        )
        controls.append(engine.problem.controls[u_idx])
        if succ == OUTSIDE:
            nxt_state = engine.problem.dynamics.step(
                grid.node(c), engine.problem.controls[u_idx], v, engine.problem.tau
            )
            path.append(tuple(nxt_state))
            break
        path.append(grid.node(succ))
        c = succ
        if not member_flat[c]:
            break
    return Witness(
        member_id=mid, start_cell=start, tyche=tuple(v), reason="exit",
        path=np.asarray(path, dtype=float), controls=np.asarray(controls, dtype=float),
    )


def _make_witness(grid, engine, mid, start, v, v_idx, visited, controls, reason):
    path = np.asarray([grid.node(c) for c in visited], dtype=float)
    return Witness(
        member_id=mid, start_cell=start, tyche=tuple(v), reason=reason,
        path=path, controls=np.asarray(controls, dtype=float),
    )
