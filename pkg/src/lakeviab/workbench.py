"""Scenario-level runs producing the artifact set shared by CLI and service.

Every run writes deterministic text artifacts (rasters, boundary and
trajectory tables, reports) plus rendered figures into an output
directory.  Artifact bytes depend only on the scenario content (and
requested grid override), never on worker count, so the CLI and the job
service produce identical files.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import raster
from .consensus import (
    MemberResult,
    check_consensus,
    find_counterexample,
    intersection_map,
    member_kernels,
)
from .dynamics import equilibria_inflow
from .errors import ScenarioError
from .grid import CellSet
from .oracle2d import analytic_boundary, boundary_to_csv, rasterize_region
from .scenario import Scenario
from .solver import (
    SolveReport,
    extract_regulation,
    guaranteed_kernel,
)
from .trajectory import ConstantPolicy, SchedulePolicy, SelectorPolicy, simulate


def _write_atomic(path: str, data: str | bytes) -> None:
    mode = "wb" if isinstance(data, bytes) else "w"
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-artifact-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def report_text(kind: str, scn: Scenario, problem, report: SolveReport) -> str:
    lines = [
        "report solve",
        f"scenario {scn.name}",
        f"hash {scn.digest()}",
        f"kind {kind}",
        f"grid {'x'.join(str(a.count) for a in problem.grid.axes)}",
        f"tau {problem.tau!r}",
        f"controls {len(problem.controls)}",
        f"tyches {len(problem.tyches)}",
        f"dilation {problem.dilation_radius} {problem.dilation_mode}",
    ]
    lines.extend(report.summary_lines())
    lines.append("end")
    return "\n".join(lines) + "\n"


@dataclass
class SolveArtifacts:
    scenario: Scenario
    problem: object
    report: SolveReport
    files: dict[str, str]  # artifact name -> path


def run_solve(
    scn: Scenario,
    out_dir: str,
    nodes: int | None = None,
    workers: int = 1,
    figures: bool = True,
    with_regulation: bool = True,
    progress=None,
    cancel=None,
) -> SolveArtifacts:
    problem = scn.group_problem(nodes)
    kind = "viability" if len(problem.tyches) == 1 else "guaranteed"
    report = guaranteed_kernel(problem, workers=workers, progress=progress, cancel=cancel)
    if with_regulation and not report.empty:
        report.regulation = extract_regulation(problem, report.kernel)
    files: dict[str, str] = {}
    raster_path = os.path.join(out_dir, "kernel.rst")
    _write_atomic(raster_path, raster.dumps(report.kernel, scn.digest()))
    files["kernel.rst"] = raster_path
    rep_path = os.path.join(out_dir, "report.txt")
    _write_atomic(rep_path, report_text(kind, scn, problem, report))
    files["report.txt"] = rep_path
    if figures:
        from .figures import render_kernels

        fig_path = os.path.join(out_dir, "kernel.png")
        render_kernels(
            fig_path, problem.grid,
            [(scn.name, report.kernel, "#808080")],
            equilibria=_equilibria_polyline(scn),
            title=f"{scn.name}: {kind} kernel",
        )
        files["kernel.png"] = fig_path
    return SolveArtifacts(scn, problem, report, files)


def _equilibria_polyline(scn: Scenario) -> np.ndarray | None:
    member = scn.members[0]
    belief = scn.member_belief(member)
    if not belief.is_point():
        mid = scn.member_representative(member)
        model = mid
    else:
        from .dynamics import DynamicsSpec

        model = DynamicsSpec("B", belief.lower)
    ps = np.linspace(0.0, scn.p_max, 400)
    ls = np.array([equilibria_inflow(model, float(p)) for p in ps])
    keep = (ls >= scn.l_min) & (ls <= scn.l_truncation)
    if not keep.any():
        return None
    return np.column_stack([ls, ps])[keep]


def run_members(
    scn: Scenario,
    out_dir: str,
    nodes: int | None = None,
    workers: int = 1,
    figures: bool = True,
    progress=None,
) -> tuple[list[MemberResult], dict[str, str]]:
    results = member_kernels(scn, nodes=nodes, workers=min(workers, len(scn.members)),
                             solve_workers=1, progress=progress)
    files: dict[str, str] = {}
    for res in results:
        name = f"member_{res.member_id}.rst"
        path = os.path.join(out_dir, name)
        _write_atomic(path, raster.dumps(res.kernel, scn.digest()))
        files[name] = path
    if figures:
        from .figures import render_kernels

        palette = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#aa3377"]
        layers = [
            (r.member_id, r.kernel, palette[i % len(palette)])
            for i, r in enumerate(results)
        ]
        path = os.path.join(out_dir, "members.png")
        render_kernels(path, results[0].kernel.grid, layers,
                       equilibria=_equilibria_polyline(scn),
                       title=f"{scn.name}: member kernels")
        files["members.png"] = path
    return results, files


def run_consensus(
    scn: Scenario,
    out_dir: str,
    nodes: int | None = None,
    workers: int = 1,
    radius: int | None = None,
    figures: bool = True,
    horizon: int = 200,
    progress=None,
) -> dict:
    """Member kernels, intersection verdict, witness search, group verdict."""
    results, files = run_members(scn, out_dir, nodes=nodes, workers=workers,
                                 figures=figures, progress=progress)
    member_problems = [(r.member_id, r.problem) for r in results]
    inter, shared = intersection_map(results)
    verdict = check_consensus(inter, member_problems, shared, radius=radius)
    witness = None
    if not inter.is_empty and len(results) >= 2:
        witness = find_counterexample(results, horizon=horizon,
                                      radius=radius if radius is not None else 0)

    inter_path = os.path.join(out_dir, "intersection.rst")
    _write_atomic(inter_path, raster.dumps(inter, scn.digest()))
    files["intersection.rst"] = inter_path

    lines = ["report consensus", f"scenario {scn.name}", f"hash {scn.digest()}"]
    lines.extend(verdict.summary_lines())
    if witness is not None:
        lines.append(
            f"witness member {witness.member_id} cell {witness.start_cell} "
            f"reason {witness.reason}"
        )
    else:
        lines.append("witness none")
    lines.append("end")
    rep_path = os.path.join(out_dir, "consensus.txt")
    _write_atomic(rep_path, "\n".join(lines) + "\n")
    files["consensus.txt"] = rep_path
    if witness is not None:
        w_path = os.path.join(out_dir, "witness.csv")
        _write_atomic(w_path, witness.to_csv())
        files["witness.csv"] = w_path
    if figures:
        from .figures import render_kernels

        overlays = [
            (r.member_id, r.kernel, c)
            for r, c in zip(results, ["#4477aa", "#ee6677", "#228833", "#ccbb44"])
        ]
        overlays.append(("intersection", inter, "#000000"))
        traj = witness.path if witness is not None else None
        path = os.path.join(out_dir, "consensus.png")
        render_kernels(path, inter.grid, overlays, trajectory=traj,
                       title=f"{scn.name}: intersection and witness")
        files["consensus.png"] = path
    return {
        "results": results,
        "intersection": inter,
        "shared": shared,
        "verdict": verdict,
        "witness": witness,
        "files": files,
    }


def run_oracle(
    scn: Scenario,
    out_dir: str,
    member_id: str | None = None,
    nodes: int | None = None,
    figures: bool = True,
) -> dict:
    member = scn.member(member_id) if member_id else scn.members[0]
    belief = scn.member_belief(member)
    if not belief.is_point():
        raise ScenarioError(
            f"member {member.id} has interval beliefs; the analytic boundary "
            "needs point parameters",
            "member",
        )
    from .dynamics import DynamicsSpec

    model = DynamicsSpec("B", belief.lower)
    grid = scn.grid(nodes)
    h = min(a.spacing for a in grid.axes)
    boundary = analytic_boundary(
        model, scn.l_min, scn.p_max, scn.control.u_min, scn.l_truncation,
        max_vertex_spacing=h / 3.0,
    )
    files: dict[str, str] = {}
    b_path = os.path.join(out_dir, "boundary.csv")
    _write_atomic(b_path, boundary_to_csv(boundary))
    files["boundary.csv"] = b_path
    region = rasterize_region(boundary, grid)
    r_path = os.path.join(out_dir, "oracle_region.rst")
    _write_atomic(r_path, raster.dumps(region, scn.digest()))
    files["oracle_region.rst"] = r_path
    if figures:
        from .figures import render_kernels

        path = os.path.join(out_dir, "boundary.png")
        render_kernels(
            path, grid, [("analytic region", region, "#bbbbbb")],
            boundary=boundary.vertices if len(boundary.vertices) else None,
            equilibria=_equilibria_polyline(scn),
            title=f"{scn.name}: analytic kernel boundary ({boundary.case})",
        )
        files["boundary.png"] = path
    return {"boundary": boundary, "region": region, "files": files}


def make_policy(spec: dict, regulation=None):
    kind = spec.get("kind")
    if kind == "constant":
        return ConstantPolicy(float(spec["u"]))
    if kind == "schedule":
        return SchedulePolicy(tuple(float(t) for t in spec["times"]),
                              tuple(float(v) for v in spec["values"]))
    if kind == "selector":
        if regulation is None:
            raise ScenarioError("selector policy needs a regulation map", "policy")
        return SelectorPolicy(regulation, spec.get("mode", "first"))
    raise ScenarioError(f"unknown policy kind {spec.get('kind')!r}", "policy.kind")


def run_trajectory(
    scn: Scenario,
    out_dir: str,
    start: tuple[float, float],
    policy_spec: dict,
    steps: int = 200,
    member_id: str | None = None,
    nodes: int | None = None,
    stop_set: CellSet | None = None,
    regulation=None,
    figures: bool = True,
) -> dict:
    member = scn.member(member_id) if member_id else scn.members[0]
    model = scn.member_representative(member)
    grid = scn.grid(nodes)
    if stop_set is None:
        stop_set = scn.constraint_set(grid)
    policy = make_policy(policy_spec, regulation)
    traj = simulate(model, start, policy, scn.tau, steps, stop_set)
    files: dict[str, str] = {}
    t_path = os.path.join(out_dir, "trajectory.csv")
    _write_atomic(t_path, traj.to_csv())
    files["trajectory.csv"] = t_path
    if figures:
        from .figures import render_kernels

        path = os.path.join(out_dir, "trajectory.png")
        render_kernels(path, grid, [("window", stop_set, "#dddddd")],
                       trajectory=traj.states,
                       equilibria=_equilibria_polyline(scn),
                       title=f"{scn.name}: trajectory ({member.id})")
        files["trajectory.png"] = path
    return {"trajectory": traj, "files": files}
