"""Command-line driver.

Subcommands: ``solve`` (group kernel), ``members`` (per-member kernels),
``consensus`` (verdict plus witness search), ``oracle`` (analytic
boundary), ``traj`` (simulate a trajectory), ``diff`` (compare rasters),
``serve`` (HTTP job service).  Scenario arguments accept file paths or
packaged golden names (``fig1``, ``bourget_group``, ...).

Exit codes: 0 success, 1 errors, 2 empty kernel under ``--expect-nonempty``.
"""

from __future__ import annotations

import argparse
import sys

from . import raster
from .errors import ScenarioError
from .scenario import GOLDEN_SCENARIOS, load_scenario


def _add_common(p, with_workers=True):
    p.add_argument("scenario", help="scenario file path or packaged name")
    p.add_argument("--nodes", type=int, default=None,
                   help="override nodes per axis")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--no-figures", action="store_true",
                   help="skip figure rendering")
    if with_workers:
        p.add_argument("--workers", type=int, default=1,
                       help="sweep worker threads")


def _progress_printer(quiet):
    if quiet:
        return None

    def cb(iteration, removed, remaining):
        print(f"  sweep {iteration}: removed {removed}, remaining {remaining}",
              file=sys.stderr)

    return cb


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lakeviab",
        description="viability kernels and consensus analysis for lake management scenarios",
    )
    ap.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compute the group (guaranteed) kernel")
    _add_common(p)
    p.add_argument("--expect-nonempty", action="store_true",
                   help="exit 2 when the kernel is empty")
    p.add_argument("--no-regulation", action="store_true",
                   help="skip regulation-map extraction")

    p = sub.add_parser("members", help="compute each member's kernel")
    _add_common(p)

    p = sub.add_parser("consensus", help="verdict for the kernel intersection")
    _add_common(p)
    p.add_argument("--radius", type=int, default=None,
                   help="dilation radius for the consensus test")
    p.add_argument("--horizon", type=int, default=200,
                   help="witness search horizon (steps)")

    p = sub.add_parser("oracle", help="analytic kernel boundary for a point member")
    _add_common(p, with_workers=False)
    p.add_argument("--member", default=None, help="member id (default: first)")

    p = sub.add_parser("traj", help="simulate one trajectory")
    _add_common(p, with_workers=False)
    p.add_argument("--start", required=True, help="start state as L,P")
    p.add_argument("--policy", required=True,
                   help="constant:U | schedule:t0:u0,t1:u1,... | selector:min|max|first")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--member", default=None, help="member id (default: first)")

    p = sub.add_parser("diff", help="compare two kernel rasters")
    p.add_argument("a")
    p.add_argument("b")

    p = sub.add_parser("serve", help="run the HTTP job service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--jobs", type=int, default=1, help="concurrent compute jobs")
    p.add_argument("--workers", type=int, default=1, help="sweep workers per job")
    p.add_argument("--workdir", default=None, help="artifact directory")

    p = sub.add_parser("scenarios", help="list packaged scenarios")
    return ap


def _parse_policy(text: str) -> dict:
    kind, _, rest = text.partition(":")
    if kind == "constant":
        return {"kind": "constant", "u": float(rest)}
    if kind == "schedule":
        times, values = [], []
        for item in rest.split(","):
            t, _, v = item.partition(":")
            times.append(float(t))
            values.append(float(v))
        return {"kind": "schedule", "times": times, "values": values}
    if kind == "selector":
        return {"kind": "selector", "mode": rest or "first"}
    raise ScenarioError(f"unknown policy {text!r}", "policy")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    from . import workbench

    if args.command == "scenarios":
        for name in GOLDEN_SCENARIOS:
            print(name)
        return 0

    if args.command == "serve":
        from .service import serve

        serve(args.host, args.port, jobs=args.jobs, workers=args.workers,
              workdir=args.workdir)
        return 0

    if args.command == "diff":
        cells_a, hash_a = raster.read(args.a)
        cells_b, hash_b = raster.read(args.b)
        if cells_a.grid != cells_b.grid:
            print("grids differ")
            return 1
        sym = cells_a.symmetric_difference(cells_b).popcount
        print(f"cells {cells_a.popcount} vs {cells_b.popcount}; "
              f"symmetric difference {sym}; hashes {hash_a} vs {hash_b}")
        return 0 if sym == 0 else 1

    scn = load_scenario(args.scenario)
    progress = _progress_printer(args.quiet)
    figures = not args.no_figures

    if args.command == "solve":
        arts = workbench.run_solve(
            scn, args.out, nodes=args.nodes, workers=args.workers,
            figures=figures, with_regulation=not args.no_regulation,
            progress=progress,
        )
        rep = arts.report
        print(f"{scn.name}: kernel {rep.kernel.popcount} cells, "
              f"{rep.iterations} sweeps, empty={rep.empty}")
        for name, path in sorted(arts.files.items()):
            print(f"  wrote {path}")
        if args.expect_nonempty and rep.empty:
            return 2
        return 0

    if args.command == "members":
        results, files = workbench.run_members(
            scn, args.out, nodes=args.nodes, workers=args.workers,
            figures=figures, progress=progress,
        )
        for r in results:
            print(f"{r.member_id}: {r.kind} kernel {r.kernel.popcount} cells "
                  f"({r.report.iterations} sweeps)")
        for name, path in sorted(files.items()):
            print(f"  wrote {path}")
        return 0

    if args.command == "consensus":
        out = workbench.run_consensus(
            scn, args.out, nodes=args.nodes, workers=args.workers,
            radius=args.radius, figures=figures, horizon=args.horizon,
            progress=progress,
        )
        verdict = out["verdict"]
        print(f"{scn.name}: intersection {out['intersection'].popcount} cells, "
              f"consensus={verdict.ok}")
        if out["witness"] is not None:
            w = out["witness"]
            print(f"witness: member {w.member_id} cell {w.start_cell} ({w.reason})")
        for name, path in sorted(out["files"].items()):
            print(f"  wrote {path}")
        return 0

    if args.command == "oracle":
        out = workbench.run_oracle(scn, args.out, member_id=args.member,
                                   nodes=args.nodes, figures=figures)
        b = out["boundary"]
        print(f"{scn.name}: case {b.case}, region {out['region'].popcount} cells")
        for name, path in sorted(out["files"].items()):
            print(f"  wrote {path}")
        return 0

    if args.command == "traj":
        L, _, P = args.start.partition(",")
        out = workbench.run_trajectory(
            scn, args.out, (float(L), float(P)), _parse_policy(args.policy),
            steps=args.steps, member_id=args.member, nodes=args.nodes,
            figures=figures,
        )
        traj = out["trajectory"]
        print(f"{scn.name}: {len(traj.t)} states, exited={traj.exited}"
              + (f" at step {traj.exit_step}" if traj.exited else ""))
        for name, path in sorted(out["files"].items()):
            print(f"  wrote {path}")
        return 0

    raise ScenarioError(f"unknown command {args.command!r}", "command")


if __name__ == "__main__":
    sys.exit(main())
