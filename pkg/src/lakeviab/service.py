"""Local HTTP job service consumed by the browser workbench.

JSON over HTTP, stdlib server.  Endpoints:

    GET  /api/health                         -> {"status": "ok"}
    GET  /api/scenarios                      -> {"scenarios": [names]}
    POST /api/scenarios                      -> validated echo {scenario, hash}
    POST /api/jobs {scenario, kind, options} -> job record (queued)
    GET  /api/jobs                           -> {"jobs": [records]}
    GET  /api/jobs/<id>                      -> record with progress
    POST /api/jobs/<id>/cancel               -> record (cancelling/terminal)
    GET  /api/jobs/<id>/artifacts/<name>     -> artifact bytes
    POST /api/probe                          -> synchronous trajectory

Job kinds: ``solve`` (group kernel), ``members``, ``consensus``.  One
compute job runs at a time by default (``jobs`` bumps the pool).  Job
state moves monotonically queued -> running -> done|failed|cancelled;
artifacts appear only after a job finishes (written atomically), so a
cancelled job leaves none behind.

Validation failures return 400 with ``{"error", "field"}``; unknown jobs
or artifacts return 404.  See ``docs/api.schema.json``.
"""

from __future__ import annotations

import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from tempfile import mkdtemp

from .errors import JobCancelled, ScenarioError
from .scenario import GOLDEN_SCENARIOS, Scenario, load_scenario

_TERMINAL = ("done", "failed", "cancelled")
_ORDER = {"queued": 0, "running": 1, "done": 2, "failed": 2, "cancelled": 2}


@dataclass
class JobRecord:
    id: str
    kind: str
    scenario_name: str
    scenario_hash: str
    state: str = "queued"
    iteration: int = 0
    removed_last: int = 0
    cells_remaining: int | None = None
    error: str | None = None
    artifacts: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    cancel_event: threading.Event = field(default_factory=threading.Event)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def transition(self, state: str):
        with self.lock:
            if _ORDER[state] < _ORDER[self.state]:
                raise RuntimeError(f"illegal job transition {self.state} -> {state}")
            if self.state in _TERMINAL:
                return False
            self.state = state
            return True

    def to_json(self) -> dict:
        with self.lock:
            return {
                "id": self.id,
                "kind": self.kind,
                "scenario": self.scenario_name,
                "hash": self.scenario_hash,
                "state": self.state,
                "progress": {
                    "iteration": self.iteration,
                    "removed_last": self.removed_last,
                    "cells_remaining": self.cells_remaining,
                },
                "artifacts": sorted(self.artifacts),
                "summary": dict(self.summary),
                "error": self.error,
            }


class WorkbenchService:
    """Job queue, shared state, and request handlers behind the HTTP layer."""

    def __init__(self, workdir: str | None = None, jobs: int = 1, workers: int = 1,
                 figures: bool = True):
        self.workdir = workdir or mkdtemp(prefix="lakeviab-")
        self.pool = ThreadPoolExecutor(max_workers=max(jobs, 1))
        self.workers = workers
        self.figures = figures
        self.jobs: dict[str, JobRecord] = {}
        self.results: dict[str, dict] = {}
        self.lock = threading.Lock()

    # -- job lifecycle ---------------------------------------------------

    def submit(self, scenario_doc, kind: str, options: dict) -> JobRecord:
        if kind not in ("solve", "members", "consensus"):
            raise ScenarioError(f"unknown job kind {kind!r}", "kind")
        scn = load_scenario(scenario_doc)
        job = JobRecord(
            id=uuid.uuid4().hex[:12],
            kind=kind,
            scenario_name=scn.name,
            scenario_hash=scn.digest(),
        )
        with self.lock:
            self.jobs[job.id] = job
        self.pool.submit(self._run, job, scn, dict(options or {}))
        return job

    def _run(self, job: JobRecord, scn: Scenario, options: dict):
        from . import workbench

        if not job.transition("running"):
            return
        if job.cancel_event.is_set():
            job.transition("cancelled")
            return

        def progress(iteration, removed, remaining):
            with job.lock:
                job.iteration = iteration
                job.removed_last = removed
                job.cells_remaining = remaining
            if job.cancel_event.is_set():
                raise JobCancelled("cancelled")

        out_dir = f"{self.workdir}/jobs/{job.id}"
        nodes = options.get("nodes")
        try:
            if job.kind == "solve":
                arts = workbench.run_solve(
                    scn, out_dir, nodes=nodes, workers=self.workers,
                    figures=self.figures, progress=progress,
                    cancel=job.cancel_event,
                )
                job.summary = {
                    "kernel_cells": arts.report.kernel.popcount,
                    "empty": arts.report.empty,
                    "iterations": arts.report.iterations,
                }
                files = arts.files
                self.results[job.id] = {
                    "kernel": arts.report.kernel,
                    "regulation": arts.report.regulation,
                    "scenario": scn,
                    "problem": arts.problem,
                }
            elif job.kind == "members":
                results, files = workbench.run_members(
                    scn, out_dir, nodes=nodes, workers=self.workers,
                    figures=self.figures, progress=progress,
                )
                job.summary = {
                    r.member_id: {"kernel_cells": r.kernel.popcount, "kind": r.kind}
                    for r in results
                }
                self.results[job.id] = {"members": results, "scenario": scn}
            else:
                out = workbench.run_consensus(
                    scn, out_dir, nodes=nodes, workers=self.workers,
                    radius=options.get("radius"), figures=self.figures,
                    progress=progress,
                )
                v = out["verdict"]
                job.summary = {
                    "consensus": v.ok,
                    "intersection_cells": out["intersection"].popcount,
                    "witness": out["witness"].member_id if out["witness"] else None,
                }
                files = out["files"]
                self.results[job.id] = {
                    "intersection": out["intersection"],
                    "shared": out["shared"],
                    "scenario": scn,
                }
            with job.lock:
                job.artifacts = files
            job.transition("done")
        except JobCancelled:
            job.transition("cancelled")
        except Exception as exc:  # job failures are data for the client
            with job.lock:
                job.error = f"{type(exc).__name__}: {exc}"
            job.transition("failed")

    def cancel(self, job_id: str) -> JobRecord:
        job = self.get(job_id)
        job.cancel_event.set()
        job.transition("cancelled") if job.state == "queued" else None
        return job

    def get(self, job_id: str) -> JobRecord:
        with self.lock:
            if job_id not in self.jobs:
                raise KeyError(job_id)
            return self.jobs[job_id]

    # -- synchronous probe ------------------------------------------------

    def probe(self, payload: dict) -> dict:
        from .solver import RegulationMap
        from .trajectory import simulate
        from .workbench import make_policy

        start = payload.get("start")
        if (not isinstance(start, (list, tuple)) or len(start) != 2):
            raise ScenarioError("start must be [L, P]", "start")
        steps = int(payload.get("steps", 100))
        policy_spec = payload.get("policy") or {}
        regulation: RegulationMap | None = None
        stop_set = None
        if "job" in payload:
            result = self.results.get(payload["job"])
            if result is None or "kernel" not in result:
                raise KeyError(payload.get("job"))
            scn = result["scenario"]
            regulation = result.get("regulation")
            stop_set = result["kernel"]
        else:
            scn = load_scenario(payload.get("scenario"))
        member_id = payload.get("member")
        member = scn.member(member_id) if member_id else scn.members[0]
        model = scn.member_representative(member)
        grid = stop_set.grid if stop_set is not None else scn.grid()
        if stop_set is None:
            stop_set = scn.constraint_set(grid)
        policy = make_policy(policy_spec, regulation)
        traj = simulate(model, (float(start[0]), float(start[1])), policy,
                        scn.tau, steps, stop_set)
        return {
            "member": member.id,
            "states": [[float(a), float(b)] for a, b in traj.states],
            "controls": [float(u) for u in traj.controls],
            "inside": [bool(x) for x in traj.inside],
            "exited": traj.exited,
            "exit_step": traj.exit_step,
            "stalled": traj.stalled,
        }


def _make_handler(svc: WorkbenchService):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # quiet server
            pass

        def _send(self, code: int, payload, content_type="application/json"):
            if isinstance(payload, (dict, list)):
                body = json.dumps(payload).encode()
            elif isinstance(payload, str):
                body = payload.encode()
            else:
                body = payload
            self.send_response(code)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _error(self, code: int, message: str, fieldname=None):
            self._send(code, {"error": message, "field": fieldname})

        def _read_json(self):
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length) if length else b"{}"
            try:
                return json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"request body is not valid JSON: {exc}", "")

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()

        def do_GET(self):
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            try:
                if parts == ["api", "health"]:
                    return self._send(200, {"status": "ok"})
                if parts == ["api", "scenarios"]:
                    return self._send(200, {"scenarios": list(GOLDEN_SCENARIOS)})
                if len(parts) == 2 and parts[:1] == ["api"] and parts[1] == "jobs":
                    with svc.lock:
                        records = [j.to_json() for j in svc.jobs.values()]
                    return self._send(200, {"jobs": records})
                if len(parts) == 3 and parts[:2] == ["api", "jobs"]:
                    return self._send(200, svc.get(parts[2]).to_json())
                if (len(parts) == 5 and parts[:2] == ["api", "jobs"]
                        and parts[3] == "artifacts"):
                    job = svc.get(parts[2])
                    with job.lock:
                        path = job.artifacts.get(parts[4])
                    if path is None:
                        return self._error(404, f"no artifact {parts[4]!r}")
                    ctype = "image/png" if path.endswith(".png") else "text/plain"
                    with open(path, "rb") as fh:
                        return self._send(200, fh.read(), ctype)
                return self._error(404, f"no route {self.path!r}")
            except KeyError as exc:
                return self._error(404, f"unknown job {exc}")

        def do_POST(self):
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            try:
                if parts == ["api", "scenarios"]:
                    doc = self._read_json()
                    scn = load_scenario(doc)
                    return self._send(200, {"scenario": scn.to_dict(),
                                            "hash": scn.digest()})
                if parts == ["api", "jobs"]:
                    doc = self._read_json()
                    if "scenario" not in doc:
                        return self._error(400, "missing field scenario", "scenario")
                    job = svc.submit(doc["scenario"], doc.get("kind", "solve"),
                                     doc.get("options") or {})
                    return self._send(200, job.to_json())
                if len(parts) == 4 and parts[:2] == ["api", "jobs"] and parts[3] == "cancel":
                    return self._send(200, svc.cancel(parts[2]).to_json())
                if parts == ["api", "probe"]:
                    return self._send(200, svc.probe(self._read_json()))
                return self._error(404, f"no route {self.path!r}")
            except ScenarioError as exc:
                return self._error(400, str(exc), exc.field)
            except KeyError as exc:
                return self._error(404, f"unknown job {exc}")
            except (ValueError, TypeError) as exc:
                return self._error(400, str(exc))

    return Handler


def make_server(host: str = "127.0.0.1", port: int = 0, **kwargs):
    """Bound (server, service) pair; port 0 picks a free port."""
    svc = WorkbenchService(**kwargs)
    server = ThreadingHTTPServer((host, port), _make_handler(svc))
    return server, svc


def serve(host: str, port: int, jobs: int = 1, workers: int = 1,
          workdir: str | None = None) -> None:
    server, svc = make_server(host, port, jobs=jobs, workers=workers,
                              workdir=workdir)
    print(f"lakeviab service on http://{host}:{server.server_address[1]} "
          f"(artifacts in {svc.workdir})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
