"""Scenario files: schema, validation, unit conversion, problem assembly.

A scenario is the group project in one JSON document: the desirable window
(L_min, P_max and the inflow truncation), the admissible control box, the
member list with point or interval beliefs, embedding configuration and
discretization choices.  See ``docs/scenario.schema.json`` for the
published schema.

Values may be given in tons (state unit of the whole lake) or in
concentration units; tons are converted on load by dividing state-like
quantities (r, m, the window bounds, the control rates) by the lake
volume 3.6 and multiplying the sigmoid steepness ``lam`` by it.  The
canonical in-memory form is always concentration units, so the scenario
hash does not depend on the units the file happened to use.

Grid convention: the grid window *is* the constraint window.  The left
inflow edge is binding (states pushed below L_min are lost), the upper
inflow edge is the truncation of the unbounded direction (outward flow
clamps), P >= 0 clamps (an Euler step to negative P projects back to the
floor) and the P_max ceiling is binding.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources

from .dynamics import (
    ControlBox,
    DynamicsSpec,
    ModelParams,
    ParamInterval,
    TycheBox,
)
from .embedding import build_parameter_box_embedding
from .errors import ScenarioError
from .grid import Axis, CellSet, Grid
from .solver import DiscreteProblem

LAKE_VOLUME = 3.6  # 1e9 m^3; converts tons to concentration units

_FAMILIES = ("S", "Sprime", "B")
_PARAM_NAMES = ("b", "r", "m", "q", "lam", "alpha")
_DEFAULT_TYCHE_SAMPLES = {"alpha": 11, "b": 5, "q": 5, "lam": 5, "m": 5, "r": 5}
_STATE_LIKE = ("r", "m")  # member parameters scaled by the lake volume


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _as_interval(value, field_name: str) -> tuple[float, float]:
    if _is_number(value):
        return float(value), float(value)
    if (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(_is_number(v) for v in value)
    ):
        lo, hi = float(value[0]), float(value[1])
        if lo > hi:
            raise ScenarioError(f"{field_name}: interval lower exceeds upper", field_name)
        return lo, hi
    raise ScenarioError(f"{field_name}: expected a number or [lo, hi]", field_name)


@dataclass(frozen=True)
class MemberSpec:
    id: str
    family: str
    params: dict  # name -> float or (lo, hi)

    def interval(self, name: str) -> tuple[float, float]:
        v = self.params[name]
        return (v, v) if _is_number(v) else (v[0], v[1])

    def is_point(self) -> bool:
        return all(_is_number(v) for v in self.params.values())


@dataclass(frozen=True)
class Scenario:
    name: str
    l_min: float
    p_max: float
    l_truncation: float
    grid_nodes: int
    control: ControlBox
    members: tuple[MemberSpec, ...]
    embedding_kind: str = "parameter-box"
    embedding_overrides: dict = field(default_factory=dict)
    embedding_shared: tuple[str, ...] = ()
    tau: float = 0.1
    control_samples: int = 11
    tyche_samples: dict = field(default_factory=dict)
    dilation_radius: int = 0
    dilation_mode: str = "optimistic"
    inject_member_points: bool = True
    outputs: tuple[str, ...] = ("kernel", "report", "figures")

    # -- structure -----------------------------------------------------

    def grid(self, nodes: int | None = None) -> Grid:
        n = nodes or self.grid_nodes
        return Grid(
            (
                Axis("L", self.l_min, self.l_truncation, n, "outside", "clamp"),
                Axis("P", 0.0, self.p_max, n, "clamp", "outside"),
            )
        )

    def constraint_set(self, grid: Grid) -> CellSet:
        # the grid window is exactly the constraint window
        return grid.full_set()

    def controls(self) -> tuple[float, ...]:
        return self.control.samples(self.control_samples)

    # -- members ---------------------------------------------------------

    def member(self, member_id: str) -> MemberSpec:
        for m in self.members:
            if m.id == member_id:
                return m
        raise KeyError(member_id)

    def member_belief(self, m: MemberSpec) -> ParamInterval:
        """Member belief in blended-model coordinates."""
        alpha = {"S": (0.0, 0.0), "Sprime": (1.0, 1.0)}.get(m.family)
        vals_lo, vals_hi = {}, {}
        for name in _PARAM_NAMES:
            if name == "alpha" and alpha is not None:
                lo, hi = alpha
            elif name in m.params:
                lo, hi = m.interval(name)
            elif name == "q":
                lo = hi = 1.0
            elif name in ("lam", "alpha"):
                lo = hi = 0.0
            else:
                raise ScenarioError(
                    f"member {m.id}: missing parameter {name}", f"members.{m.id}.{name}"
                )
            vals_lo[name], vals_hi[name] = lo, hi
        if vals_lo["alpha"] > 0 and vals_lo["lam"] <= 0:
            raise ScenarioError(
                f"member {m.id}: family {m.family} needs lam > 0",
                f"members.{m.id}.lam",
            )
        return ParamInterval(ModelParams(**vals_lo), ModelParams(**vals_hi))

    def member_dynamics(self, m: MemberSpec) -> tuple[DynamicsSpec, tuple]:
        """Dynamics plus tyche samples for one member's own solve."""
        belief = self.member_belief(m)
        moving = [
            n for n in _PARAM_NAMES
            if getattr(belief.lower, n) != getattr(belief.upper, n)
        ]
        if not moving:
            return DynamicsSpec(m.family, belief.lower), ((),)
        box = TycheBox(
            names=tuple(moving),
            lower=tuple(getattr(belief.lower, n) for n in moving),
            upper=tuple(getattr(belief.upper, n) for n in moving),
        )
        spec = DynamicsSpec("embedded", belief.lower, box)
        counts = self._tyche_counts()
        return spec, box.sample_grid({n: counts[n] for n in moving})

    def member_representative(self, m: MemberSpec) -> DynamicsSpec:
        """Point model at the member's belief midpoints (for rollouts)."""
        belief = self.member_belief(m)
        mid = {
            n: 0.5 * (getattr(belief.lower, n) + getattr(belief.upper, n))
            for n in _PARAM_NAMES
        }
        return DynamicsSpec("B", ModelParams(**mid))

    def _tyche_counts(self) -> dict:
        counts = dict(_DEFAULT_TYCHE_SAMPLES)
        counts.update(self.tyche_samples)
        return counts

    # -- group embedding ---------------------------------------------------

    def group_dynamics(self) -> tuple[DynamicsSpec, tuple]:
        """Group embedding and its tyche sample grid.

        Member point values and each member's own interval samples are
        injected into the group sample axes, so every member's sampled
        tyche set is a subset of the group's: guaranteed kernels are then
        exactly contained in member kernels.
        """
        beliefs = [self.member_belief(m) for m in self.members]
        spec = build_parameter_box_embedding(
            beliefs,
            shared=self.embedding_shared,
            overrides={k: tuple(v) for k, v in self.embedding_overrides.items()},
        )
        counts = self._tyche_counts()
        extra: dict[str, tuple[float, ...]] = {}
        if self.inject_member_points:
            for name in spec.tyche.names:
                pts: set[float] = set()
                box_lo, box_hi = spec.tyche.interval(name)
                for belief in beliefs:
                    lo = getattr(belief.lower, name)
                    hi = getattr(belief.upper, name)
                    if name == "q" and belief.lower.alpha == belief.upper.alpha == 1.0:
                        continue
                    if name == "lam" and belief.lower.alpha == belief.upper.alpha == 0.0:
                        continue
                    if lo == hi:
                        vals = [lo]
                    else:
                        t = TycheBox((name,), (lo,), (hi,))
                        vals = [v[0] for v in t.sample_grid({name: counts[name]})]
                    pts.update(v for v in vals if box_lo <= v <= box_hi)
                if pts:
                    extra[name] = tuple(sorted(pts))
        return spec, spec.tyche.sample_grid(counts, extra)

    # -- problems ---------------------------------------------------------

    def member_problem(self, member_id: str, nodes: int | None = None) -> DiscreteProblem:
        m = self.member(member_id)
        spec, tyches = self.member_dynamics(m)
        grid = self.grid(nodes)
        return DiscreteProblem(
            dynamics=spec,
            grid=grid,
            constraint=self.constraint_set(grid),
            controls=self.controls(),
            tyches=tyches,
            tau=self.tau,
            dilation_radius=self.dilation_radius,
            dilation_mode=self.dilation_mode,
        )

    def group_problem(self, nodes: int | None = None) -> DiscreteProblem:
        spec, tyches = self.group_dynamics()
        grid = self.grid(nodes)
        return DiscreteProblem(
            dynamics=spec,
            grid=grid,
            constraint=self.constraint_set(grid),
            controls=self.controls(),
            tyches=tyches,
            tau=self.tau,
            dilation_radius=self.dilation_radius,
            dilation_mode=self.dilation_mode,
        )

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "units": "concentration",
            "constraint": {
                "l_min": self.l_min,
                "p_max": self.p_max,
                "l_truncation": self.l_truncation,
            },
            "grid": {"nodes_per_axis": self.grid_nodes},
            "control": {"u_min": self.control.u_min, "u_max": self.control.u_max},
            "members": [
                {"id": m.id, "family": m.family,
                 "params": {k: (list(v) if isinstance(v, tuple) else v)
                            for k, v in m.params.items()}}
                for m in self.members
            ],
            "embedding": {
                "kind": self.embedding_kind,
                "overrides": {k: list(v) for k, v in self.embedding_overrides.items()},
                "shared": list(self.embedding_shared),
            },
            "discretization": {
                "tau": self.tau,
                "control_samples": self.control_samples,
                "tyche_samples": dict(self.tyche_samples),
                "dilation_radius": self.dilation_radius,
                "dilation_mode": self.dilation_mode,
                "inject_member_points": self.inject_member_points,
            },
            "outputs": list(self.outputs),
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def _require(doc: dict, key: str, context: str):
    if key not in doc:
        raise ScenarioError(f"missing field {context}{key}", f"{context}{key}")
    return doc[key]


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be an object", "")
    name = _require(doc, "name", "")
    units = doc.get("units", "concentration")
    if units not in ("concentration", "tons"):
        raise ScenarioError(f"units: unknown unit row {units!r}", "units")
    scale = 1.0 / LAKE_VOLUME if units == "tons" else 1.0

    constraint = _require(doc, "constraint", "")
    l_min = float(_require(constraint, "l_min", "constraint.")) * scale
    p_max = float(_require(constraint, "p_max", "constraint.")) * scale
    l_trunc = float(constraint.get("l_truncation", 0.0)) * scale
    if l_trunc <= l_min:
        raise ScenarioError(
            "constraint.l_truncation must exceed l_min", "constraint.l_truncation"
        )
    if p_max <= 0:
        raise ScenarioError("constraint.p_max must be positive", "constraint.p_max")

    grid_doc = _require(doc, "grid", "")
    nodes = int(_require(grid_doc, "nodes_per_axis", "grid."))
    if nodes < 2:
        raise ScenarioError("grid.nodes_per_axis must be >= 2", "grid.nodes_per_axis")

    control_doc = _require(doc, "control", "")
    if "delta" in control_doc:
        delta = float(control_doc["delta"]) * scale
        if delta <= 0:
            raise ScenarioError("control.delta must be positive", "control.delta")
        control = ControlBox(-delta / 2.0, delta)
    else:
        control = ControlBox(
            float(_require(control_doc, "u_min", "control.")) * scale,
            float(_require(control_doc, "u_max", "control.")) * scale,
        )

    members_doc = _require(doc, "members", "")
    if not isinstance(members_doc, list) or not members_doc:
        raise ScenarioError("members must be a non-empty list", "members")
    members = []
    seen = set()
    for k, mdoc in enumerate(members_doc):
        ctx = f"members[{k}]."
        mid = str(_require(mdoc, "id", ctx))
        if mid in seen:
            raise ScenarioError(f"duplicate member id {mid!r}", f"{ctx}id")
        seen.add(mid)
        family = _require(mdoc, "family", ctx)
        if family not in _FAMILIES:
            raise ScenarioError(f"{ctx}family: unknown family {family!r}", f"{ctx}family")
        raw = dict(_require(mdoc, "params", ctx))
        needed = {"S": ("b", "r", "m", "q"), "Sprime": ("b", "r", "m", "lam"),
                  "B": ("b", "r", "m", "q", "lam", "alpha")}[family]
        params = {}
        for pname in needed:
            if pname not in raw:
                raise ScenarioError(
                    f"member {mid}: family {family} requires parameter {pname}",
                    f"{ctx}params.{pname}",
                )
            lo, hi = _as_interval(raw.pop(pname), f"{ctx}params.{pname}")
            if pname in _STATE_LIKE:
                lo, hi = lo * scale, hi * scale
            elif pname == "lam":
                lo, hi = lo / scale, hi / scale
            params[pname] = lo if lo == hi else (lo, hi)
        if raw:
            raise ScenarioError(
                f"member {mid}: unknown parameters {sorted(raw)}",
                f"{ctx}params.{sorted(raw)[0]}",
            )
        members.append(MemberSpec(mid, family, params))

    emb = doc.get("embedding", {})
    kind = emb.get("kind", "parameter-box")
    if kind != "parameter-box":
        raise ScenarioError(
            f"embedding.kind: only parameter-box scenarios are supported, got {kind!r}",
            "embedding.kind",
        )
    overrides = {}
    for pname, rng in (emb.get("overrides") or {}).items():
        if pname not in _PARAM_NAMES:
            raise ScenarioError(
                f"embedding.overrides: unknown parameter {pname!r}",
                f"embedding.overrides.{pname}",
            )
        lo, hi = _as_interval(rng, f"embedding.overrides.{pname}")
        if pname in _STATE_LIKE:
            lo, hi = lo * scale, hi * scale
        elif pname == "lam":
            lo, hi = lo / scale, hi / scale
        overrides[pname] = (lo, hi)
    shared = tuple(emb.get("shared", ()))

    disc = doc.get("discretization", {})
    tau = float(disc.get("tau", 0.1))
    if tau <= 0:
        raise ScenarioError("discretization.tau must be positive", "discretization.tau")
    control_samples = int(disc.get("control_samples", 11))
    if control_samples < 1:
        raise ScenarioError(
            "discretization.control_samples must be >= 1",
            "discretization.control_samples",
        )
    tyche_samples = {}
    for pname, cnt in (disc.get("tyche_samples") or {}).items():
        if pname not in _PARAM_NAMES:
            raise ScenarioError(
                f"discretization.tyche_samples: unknown parameter {pname!r}",
                f"discretization.tyche_samples.{pname}",
            )
        tyche_samples[pname] = int(cnt)
    radius = int(disc.get("dilation_radius", 0))
    mode = disc.get("dilation_mode", "optimistic")
    if mode not in ("optimistic", "guaranteed-safe"):
        raise ScenarioError(
            f"discretization.dilation_mode: unknown mode {mode!r}",
            "discretization.dilation_mode",
        )
    if radius < 0:
        raise ScenarioError(
            "discretization.dilation_radius must be >= 0",
            "discretization.dilation_radius",
        )

    scn = Scenario(
        name=str(name),
        l_min=l_min,
        p_max=p_max,
        l_truncation=l_trunc,
        grid_nodes=nodes,
        control=control,
        members=tuple(members),
        embedding_kind=kind,
        embedding_overrides=overrides,
        embedding_shared=shared,
        tau=tau,
        control_samples=control_samples,
        tyche_samples=tyche_samples,
        dilation_radius=radius,
        dilation_mode=mode,
        inject_member_points=bool(disc.get("inject_member_points", True)),
        outputs=tuple(doc.get("outputs", ("kernel", "report", "figures"))),
    )
    # surface belief problems (e.g. missing lam) at load time
    for m in scn.members:
        scn.member_belief(m)
    if not math.isfinite(l_min) or not math.isfinite(p_max):
        raise ScenarioError("constraint bounds must be finite", "constraint")
    return scn


def load_scenario(source) -> Scenario:
    """Load a scenario from a path, a packaged golden name, or a dict."""
    if isinstance(source, dict):
        return scenario_from_dict(source)
    text = None
    name = str(source)
    try:
        with open(name, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError:
        try:
            text = packaged_scenario_text(name)
        except KeyError:
            raise ScenarioError(
                f"cannot read scenario {name!r}: not a file or packaged name", "name"
            ) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}", "") from None
    return scenario_from_dict(doc)


def save_scenario(scn: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scn.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


GOLDEN_SCENARIOS = (
    "fig1",
    "two_member_2.3",
    "bourget_group",
    "bourget_group_paperbox",
    "bourget_pmax15",
    "bourget_pmax15_mtyche",
)


def packaged_scenario_text(name: str) -> str:
    fname = name if name.endswith(".scn") else f"{name}.scn"
    base = resources.files("lakeviab").joinpath("data")
    f = base.joinpath(fname)
    if not f.is_file():
        raise KeyError(name)
    return f.read_text(encoding="utf-8")
