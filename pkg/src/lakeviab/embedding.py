"""Embedding a group of divergent member models into one tychastic system.

Three constructions:

* parameter-box: all members live in the blended family, so the group
  system is the same closed form with disagreeing parameters supplied by
  a tyche vector ranging over the componentwise hull of member beliefs.
* ball: group system is member 1's field plus an additive offset whose
  per-cell radius covers the worst disagreement observed on a probe set.
* convex hull: tyche weights mix the member fields; each member is
  recovered by an indicator weight vector.

``verify_embedding`` checks the defining property: for every member and
every (x, u) there is a tyche value reproducing the member's field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .dynamics import DynamicsSpec, ModelParams, ParamInterval, TycheBox, _TYCHE_PARAMS
from .errors import ContractViolation, EmbeddingViolation
from .grid import Grid

RESIDUAL_TOL = 1e-9

# Axis order follows the group model's tyche convention (b, alpha, q, lam),
# with m and r appended only when members disagree or a scenario widens them.
_CANONICAL_ORDER = ("b", "alpha", "q", "lam", "m", "r")


def _belief_uses(belief: ParamInterval, name: str) -> bool:
    if name == "q":
        return not (belief.lower.alpha == belief.upper.alpha == 1.0)
    if name == "lam":
        return not (belief.lower.alpha == belief.upper.alpha == 0.0)
    return True


def build_parameter_box_embedding(
    beliefs: list[ParamInterval],
    shared: tuple[str, ...] = (),
    overrides: dict[str, tuple[float, float]] | None = None,
) -> DynamicsSpec:
    """Group system over the hull of member beliefs.

    Parameters the members agree on stay fixed; the rest become tyche
    coordinates.  ``b`` and ``alpha`` are always tyche coordinates (the
    group box is meaningful even when degenerate), ``q``/``lam`` whenever
    some member uses that recycling branch, ``m``/``r`` only on actual
    disagreement.  ``shared`` parameters must agree exactly across
    members; ``overrides`` widen or add intervals (e.g. an extra ``m``
    tyche) after hulling.
    """
    if not beliefs:
        raise ContractViolation("need at least one member to embed")
    overrides = dict(overrides or {})

    hull: dict[str, tuple[float, float]] = {}
    for name in _TYCHE_PARAMS:
        users = [b for b in beliefs if _belief_uses(b, name)]
        if not users:
            continue
        lo = min(getattr(b.lower, name) for b in users)
        hi = max(getattr(b.upper, name) for b in users)
        hull[name] = (lo, hi)

    for name in shared:
        lo, hi = hull.get(name, (None, None))
        if lo is None or lo != hi:
            raise ContractViolation(
                f"members disagree on parameter {name!r} declared shared"
            )
        if name in overrides:
            raise ContractViolation(
                f"parameter {name!r} cannot be both shared and overridden"
            )

    intervals: dict[str, tuple[float, float]] = {}
    for name in _CANONICAL_ORDER:
        if name in overrides:
            intervals[name] = overrides.pop(name)
        elif name not in hull:
            continue
        elif name in ("b", "alpha"):
            intervals[name] = hull[name]
        elif name in ("q", "lam"):
            intervals[name] = hull[name]
        elif hull[name][0] != hull[name][1]:
            intervals[name] = hull[name]
    if overrides:
        raise ContractViolation(f"override names unknown: {sorted(overrides)}")

    names = tuple(intervals)
    box = TycheBox(
        names=names,
        lower=tuple(intervals[n][0] for n in names),
        upper=tuple(intervals[n][1] for n in names),
    )

    # Fixed parameters: midpoints are irrelevant for tyche-carried names;
    # use member-1 values for everything not in the box.
    base = beliefs[0].lower
    fixed = {}
    for name in _TYCHE_PARAMS:
        if name in intervals:
            fixed[name] = intervals[name][0] if name != "lam" else max(
                intervals[name][0], 1e-12
            )
        else:
            fixed[name] = hull.get(name, (getattr(base, name),) * 2)[0]
    # Keep the placeholder valid for the blend constraints.
    if "lam" not in intervals and fixed["alpha"] == 0.0:
        fixed["lam"] = 0.0
    return DynamicsSpec("embedded", ModelParams(**fixed), box)


@dataclass(frozen=True)
class BallEmbedding:
    """Member 1's field plus an additive ball offset with per-cell radius.

    Tyche values are unit-ball points; evaluation scales them by the
    radius of the cell containing ``x``.  Cells never probed during
    construction carry radius 0.
    """

    base: DynamicsSpec
    grid: Grid
    radii: np.ndarray  # flat, len == grid.size

    @property
    def tyche_dim(self) -> int:
        return 2

    def radius_at(self, x) -> float:
        flat = self.grid.project(tuple(x))
        return 0.0 if flat < 0 else float(self.radii[flat])

    def vector_field(self, x, u, v=()):
        if len(v) != 2:
            raise ContractViolation("ball embedding expects a 2-d tyche vector")
        fL, fP = self.base.vector_field(x, u)
        M = self.radius_at(x)
        return (fL + M * v[0], fP + M * v[1])

    def step(self, x, u, v=(), tau=0.1):
        L, P = x
        fL, fP = self.vector_field(x, u, v)
        return (L + tau * fL, P + tau * fP)

    @staticmethod
    def unit_samples(n_dirs: int) -> tuple[tuple[float, float], ...]:
        """Center plus ``n_dirs`` points on the unit circle."""
        out = [(0.0, 0.0)]
        for k in range(n_dirs):
            a = 2.0 * math.pi * k / n_dirs
            out.append((math.cos(a), math.sin(a)))
        return tuple(out)


@dataclass(frozen=True)
class HullEmbedding:
    """Convex combination of member fields, weights as tyche coordinates.

    The tyche vector is (w_2, ..., w_N) with w_i >= 0 and sum <= 1;
    member 1 takes the remaining weight.
    """

    members: tuple[DynamicsSpec, ...]

    def __post_init__(self):
        if len(self.members) < 1:
            raise ContractViolation("hull embedding needs at least one member")
        if len(self.members) > 8:
            raise ContractViolation(
                "hull embedding supports at most 8 members; use a ball embedding"
            )
        if any(m.tyche_dim for m in self.members):
            raise ContractViolation("hull members must have point parameters")

    @property
    def tyche_dim(self) -> int:
        return len(self.members) - 1

    def _weights(self, v):
        if len(v) != self.tyche_dim:
            raise ContractViolation("hull weight vector has wrong dimension")
        w_rest = [float(w) for w in v]
        if any(w < 0 for w in w_rest) or sum(w_rest) > 1.0 + 1e-12:
            raise ContractViolation("hull weights must be >= 0 with sum <= 1")
        return [1.0 - sum(w_rest)] + w_rest

    def p_drift(self, P, v=()):
        w = self._weights(v)
        return sum(wi * m.p_drift(P) for wi, m in zip(w, self.members))

    def vector_field(self, x, u, v=()):
        L, P = x
        return (u, self.p_drift(P, v) + L)

    def step(self, x, u, v=(), tau=0.1):
        L, P = x
        fP = self.p_drift(P, v) + L
        return (L + tau * u, P + tau * fP)

    def weight_samples(self, steps: int) -> tuple[tuple[float, ...], ...]:
        """Simplex grid of weights; indicator vertices always included."""
        axis = np.linspace(0.0, 1.0, max(steps, 2)).tolist()
        pts = {v for v in product(axis, repeat=self.tyche_dim) if sum(v) <= 1.0 + 1e-12}
        for i in range(self.tyche_dim):
            vertex = tuple(1.0 if j == i else 0.0 for j in range(self.tyche_dim))
            pts.add(vertex)
        pts.add(tuple(0.0 for _ in range(self.tyche_dim)))
        return tuple(sorted(pts))


def build_ball_embedding(
    members: list[DynamicsSpec], grid: Grid, probes: list[tuple[tuple[float, float], float]]
) -> BallEmbedding:
    """Per-cell worst-case disagreement radius around member 1's field."""
    if len(members) < 2:
        raise ContractViolation("ball embedding needs at least two members")
    if not probes:
        raise ContractViolation("probe set must not be empty")
    base = members[0]
    radii = np.zeros(grid.size)
    for x, u in probes:
        flat = grid.project(tuple(x))
        if flat < 0:
            continue
        f1 = base.vector_field(x, u)
        worst = 0.0
        for m in members[1:]:
            fi = m.vector_field(x, u)
            worst = max(worst, math.hypot(fi[0] - f1[0], fi[1] - f1[1]))
        if worst > radii[flat]:
            radii[flat] = worst
    radii.setflags(write=False)
    return BallEmbedding(base, grid, radii)


@dataclass(frozen=True)
class EmbeddingReport:
    max_residual: float
    samples: int
    worst: tuple  # (member index, x, u, residual)

    @property
    def ok(self) -> bool:
        return self.max_residual <= RESIDUAL_TOL


def _clamp_to_box(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


def verify_embedding(
    embedding,
    members,
    samples: int,
    window: tuple[float, float, float, float],
    controls: tuple[float, float],
    seed: int = 0,
    raise_on_violation: bool = True,
) -> EmbeddingReport:
    """Max residual of the embedding property over random (x, u, member).

    ``members`` are :class:`ParamInterval` beliefs for a parameter-box
    embedding and point :class:`DynamicsSpec` models for ball/hull ones.
    The minimizing tyche value is closed-form per kind: the member's own
    parameters (clamped into the box), the normalized field difference, or
    the indicator weights.  A residual above ``RESIDUAL_TOL`` raises
    unless ``raise_on_violation`` is false.
    """
    rng = np.random.default_rng(seed)
    L_lo, L_hi, P_lo, P_hi = window
    worst = (None, None, None, -1.0)
    for _ in range(samples):
        x = (float(rng.uniform(L_lo, L_hi)), float(rng.uniform(P_lo, P_hi)))
        u = float(rng.uniform(controls[0], controls[1]))
        i = int(rng.integers(len(members)))
        if isinstance(embedding, DynamicsSpec) and embedding.family == "embedded":
            belief: ParamInterval = members[i]
            point = {}
            for name in _TYCHE_PARAMS:
                lo, hi = getattr(belief.lower, name), getattr(belief.upper, name)
                point[name] = lo if lo == hi else float(rng.uniform(lo, hi))
            member_params = ModelParams(**point)
            member_field = DynamicsSpec("B", member_params).vector_field(x, u)
            v = tuple(
                _clamp_to_box(point[name], *embedding.tyche.interval(name))
                for name in embedding.tyche.names
            )
            group_field = embedding.vector_field(x, u, v)
        elif isinstance(embedding, BallEmbedding):
            member_field = members[i].vector_field(x, u)
            f1 = embedding.base.vector_field(x, u)
            M = embedding.radius_at(x)
            diff = (member_field[0] - f1[0], member_field[1] - f1[1])
            if M > 0:
                v = (
                    _clamp_to_box(diff[0] / M, -1.0, 1.0),
                    _clamp_to_box(diff[1] / M, -1.0, 1.0),
                )
                norm = math.hypot(*v)
                if norm > 1.0:
                    v = (v[0] / norm, v[1] / norm)
            else:
                v = (0.0, 0.0)
            group_field = embedding.vector_field(x, u, v)
        elif isinstance(embedding, HullEmbedding):
            member_field = members[i].vector_field(x, u)
            v = tuple(1.0 if j + 1 == i else 0.0 for j in range(embedding.tyche_dim))
            group_field = embedding.vector_field(x, u, v)
        else:
            raise ContractViolation(f"unknown embedding kind {type(embedding).__name__}")
        res = math.hypot(
            member_field[0] - group_field[0], member_field[1] - group_field[1]
        )
        if res > worst[3]:
            worst = (i, x, u, res)
    report = EmbeddingReport(max_residual=max(worst[3], 0.0), samples=samples, worst=worst)
    if raise_on_violation and not report.ok:
        raise EmbeddingViolation(
            f"embedding residual {report.max_residual:.3e} exceeds {RESIDUAL_TOL:.0e} "
            f"at member {worst[0]}, x={worst[1]}, u={worst[2]}",
            worst=worst,
        )
    return report
