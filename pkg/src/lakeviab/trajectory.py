"""Closed-loop Euler rollouts under constant, scheduled, or map-guided policies."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NumericOverflow
from .grid import OUTSIDE, CellSet
from .solver import RegulationMap


@dataclass(frozen=True)
class ConstantPolicy:
    u: float


@dataclass(frozen=True)
class SchedulePolicy:
    """Piecewise-constant u(t): value[k] applies from times[k] on.

    ``times`` must be strictly increasing and start at 0.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ContractViolation("schedule needs matching times and values")
        if self.times[0] != 0.0:
            raise ContractViolation("schedule must start at t = 0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ContractViolation("schedule times must be strictly increasing")

    def at(self, t: float) -> float:
        return self.values[bisect_right(self.times, t) - 1]


@dataclass(frozen=True)
class SelectorPolicy:
    """Pick a control from a regulation map at the current cell.

    ``mode``: ``min`` (lowest u), ``max`` (highest), or ``first`` (lowest
    sample index; identical to ``min`` for ascending samples).  When the
    current cell carries no controls (e.g. the state drifted into the
    dilated fringe) the nearest mapped cell within ``search_radius``
    Chebyshev rings supplies them, lowest flat index winning ties.
    """

    regulation: RegulationMap
    mode: str = "first"
    search_radius: int = 3

    def __post_init__(self):
        if self.mode not in ("min", "max", "first"):
            raise ContractViolation(f"unknown selector mode {self.mode!r}")

    def _controls_at(self, flat: int) -> tuple[int, ...]:
        allowed = self.regulation.allowed(flat)
        if allowed:
            return allowed
        grid = self.regulation.grid
        if flat == OUTSIDE:
            return ()
        idx = grid.unravel(flat)
        for r in range(1, self.search_radius + 1):
            best = None
            for neighbor in _ring(idx, r, grid.shape):
                nf = grid.ravel(neighbor)
                if self.regulation.masks[nf] and (best is None or nf < best):
                    best = nf
            if best is not None:
                return self.regulation.allowed(best)
        return ()

    def choose(self, x) -> float | None:
        flat = self.regulation.grid.project(tuple(x))
        allowed = self._controls_at(flat)
        if not allowed:
            return None
        if self.mode == "max":
            return self.regulation.controls[allowed[-1]]
        return self.regulation.controls[allowed[0]]


def _ring(center, radius, shape):
    """Chebyshev ring of multi-indices at exactly ``radius``, clipped."""
    lo = [max(c - radius, 0) for c in center]
    hi = [min(c + radius, n - 1) for c in center]
    if len(center) == 2:
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                if max(abs(i - center[0]), abs(j - center[1])) == radius:
                    yield (i, j)
    else:
        ranges = [range(a, b + 1) for a, b in zip(lo, hi)]

        def rec(prefix, dims):
            if not dims:
                if max(abs(p - c) for p, c in zip(prefix, center)) == radius:
                    yield tuple(prefix)
                return
            for v in dims[0]:
                yield from rec(prefix + [v], dims[1:])

        yield from rec([], ranges)


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (n, 2) columns L, P
    controls: np.ndarray  # (n-1,) control applied leaving each state
    inside: np.ndarray  # (n,) state's cell belongs to the stop set
    exited: bool
    exit_step: int | None = None
    stalled: bool = False  # selector found no control

    def to_csv(self) -> str:
        lines = ["t,L,P,u,inside"]
        for k in range(len(self.t)):
            u = self.controls[k] if k < len(self.controls) else math.nan
            u_txt = "" if math.isnan(u) else repr(float(u))
            lines.append(
                f"{self.t[k]!r},{self.states[k, 0]!r},{self.states[k, 1]!r},"
                f"{u_txt},{int(self.inside[k])}"
            )
        return "\n".join(lines) + "\n"


def simulate(
    model,
    x0,
    policy,
    tau: float,
    horizon: int,
    stop_set: CellSet | None = None,
    tyche: tuple[float, ...] = (),
) -> Trajectory:
    """Euler rollout with the policy choosing u each step.

    Truncates with the exit flag as soon as a state's cell leaves
    ``stop_set`` (or the grid).  Selector policies with no control
    available stop the rollout and mark it stalled.
    """
    if horizon < 1:
        raise ContractViolation("horizon must be >= 1")
    if not tau > 0:
        raise ContractViolation("tau must be positive")
    x = (float(x0[0]), float(x0[1]))
    ts = [0.0]
    states = [x]
    controls: list[float] = []
    inside = [_inside(stop_set, x)]
    exited = not inside[0]
    exit_step = 0 if exited else None
    stalled = False
    if not exited:
        for k in range(horizon):
            t = k * tau
            if isinstance(policy, ConstantPolicy):
                u = policy.u
            elif isinstance(policy, SchedulePolicy):
                u = policy.at(t)
            elif isinstance(policy, SelectorPolicy):
                chosen = policy.choose(x)
                if chosen is None:
                    stalled = True
                    break
                u = chosen
            else:
                raise ContractViolation(f"unknown policy {type(policy).__name__}")
            nxt = model.step(x, u, tyche, tau)
            if not all(math.isfinite(c) for c in nxt):
                raise NumericOverflow(
                    f"non-finite state at step {k + 1}", state=nxt
                )
            x = (float(nxt[0]), float(nxt[1]))
            ts.append((k + 1) * tau)
            states.append(x)
            controls.append(float(u))
            ok = _inside(stop_set, x)
            inside.append(ok)
            if not ok:
                exited = True
                exit_step = k + 1
                break
    return Trajectory(
        t=np.asarray(ts),
        states=np.asarray(states),
        controls=np.asarray(controls),
        inside=np.asarray(inside, dtype=bool),
        exited=exited,
        exit_step=exit_step,
        stalled=stalled,
    )


def _inside(stop_set: CellSet | None, x) -> bool:
    if stop_set is None:
        return True
    return stop_set.contains_flat(stop_set.grid.project(tuple(x)))
