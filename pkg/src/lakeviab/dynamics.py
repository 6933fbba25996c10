"""Lake phosphorus dynamics: model families, Euler stepping, equilibria.

State is ``x = (L, P)`` with ``L`` the phosphorus inflow rate and ``P`` the
in-lake concentration (both µg·L⁻¹ based).  Every family shares the same
structure

    dL/dt = u
    dP/dt = -b·P + L + r·[(1-alpha)·P^q/(m^q+P^q) + alpha·P/(P + m·e^{-lam·(P-m)})]

``alpha = 0`` selects the power-law recycling curve (steepness ``q``),
``alpha = 1`` the exponential sigmoid (steepness ``lam``), intermediate
values blend the two.  The ``embedded`` family evaluates the same closed
form with some parameters supplied per call through a tyche vector, which
is how a whole group of divergent stakeholder models becomes one
uncertainty-carrying system.

Arithmetic is ordered so that the P-derivative splits exactly as
``drift(P) + L``: the solver precomputes ``drift`` per grid node and must
reproduce scalar stepping bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from itertools import product

import numpy as np

from .errors import ContractViolation, NumericOverflow

DEFAULT_TAU = 0.1

# Exponent cap: grid sweeps and runaway trajectories may probe states far
# outside the constraint window; both recycling branches saturate instead
# of overflowing.
_EXP_CAP = 700.0

_TYCHE_PARAMS = ("b", "r", "m", "q", "lam", "alpha")


@dataclass(frozen=True)
class LakeState:
    """State of the lake: inflow rate L and concentration P, both >= 0."""

    L: float
    P: float

    def __post_init__(self):
        if self.L < 0 or self.P < 0:
            raise ContractViolation("lake state requires L >= 0 and P >= 0")

    def __iter__(self):
        return iter((self.L, self.P))


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the blended recycling model.

    ``q`` only matters when ``alpha < 1`` and ``lam`` only when
    ``alpha > 0``; the unused one may carry any positive placeholder.
    """

    b: float
    r: float
    m: float
    q: float = 1.0
    lam: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if not self.b > 0:
            raise ContractViolation("loss rate b must be positive")
        if self.r < 0:
            raise ContractViolation("max recycling rate r must be >= 0")
        if not self.m > 0:
            raise ContractViolation("half-saturation m must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ContractViolation("blend weight alpha must lie in [0, 1]")
        if self.alpha < 1.0 and not self.q > 0:
            raise ContractViolation("steepness q must be positive when alpha < 1")
        if self.alpha > 0.0 and not self.lam > 0:
            raise ContractViolation("steepness lam must be positive when alpha > 0")


@dataclass(frozen=True)
class ParamInterval:
    """Componentwise parameter box; point parameters have lower == upper."""

    lower: ModelParams
    upper: ModelParams

    def __post_init__(self):
        for name in _TYCHE_PARAMS:
            if getattr(self.lower, name) > getattr(self.upper, name):
                raise ContractViolation(f"interval for {name} has lower > upper")

    def is_point(self) -> bool:
        return all(
            getattr(self.lower, n) == getattr(self.upper, n) for n in _TYCHE_PARAMS
        )

    def width(self, name: str) -> float:
        return getattr(self.upper, name) - getattr(self.lower, name)


@dataclass(frozen=True)
class ControlBox:
    """Admissible inflow-variation rates [u_min, u_max]."""

    u_min: float
    u_max: float

    def __post_init__(self):
        if self.u_min > self.u_max:
            raise ContractViolation("control box requires u_min <= u_max")

    def samples(self, n: int) -> tuple[float, ...]:
        """``n`` evenly spaced controls, endpoints always included."""
        if n < 1:
            raise ContractViolation("need at least one control sample")
        if n == 1:
            return (self.u_min,)
        return tuple(np.linspace(self.u_min, self.u_max, n).tolist())


@dataclass(frozen=True)
class TycheBox:
    """Ordered, named closed intervals, one per tyche coordinate."""

    names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ContractViolation("tyche names must be unique")
        if not (len(self.names) == len(self.lower) == len(self.upper)):
            raise ContractViolation("tyche box fields must have equal length")
        for name, lo, hi in zip(self.names, self.lower, self.upper):
            if lo > hi:
                raise ContractViolation(f"tyche interval {name} is empty")

    @property
    def dim(self) -> int:
        return len(self.names)

    def interval(self, name: str) -> tuple[float, float]:
        i = self.names.index(name)
        return self.lower[i], self.upper[i]

    def contains(self, v, tol: float = 0.0) -> bool:
        return all(
            lo - tol <= vi <= hi + tol
            for vi, lo, hi in zip(v, self.lower, self.upper)
        )

    def axis_samples(
        self, counts: dict[str, int], extra: dict[str, tuple[float, ...]] | None = None
    ) -> list[tuple[float, ...]]:
        """Endpoint-inclusive uniform samples per axis, plus injected points.

        ``extra`` points outside the interval are rejected; duplicates
        collapse.  Returns one sorted tuple per coordinate.
        """
        out = []
        for name, lo, hi in zip(self.names, self.lower, self.upper):
            n = counts.get(name, 2 if hi > lo else 1)
            if lo == hi:
                vals = {lo}
            else:
                if n < 2:
                    raise ContractViolation(
                        f"tyche axis {name} needs >= 2 samples to include endpoints"
                    )
                vals = set(np.linspace(lo, hi, n).tolist())
            for p in (extra or {}).get(name, ()):
                if not lo <= p <= hi:
                    raise ContractViolation(
                        f"injected sample {p} outside tyche interval {name}"
                    )
                vals.add(float(p))
            out.append(tuple(sorted(vals)))
        return out

    def sample_grid(
        self, counts: dict[str, int], extra: dict[str, tuple[float, ...]] | None = None
    ) -> tuple[tuple[float, ...], ...]:
        """Cartesian product of :meth:`axis_samples` in axis order."""
        return tuple(product(*self.axis_samples(counts, extra)))


def _recycling(P: float, m: float, q: float, lam: float, alpha: float) -> float:
    """Blended recycling fraction in [0, 1]; exactly one branch when alpha is 0 or 1.

    Both branches are evaluated in saturating forms so states far outside
    the constraint window stay finite.  No recycling without phosphorus:
    P <= 0 returns 0.
    """
    if P <= 0.0:
        return 0.0
    t = q * math.log(P / m)
    if t > _EXP_CAP:
        t = _EXP_CAP
    elif t < -_EXP_CAP:
        t = -_EXP_CAP
    rq = 1.0 / (1.0 + math.exp(-t))
    e = lam * (m - P)
    if e > _EXP_CAP:
        e = _EXP_CAP
    elif e < -_EXP_CAP:
        e = -_EXP_CAP
    rl = P / (P + m * math.exp(e))
    return (1.0 - alpha) * rq + alpha * rl


def _drift(P: float, p: ModelParams) -> float:
    """dP/dt minus the inflow term: depends on P and parameters only."""
    return -p.b * P + p.r * _recycling(P, p.m, p.q, p.lam, p.alpha)


@dataclass(frozen=True)
class DynamicsSpec:
    """A stakeholder's model, or the group's tyche-carrying embedding.

    ``family`` is one of ``"S"`` (power-law recycling), ``"Sprime"``
    (exponential sigmoid), ``"B"`` (explicit blend) or ``"embedded"``.
    For ``embedded``, ``tyche`` names the parameters supplied per call;
    ``params`` holds the fixed ones.
    """

    family: str
    params: ModelParams
    tyche: TycheBox | None = None

    def __post_init__(self):
        if self.family not in ("S", "Sprime", "B", "embedded"):
            raise ContractViolation(f"unknown model family {self.family!r}")
        if self.family == "embedded":
            if self.tyche is None:
                raise ContractViolation("embedded family requires a tyche box")
            for name in self.tyche.names:
                if name not in _TYCHE_PARAMS:
                    raise ContractViolation(f"tyche names unknown parameter {name!r}")
        elif self.tyche is not None:
            raise ContractViolation("point families carry no tyche box")

    @property
    def tyche_dim(self) -> int:
        return self.tyche.dim if self.tyche is not None else 0

    def resolve(self, v: tuple[float, ...] = ()) -> ModelParams:
        """Parameters with tyche coordinates substituted in."""
        if len(v) != self.tyche_dim:
            raise ContractViolation(
                f"tyche vector of dimension {len(v)} does not match "
                f"family {self.family!r} (expects {self.tyche_dim})"
            )
        if not v:
            return self.params
        return replace(self.params, **dict(zip(self.tyche.names, v)))

    def p_drift(self, P: float, v: tuple[float, ...] = ()) -> float:
        """The P-derivative less the inflow term: dP/dt = p_drift(P) + L."""
        return _drift(P, self.resolve(v))

    def vector_field(self, x, u: float, v: tuple[float, ...] = ()):
        L, P = x
        return (u, self.p_drift(P, v) + L)

    def step(self, x, u: float, v: tuple[float, ...] = (), tau: float = DEFAULT_TAU):
        L, P = x
        fP = self.p_drift(P, v) + L
        return (L + tau * u, P + tau * fP)


def model_s(b: float, r: float, m: float, q: float) -> DynamicsSpec:
    """Power-law recycling model."""
    return DynamicsSpec("S", ModelParams(b=b, r=r, m=m, q=q, lam=0.0, alpha=0.0))


def model_sprime(b: float, r: float, m: float, lam: float) -> DynamicsSpec:
    """Exponential-sigmoid recycling model."""
    return DynamicsSpec("Sprime", ModelParams(b=b, r=r, m=m, q=1.0, lam=lam, alpha=1.0))


def model_blend(
    b: float, r: float, m: float, q: float, lam: float, alpha: float
) -> DynamicsSpec:
    return DynamicsSpec("B", ModelParams(b=b, r=r, m=m, q=q, lam=lam, alpha=alpha))


def eval_vector_field(model, x, u: float, v: tuple[float, ...] = ()):
    """State derivative (dL/dt, dP/dt); non-finite results raise.

    ``model`` is anything with a ``vector_field`` method (a point family,
    the parameter-box embedding, or the ball/hull embeddings).
    """
    f = model.vector_field(tuple(x), u, tuple(v))
    if not all(math.isfinite(c) for c in f):
        raise NumericOverflow(f"non-finite derivative at state {tuple(x)}", state=tuple(x))
    return f


def step_discrete(model, x, u: float, v: tuple[float, ...] = (), tau: float = DEFAULT_TAU):
    """One explicit Euler step ``x + tau * f(x, u, v)``."""
    if not tau > 0:
        raise ContractViolation("time step tau must be positive")
    nxt = model.step(tuple(x), u, tuple(v), tau)
    if not all(math.isfinite(c) for c in nxt):
        raise NumericOverflow(f"non-finite successor of state {tuple(x)}", state=tuple(x))
    return nxt


def equilibria_inflow(model: DynamicsSpec, P: float) -> float:
    """Inflow L(P) that makes P an equilibrium: L = b·P - r·recycle(P)."""
    if model.tyche_dim != 0:
        raise ContractViolation("equilibria curve needs point parameters")
    return -_drift(P, model.params)


@lru_cache(maxsize=100_000)
def _drift_table_cached(spec: DynamicsSpec, v: tuple[float, ...], axis_key) -> np.ndarray:
    lo, count, spacing = axis_key
    params = spec.resolve(v)
    table = np.empty(count)
    for k in range(count):
        table[k] = _drift(lo + k * spacing, params)
    table.setflags(write=False)
    return table


def drift_table(spec: DynamicsSpec, v: tuple[float, ...], p_axis) -> np.ndarray:
    """``p_drift`` evaluated at every node of a grid axis (cached).

    Built by scalar evaluation at each node so solver sweeps agree exactly
    with :func:`step_discrete`.
    """
    return _drift_table_cached(spec, tuple(v), (p_axis.lo, p_axis.count, p_axis.spacing))
