"""Objective functions: general terminal costs and discounted stage costs.

A cost is evaluated per trajectory: it receives the observation path
(x_0, ..., x_T) and the full decision history (u_0, ..., u_T) and returns a
real number. Two forms exist:

* ``general``: an arbitrary bounded-below objective v(x, u).
* ``additive``: stage costs accumulated at lag l with discount gamma,

      v(x, u) = sum_{t=1..T} gamma^(t-1) * c_t(x_{t-l..t}, u_{t-l..t-1}),

  where window entries with negative stage index are dropped. The stage-t
  cost sees observations up to x_t but not the decision u_t taken after it.

Objectives can be plain Python callables or built from a JSON payload
(named builtin, polynomial, or lookup table), in which case they round-trip
through serialization.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import InputFormatError, MultistageError, UnboundedObjectiveError

Vector = tuple[float, ...]
Window = tuple[Vector, ...]

#: slack added on top of a declared Hoelder bound when checking it
HOLDER_SLACK = 1e-12


def x_window(paths: Sequence[Vector], t: int, lag: int) -> Window:
    """Observations x_{t-lag..t}, truncated at stage 0."""
    return tuple(paths[max(0, t - lag): t + 1])


def u_window(decisions: Sequence[Vector], t: int, lag: int) -> Window:
    """Decisions u_{t-lag..t-1}, truncated at stage 0."""
    return tuple(decisions[max(0, t - lag): t])


@dataclass(frozen=True)
class CostSpec:
    """Either a general objective or an additive lag-l stage-cost stack."""

    form: str
    objective: Callable[[Window, Window], float] | None = None
    stage_costs: tuple[Callable[[Window, Window], float], ...] | None = None
    gamma: float | None = None
    lag: int | None = None
    holder: tuple[float, float, float] | None = None
    payload: dict | None = None

    def __post_init__(self):
        if self.form == "general":
            if self.objective is None:
                raise InputFormatError("general cost needs an objective callable")
        elif self.form == "additive":
            if self.stage_costs is None or self.gamma is None or self.lag is None:
                raise InputFormatError("additive cost needs stage_costs, gamma and lag")
            if not -1.0 < self.gamma < 1.0:
                raise InputFormatError(f"gamma {self.gamma} outside (-1, 1)")
            if self.lag < 0:
                raise InputFormatError(f"lag {self.lag} is negative")
        else:
            raise InputFormatError(f"unknown cost form {self.form!r}")

    @classmethod
    def general(cls, objective, holder=None, payload=None) -> "CostSpec":
        return cls(form="general", objective=objective, holder=holder, payload=payload)

    @classmethod
    def additive(cls, stage_costs, gamma, lag, holder=None, payload=None) -> "CostSpec":
        return cls(
            form="additive",
            stage_costs=tuple(stage_costs),
            gamma=float(gamma),
            lag=int(lag),
            holder=holder,
            payload=payload,
        )

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, paths: Sequence[Vector], decisions: Sequence[Vector]) -> float:
        """Objective value on one trajectory with its full decision history."""
        if len(paths) != len(decisions):
            raise MultistageError(
                f"{len(paths)} observations but {len(decisions)} decisions"
            )
        if self.form == "general":
            value = float(self.objective(tuple(paths), tuple(decisions)))
        else:
            value = self._additive_sum(paths, decisions, len(paths) - 1)
        if not math.isfinite(value):
            raise UnboundedObjectiveError(
                f"objective evaluated to {value!r}; it must be finite on the grid"
            )
        return value

    def _additive_sum(self, paths, decisions, through: int) -> float:
        if len(self.stage_costs) < through:
            raise MultistageError(
                f"additive cost has {len(self.stage_costs)} stage costs but the "
                f"trajectory needs {through}"
            )
        total = 0.0
        for t in range(1, through + 1):
            c = self.stage_costs[t - 1](
                x_window(paths, t, self.lag), u_window(decisions, t, self.lag)
            )
            total += self.gamma ** (t - 1) * c
        return total

    def additive_prefix(self, paths, decisions, through: int) -> float:
        """Discounted stage costs accumulated through stage ``through``.

        Only needs decisions up to stage ``through - 1``; used to peel past
        costs off the value process when normalizing by the discount.
        """
        if self.form != "additive":
            raise MultistageError("prefix costs are defined for additive form only")
        return self._additive_sum(paths, decisions, through)


# -- objective builders ------------------------------------------------------


def poly_objective(terms: Sequence[tuple[float, Sequence[tuple[str, int, int, int]]]]):
    """Polynomial in path and decision entries.

    Each term is ``(coef, vars)`` with vars ``(role, stage, comp, power)``;
    role ``"x"`` indexes the observation path, ``"u"`` the decisions. For
    stage-cost use the stage index counts backwards from the window end
    (0 = latest entry); indices falling off a truncated window contribute 0.
    """

    def evaluate(xs: Window, us: Window) -> float:
        total = 0.0
        for coef, variables in terms:
            prod = coef
            for role, stage, comp, power in variables:
                seq = xs if role == "x" else us
                if 0 <= stage < len(seq):
                    prod *= seq[stage][comp] ** power
                else:
                    prod = 0.0
                    break
            total += prod
        return total

    return evaluate


def poly_window_cost(terms: Sequence[tuple[float, Sequence[tuple[str, int, int, int]]]]):
    """Stage cost polynomial with window-relative offsets.

    Offset 0 is the latest window entry (x_t, respectively u_{t-1}), offset
    1 the one before, and so on; offsets beyond a truncated window make the
    term vanish.
    """

    def evaluate(xw: Window, uw: Window) -> float:
        total = 0.0
        for coef, variables in terms:
            prod = coef
            for role, offset, comp, power in variables:
                seq = xw if role == "x" else uw
                pos = len(seq) - 1 - offset
                if pos >= 0:
                    prod *= seq[pos][comp] ** power
                else:
                    prod = 0.0
                    break
            total += prod
        return total

    return evaluate


def table_objective(entries: Sequence[dict], atol: float = 1e-9):
    """Lookup objective matching (x windows, u windows) within ``atol``."""
    parsed = [
        (
            tuple(tuple(float(v) for v in vec) for vec in e["x"]),
            tuple(tuple(float(v) for v in vec) for vec in e["u"]),
            float(e["value"]),
        )
        for e in entries
    ]

    def matches(key: Window, ref: Window) -> bool:
        if len(key) != len(ref):
            return False
        for a, b in zip(key, ref):
            if len(a) != len(b) or any(abs(x - y) > atol for x, y in zip(a, b)):
                return False
        return True

    def evaluate(xs: Window, us: Window) -> float:
        for ex, eu, value in parsed:
            if matches(xs, ex) and matches(us, eu):
                return value
        raise MultistageError(f"no table entry matches x={xs!r}, u={us!r}")

    return evaluate


def _builtin_quadratic_tracking(params: dict):
    weights = params.get("weights")

    def evaluate(xs: Window, us: Window) -> float:
        total = 0.0
        for t, u in enumerate(us):
            w = 1.0 if weights is None else float(weights[t])
            x = xs[t]
            total += w * sum((ui - x[i % len(x)]) ** 2 for i, ui in enumerate(u))
        return total

    return evaluate


def _builtin_sum_decisions(params: dict):
    def evaluate(xs: Window, us: Window) -> float:
        return float(sum(sum(u) for u in us))

    return evaluate


BUILTIN_OBJECTIVES = {
    "quadratic_tracking": _builtin_quadratic_tracking,
    "sum_decisions": _builtin_sum_decisions,
}


# -- JSON ---------------------------------------------------------------------


def _term_from_json(raw: dict) -> tuple[float, tuple[tuple[str, int, int, int], ...]]:
    variables = tuple(
        (str(role), int(stage), int(comp), int(power))
        for role, stage, comp, power in raw["vars"]
    )
    for role, _, _, _ in variables:
        if role not in ("x", "u"):
            raise InputFormatError(f"unknown variable role {role!r}")
    return float(raw["coef"]), variables


def _callable_from_json(spec: dict, window_relative: bool):
    if "poly" in spec:
        terms = [_term_from_json(term) for term in spec["poly"]["terms"]]
        return poly_window_cost(terms) if window_relative else poly_objective(terms)
    if "table" in spec:
        return table_objective(
            spec["table"]["entries"], atol=float(spec["table"].get("atol", 1e-9))
        )
    if "builtin" in spec:
        name = spec["builtin"]
        if name not in BUILTIN_OBJECTIVES:
            raise InputFormatError(
                f"unknown builtin objective {name!r}; "
                f"available: {sorted(BUILTIN_OBJECTIVES)}"
            )
        return BUILTIN_OBJECTIVES[name](spec.get("params", {}))
    raise InputFormatError("objective spec needs one of: poly, table, builtin")


def cost_from_json(data: dict) -> CostSpec:
    """Build a cost from its JSON payload; the payload is kept for round trips."""
    try:
        form = data["form"]
        holder = None
        if "holder" in data:
            h = data["holder"]
            holder = (float(h["C"]), float(h["alpha"]), float(h["delta"]))
        if form == "general":
            return CostSpec.general(
                _callable_from_json(data, window_relative=False),
                holder=holder,
                payload=data,
            )
        if form == "additive":
            stage_costs = tuple(
                _callable_from_json(spec, window_relative=True)
                for spec in data["stage_costs"]
            )
            return CostSpec.additive(
                stage_costs,
                gamma=float(data["gamma"]),
                lag=int(data["lag"]),
                holder=holder,
                payload=data,
            )
        raise InputFormatError(f"unknown cost form {form!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise InputFormatError(f"malformed cost JSON: {exc}") from exc


def cost_to_json(cost: CostSpec) -> dict:
    if cost.payload is None:
        raise InputFormatError(
            "cost was built from a raw callable and has no serializable payload"
        )
    return cost.payload


# -- Hoelder continuity summary ----------------------------------------------


@dataclass(frozen=True)
class HolderCheck:
    """Outcome of checking |v(x,u1) - v(x,u2)| <= C * ||u1 - u2||^alpha."""

    C: float
    alpha: float
    delta: float
    max_ratio: float
    pairs_checked: int
    ok: bool


def _history_matrix(histories: Sequence[Window]) -> np.ndarray:
    return np.asarray([[v for dec in h for v in dec] for h in histories], dtype=float)


def holder_check_values(
    histories: Sequence[Window],
    values: Sequence[float],
    C: float,
    alpha: float,
    delta: float,
) -> tuple[float, int, bool]:
    """Max |dv| / ||du||^alpha over pairs within delta, plus a pass flag."""
    if len(histories) < 2:
        return 0.0, 0, True
    mat = _history_matrix(histories)
    vals = np.asarray(values, dtype=float)
    diff = mat[:, None, :] - mat[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    dv = np.abs(vals[:, None] - vals[None, :])
    iu = np.triu_indices(len(histories), k=1)
    dist, dv = dist[iu], dv[iu]
    mask = (dist > 0.0) & (dist <= delta)
    if not mask.any():
        return 0.0, 0, True
    ratios = dv[mask] / dist[mask] ** alpha
    max_ratio = float(ratios.max())
    return max_ratio, int(mask.sum()), bool(max_ratio <= C + HOLDER_SLACK)


def verify_holder(tree, cls, cost: CostSpec, C: float, alpha: float, delta: float) -> HolderCheck:
    """Check the declared Hoelder data on every leaf trajectory of the grid.

    For each leaf, all feasible decision histories along its path are paired
    and the bound is checked for pairs closer than ``delta``.
    """
    from .scenario_tree import path as tree_path

    worst = 0.0
    pairs = 0
    for leaf in tree.leaves():
        grids = [cls.feasible[i] for i in tree.path_nodes(leaf)]
        histories = list(itertools.product(*grids))
        values = [cost.evaluate(tree_path(tree, leaf), h) for h in histories]
        ratio, n, _ = holder_check_values(histories, values, C, alpha, delta)
        worst = max(worst, ratio)
        pairs += n
    return HolderCheck(
        C=C, alpha=alpha, delta=delta, max_ratio=worst, pairs_checked=pairs,
        ok=worst <= C + HOLDER_SLACK,
    )


def empirical_holder_constant(tree, cls, cost: CostSpec, alpha: float, delta: float) -> float:
    """Smallest C that makes the Hoelder bound hold on the sampled grid."""
    check = verify_holder(tree, cls, cost, C=0.0, alpha=alpha, delta=delta)
    return check.max_ratio
