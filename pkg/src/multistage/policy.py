"""Nonanticipative decision processes on scenario trees.

A :class:`Policy` attaches one decision vector to every tree node, which
makes it adapted to the filtration by construction: the stage-t decision is
a function of the stage-t atom. A :class:`PolicyClass` attaches a finite
feasible set to every node and comes in two kinds:

* ``nodewise`` classes pick decisions per node independently. They are
  closed under pasting two members along any measurable set, i.e.
  decomposable by construction.
* ``history_blind`` classes force all nodes of a stage to share one value.
  With at least two same-stage nodes and two candidate values they are the
  simplest enumerable classes that are not decomposable.

The module also provides the bridge between the two representations of a
control process: leaf-indexed tables (one full decision sequence per
trajectory) and node-indexed policies, related by adaptedness checking and
factorization into stagewise functions of the history.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .exceptions import (
    EnumerationCapError,
    IncompleteFunctionError,
    InfeasiblePolicyError,
    InputFormatError,
    NotAdaptedError,
    PastingInfeasibleError,
    UnknownNodeError,
)
from .scenario_tree import ScenarioTree

#: default bound on the number of policies an enumeration may produce
DEFAULT_ENUMERATION_CAP = 10_000_000

#: componentwise tolerance for adaptedness checks
ADAPTED_TOL = 1e-12

Decision = tuple[float, ...]


@dataclass(frozen=True)
class Policy:
    """One decision vector per tree node; immutable."""

    decisions: dict[int, Decision]
    decision_dim: int

    def __post_init__(self):
        normalized = {
            int(k): tuple(float(x) for x in v) for k, v in self.decisions.items()
        }
        object.__setattr__(self, "decisions", normalized)
        for nid, dec in normalized.items():
            if len(dec) != self.decision_dim:
                raise InputFormatError(
                    f"decision at node {nid} has dimension {len(dec)}, "
                    f"expected {self.decision_dim}"
                )

    def decision_path(self, tree: ScenarioTree, node_id: int) -> tuple[Decision, ...]:
        """Decision history (u_0, ..., u_t) along the root-to-node path."""
        out = []
        for i in tree.path_nodes(node_id):
            if i not in self.decisions:
                raise IncompleteFunctionError(f"policy has no decision for node {i}")
            out.append(self.decisions[i])
        return tuple(out)


@dataclass(frozen=True)
class PolicyClass:
    """Finite feasible decision sets per node, with a sharing discipline."""

    feasible: dict[int, tuple[Decision, ...]]
    kind: str
    decision_dim: int

    def __post_init__(self):
        if self.kind not in ("nodewise", "history_blind"):
            raise InputFormatError(f"unknown class kind {self.kind!r}")
        normalized: dict[int, tuple[Decision, ...]] = {}
        for k, grid in self.feasible.items():
            entries = tuple(tuple(float(x) for x in dec) for dec in grid)
            if not entries:
                raise InputFormatError(f"feasible set at node {k} is empty")
            for dec in entries:
                if len(dec) != self.decision_dim:
                    raise InputFormatError(
                        f"feasible decision at node {k} has dimension {len(dec)}, "
                        f"expected {self.decision_dim}"
                    )
            normalized[int(k)] = entries
        object.__setattr__(self, "feasible", normalized)

    # -- structure ---------------------------------------------------------

    def stage_grid(self, tree: ScenarioTree, t: int) -> tuple[Decision, ...]:
        """Values available to every stage-t node at once.

        Ordered like the feasible list of the lowest-id stage-t node,
        filtered to membership in all other same-stage sets.
        """
        ids = tree.stage_nodes(t)
        if not ids:
            return ()
        first = self.feasible[ids[0]]
        rest = [set(self.feasible[i]) for i in ids[1:]]
        return tuple(u for u in first if all(u in s for s in rest))

    def feasible_at(self, tree: ScenarioTree, node_id: int) -> tuple[Decision, ...]:
        """Stage decisions achievable at one node (atom) of the tree."""
        if self.kind == "nodewise":
            return self.feasible[node_id]
        return self.stage_grid(tree, tree.node(node_id).stage)

    def count(self, tree: ScenarioTree) -> int:
        """Number of policies in the class."""
        total = 1
        if self.kind == "nodewise":
            for n in tree.nodes:
                total *= len(self.feasible[n.id])
        else:
            for t in range(tree.horizon + 1):
                total *= len(self.stage_grid(tree, t))
        return total

    def contains(self, tree: ScenarioTree, policy: Policy) -> bool:
        """Feasibility of a policy in this class (exact membership)."""
        for n in tree.nodes:
            if n.id not in policy.decisions:
                return False
            if policy.decisions[n.id] not in self.feasible[n.id]:
                return False
        if self.kind == "history_blind":
            for t in range(tree.horizon + 1):
                ids = tree.stage_nodes(t)
                if len({policy.decisions[i] for i in ids}) > 1:
                    return False
        return True


# -- enumeration -------------------------------------------------------------


def enumeration_slots(
    tree: ScenarioTree, cls: PolicyClass
) -> tuple[tuple[int, ...], tuple[tuple[Decision, ...], ...]]:
    """Free slots of the class and their candidate lists, in canonical order.

    Nodewise classes have one slot per node (ordered by id); history-blind
    classes have one slot per stage. The enumeration below iterates the
    Cartesian product of the candidate lists lexicographically, so runs are
    reproducible.
    """
    if cls.kind == "nodewise":
        slots = tuple(n.id for n in tree.nodes)
        grids = tuple(cls.feasible[i] for i in slots)
    else:
        slots = tuple(range(tree.horizon + 1))
        grids = tuple(cls.stage_grid(tree, t) for t in slots)
    return slots, grids


def iter_policy_indices(
    tree: ScenarioTree, cls: PolicyClass, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[tuple[int, ...]]:
    """Yield index tuples into the enumeration slots, lexicographically."""
    _, grids = enumeration_slots(tree, cls)
    count = cls.count(tree)
    if count > cap:
        raise EnumerationCapError(count, cap)
    if any(not g for g in grids):
        return iter(())
    return itertools.product(*(range(len(g)) for g in grids))


def policy_from_indices(
    tree: ScenarioTree, cls: PolicyClass, indices: Sequence[int]
) -> Policy:
    """Materialize the policy selected by one enumeration index tuple."""
    slots, grids = enumeration_slots(tree, cls)
    decisions: dict[int, Decision] = {}
    if cls.kind == "nodewise":
        for slot, grid, idx in zip(slots, grids, indices):
            decisions[slot] = grid[idx]
    else:
        for t, grid, idx in zip(slots, grids, indices):
            for nid in tree.stage_nodes(t):
                decisions[nid] = grid[idx]
    return Policy(decisions=decisions, decision_dim=cls.decision_dim)


def enumerate_policies(
    tree: ScenarioTree, cls: PolicyClass, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[Policy]:
    """Every policy of the class exactly once, in reproducible order."""
    for indices in iter_policy_indices(tree, cls, cap=cap):
        yield policy_from_indices(tree, cls, indices)


# -- adaptedness and factorization -------------------------------------------


def _leaf_table(
    tree: ScenarioTree, leafwise: Mapping[int, Sequence[Decision]]
) -> dict[int, tuple[Decision, ...]]:
    table: dict[int, tuple[Decision, ...]] = {}
    for leaf in tree.leaves():
        if leaf not in leafwise:
            raise IncompleteFunctionError(f"leaf {leaf} is missing from the table")
        seq = tuple(tuple(float(x) for x in dec) for dec in leafwise[leaf])
        if len(seq) != tree.horizon + 1:
            raise IncompleteFunctionError(
                f"leaf {leaf}: expected {tree.horizon + 1} stage decisions, got {len(seq)}"
            )
        table[leaf] = seq
    return table


def _agreement(values: Iterable[Decision], tol: float) -> bool:
    it = iter(values)
    ref = next(it)
    for v in it:
        if len(v) != len(ref):
            return False
        if any(abs(a - b) > tol for a, b in zip(ref, v)):
            return False
    return True


def check_adapted(
    tree: ScenarioTree,
    leafwise: Mapping[int, Sequence[Decision]],
    tol: float = ADAPTED_TOL,
) -> bool:
    """Whether a leaf-indexed control table is adapted to the filtration.

    True iff for every stage t and every stage-t node, the stage-t entry
    agrees (within ``tol``) across all leaves below that node.
    """
    table = _leaf_table(tree, leafwise)
    for n in tree.nodes:
        vals = (table[leaf][n.stage] for leaf in tree.leaves_below(n.id))
        if not _agreement(vals, tol):
            return False
    return True


def doob_dynkin_factorize(
    tree: ScenarioTree,
    leafwise: Mapping[int, Sequence[Decision]],
    tol: float = ADAPTED_TOL,
) -> Policy:
    """Factorize an adapted leaf table into one decision per node.

    The stage-t decision of the returned policy at a node is the common
    stage-t value of the table on the leaves below that node; evaluating
    the policy back along each leaf path reproduces the table. Raises
    :class:`NotAdaptedError` naming the offending node otherwise.
    """
    table = _leaf_table(tree, leafwise)
    decisions: dict[int, Decision] = {}
    dim: int | None = None
    for n in tree.nodes:
        leaves = tree.leaves_below(n.id)
        if not _agreement((table[leaf][n.stage] for leaf in leaves), tol):
            raise NotAdaptedError(n.id, n.stage)
        decisions[n.id] = table[leaves[0]][n.stage]
        dim = len(decisions[n.id]) if dim is None else dim
    return Policy(decisions=decisions, decision_dim=dim or 0)


def policy_to_leafwise(
    tree: ScenarioTree, policy: Policy
) -> dict[int, tuple[Decision, ...]]:
    """Evaluate a policy along every leaf path: the inverse of factorization."""
    return {leaf: policy.decision_path(tree, leaf) for leaf in tree.leaves()}


# -- pasting -----------------------------------------------------------------


def paste(
    tree: ScenarioTree,
    cls: PolicyClass,
    u1: Policy,
    u2: Policy,
    leaf_set: Iterable[int],
) -> Policy:
    """Paste two feasible policies along a set of trajectories.

    The result follows ``u1`` at nodes whose descendant leaves all lie in
    ``leaf_set`` and ``u2`` elsewhere. Nodewise classes are closed under
    this operation; for history-blind classes the result can leave the
    class, in which case :class:`PastingInfeasibleError` carries the pasted
    policy as non-decomposability evidence.
    """
    leaves = set(tree.leaves())
    chosen = set(int(i) for i in leaf_set)
    unknown = chosen - leaves
    if unknown:
        raise UnknownNodeError(f"not leaves of the tree: {sorted(unknown)}")
    for name, pol in (("u1", u1), ("u2", u2)):
        if not cls.contains(tree, pol):
            raise InfeasiblePolicyError(f"policy {name} is not feasible in the class")

    decisions: dict[int, Decision] = {}
    for n in tree.nodes:
        inside = set(tree.leaves_below(n.id)) <= chosen
        decisions[n.id] = (u1 if inside else u2).decisions[n.id]
    pasted = Policy(decisions=decisions, decision_dim=cls.decision_dim)

    if not cls.contains(tree, pasted):
        for t in range(tree.horizon + 1):
            ids = tree.stage_nodes(t)
            if len({pasted.decisions[i] for i in ids}) > 1:
                raise PastingInfeasibleError(t, ids, pasted)
        raise PastingInfeasibleError(-1, (), pasted)
    return pasted


# -- JSON ----------------------------------------------------------------------


def policy_to_json(policy: Policy) -> dict:
    return {
        "decision_dim": policy.decision_dim,
        "decisions": {str(k): list(v) for k, v in sorted(policy.decisions.items())},
    }


def policy_from_json(data: dict) -> Policy:
    try:
        return Policy(
            decisions={int(k): tuple(v) for k, v in data["decisions"].items()},
            decision_dim=int(data["decision_dim"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputFormatError(f"malformed policy JSON: {exc}") from exc


def policy_class_to_json(cls: PolicyClass) -> dict:
    return {
        "kind": cls.kind,
        "decision_dim": cls.decision_dim,
        "feasible": {
            str(k): [list(dec) for dec in grid] for k, grid in sorted(cls.feasible.items())
        },
    }


def policy_class_from_json(data: dict) -> PolicyClass:
    try:
        return PolicyClass(
            feasible={
                int(k): tuple(tuple(dec) for dec in grid)
                for k, grid in data["feasible"].items()
            },
            kind=str(data["kind"]),
            decision_dim=int(data["decision_dim"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputFormatError(f"malformed policy class JSON: {exc}") from exc


def load_policy(path: str) -> Policy:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputFormatError(f"{path}: {exc}") from exc
    return policy_from_json(data)
