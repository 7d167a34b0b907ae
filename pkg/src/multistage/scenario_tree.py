"""Finite scenario trees: filtered probability spaces in rooted-tree form.

A scenario tree stores a discrete-time process X_0, ..., X_T with finitely
many trajectories. The depth-t nodes are the atoms of the sigma algebra
generated by the first t observations, so conditioning on the history
amounts to selecting a node, and conditional expectations are per-edge
probability-weighted sums over children.

Trees are immutable after construction and all operations here are pure
reads, safe to run concurrently on a shared instance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from .exceptions import (
    IncompleteFunctionError,
    InputFormatError,
    UnknownNodeError,
)

#: absolute tolerance for probability normalization checks
PROB_TOL = 1e-12


@dataclass(frozen=True)
class Node:
    """One atom of the filtration: a tree node at a given stage.

    ``cond_prob`` is the probability of reaching this node given its parent;
    ``obs`` is the realization of X_t on this atom.
    """

    id: int
    stage: int
    parent: int | None
    cond_prob: float
    obs: tuple[float, ...]


class ScenarioTree:
    """Rooted tree with per-edge conditional probabilities.

    Construction only enforces structural usability (dense ids, a single
    parentless root, acyclic parent links). Probability normalization,
    stage consistency and leaf depth are checked by :func:`validate`,
    which reports violations as data rather than raising.
    """

    def __init__(self, nodes: Sequence[Node], horizon: int, obs_dim: int):
        ordered = tuple(sorted(nodes, key=lambda n: n.id))
        ids = [n.id for n in ordered]
        if ids != list(range(len(ids))):
            raise InputFormatError("node ids must be dense 0..N-1")
        if not ordered or ordered[0].parent is not None:
            raise InputFormatError("node 0 must be the parentless root")
        self.nodes: tuple[Node, ...] = ordered
        self.horizon = int(horizon)
        self.obs_dim = int(obs_dim)

        children: dict[int, list[int]] = {n.id: [] for n in ordered}
        for n in ordered:
            if n.parent is None:
                if n.id != 0:
                    raise InputFormatError(f"node {n.id} has no parent but is not the root")
                continue
            if n.parent not in children:
                raise InputFormatError(f"node {n.id} references unknown parent {n.parent}")
            children[n.parent].append(n.id)
        self._children: dict[int, tuple[int, ...]] = {
            i: tuple(sorted(c)) for i, c in children.items()
        }

        # Root paths; walking more than N parents means a parent cycle.
        paths: dict[int, tuple[int, ...]] = {0: (0,)}
        for n in ordered:
            chain = []
            cur: int | None = n.id
            while cur is not None and cur not in paths:
                chain.append(cur)
                cur = self.nodes[cur].parent
                if len(chain) > len(ordered):
                    raise InputFormatError("parent links contain a cycle")
            base = paths[cur] if cur is not None else ()
            for k, nid in enumerate(reversed(chain)):
                paths[nid] = base + tuple(reversed(chain))[: k + 1]
        self._paths = paths

        stage_map: dict[int, list[int]] = {}
        for n in ordered:
            stage_map.setdefault(n.stage, []).append(n.id)
        self._stages = {t: tuple(ids) for t, ids in stage_map.items()}
        self._leaves = tuple(n.id for n in ordered if not self._children[n.id])

        below: dict[int, tuple[int, ...]] = {}
        for nid in sorted(paths, key=lambda i: -len(paths[i])):
            kids = self._children[nid]
            if not kids:
                below[nid] = (nid,)
            else:
                acc: list[int] = []
                for c in kids:
                    acc.extend(below[c])
                below[nid] = tuple(sorted(acc))
        self._leaves_below = below

    # -- structure queries -------------------------------------------------

    def node(self, node_id: int) -> Node:
        if not 0 <= node_id < len(self.nodes):
            raise UnknownNodeError(f"no node with id {node_id}")
        return self.nodes[node_id]

    def children(self, node_id: int) -> tuple[int, ...]:
        self.node(node_id)
        return self._children[node_id]

    def is_leaf(self, node_id: int) -> bool:
        return not self.children(node_id)

    def leaves(self) -> tuple[int, ...]:
        return self._leaves

    def leaves_below(self, node_id: int) -> tuple[int, ...]:
        self.node(node_id)
        return self._leaves_below[node_id]

    def stage_nodes(self, t: int) -> tuple[int, ...]:
        return self._stages.get(t, ())

    def path_nodes(self, node_id: int) -> tuple[int, ...]:
        """Node ids along the root-to-node path, root first."""
        self.node(node_id)
        return self._paths[node_id]

    def __len__(self) -> int:
        return len(self.nodes)


def validate(tree: ScenarioTree) -> list[str]:
    """Check every tree invariant and return a description per violation.

    An empty list means the tree is a well-formed finite filtered space:
    the root carries probability one, every edge probability is in (0, 1],
    children probabilities sum to one, parent stages precede child stages
    by one, and every leaf sits at the final stage.
    """
    problems: list[str] = []
    if tree.horizon < 0:
        problems.append(f"horizon {tree.horizon} is negative")
    for n in tree.nodes:
        if len(n.obs) != tree.obs_dim:
            problems.append(
                f"node {n.id}: observation has dimension {len(n.obs)}, expected {tree.obs_dim}"
            )
        if not 0 <= n.stage <= tree.horizon:
            problems.append(f"node {n.id}: stage {n.stage} outside 0..{tree.horizon}")
        if n.parent is None:
            if abs(n.cond_prob - 1.0) > PROB_TOL:
                problems.append(f"node {n.id}: root conditional probability {n.cond_prob} != 1")
        else:
            parent = tree.nodes[n.parent]
            if parent.stage != n.stage - 1:
                problems.append(
                    f"node {n.id}: parent {n.parent} at stage {parent.stage}, "
                    f"expected stage {n.stage - 1}"
                )
            if not 0.0 < n.cond_prob <= 1.0 + PROB_TOL:
                problems.append(
                    f"node {n.id}: conditional probability {n.cond_prob} outside (0, 1]"
                )
        kids = tree.children(n.id)
        if kids:
            total = sum(tree.nodes[c].cond_prob for c in kids)
            if abs(total - 1.0) > PROB_TOL:
                problems.append(
                    f"node {n.id}: children probabilities sum to {total!r}, not 1"
                )
        elif n.stage != tree.horizon:
            problems.append(
                f"node {n.id}: leaf at stage {n.stage}, expected leaves only at stage "
                f"{tree.horizon}"
            )
    return problems


def path(tree: ScenarioTree, node_id: int) -> tuple[tuple[float, ...], ...]:
    """Observations (x_0, ..., x_t) along the root-to-node path."""
    return tuple(tree.nodes[i].obs for i in tree.path_nodes(node_id))


def conditional_expectation(
    tree: ScenarioTree, f: Mapping[int, float], at: int
) -> float:
    """Expectation of a child-indexed function conditional on reaching ``at``.

    ``f`` must assign a value to every child of ``at``; the result is the
    conditional-probability weighted sum over those children.
    """
    kids = tree.children(at)
    if not kids:
        raise IncompleteFunctionError(f"node {at} has no children to average over")
    total = 0.0
    for c in kids:
        if c not in f:
            raise IncompleteFunctionError(f"function is missing a value for child node {c}")
        total += tree.nodes[c].cond_prob * f[c]
    return total


def unconditional_probability(tree: ScenarioTree, node_id: int) -> float:
    """Probability of reaching the node: product of edge probabilities."""
    prob = 1.0
    for i in tree.path_nodes(node_id):
        prob *= tree.nodes[i].cond_prob
    return prob


# -- JSON ------------------------------------------------------------------


def tree_to_json(tree: ScenarioTree) -> dict:
    """Serializable form: ``{"horizon", "obs_dim", "nodes": [...]}``."""
    nodes = []
    for n in tree.nodes:
        entry: dict = {
            "id": n.id,
            "stage": n.stage,
            "cond_prob": n.cond_prob,
            "obs": list(n.obs),
        }
        if n.parent is not None:
            entry["parent"] = n.parent
        nodes.append(entry)
    return {"horizon": tree.horizon, "obs_dim": tree.obs_dim, "nodes": nodes}


def tree_from_json(data: dict) -> ScenarioTree:
    """Inverse of :func:`tree_to_json`; raises on malformed input."""
    try:
        horizon = int(data["horizon"])
        obs_dim = int(data["obs_dim"])
        nodes = [
            Node(
                id=int(entry["id"]),
                stage=int(entry["stage"]),
                parent=None if entry.get("parent") is None else int(entry["parent"]),
                cond_prob=float(entry["cond_prob"]),
                obs=tuple(float(x) for x in entry["obs"]),
            )
            for entry in data["nodes"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputFormatError(f"malformed tree JSON: {exc}") from exc
    return ScenarioTree(nodes, horizon=horizon, obs_dim=obs_dim)


def load_tree(path_: str) -> ScenarioTree:
    with open(path_, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputFormatError(f"{path_}: {exc}") from exc
    return tree_from_json(data)
