"""Problem bundles: tree, cost and class shipped as one JSON document."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .costs import CostSpec, cost_from_json, cost_to_json
from .exceptions import InputFormatError
from .policy import (
    Policy,
    PolicyClass,
    policy_class_from_json,
    policy_class_to_json,
    policy_from_json,
    policy_to_json,
)
from .scenario_tree import ScenarioTree, tree_from_json, tree_to_json, validate


@dataclass
class ProblemBundle:
    tree: ScenarioTree
    cost: CostSpec
    cls: PolicyClass
    policies: dict[str, Policy] = field(default_factory=dict)

    def validate(self) -> list[str]:
        """Tree invariants plus cross-references between the pieces."""
        problems = validate(self.tree)
        node_ids = {n.id for n in self.tree.nodes}
        feasible_ids = set(self.cls.feasible)
        for missing in sorted(node_ids - feasible_ids):
            problems.append(f"class has no feasible set for node {missing}")
        for extra in sorted(feasible_ids - node_ids):
            problems.append(f"class lists unknown node {extra}")
        if self.cost.form == "additive":
            if len(self.cost.stage_costs) != self.tree.horizon:
                problems.append(
                    f"additive cost has {len(self.cost.stage_costs)} stage costs, "
                    f"expected {self.tree.horizon}"
                )
        if self.cost.holder is not None and not problems:
            from .costs import verify_holder

            C, alpha, delta = self.cost.holder
            check = verify_holder(self.tree, self.cls, self.cost, C, alpha, delta)
            if not check.ok:
                problems.append(
                    f"declared Hoelder bound violated on the grid: observed ratio "
                    f"{check.max_ratio} exceeds C = {C}"
                )
        for name, policy in sorted(self.policies.items()):
            if policy.decision_dim != self.cls.decision_dim:
                problems.append(
                    f"policy {name!r} has decision dimension {policy.decision_dim}, "
                    f"expected {self.cls.decision_dim}"
                )
            for missing in sorted(node_ids - set(policy.decisions)):
                problems.append(f"policy {name!r} has no decision for node {missing}")
        return problems


def bundle_from_json(data: dict) -> ProblemBundle:
    try:
        tree = tree_from_json(data["tree"])
        cost = cost_from_json(data["cost"])
        cls = policy_class_from_json(data["policy_class"])
    except KeyError as exc:
        raise InputFormatError(f"bundle JSON is missing {exc}") from exc
    policies = {
        str(name): policy_from_json(raw)
        for name, raw in data.get("policies", {}).items()
    }
    return ProblemBundle(tree=tree, cost=cost, cls=cls, policies=policies)


def bundle_to_json(bundle: ProblemBundle) -> dict:
    out = {
        "tree": tree_to_json(bundle.tree),
        "cost": cost_to_json(bundle.cost),
        "policy_class": policy_class_to_json(bundle.cls),
    }
    if bundle.policies:
        out["policies"] = {
            name: policy_to_json(p) for name, p in sorted(bundle.policies.items())
        }
    return out


def load_bundle(path: str) -> ProblemBundle:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputFormatError(f"{path}: {exc}") from exc
    return bundle_from_json(data)
