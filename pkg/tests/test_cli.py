import json
import subprocess
import sys

import pytest

from multistage.bundle import ProblemBundle, bundle_to_json
from multistage.cli import main
from multistage.dp_solvers import mdp_to_json
from multistage.generate import (
    branching_gap_fixture,
    constant_cost_mdp,
    random_general_cost,
    random_mdp,
    random_sddp,
    recourse_fixture,
    rng_from_seed,
)
from multistage.policy import Policy, policy_to_json
from multistage.scenario_tree import Node, ScenarioTree, tree_to_json


def write_json(path, data):
    path.write_text(json.dumps(data, sort_keys=True, indent=2))
    return str(path)


@pytest.fixture
def recourse_bundle(tmp_path):
    fx = recourse_fixture()
    bundle = ProblemBundle(tree=fx["tree"], cost=fx["cost"], cls=fx["cls"])
    bundle_path = write_json(tmp_path / "bundle.json", bundle_to_json(bundle))
    optimal = write_json(
        tmp_path / "optimal.json", policy_to_json(fx["optimal_policy"])
    )
    perturbed = write_json(
        tmp_path / "perturbed.json", policy_to_json(fx["perturbed_policy"])
    )
    return {"bundle": bundle_path, "optimal": optimal, "perturbed": perturbed, "fx": fx}


class TestValidate:
    def test_valid_bundle_exits_zero(self, recourse_bundle, capsys):
        code = main(["validate", "--input", recourse_bundle["bundle"]])
        assert code == 0
        assert "OK" in capsys.readouterr().out

    def test_invalid_tree_exits_one(self, tmp_path, capsys):
        tree = ScenarioTree(
            [
                Node(id=0, stage=0, parent=None, cond_prob=1.0, obs=(0.0,)),
                Node(id=1, stage=1, parent=0, cond_prob=0.5, obs=(1.0,)),
                Node(id=2, stage=1, parent=0, cond_prob=0.6, obs=(2.0,)),
            ],
            horizon=1,
            obs_dim=1,
        )
        path = write_json(tmp_path / "tree.json", tree_to_json(tree))
        code = main(["validate", "--input", path, "--json"])
        assert code == 1
        report = json.loads(capsys.readouterr().out)
        assert not report["valid"]

    def test_missing_file_exits_three(self, capsys):
        assert main(["validate", "--input", "/nonexistent.json"]) == 3

    def test_unparseable_file_exits_three(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["validate", "--input", str(bad)]) == 3

    def test_violated_holder_declaration_exits_one(self, recourse_bundle, tmp_path, capsys):
        data = json.loads(open(recourse_bundle["bundle"]).read())
        data["cost"]["holder"] = {"C": 1e-6, "alpha": 1.0, "delta": 10.0}
        path = write_json(tmp_path / "holder.json", data)
        code = main(["validate", "--input", path, "--json"])
        assert code == 1
        report = json.loads(capsys.readouterr().out)
        assert any("Hoelder" in v for v in report["violations"])


class TestSolve:
    def test_recorded_fixture_value(self, recourse_bundle, capsys):
        code = main(
            ["solve", "--input", recourse_bundle["bundle"], "--method", "auto", "--json"]
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["value"] == pytest.approx(0.6, abs=1e-9)
        assert report["agreement"] is True
        assert report["policy"]["decisions"]["0"] == [1.0]

    def test_backward_and_brute_agree_on_a_2187_policy_instance(self, tmp_path, capsys):
        nodes = [Node(id=0, stage=0, parent=None, cond_prob=1.0, obs=(0.0,))]
        for i, (parent, obs) in enumerate(
            [(0, 1.0), (0, -1.0), (1, 2.0), (1, 0.5), (2, -2.0), (2, 1.5)], start=1
        ):
            stage = 1 if parent == 0 else 2
            nodes.append(
                Node(id=i, stage=stage, parent=parent, cond_prob=0.5, obs=(obs,))
            )
        tree = ScenarioTree(nodes, horizon=2, obs_dim=1)
        from multistage.policy import PolicyClass

        grid = ((-1.0,), (0.0,), (1.0,))
        cls = PolicyClass(
            feasible={n.id: grid for n in tree.nodes}, kind="nodewise", decision_dim=1
        )
        cost = random_general_cost(rng_from_seed(9), tree)
        bundle = ProblemBundle(tree=tree, cost=cost, cls=cls)
        path = write_json(tmp_path / "big.json", bundle_to_json(bundle))
        code = main(["solve", "--input", path, "--method", "auto", "--json"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["policy_count"] == 2187
        assert report["agreement"] is True

    def test_horizon_zero_grid_minimum(self, tmp_path, capsys):
        from multistage.costs import cost_from_json
        from multistage.policy import PolicyClass

        tree = ScenarioTree(
            [Node(id=0, stage=0, parent=None, cond_prob=1.0, obs=(1.0,))],
            horizon=0,
            obs_dim=1,
        )
        cls = PolicyClass(
            feasible={0: ((-1.0,), (0.0,), (2.0,))}, kind="nodewise", decision_dim=1
        )
        cost = cost_from_json(
            {
                "form": "general",
                "poly": {
                    "terms": [
                        {"coef": 1.0, "vars": [["u", 0, 0, 2]]},
                        {"coef": -2.0, "vars": [["u", 0, 0, 1], ["x", 0, 0, 1]]},
                        {"coef": 1.0, "vars": [["x", 0, 0, 2]]},
                    ]
                },
            }
        )
        path = write_json(
            tmp_path / "t0.json",
            bundle_to_json(ProblemBundle(tree=tree, cost=cost, cls=cls)),
        )
        code = main(["solve", "--input", path, "--json"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["value"] == pytest.approx(1.0)

    def test_invalid_bundle_exits_three(self, tmp_path, recourse_bundle):
        data = json.loads(open(recourse_bundle["bundle"]).read())
        del data["policy_class"]["feasible"]["2"]
        path = write_json(tmp_path / "broken.json", data)
        assert main(["solve", "--input", path]) == 3


class TestVerify:
    def test_solve_then_verify_round_trip(self, recourse_bundle, tmp_path, capsys):
        code = main(
            ["solve", "--input", recourse_bundle["bundle"], "--json"]
        )
        solved = json.loads(capsys.readouterr().out)
        policy_path = write_json(tmp_path / "argmin.json", solved["policy"])
        code = main(
            [
                "verify",
                "--input",
                recourse_bundle["bundle"],
                "--policy",
                policy_path,
                "--json",
            ]
        )
        report = json.loads(capsys.readouterr().out)
        assert code == 0
        assert report["verdict"] == "optimal"

    def test_perturbed_policy_exits_one_with_positive_slack(
        self, recourse_bundle, capsys
    ):
        code = main(
            [
                "verify",
                "--input",
                recourse_bundle["bundle"],
                "--policy",
                recourse_bundle["perturbed"],
                "--json",
            ]
        )
        assert code == 1
        report = json.loads(capsys.readouterr().out)
        assert report["verdict"] == "not-optimal"
        assert max(s["max_slack"] for s in report["per_stage_slack"]) > 0.5

    def test_history_blind_bundle_exits_two(self, tmp_path, capsys):
        fx = branching_gap_fixture()
        bundle = ProblemBundle(tree=fx["tree"], cost=fx["cost"], cls=fx["cls"])
        bundle_path = write_json(tmp_path / "blind.json", bundle_to_json(bundle))
        policy_path = write_json(
            tmp_path / "pol.json",
            policy_to_json(
                Policy(decisions={0: (0.0,), 1: (0.0,), 2: (0.0,)}, decision_dim=1)
            ),
        )
        code = main(
            ["verify", "--input", bundle_path, "--policy", policy_path, "--json"]
        )
        assert code == 2
        assert json.loads(capsys.readouterr().out)["verdict"] == "inconclusive"

    def test_infeasible_policy_exits_three(self, recourse_bundle, tmp_path):
        alien = write_json(
            tmp_path / "alien.json",
            policy_to_json(
                Policy(decisions={0: (9.0,), 1: (9.0,), 2: (9.0,)}, decision_dim=1)
            ),
        )
        code = main(
            ["verify", "--input", recourse_bundle["bundle"], "--policy", alien]
        )
        assert code == 3


class TestDynamicCheck:
    def test_nodewise_equality(self, recourse_bundle, capsys):
        code = main(
            [
                "dynamic-check",
                "--input",
                recourse_bundle["bundle"],
                "--policy",
                recourse_bundle["perturbed"],
                "--json",
            ]
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["all_hold"] and report["equality_everywhere"]

    def test_history_blind_strict_inequality(self, tmp_path, capsys):
        fx = branching_gap_fixture()
        bundle = ProblemBundle(tree=fx["tree"], cost=fx["cost"], cls=fx["cls"])
        bundle_path = write_json(tmp_path / "blind.json", bundle_to_json(bundle))
        policy_path = write_json(
            tmp_path / "pol.json",
            policy_to_json(
                Policy(decisions={0: (0.0,), 1: (0.0,), 2: (0.0,)}, decision_dim=1)
            ),
        )
        code = main(
            ["dynamic-check", "--input", bundle_path, "--policy", policy_path, "--json"]
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["all_hold"] and not report["equality_everywhere"]


class TestDemoInterchange:
    def test_builtin_fixture_gaps(self, capsys):
        code = main(["demo-interchange", "--json"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["fixture"]["nodewise"]["gap"] == pytest.approx(0.0, abs=1e-12)
        assert report["fixture"]["history_blind"]["lhs"] == pytest.approx(1.0)
        assert report["fixture"]["history_blind"]["rhs"] == pytest.approx(5.0)

    def test_random_sweep_respects_the_lower_bound(self, capsys):
        code = main(["demo-interchange", "--trials", "60", "--seed", "3", "--json"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["trials"]["count"] == 60
        assert report["trials"]["min_gap"] >= -1e-12


class TestMdpCommands:
    def test_mdp_solve_constant_cost(self, tmp_path, capsys):
        path = write_json(tmp_path / "mdp.json", mdp_to_json(constant_cost_mdp(gamma=0.5)))
        code = main(["mdp-solve", "--input", path, "--horizon", "3", "--json"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["values"][0] == pytest.approx([1.75, 1.75])

    def test_value_iterate_constant_cost(self, tmp_path, capsys):
        path = write_json(tmp_path / "mdp.json", mdp_to_json(constant_cost_mdp(gamma=0.5)))
        code = main(["value-iterate", "--input", path, "--tolerance", "1e-8", "--json"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["values"] == pytest.approx([2.0, 2.0], abs=1e-8)
        ratios = [
            b / a for a, b in zip(report["residuals"], report["residuals"][1:]) if a > 0
        ]
        assert all(r <= 0.5 + 1e-9 for r in ratios)

    def test_value_iterate_gamma_zero_single_iteration(self, tmp_path, capsys):
        mdp = random_mdp(rng_from_seed(5), gamma=0.0)
        path = write_json(tmp_path / "mdp0.json", mdp_to_json(mdp))
        code = main(["value-iterate", "--input", path, "--json"])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["iterations"] == 1

    def test_value_iterate_budget_exhaustion_exits_one(self, tmp_path, capsys):
        path = write_json(tmp_path / "mdp.json", mdp_to_json(constant_cost_mdp(gamma=0.9)))
        code = main(
            ["value-iterate", "--input", path, "--max-iters", "2", "--json"]
        )
        assert code == 1
        report = json.loads(capsys.readouterr().out)
        assert report["converged"] is False
        assert len(report["residuals"]) == 2

    def test_kernel_violation_exits_three(self, tmp_path):
        data = mdp_to_json(constant_cost_mdp(gamma=0.5))
        data["kernel"][0][0] = 0.9
        path = write_json(tmp_path / "bad.json", data)
        assert main(["mdp-solve", "--input", path, "--horizon", "1"]) == 3


class TestSddpCommand:
    def test_sddp_solve_matches_library_recursion(self, tmp_path, capsys):
        from multistage import sddp_recursion

        spec = random_sddp(rng_from_seed(8), horizon=3)
        path = write_json(tmp_path / "sddp.json", spec.payload)
        code = main(["sddp-solve", "--input", path, "--json"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        expected = sddp_recursion(spec).values[0][spec.initial_state]
        assert report["root_value"] == pytest.approx(expected, abs=1e-12)


class TestDeterminism:
    def run_cli(self, args):
        return subprocess.run(
            [sys.executable, "-m", "multistage", *args],
            capture_output=True,
            check=False,
        )

    def test_solve_output_is_byte_identical(self, recourse_bundle):
        args = ["solve", "--input", recourse_bundle["bundle"], "--json"]
        first = self.run_cli(args)
        second = self.run_cli(args)
        assert first.returncode == 0
        assert first.stdout == second.stdout

    def test_verify_output_is_byte_identical(self, recourse_bundle):
        args = [
            "verify",
            "--input",
            recourse_bundle["bundle"],
            "--policy",
            recourse_bundle["optimal"],
            "--json",
        ]
        first = self.run_cli(args)
        second = self.run_cli(args)
        assert first.returncode == 0
        assert first.stdout == second.stdout
