import copy
import csv
import json
from pathlib import Path

import jsonschema
import pytest

from gfk.calculus import EpsilonLadder, LadderError
from gfk.scenarios import (EXIT_CLAIM_FAILED, EXIT_NUMERICAL, EXIT_OK, ScenarioError, builtin_names,
                           dumps_report, load_builtin, load_config, load_schema, parse_ladder, run_scenario,
                           validate_config)

TINY = {
    "schema_version": 1,
    "name": "tiny",
    "manifold": {"manifold": "interval", "params": {"a": -2.0, "b": 2.0}},
    "objects": {
        "phi": {"type": "mollifier", "dim": 1, "q": 2},
        "fam": {"type": "family", "kind": "injected", "mollifier": "phi", "m": 2},
    },
    "claims": [
        {"id": "moments", "type": "moments", "criterion": 1, "statement": "unit integral",
         "mollifiers": ["phi"]},
        {"id": "box-2", "type": "classify", "criterion": 2, "statement": "injected family in box(2)",
         "family": "fam", "m": 2, "grid": {"lo": [-1.0], "hi": [1.0], "n": 3}, "expect_box": True},
    ],
}

DEMOS = Path(__file__).resolve().parent.parent / "demos" / "configs"


def tiny(**changes):
    config = copy.deepcopy(TINY)
    config.update(changes)
    return config


def test_schema_is_valid_draft_2020_12():
    jsonschema.Draft202012Validator.check_schema(load_schema())


def test_every_builtin_validates_and_maps_to_a_criterion():
    names = builtin_names()
    assert len(names) >= 10
    for name in names:
        config = load_builtin(name)
        validate_config(config)
        assert config["name"] == name
        for claim in config["claims"]:
            assert 1 <= claim["criterion"] <= 10
            assert claim["statement"]


def test_builtins_cover_criteria_one_to_ten():
    covered = {c["criterion"] for name in builtin_names() for c in load_builtin(name)["claims"]}
    assert covered == set(range(1, 11))


@pytest.mark.parametrize("mutate, pointer", [
    (lambda c: c.pop("manifold"), "/manifold"),
    (lambda c: c["manifold"].update(manifold="sphere"), "/manifold/manifold"),
    (lambda c: c["objects"]["phi"].update(q="two"), "/objects/phi/q"),
    (lambda c: c["claims"][1].update(m=-1), "/claims/1/m"),
    (lambda c: c["claims"][0].pop("id"), "/claims/0/id"),
    (lambda c: c.update(schema_version=2), "/schema_version"),
], ids=["missing-manifold", "unknown-manifold", "bad-type", "negative-m", "missing-id", "version"])
def test_schema_errors_carry_json_pointers(mutate, pointer):
    config = tiny()
    mutate(config)
    with pytest.raises(ScenarioError) as info:
        validate_config(config)
    assert info.value.pointer == pointer


def test_undefined_reference_is_a_configuration_error():
    config = tiny()
    config["claims"][1]["family"] = "nope"
    with pytest.raises(ScenarioError):
        run_scenario(config)


def test_duplicate_claim_ids_are_rejected():
    config = tiny()
    config["claims"][1]["id"] = "moments"
    with pytest.raises(ScenarioError):
        run_scenario(config)


def test_load_config_by_path_and_name(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(TINY))
    assert load_config(path)["name"] == "tiny"
    assert load_config("mollifier-moments")["name"] == "mollifier-moments"
    with pytest.raises(ScenarioError):
        load_config("no-such-scenario")
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    with pytest.raises(ScenarioError):
        load_config(bad)


def test_parse_ladder_forms():
    assert parse_ladder("0.5,0.5,6") == EpsilonLadder(0.5, 0.5, 6)
    assert parse_ladder({"eps0": 0.5, "ratio": 0.5, "length": 6}) == EpsilonLadder(0.5, 0.5, 6)
    with pytest.raises(LadderError):
        parse_ladder("1,2,3")


def test_run_tiny_scenario_and_write_outputs(tmp_path):
    result = run_scenario(tiny(), seed=3)
    assert result.exit_code == EXIT_OK
    report = result.report
    assert [row["id"] for row in report["claims"]] == ["moments", "box-2"]
    assert all(row["pass"] for row in report["claims"])
    assert report["meta"]["seed"] == 3
    paths = result.write(tmp_path)
    assert json.loads(paths["report"].read_text())["scenario"] == "tiny"
    with open(paths["traces"]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["eps", "value", "tag"]
    assert all(r[2].startswith(("moments:", "box-2:")) for r in rows[1:])
    assert "seconds" in json.loads(paths["timing"].read_text())


def test_failed_claim_gives_exit_one():
    config = tiny()
    config["claims"][1]["m"] = 3
    result = run_scenario(config)
    assert result.exit_code == EXIT_CLAIM_FAILED
    assert result.report["claims"][1]["verdict"] is False


def test_expected_failure_counts_as_pass():
    config = tiny()
    config["claims"][1].update(m=3, expect="fail")
    assert run_scenario(config).exit_code == EXIT_OK


def test_ladder_override_applies_to_every_claim():
    result = run_scenario(tiny(), ladder="0.2,0.5,7")
    assert all(row["ladder"] == {"eps0": 0.2, "ratio": 0.5, "length": 7} for row in result.report["claims"])
    assert result.report["meta"]["ladder_override"] == {"eps0": 0.2, "ratio": 0.5, "length": 7}


def test_numerical_error_gives_exit_three():
    result = run_scenario(load_config(DEMOS / "ladder-outside-domain.json"))
    assert result.exit_code == EXIT_NUMERICAL
    assert "LadderError" in result.report["claims"][0]["error"]


def test_only_filter_selects_claims():
    result = run_scenario(tiny(), only=lambda c: c["id"] == "moments")
    assert [row["id"] for row in result.report["claims"]] == ["moments"]


def test_reports_are_deterministic_for_a_fixed_seed():
    a = dumps_report(run_scenario(tiny(), seed=7).report)
    b = dumps_report(run_scenario(tiny(), seed=7).report)
    assert a == b


def test_dumps_report_handles_non_finite_values():
    text = dumps_report({"a": float("inf"), "b": [float("nan")]})
    assert json.loads(text) == {"a": "inf", "b": ["nan"]}
