import json

import pytest

from sdlab.cli import EXIT_COMPUTE, EXIT_FAILED, EXIT_INVALID, EXIT_OK, main

SMALL = {
    "seed": 4,
    "experiments": [
        {"kind": "evolve", "name": "ev", "grid": {"L": 2, "N": 17},
         "drift": {"d": 3, "family": "hardy", "delta": 1.0}, "mollify": 0.5,
         "f0": {"type": "gaussian", "width": 0.4},
         "scheme": {"tau": 0.05, "T": 0.05, "auto_tau": True},
         "certificates": {"p": [2, 3, "inf"]}},
        {"kind": "orlicz", "name": "oz", "grid": {"L": 1, "N": 17}, "field": {"type": "random"}},
        {"kind": "degiorgi", "name": "dg", "random_draws": 20,
         "iteration": {"N": 1, "C0": 2, "alpha": 1, "z0": 0.5}},
        {"kind": "sde-scan", "name": "sc", "delta_list": [0, 4],
         "sde": {"x0": [0.5, 0, 0], "dt": 0.01, "T": 0.3, "paths": 200, "eps_hit": 0.1}},
    ],
}


def _write(tmp_path, manifest, name="m.json"):
    p = tmp_path / name
    p.write_text(json.dumps(manifest))
    return str(p)


def _tree(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_run_and_render(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", _write(tmp_path, SMALL), "--out-dir", str(out)]) == EXIT_OK
    index = json.loads((out / "index.json").read_text())
    assert [e["name"] for e in index["experiments"]] == ["ev", "oz", "dg", "sc"]
    assert all(e["passed"] for e in index["experiments"])
    for e in index["experiments"]:
        for a in e["artifacts"]:
            assert (out / a["path"]).exists()
    assert main(["render", str(out / "index.json")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "rendered ev_lp2.svg" in text and "skipped oscillation" in text
    assert (out / "sc_hitting_0.svg").exists()


def test_fixed_seed_is_byte_identical(tmp_path):
    m = _write(tmp_path, SMALL)
    for name in ("a", "b"):
        assert main(["run", m, "--out-dir", str(tmp_path / name)]) == EXIT_OK
        assert main(["render", str(tmp_path / name / "index.json")]) == EXIT_OK
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def test_seed_flag_overrides_manifest(tmp_path):
    m = {"experiments": [SMALL["experiments"][1]]}
    path = _write(tmp_path, m)
    main(["run", path, "--out-dir", str(tmp_path / "a"), "--seed", "1"])
    main(["run", path, "--out-dir", str(tmp_path / "b"), "--seed", "2"])
    a = json.loads((tmp_path / "a" / "oz_orlicz.json").read_text())
    b = json.loads((tmp_path / "b" / "oz_orlicz.json").read_text())
    assert a["gauge_norm"] != b["gauge_norm"]


def test_empty_manifest(tmp_path):
    out = tmp_path / "o"
    assert main(["run", _write(tmp_path, {"experiments": []}), "--out-dir", str(out)]) == EXIT_OK
    assert json.loads((out / "index.json").read_text())["experiments"] == []


@pytest.mark.parametrize("manifest, field", [
    ({"experiments": [{"kind": "orlicz", "grid": {"L": 1, "N": "x"}, "field": {}}]},
     "experiments[0].grid.N"),
    ({"experiments": [{"kind": "resolvent", "grid": {"L": 1, "N": 17}, "mu": -1, "rhs": {}}]},
     "experiments[0].mu"),
    ({"experiments": [{"kind": "teleport"}]}, "experiments[0].kind"),
    ({"kind": "orlicz", "grid": {"L": 1, "N": 17}, "field": {"type": "spiral"}},
     "experiments[0].field.type"),
    ({"experiments": [{"kind": "cauchy", "grid": {"L": 2, "N": 17}, "eps_list": [1, 0.5],
                       "drift": {"d": 3, "family": "hardy", "delta": 1}, "f0": {},
                       "scheme": {"tau": 0.1, "T": 0.1}}]}, "experiments[0].eps_list"),
])
def test_validation_errors_name_the_field(tmp_path, capsys, manifest, field):
    out = tmp_path / "o"
    assert main(["run", _write(tmp_path, manifest), "--out-dir", str(out)]) == EXIT_INVALID
    assert field in capsys.readouterr().err
    assert not out.exists()  # nothing runs before validation completes


def test_malformed_json_and_missing_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["run", str(p)]) == EXIT_INVALID
    assert main(["run", str(tmp_path / "none.json")]) == EXIT_INVALID
    assert main(["render", str(tmp_path / "none.json")]) == EXIT_INVALID
    assert main(["launch"]) == EXIT_INVALID


def test_failed_certificate_exit_code(tmp_path):
    m = {"experiments": [{"kind": "formbound", "name": "fb", "grid": {"L": 1, "N": 17},
                          "drift": {"d": 3, "family": "hardy", "delta": 1.0},
                          "verify": {"delta": 0.001, "family": {"kind": "gaussians"}}}]}
    assert main(["run", _write(tmp_path, m), "--out-dir", str(tmp_path / "o")]) == EXIT_FAILED


def test_computation_error_exit_code(tmp_path):
    # epsilon below twice the spacing is only detected when the drift is built
    m = {"experiments": [{"kind": "formbound", "name": "fb", "grid": {"L": 1, "N": 17},
                          "drift": {"d": 3, "family": "hardy", "delta": 1.0}, "mollify": 0.01}]}
    out = tmp_path / "o"
    assert main(["run", _write(tmp_path, m), "--out-dir", str(out)]) == EXIT_COMPUTE
    index = json.loads((out / "index.json").read_text())
    assert "ResolutionError" in index["experiments"][0]["error"]


def test_threads_env_validation(tmp_path, monkeypatch):
    monkeypatch.setenv("SDLAB_THREADS", "many")
    assert main(["run", _write(tmp_path, {"experiments": []}),
                 "--out-dir", str(tmp_path / "o")]) == EXIT_INVALID
