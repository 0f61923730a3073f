import json
import subprocess
import sys

import pytest

from approxfix.cli import CATALOG, dumps, main

from conftest import FIGURE1


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def solve(tmp_path, doc, name="p", extra=()):
    prob = write(tmp_path / f"{name}.json", doc)
    out = tmp_path / f"{name}.out.json"
    code = main(["solve", prob, "--out", str(out), "--quiet", *extra])
    return code, prob, out


def test_dumps_round_trips_doubles():
    vals = [0.1, 1 / 3, 2.0 ** -1074, 1e300, -0.0, 123456789.123456789]
    back = json.loads(dumps({"v": vals}))["v"]
    assert back == vals
    assert json.loads(dumps({"x": float("inf")}))["x"] is None


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_round_trip(tmp_path, name):
    code, prob, out = solve(tmp_path, CATALOG[name], name)
    assert code == 0
    assert json.loads(out.read_text())["certified"] is True
    assert main(["verify", prob, str(out), "--quiet"]) == 0


def test_figure1_solution(tmp_path):
    code, _, out = solve(tmp_path, CATALOG["figure1"])
    res = json.loads(out.read_text())
    assert code == 0 and abs(res["point"][0] - 0.5) < 0.01 and res["residual"] < 0.01


def test_bilinear_solution(tmp_path):
    code, prob, out = solve(tmp_path, CATALOG["bilinear-saddle"])
    res = json.loads(out.read_text())
    cert = res["certificate"]
    assert code == 0
    assert cert["gap_estimate"] <= 0.1 + 2 * cert["grid_tol"]


def test_perturbed_point_fails_verification(tmp_path):
    code, prob, out = solve(tmp_path, CATALOG["figure1"])
    res = json.loads(out.read_text())
    res["point"] = [res["point"][0] + 0.3]
    bad = write(tmp_path / "bad.json", res)
    assert main(["verify", prob, bad, "--quiet"]) == 2


def test_malformed_json(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{"kind": "brouwer",\n "eps": }')
    assert main(["solve", str(p)]) == 1
    assert "line 2" in capsys.readouterr().err


@pytest.mark.parametrize("doc,field", [
    ({"kind": "nope", "eps": 0.1}, "kind"),
    ({"kind": "brouwer", "function": ["1 - x0"], "eps": -1}, "eps"),
    ({"kind": "brouwer", "function": ["1 - x0"], "eps": 0.1, "dimension": {"n": 2}}, "function"),
    ({"kind": "kakutani", "eps": 0.1}, "function"),
    ({"kind": "minimax", "function": "x0 +", "eps": 0.1}, "function"),
])
def test_schema_errors(tmp_path, capsys, doc, field):
    assert main(["solve", write(tmp_path / "p.json", doc)]) == 1
    assert field in capsys.readouterr().err


def test_mismatched_kinds(tmp_path):
    _, _, out = solve(tmp_path, CATALOG["figure1"], "a")
    other = write(tmp_path / "b.json", CATALOG["one-minus-x"])
    assert main(["verify", other, str(out), "--quiet"]) == 1


def test_catalog_listing(tmp_path, capsys):
    assert main(["catalog", "--emit", str(tmp_path / "t")]) == 0
    listing = capsys.readouterr().out
    assert "figure1" in listing and "bilinear-saddle" in listing
    fig = json.loads((tmp_path / "t" / "figure1.json").read_text())
    assert fig["graph"] == FIGURE1
    assert json.loads((tmp_path / "t" / "bilinear-saddle.json").read_text())["function"] == "(x0-0.5)*(y0-0.5)"


def test_emit_to_unwritable_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["catalog", "--emit", str(blocker / "sub")]) == 1


def test_matrix_game_value(tmp_path):
    # payoff matrix [[1, 0], [0.25, 0.75]]: mixed saddle at x = 1/3, y = 1/2, value 1/2
    code, _, out = solve(tmp_path, CATALOG["matrix-game-2x2"])
    res = json.loads(out.read_text())
    assert code == 0
    assert abs(res["value"] - 0.5) <= 2 * 0.05 + 2 * res["certificate"]["grid_tol"]


def test_non_approximable_graph_is_rejected(tmp_path):
    drop = {"kind": "kakutani", "dimension": {"n": 1}, "eps": 0.1, "modulus": {"lipschitz": 1},
            "graph": [[[0, 1], [0.5, 1]], [[0.5, 0], [1, 0]]]}
    assert solve(tmp_path, drop)[0] == 1


def test_unsound_modulus_exit_2(tmp_path):
    steep = {"kind": "brouwer", "dimension": {"n": 1}, "eps": 0.001, "modulus": {"lipschitz": 0.01},
             "function": ["max(0, min(1, 0.5 - 50*(x0 - 0.5037)))"]}
    code, _, out = solve(tmp_path, steep)
    res = json.loads(out.read_text())
    assert code == 2 and res["certified"] is False and "best_point" in res


def test_eps_and_seed_flags(tmp_path):
    code, _, out = solve(tmp_path, CATALOG["one-minus-x"], extra=["--eps", "0.1", "--seed", "5"])
    res = json.loads(out.read_text())
    assert code == 0 and res["eps"] == 0.1 and res["trace"]["seed"] == 5


def strip_time(text):
    doc = json.loads(text)
    doc.pop("wallTimeMs")
    return [line for line in text.splitlines() if '"wallTimeMs"' not in line], doc


@pytest.mark.parametrize("name", ["figure1", "bilinear-saddle"])
def test_deterministic_output(tmp_path, name):
    _, _, a = solve(tmp_path, CATALOG[name], "a")
    _, _, b = solve(tmp_path, CATALOG[name], "b")
    assert strip_time(a.read_text())[0] == strip_time(b.read_text())[0]


def test_console_entry_point(tmp_path):
    prob = write(tmp_path / "p.json", CATALOG["one-minus-x"])
    run = subprocess.run([sys.executable, "-m", "approxfix.cli", "solve", prob, "--quiet"],
                         capture_output=True, text=True, timeout=120)
    assert run.returncode == 0
    assert abs(json.loads(run.stdout)["point"][0] - 0.5) < 1e-3


OFF_GRID = {"kind": "brouwer", "dimension": {"n": 1}, "function": ["0.3"], "eps": 0.001}


@pytest.mark.parametrize("doc", [OFF_GRID, CATALOG["bilinear-saddle"]])
def test_grid_cap_overflow_exit_2(tmp_path, doc):
    # 0.3 is never a cell barycentre, so the schedule has to climb past the cap
    code, _, out = solve(tmp_path, doc, extra=["--grid-cap", "16"])
    res = json.loads(out.read_text())
    assert code == 2 and "resolution overflow" in res["error"]
