import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from strainsurf import cli, io
from strainsurf.field import GridField, catalogue, save_vfgrid


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_field_info_fig3(capsys):
    code, out, _ = run(["field-info", "--field", "catalogue:fig3"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["samples"] == 10_000 and rep["divergence"]["max_abs"] <= 1e-12
    assert rep["diam"] == pytest.approx(np.sqrt(3.0))
    assert abs(sum(rep["strain_signature"].values()) - 1.0) < 1e-12


def test_field_info_constant(capsys, tmp_path):
    out_file = tmp_path / "info.json"
    code, out, _ = run(["field-info", "--field", "expr:1;0;0", "--samples", "200", "--out", str(out_file)], capsys)
    assert code == 0
    rep = json.loads(out_file.read_text())
    assert rep == json.loads(out)
    assert rep["strain_signature"] == {"(0,0,0) all_space": 1.0}
    assert rep["k_signature"] == {"(0,0,0) all_space": 1.0}
    assert rep["divergence"]["max_abs"] == 0.0


def test_missing_grid_exit_3(capsys):
    code, _, err = run(["field-info", "--field", "grid:missing.vfg"], capsys)
    assert code == 3 and "missing.vfg" in err


@pytest.mark.parametrize("argv", [
    ["field-info", "--field", "expr:1+;0;0"],
    ["field-info", "--field", "catalogue:nope"],
    ["field-info", "--field", "bogus"],
    ["field-info"],
    ["field-info", "--field", "catalogue:fig3", "--domain", "0,0,0,1"],
    ["seeds", "--field", "catalogue:fig3", "--w", "1,2"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert run(argv, capsys)[0] == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as ei:
        cli.main(["pipeline", "--mode", "spiral"])
    assert ei.value.code == 2


def test_no_candidates_exit_4(capsys, tmp_path):
    code, _, err = run(["pipeline", "--field", "expr:x;y;-2*z", "--family", "second_order", "--samples", "8",
                        "--out", str(tmp_path)], capsys)
    assert code == 4 and "second_order" in err
    rep = io.read_json(tmp_path / "report.json")
    assert rep["candidates"] == [] and rep["families_attempted"] == ["second_order"]


def test_grid_field_info(capsys, tmp_path):
    g = GridField.sample(catalogue("fig3"), (9, 9, 9))
    path = tmp_path / "f.vfg"
    save_vfgrid(path, g, binary=True)
    code, out, _ = run(["field-info", "--field", f"grid:{path}", "--samples", "100"], capsys)
    assert code == 0 and json.loads(out)["samples"] == 100


def test_rotation_pipeline_and_defaults(capsys, tmp_path):
    out = tmp_path / "run1"
    code, _, _ = run(["pipeline", "--field", "catalogue:rotation", "--samples", "27", "--max-steps", "60",
                      "--out", str(out)], capsys)
    assert code == 0
    with open(out / "ranking.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(float(r["E_S"]) == 0.0 for r in rows)
    cfg = io.read_json(out / "report.json")["config"]
    assert cfg["optimizer"]["mu1"] == 0.1 and cfg["optimizer"]["mu2"] == 0.02
    assert cfg["optimizer"]["max_outer_iters"] == 10 and cfg["keep"] == 0.05 and cfg["refine"] == 3
    assert cfg["h_frac"] == 0.01 and cfg["w"] == [0.0, 0.0, 0.0, 0.0]


def test_seeds_surface_optimize_round_trip(capsys, tmp_path):
    code, _, _ = run(["seeds", "--field", "catalogue:fig3", "--family", "first_order_boundary", "--samples", "12",
                      "--max-steps", "30", "--out", str(tmp_path)], capsys)
    assert code == 0
    seeds = io.read_json(tmp_path / "seeds.json")
    assert seeds["curves"] and seeds["family"] == "first_order_boundary"
    cid = seeds["curves"][0]["id"]
    code, _, _ = run(["surface", "--seeds", str(tmp_path / "seeds.json"), "--id", str(cid), "--max-steps", "30",
                      "--forward-only", "--out", str(tmp_path)], capsys)
    assert code == 0
    meta = io.read_json(tmp_path / f"surface_{cid:03d}.json")
    obj = (tmp_path / f"surface_{cid:03d}.obj").read_text().splitlines()
    nv = sum(1 for l in obj if l.startswith("v "))
    assert nv == meta["vertices"]
    # each of the m seed samples contributes its own number of valid steps (plus the seed itself)
    csv_rows = (tmp_path / f"surface_{cid:03d}.energy.csv").read_text().splitlines()[1:]
    per_row = {}
    for r in csv_rows:
        i = int(r.split(",")[0])
        per_row[i] = per_row.get(i, 0) + 1
    assert len(per_row) == meta["m"] and sum(per_row.values()) == nv
    assert max(per_row.values()) <= 31
    code, out, _ = run(["optimize", "--seeds", str(tmp_path / "seeds.json"), "--id", str(cid), "--max-steps", "30",
                        "--iters", "2", "--out", str(tmp_path / "opt")], capsys)
    assert code == 0 and "E_S history" in out
    recs = (tmp_path / "opt" / "optimize.log.jsonl").read_text().splitlines()
    assert all(set(json.loads(r)) == {"outer_iter", "F", "F_strain", "F_fair", "F_prox", "E_S"} for r in recs)
    assert (tmp_path / "opt" / "optimized.obj").exists()


def test_unknown_seed_id(capsys, tmp_path):
    run(["seeds", "--field", "catalogue:fig3", "--family", "first_order_boundary", "--samples", "6",
         "--max-steps", "10", "--out", str(tmp_path)], capsys)
    code, _, err = run(["surface", "--seeds", str(tmp_path / "seeds.json"), "--id", "9999"], capsys)
    assert code == 2 and "9999" in err


def test_floats_keep_17_digits(tmp_path):
    x = 0.1 + 0.2
    io.write_json(tmp_path / "a.json", {"x": x, "bad": float("nan"), "v": [1.0, x]})
    text = (tmp_path / "a.json").read_text()
    assert "0.30000000000000004" in text
    back = io.read_json(tmp_path / "a.json")
    assert back["x"] == x and back["bad"] is None and back["v"][1] == x


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "strainsurf.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "0.1.0"
