import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from netbell import presets
from netbell.cli import EXIT_BUDGET, EXIT_COUNTEREXAMPLE, EXIT_OK, EXIT_USAGE, main
from netbell.correlations import CorrelatorTable
from netbell.inequality import QuantifiedBellExpression
from netbell.quantum import correlator_table, visibility_family


def run(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def bad_chsh(tmp_path):
    chsh = presets.load_seed("chsh")
    path = tmp_path / "bad.json"
    path.write_text(type(chsh)(chsh.network, chsh.k, chsh.groups, 0.5).to_json())
    return path


class TestExtend:
    def test_bilocal_to_trilocal(self, capsys):
        code, out, err = run(capsys, "extend", "--preset", "bilocal", "--anchor", "A3", "--plus", "0", "--minus", "1")
        assert code == EXIT_OK
        assert QuantifiedBellExpression.from_json(out) == presets.expression("trilocal")
        assert "+ party A4" in err and "+ source S3 feeds A3, A4" in err

    def test_chain_from_file(self, capsys, tmp_path):
        src = tmp_path / "chain3.json"
        src.write_text(presets.expression("chain3").to_json())
        dest = tmp_path / "chain4.json"
        code, _, _ = run(capsys, "extend", "--in", str(src), "--anchor", "A4", "--plus", "0", "--minus", "1",
                         "--out", str(dest))
        assert code == EXIT_OK
        assert QuantifiedBellExpression.from_json(dest.read_text()) == presets.expression("chain4")

    def test_bad_anchor(self, capsys, tmp_path):
        dest = tmp_path / "x.json"
        code, _, err = run(capsys, "extend", "--preset", "bilocal", "--anchor", "A9", "--plus", "0", "--minus", "1",
                           "--out", str(dest))
        assert code == EXIT_USAGE and "error" in err and not dest.exists()


class TestEvaluate:
    def test_quantum_violation(self, capsys):
        code, out, _ = run(capsys, "evaluate", "--preset", "bilocal", "--quantum", "bilocal", "--visibility", "0.6")
        doc = json.loads(out)
        assert code == EXIT_OK and doc["violated"]
        assert doc["min_lhs"] == pytest.approx(1.2, abs=1e-12)
        assert doc["closed_form"]["shape"] == "bilocal-sqrt"

    def test_table_csv(self, capsys, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(correlator_table(visibility_family("bilocal")(0.4)).to_csv())
        code, out, _ = run(capsys, "evaluate", "--preset", "bilocal", "--table", str(path))
        doc = json.loads(out)
        assert code == EXIT_OK and not doc["violated"] and doc["min_lhs"] == pytest.approx(0.8, abs=1e-12)

    def test_unbounded_is_json(self, capsys, tmp_path):
        net = presets.expression("bilocal").network
        vals = np.zeros(net.shape)
        vals[-1, -1, -1] = 1.0
        vals[0, 0, 0] = -1.0
        path = tmp_path / "t.json"
        path.write_text(CorrelatorTable(net, vals).to_json())
        code, out, _ = run(capsys, "evaluate", "--preset", "bilocal", "--table", str(path))
        assert code == EXIT_OK and json.loads(out)["min_lhs"] == "-inf"

    def test_schema_errors(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        assert run(capsys, "evaluate", "--in", str(bad), "--quantum", "bilocal")[0] == EXIT_USAGE
        assert run(capsys, "evaluate", "--quantum", "bilocal")[0] == EXIT_USAGE
        assert run(capsys, "evaluate", "--preset", "nope", "--quantum", "bilocal")[0] == EXIT_USAGE
        assert run(capsys, "evaluate", "--preset", "bilocal", "--quantum", "trilocal")[0] == EXIT_USAGE

    def test_argparse_error_is_exit_1(self, capsys):
        assert run(capsys, "evaluate", "--visibility", "abc")[0] == EXIT_USAGE
        assert run(capsys, "frobnicate")[0] == EXIT_USAGE


class TestScan:
    def test_bilocal(self, capsys, tmp_path):
        curve = tmp_path / "curve.csv"
        code, out, _ = run(capsys, "scan", "--preset", "bilocal", "--curve", str(curve), "--points", "5")
        doc = json.loads(out)
        assert code == EXIT_OK and abs(doc["critical"] - 0.5) <= 1e-6
        rows = list(csv.DictReader(io.StringIO(curve.read_text())))
        assert len(rows) == 5 and float(rows[-1]["V"]) == 1.0

    def test_model_file(self, capsys, tmp_path):
        model = tmp_path / "m.json"
        model.write_text(presets.model("mermin_net").to_json())
        code, out, _ = run(capsys, "scan", "--in", str(model), "--inequality-preset", "mermin_net")
        assert code == EXIT_OK and abs(json.loads(out)["critical"] - 1 / 2**1.5) <= 1e-6

    def test_no_crossing(self, capsys):
        assert run(capsys, "scan", "--preset", "bilocal", "--range", "0", "0.4")[0] == EXIT_USAGE


class TestVerify:
    def test_ok(self, capsys):
        code, out, _ = run(capsys, "verify", "--preset", "bilocal", "--seed", "1", "--samples", "500")
        doc = json.loads(out)
        assert code == EXIT_OK and doc["verified"] and doc["strategy_count"] == 64

    def test_counterexample(self, capsys, bad_chsh):
        code, out, _ = run(capsys, "verify", "--in", str(bad_chsh), "--seed", "0", "--samples", "10")
        assert code == EXIT_COUNTEREXAMPLE
        assert json.loads(out)["counterexample"]["kind"] == "deterministic"

    def test_budget(self, capsys, tmp_path):
        dest = tmp_path / "v.json"
        code, _, err = run(capsys, "verify", "--preset", "trilocal", "--seed", "0", "--budget", "10",
                           "--out", str(dest))
        assert code == EXIT_BUDGET and "budget" in err and not dest.exists()

    def test_seed_required(self, capsys):
        assert run(capsys, "verify", "--preset", "bilocal")[0] == EXIT_USAGE

    def test_byte_identical(self, capsys, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for dest in (a, b):
            assert run(capsys, "verify", "--preset", "star3", "--seed", "7", "--samples", "2000",
                       "--out", str(dest))[0] == EXIT_OK
        assert a.read_bytes() == b.read_bytes()


class TestQuantumTable:
    def test_formats(self, capsys, tmp_path):
        code, out, _ = run(capsys, "quantum-table", "--preset", "bilocal", "--visibility", "0.5")
        t = CorrelatorTable.from_json(out)
        assert code == EXIT_OK and t[(1, 1, 1)] == pytest.approx(0.25, abs=1e-12)
        dest = tmp_path / "t.csv"
        assert run(capsys, "quantum-table", "--preset", "bilocal", "--out", str(dest))[0] == EXIT_OK
        assert dest.read_text().splitlines()[0] == "A1,A2,A3,value"
        code, out, _ = run(capsys, "quantum-table", "--preset", "mermin_net", "--format", "model")
        assert code == EXIT_OK and json.loads(out) == json.loads(presets.model("mermin_net").to_json())


class TestWEval:
    def test_values(self, capsys):
        c = 0.3 / 2**1.5
        code, out, _ = run(capsys, "w-eval", "--values", str(c), str(c), str(c), str(-c))
        doc = json.loads(out)
        assert code == EXIT_OK and doc["satisfied"]
        assert doc["W"] == pytest.approx(3 * 0.3**4 * (1 - 2**1.5 * 0.3), abs=1e-12)

    def test_range(self, capsys):
        code, out, _ = run(capsys, "w-eval", "--range", "0", "1", "--points", "11")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == EXIT_OK and len(rows) == 11
        for r in rows:
            assert float(r["W"]) == pytest.approx(float(r["reference"]), abs=1e-10)

    def test_table(self, capsys, tmp_path):
        path = tmp_path / "t.json"
        path.write_text(correlator_table(visibility_family("trilocal")(1.0)).to_json())
        code, out, _ = run(capsys, "w-eval", "--in", str(path))
        assert code == EXIT_OK and not json.loads(out)["satisfied"]


def test_entry_point():
    res = subprocess.run([sys.executable, "-m", "netbell.cli", "w-eval", "--values", "0", "0", "0", "0"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and json.loads(res.stdout)["W"] == 0
