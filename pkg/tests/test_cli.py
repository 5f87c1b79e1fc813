import csv
import json
import math

import pytest

from blowuplab import cli
from blowuplab import config as cfgmod
from blowuplab.errors import InstabilityError
from blowuplab.functionals import TRACE_COLUMNS
from blowuplab.lifespan import SWEEP_COLUMNS

QUICK = """\
[solver]
dx = 0.02
t_max = 20
[verify]
epsilon = 0.6
sweep_epsilons = 0.4, 0.6, 0.8
[sweep]
epsilons = 0.4, 0.6, 0.8
refinements = 2
"""


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def special(capsys, *args):
    assert cli.main(["special", *args]) == 0
    return [float(x) for x in capsys.readouterr().out.split()]


def test_special_phi(capsys):
    (v,) = special(capsys, "phi", "--n", "3", "--eta", "1", "--r", "1")
    assert v == pytest.approx(4 * math.pi * math.sinh(1.0), rel=1e-12)
    assert v == pytest.approx(14.7673, abs=1e-3)


def test_special_besselk(capsys):
    (v,) = special(capsys, "besselk", "--alpha", "0.5", "--t", "1")
    assert v == pytest.approx(math.sqrt(math.pi / 2) * math.exp(-1), rel=1e-10)


def test_special_kernel(capsys):
    base = ["kernel", "--mu", "1", "--nu-sq", "1", "--d", "2", "--t", "0"]
    assert special(capsys, *base, "--eta", "4") == [pytest.approx(-3.0, abs=1e-14)]
    assert special(capsys, *base, "--eta", "1") == [pytest.approx(0.0, abs=1e-14)]


def test_special_misc(capsys):
    assert special(capsys, "glassey", "--n-eff", "4") == [pytest.approx(5 / 3)]
    assert special(capsys, "discriminant", "--mu", "0.5", "--nu-sq", "0.25") == [-0.75]
    assert special(capsys, "lifespan-exponent", "--d", "1") == [pytest.approx(2.0)]
    assert cli.main(["special", "thresholds"]) == 0
    assert "eta_1" in capsys.readouterr().out


def test_special_missing_eta(capsys):
    assert cli.main(["special", "phi", "--r", "1"]) == 2
    assert "--eta" in capsys.readouterr().err


def test_special_domain_error(capsys):
    assert cli.main(["special", "lifespan-exponent", "--d", "0.2"]) == 2


def test_help_lists_exit_codes(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    out = capsys.readouterr().out
    for code in "01234":
        assert f"\n  {code}  " in out
    assert "BLOWUPLAB_THREADS" in out


def test_no_command(capsys):
    assert cli.main([]) == 2


def test_print_defaults(capsys):
    assert cli.main(["--print-defaults"]) == 0
    out = capsys.readouterr().out
    assert out == cfgmod.DEFAULTS
    assert cli.main(["verify", "--print-defaults"]) == 0


def test_defaults_round_trip(tmp_path):
    cfg = cfgmod.load()
    path = tmp_path / "c.ini"
    path.write_text(cfgmod.dump(cfg))
    again = cfgmod.load(path)
    assert again.model == cfg.model and again.test_fn == cfg.test_fn
    assert again.solver == cfg.solver and again.epsilons == cfg.epsilons


def test_flag_before_subcommand(tmp_path, monkeypatch):
    seen = {}
    monkeypatch.setattr(cli, "cmd_simulate", lambda cfg: seen.setdefault("out", cfg.output_dir) and 0)
    cli.main(["--output", str(tmp_path / "a"), "simulate"])
    assert seen["out"] == tmp_path / "a"


@pytest.mark.parametrize("text", [
    "[model]\nbogus = 1\n",
    "[nosuch]\nx = 1\n",
    "[test_function]\nd = 0.3\n",  # d <= mu
    "[model]\nmu = abc\n",
    "[solver]\ncfl = 0.9\n",
])
def test_config_errors(tmp_path, capsys, text):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    assert cli.main(["--config", str(path), "simulate", "--output", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["simulate", "--config", str(tmp_path / "none.ini")]) == 2


def test_sweep_theta_nonpositive(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[test_function]\nd = 2.5\n")
    assert cli.main(["sweep", "--config", str(path), "--output", str(tmp_path)]) == 2


def test_instability_exit(monkeypatch, tmp_path):
    def boom(*a, **k):
        raise InstabilityError("oscillating")
    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["simulate", "--output", str(tmp_path)]) == 3


@pytest.fixture
def quick_cfg(tmp_path):
    path = tmp_path / "quick.ini"
    path.write_text(QUICK)
    return path


def test_simulate_outputs(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(QUICK + "[data]\nepsilon = 0.6\n")
    out = tmp_path / "new" / "dir"
    assert cli.main(["simulate", "--config", str(cfg), "--output", str(out)]) == 0
    assert "blew_up" in capsys.readouterr().out
    rows = read_csv(out / "trace.csv")
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert read_csv(out / "trajectory.csv")[0] == ["t", "r", "u", "v"]


def test_simulate_zero_data(tmp_path, quick_cfg):
    path = tmp_path / "zero.ini"
    path.write_text(QUICK + "[data]\nepsilon = 0\n")
    assert cli.main(["simulate", "--config", str(path), "--output", str(tmp_path)]) == 0
    head, *rows = read_csv(tmp_path / "trace.csv")
    cols = [head.index("F"), head.index("sup_u")]
    assert rows and all(float(r[i]) == 0.0 for r in rows for i in cols)


def test_sweep_outputs_and_determinism(tmp_path, quick_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["sweep", "--config", str(quick_cfg), "--output", str(out)]) == 0
    for name in ("sweep.csv", "fit.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert tuple(read_csv(a / "sweep.csv")[0]) == SWEEP_COLUMNS
    assert json.loads((a / "fit.json").read_text())["regime"] == "delta<0"


def test_sweep_all_censored(tmp_path, capsys):
    path = tmp_path / "c.ini"
    path.write_text("[solver]\ndx = 0.05\nt_max = 1\n[sweep]\nepsilons = 0.01, 0.02, 0.04\n"
                    "refinements = 1\n")
    assert cli.main(["sweep", "--config", str(path), "--output", str(tmp_path)]) == 4
    assert "censored" in capsys.readouterr().out


def test_verify_quick(tmp_path, quick_cfg, capsys):
    assert cli.main(["verify", "--config", str(quick_cfg), "--output", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "ledger.json").read_text())
    ids = [r["check_id"] for r in rows]
    assert ids == sorted(ids) and "lifespan_inequality" in ids and "H_dominates_L" in ids
    assert all(r["status"] != "fail" for r in rows)
    assert "0 failed" in capsys.readouterr().out


def test_verify_failure_exit(tmp_path, quick_cfg, monkeypatch):
    from blowuplab.verifier import CheckResult
    monkeypatch.setattr(cli, "static_checks",
                        lambda *a: [CheckResult("forced", "x", "fail", -1.0)])
    assert cli.main(["verify", "--config", str(quick_cfg), "--output", str(tmp_path)]) == 1
