import json
from pathlib import Path

import pytest

from holdq.cli import main, read_trace
from holdq.market import gen_synthetic
from holdq.metrics import parse_report

SMALL = ["--kind", "sine", "--n", "260", "--period", "20", "--horizon", "4", "--lstm-hidden", "3",
         "--fc-hidden", "3", "--batch", "8", "--buffer", "64", "--lr", "0.05", "--seed", "1"]


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_run_is_deterministic(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        code, out, _ = run_cli(capsys, "run", *SMALL, "--cost", "0.01", "--out", tmp_path / name, "--no-figures")
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]
    for f in ("metrics.csv", "metrics.json", "trace.csv", "theta.json", "phi.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    (rep,) = parse_report(outs[0], "csv")
    assert rep.cost == 0.01


def test_run_writes_figure(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "run", *SMALL, "--out", tmp_path, "--warmup", "20")
    assert code == 0
    png = (tmp_path / "run.png").read_bytes()
    assert png[:8] == b"\x89PNG\r\n\x1a\n"
    trace = read_trace(tmp_path / "trace.csv")
    assert trace.trade_actions[:20] == [0] * 20


def test_missing_csv_names_path(tmp_path, capsys):
    missing = tmp_path / "no_such_prices.csv"
    code, out, err = run_cli(capsys, "run", "--data", missing, "--out", tmp_path / "o")
    assert code != 0
    assert str(missing) in err
    assert out == ""


def test_csv_data_round_trip(tmp_path, capsys):
    csv_path = tmp_path / "prices.csv"
    code, _, _ = run_cli(capsys, "gen-data", "--kind", "walk", "--n", "200", "--data-seed", "3", "--out", csv_path)
    assert code == 0
    assert csv_path.read_text().startswith("timestamp,close\n")
    args = SMALL[4:]  # keep model flags, drop the synthetic ones
    code, out, _ = run_cli(capsys, "run", "--data", csv_path, *args, "--out", tmp_path / "r", "--no-figures")
    assert code == 0
    assert len(parse_report(out, "csv")) == 1


def test_sweep_one_row_per_cost(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "sweep", *SMALL, "--costs", "0,0.02,0.1", "--out", tmp_path)
    assert code == 0
    reps = parse_report(out, "csv")
    assert [r.cost for r in reps] == [0.0, 0.02, 0.1]
    assert parse_report((tmp_path / "sweep.json").read_text(), "json") == reps
    assert (tmp_path / "sweep.png").is_file()
    for c in ("0", "0.02", "0.1"):
        assert (tmp_path / f"cost_{c}" / "trace.csv").is_file()


def test_sweep_percent_costs(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "sweep", *SMALL, "--base", "200", "--costs", "0.01,0.05", "--pct",
                           "--out", tmp_path, "--no-figures")
    assert code == 0
    assert [r.cost for r in parse_report(out, "csv")] == pytest.approx([0.02, 0.1])


def test_sweep_needs_costs(tmp_path, capsys):
    code, _, err = run_cli(capsys, "sweep", *SMALL, "--out", tmp_path)
    assert code == 1
    assert "--costs" in err


def test_conflicting_costs_rejected(capsys):
    with pytest.raises(SystemExit):
        main(["run", "--cost", "0.1", "--cost-pct", "0.01"])


def test_config_file_layers(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"agent": {"H": 4, "lstm_hidden": 3, "fc_hidden": 3, "batch_N": 8,
                                         "buffer_cap_L": 64, "seed": 5},
                               "data": {"n": 200, "period": 20}, "cost": 0.05}))
    code, out, _ = run_cli(capsys, "run", "--config", cfg, "--seed", "6", "--out", tmp_path / "o",
                           "--no-figures")
    assert code == 0
    saved = json.loads((tmp_path / "o" / "config.json").read_text())
    assert saved["agent"]["seed"] == 6
    assert saved["agent"]["H"] == 4
    assert saved["resolved_cost"] == 0.05


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "blue"}))
    code, _, err = run_cli(capsys, "run", "--config", cfg, "--out", tmp_path / "o")
    assert code == 1
    assert "colour" in err


def test_report_recomputes_metrics(tmp_path, capsys):
    _, out, _ = run_cli(capsys, "run", *SMALL, "--cost", "0.02", "--out", tmp_path, "--no-figures")
    code, again, _ = run_cli(capsys, "report", tmp_path)
    assert code == 0
    assert again == out
    code, js, _ = run_cli(capsys, "report", tmp_path, "--format", "json", "--eval-from", "0.5",
                          "--figure", tmp_path / "fig.png")
    assert code == 0
    assert (tmp_path / "fig.png").is_file()
    assert parse_report(js, "json")[0].trade_num <= parse_report(out, "csv")[0].trade_num


def test_report_on_sweep_subdirectory(tmp_path, capsys):
    _, out, _ = run_cli(capsys, "sweep", *SMALL, "--costs", "0,0.1", "--out", tmp_path, "--no-figures")
    code, sub, _ = run_cli(capsys, "report", tmp_path / "cost_0.1")
    assert code == 0
    assert parse_report(sub, "csv") == parse_report(out, "csv")[1:]


def test_report_rejects_non_run_dir(tmp_path, capsys):
    code, _, err = run_cli(capsys, "report", tmp_path)
    assert code == 1
    assert "config.json" in err


BASE = ["--kind", "sine", "--n", "300", "--period", "20", "--horizon", "6", "--lstm-hidden", "4",
        "--fc-hidden", "4", "--base-epochs", "3", "--input-scale", "5"]


def test_baseline_is_deterministic(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        code, out, _ = run_cli(capsys, "baseline", *BASE, "--costs", "0,0.1", "--out", tmp_path / name)
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]
    assert len(parse_report(outs[0], "csv")) == 2
    for f in ("metrics.csv", "metrics.json", "baseline_0.1.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_baseline_missing_csv(tmp_path, capsys):
    missing = tmp_path / "gone.csv"
    code, _, err = run_cli(capsys, "baseline", "--data", missing, "--out", tmp_path / "o")
    assert code == 1
    assert str(missing) in err


def test_gradcheck_passes(capsys):
    code, out, _ = run_cli(capsys, "gradcheck", "--trials", "3")
    assert code == 0
    assert out.startswith("PASS")


def test_gradcheck_detects_corruption(capsys):
    code, out, _ = run_cli(capsys, "gradcheck", "--trials", "2", "--corrupt")
    assert code == 1
    assert out.startswith("FAIL")
    assert "w_" in out or "b_" in out


def test_gradcheck_zero_tolerance_fails(capsys):
    code, out, _ = run_cli(capsys, "gradcheck", "--trials", "1", "--tolerance", "0")
    assert code == 1
    assert out.startswith("FAIL")


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "holdq", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "gradcheck" in res.stdout


DATA = Path(__file__).parent / "data"
GOLD_SWEEP = ["--kind", "sine", "--n", "1500", "--period", "20", "--horizon", "6", "--lstm-hidden", "4",
              "--fc-hidden", "4", "--batch", "16", "--buffer", "256", "--lr", "0.1", "--input-scale", "10",
              "--warmup", "700", "--seed", "1", "--costs", "0,0.05,0.2", "--no-figures"]
GOLD_BASE = ["--kind", "sine", "--n", "1000", "--period", "20", "--horizon", "6", "--lstm-hidden", "4",
             "--fc-hidden", "4", "--base-epochs", "40", "--base-lr", "0.2", "--input-scale", "10",
             "--costs", "0,0.05,0.2"]


def count_and_pnl(actions, prices, c):
    """Trade count and net P&L from a plain position walk."""
    n, pnl, pos = 0, 0.0, 0
    for a, p0, p1 in zip(actions, prices, prices[1:]):
        if a != pos and a != 0:
            n += 1
        pnl += a * (p1 - p0) - c * abs(a - pos)
        pos = a
    return n, pnl


def test_sweep_golden(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "sweep", *GOLD_SWEEP, "--out", tmp_path)
    assert code == 0
    assert out == (DATA / "sweep_golden.csv").read_text()
    series = gen_synthetic("sine", 1500, period=20)
    for rep in parse_report(out, "csv"):
        tr = read_trace(tmp_path / f"cost_{rep.cost:g}" / "trace.csv")
        prices = tr.price_window(series).closes
        n, pnl = count_and_pnl(tr.trade_actions, prices, rep.cost)
        assert rep.trade_num == n
        # an open final position is not charged an exit, the walk above never charges one either
        assert rep.cumulative_pnl == pytest.approx(pnl, abs=1e-9)
        assert sum(tr.trade_rewards) == pytest.approx(pnl, abs=1e-9)


def test_baseline_golden(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "baseline", *GOLD_BASE, "--out", tmp_path)
    assert code == 0
    assert out == (DATA / "baseline_golden.csv").read_text()
    assert [r.cost for r in parse_report(out, "csv")] == [0.0, 0.05, 0.2]
