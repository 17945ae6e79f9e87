"""Command-line entry point: ``holdq <subcommand>``.

Settings resolve in three layers: built-in defaults, then an optional JSON
``--config`` file, then explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from holdq import agent as agentmod
from holdq import baseline as basemod
from holdq import metrics, netcore
from holdq.env import EnvConfig
from holdq.errors import ConfigError, DataError, HoldQError
from holdq.market import PriceSeries, gen_synthetic, load_csv, save_csv

log = logging.getLogger("holdq")

TRACE_FIELDS = ("step", "trade_action", "learner_action", "trade_reward", "learner_reward", "loss", "copied")


@dataclass
class DataSpec:
    path: str | None = None
    kind: str = "sine"
    n: int = 5000
    seed: int = 0
    amplitude: float = 1.0
    period: float = 50.0
    step: float = 0.01
    drift: float = 0.001
    noise: float = 0.01
    base: float = 100.0

    def load(self) -> PriceSeries:
        if self.path:
            return load_csv(self.path)
        return gen_synthetic(self.kind, self.n, self.seed, amplitude=self.amplitude, period=self.period,
                             step=self.step, drift=self.drift, noise=self.noise, base=self.base)


@dataclass
class RunSpec:
    data: DataSpec = field(default_factory=DataSpec)
    agent: agentmod.AgentConfig = field(default_factory=agentmod.AgentConfig)
    baseline: basemod.ClassifierConfig = field(default_factory=basemod.ClassifierConfig)
    cost: float | None = None
    cost_pct: float | None = None
    costs: list[float] = field(default_factory=list)
    zscore: bool = False
    eval_from: float = 0.0
    out: str = "out"
    figures: bool = True

    def resolve_cost(self, series: PriceSeries, value: float | None = None, pct: bool | None = None) -> float:
        """Absolute cost in price units (percent costs use the first close as reference)."""
        if value is None:
            if self.cost is not None and self.cost_pct is not None:
                raise ConfigError("give either cost or cost_pct, not both")
            if self.cost_pct is not None:
                value, pct = self.cost_pct, True
            else:
                value, pct = (self.cost or 0.0), False
        if value < 0:
            raise ConfigError("costs must be >= 0")
        return value / 100.0 * float(series.closes[0]) if pct else float(value)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunSpec":
        d = dict(d)
        spec = cls()
        if "data" in d:
            spec.data = DataSpec(**d.pop("data"))
        if "agent" in d:
            spec.agent = agentmod.AgentConfig(**d.pop("agent"))
        if "baseline" in d:
            spec.baseline = basemod.ClassifierConfig(**d.pop("baseline"))
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for k, v in d.items():
            setattr(spec, k, v)
        return spec


# flag name -> (section, field)
_DATA_FLAGS = {"data": "path", "kind": "kind", "n": "n", "data_seed": "seed", "amplitude": "amplitude",
               "period": "period", "step": "step", "drift": "drift", "noise": "noise", "base": "base"}
_AGENT_FLAGS = {"gamma": "gamma", "epsilon": "epsilon", "horizon": "H", "buffer": "buffer_cap_L",
                "batch": "batch_N", "lr": "lr", "lstm_hidden": "lstm_hidden", "fc_hidden": "fc_hidden",
                "seed": "seed", "copy_every": "copy_check_every", "input_scale": "input_scale",
                "warmup": "warmup_steps"}
_BASE_FLAGS = {"base_epochs": "epochs", "base_lr": "lr", "train_frac": "train_frac"}


def build_spec(args) -> RunSpec:
    spec = RunSpec()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        spec = RunSpec.from_dict(json.loads(path.read_text()))
    a = vars(args)
    data = {v: a[k] for k, v in _DATA_FLAGS.items() if a.get(k) is not None}
    if data:
        spec.data = replace(spec.data, **data)
    ag = {v: a[k] for k, v in _AGENT_FLAGS.items() if a.get(k) is not None}
    if ag:
        spec.agent = replace(spec.agent, **ag)
    # the classifier shares the agent's window and network width
    bl = {v: a[k] for k, v in _BASE_FLAGS.items() if a.get(k) is not None}
    spec.baseline = replace(spec.baseline, H=spec.agent.H, lstm_hidden=spec.agent.lstm_hidden,
                            fc_hidden=spec.agent.fc_hidden, seed=spec.agent.seed, **bl)
    for name in ("cost", "cost_pct", "out", "eval_from"):
        if a.get(name) is not None:
            setattr(spec, name, a[name])
    if a.get("costs"):
        spec.costs = [float(c) for c in a["costs"].split(",") if c.strip()]
    if a.get("zscore"):
        spec.zscore = True
    if a.get("no_figures"):
        spec.figures = False
    if spec.cost is not None and spec.cost_pct is not None:
        raise ConfigError("give either --cost or --cost-pct, not both")
    return spec


def zscore_scale(series: PriceSeries, spec: RunSpec) -> float:
    """1/std of the diffs seen during warmup (no look-ahead past the warmup prefix)."""
    d = np.diff(series.closes)
    k = max(spec.agent.warmup_steps, spec.agent.H + 1, 2)
    sd = float(np.std(d[:k]))
    return 1.0 if sd == 0 else 1.0 / sd


# -- file formats ------------------------------------------------------------

def write_trace(trace: agentmod.RunTrace, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for row in zip(trace.steps, trace.trade_actions, trace.learner_actions, trace.trade_rewards,
                       trace.rewards, trace.losses, trace.copied):
            t, ta, la, tr, r, loss, cp = row
            w.writerow([t, ta, la, repr(float(tr)), repr(float(r)),
                        "" if math.isnan(loss) else repr(float(loss)), int(cp)])


def read_trace(path) -> agentmod.RunTrace:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"trace file not found: {path}")
    tr = agentmod.RunTrace()
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_FIELDS:
            raise DataError(f"{path}: expected header {','.join(TRACE_FIELDS)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                tr.steps.append(int(row["step"]))
                tr.trade_actions.append(int(row["trade_action"]))
                tr.learner_actions.append(int(row["learner_action"]))
                tr.trade_rewards.append(float(row["trade_reward"]))
                tr.rewards.append(float(row["learner_reward"]))
                tr.losses.append(float(row["loss"]) if row["loss"] else float("nan"))
                tr.copied.append(bool(int(row["copied"])))
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return tr


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


def trace_report(trace: agentmod.RunTrace, series: PriceSeries, cost_c: float,
                 eval_from: float = 0.0) -> metrics.MetricsReport:
    """Trade-ledger metrics, optionally restricted to the last ``1 - eval_from`` of the run."""
    start = int(round(eval_from * len(trace)))
    acts = trace.trade_actions[start:]
    if not acts:
        return metrics.MetricsReport(cost=cost_c, sharpe_degenerate=True)
    t0 = trace.steps[start]
    prices = series.slice(t0 + 1, t0 + len(acts) + 2)
    return metrics.evaluate(acts, prices, cost_c)


# -- commands ----------------------------------------------------------------

def execute_run(spec: RunSpec, series: PriceSeries, cost_c: float, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    acfg = spec.agent
    if spec.zscore:
        acfg = replace(acfg, input_scale=zscore_scale(series, spec))
    ag = agentmod.DualAgent(acfg)
    trace = agentmod.run_online(ag, series, EnvConfig(cost_c, acfg.H), progress_every=10_000)
    report = trace_report(trace, series, cost_c, spec.eval_from)
    write_trace(trace, out / "trace.csv")
    _write(out / "metrics.csv", metrics.emit_report(report, "csv"))
    _write(out / "metrics.json", metrics.emit_report(report, "json"))
    netcore.save_params(ag.theta, out / "theta.json")
    netcore.save_params(ag.phi, out / "phi.json")
    if spec.figures:
        from holdq.plotting import plot_run

        plot_run(trace, trace.price_window(series), out / "run.png", title=f"cost {cost_c:g}")
    return trace, report


def _save_config(spec: RunSpec, out: Path, **extra) -> None:
    out.mkdir(parents=True, exist_ok=True)
    d = spec.to_dict()
    d.update(extra)
    _write(out / "config.json", json.dumps(d, indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    spec = build_spec(args)
    series = spec.data.load()
    cost_c = spec.resolve_cost(series)
    out = Path(spec.out)
    _save_config(spec, out, resolved_cost=cost_c)
    _, report = execute_run(spec, series, cost_c, out)
    sys.stdout.write(metrics.emit_report(report, "csv"))
    return 0


def cmd_sweep(args) -> int:
    spec = build_spec(args)
    if not spec.costs:
        raise ConfigError("sweep needs --costs, e.g. --costs 0,0.05,0.2")
    series = spec.data.load()
    pct = spec.cost_pct is not None or bool(getattr(args, "pct", False))
    out = Path(spec.out)
    resolved = [spec.resolve_cost(series, c, pct) for c in spec.costs]
    _save_config(spec, out, resolved_costs=resolved)
    reports = []
    for c in resolved:
        sub = out / f"cost_{c:g}"
        _save_config(spec, sub, resolved_cost=c)
        _, rep = execute_run(spec, series, c, sub)
        reports.append(rep)
    _write(out / "sweep.csv", metrics.emit_report(reports, "csv"))
    _write(out / "sweep.json", metrics.emit_report(reports, "json"))
    if spec.figures:
        from holdq.plotting import plot_sweep

        plot_sweep(reports, out / "sweep.png")
    sys.stdout.write(metrics.emit_report(reports, "csv"))
    return 0


def cmd_baseline(args) -> int:
    spec = build_spec(args)
    series = spec.data.load()
    costs = spec.costs or [None]
    out = Path(spec.out)
    bcfg = spec.baseline
    if spec.zscore:
        d = np.diff(series.closes)
        split = basemod.split_index(series, bcfg)
        sd = float(np.std(d[:split]))
        bcfg = replace(bcfg, input_scale=1.0 if sd == 0 else 1.0 / sd)
    _save_config(spec, out)
    reports = []
    for c in costs:
        cost_c = spec.resolve_cost(series) if c is None else spec.resolve_cost(
            series, c, spec.cost_pct is not None)
        res = basemod.run_baseline(series, cost_c, bcfg)
        log.info("baseline cost %g: train acc %.3f, test acc %.3f", cost_c, res.fit.train_accuracy,
                 res.test_accuracy)
        netcore.save_params(res.fit.params, out / f"baseline_{cost_c:g}.json")
        reports.append(res.report)
    _write(out / "metrics.csv", metrics.emit_report(reports, "csv"))
    _write(out / "metrics.json", metrics.emit_report(reports, "json"))
    if spec.figures and len(reports) > 1:
        from holdq.plotting import plot_sweep

        plot_sweep(reports, out / "baseline.png", title="baseline classifier")
    sys.stdout.write(metrics.emit_report(reports, "csv"))
    return 0


def cmd_gen_data(args) -> int:
    spec = build_spec(args)
    if not args.out:
        raise ConfigError("gen-data needs --out FILE.csv")
    series = spec.data.load()
    save_csv(series, args.out)
    print(f"wrote {len(series)} prices to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    dims = netcore.NetDims(args.horizon + 1, args.lstm_hidden, args.fc_hidden, 3)
    rng = np.random.default_rng(args.seed)
    from holdq.market import MarketState

    worst = (-1.0, "", 0)
    for trial in range(args.trials):
        params = netcore.NetworkParams.from_flat(dims, rng.normal(0.0, 0.5, netcore.init_params(dims, 0).n_params))
        state = MarketState(rng.normal(size=dims.horizon), int(rng.integers(3)) - 1)
        action = int(rng.integers(3)) - 1
        target = float(rng.normal())
        _, grads = netcore.loss_and_gradient(params, state, action, target)
        if args.corrupt:
            flat = grads.flatten()
            flat[len(flat) // 2] += 1e-3 * (1.0 + abs(flat[len(flat) // 2]))
            grads = netcore.GradientSet.from_flat(dims, flat)
        err, idx, _, _ = netcore.gradient_check(params, state, action, target, grads=grads)
        if err > worst[0]:
            worst = (err, netcore.describe_index(dims, idx), trial)
    err, where, trial = worst
    ok = err < args.tolerance
    print(f"{'PASS' if ok else 'FAIL'}: max relative error {err:.3e} at {where} (trial {trial}), "
          f"tolerance {args.tolerance:g}")
    return 0 if ok else 1


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    cfg_path = run_dir / "config.json"
    if not cfg_path.is_file():
        raise DataError(f"not a run directory (missing {cfg_path})")
    d = json.loads(cfg_path.read_text())
    cost_c = d.pop("resolved_cost", None)
    d.pop("resolved_costs", None)
    spec = RunSpec.from_dict(d)
    series = spec.data.load()
    if cost_c is None:
        cost_c = spec.resolve_cost(series)
    trace = read_trace(run_dir / "trace.csv")
    eval_from = spec.eval_from if args.eval_from is None else args.eval_from
    report = trace_report(trace, series, cost_c, eval_from)
    if args.figure:
        from holdq.plotting import plot_run

        plot_run(trace, trace.price_window(series), args.figure, title=f"cost {cost_c:g}")
    sys.stdout.write(metrics.emit_report(report, args.format))
    return 0


# -- argument parsing --------------------------------------------------------

def _add_data(p):
    g = p.add_argument_group("data")
    g.add_argument("--data", help="CSV with header timestamp,close")
    g.add_argument("--kind", choices=["sine", "walk", "trend"], help="synthetic market kind")
    g.add_argument("--n", type=int, help="synthetic series length")
    g.add_argument("--data-seed", type=int, help="seed for synthetic data (default 0)")
    g.add_argument("--amplitude", type=float)
    g.add_argument("--period", type=float)
    g.add_argument("--step", type=float, help="random-walk increment")
    g.add_argument("--drift", type=float)
    g.add_argument("--noise", type=float)
    g.add_argument("--base", type=float, help="base price level")


def _add_agent(p):
    g = p.add_argument_group("agent")
    g.add_argument("--config", help="JSON run configuration; flags override it")
    g.add_argument("--seed", type=int)
    g.add_argument("--gamma", type=float, help="discount rate (default 0.8)")
    g.add_argument("--epsilon", type=float, help="learner exploration rate (default 0.1)")
    g.add_argument("--horizon", type=int, help="window length H (default 32)")
    g.add_argument("--buffer", type=int, help="replay buffer capacity L (default 10000)")
    g.add_argument("--batch", type=int, help="minibatch size N (default 32)")
    g.add_argument("--lr", type=float, help="SGD learning rate (default 1e-3)")
    g.add_argument("--lstm-hidden", type=int)
    g.add_argument("--fc-hidden", type=int)
    g.add_argument("--copy-every", type=int, help="check the copy rule every k steps")
    g.add_argument("--input-scale", type=float, help="multiplier on diffs fed to the network")
    g.add_argument("--zscore", action="store_true", help="scale inputs by 1/std of warmup diffs")
    g.add_argument("--warmup", type=int, help="steps the trader stays flat while the learner trains")
    g.add_argument("--eval-from", type=float, help="fraction of the run excluded from metrics")
    g.add_argument("--no-figures", action="store_true")
    c = p.add_mutually_exclusive_group()
    c.add_argument("--cost", type=float, help="transaction cost in price units")
    c.add_argument("--cost-pct", type=float, help="transaction cost in percent of the first close")
    p.add_argument("--out", help="output directory")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="holdq", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="online run of the dual-network agent")
    _add_data(p)
    _add_agent(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="one online run per cost level")
    _add_data(p)
    _add_agent(p)
    p.add_argument("--costs", help="comma-separated cost levels")
    p.add_argument("--pct", action="store_true", help="interpret --costs as percentages")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("baseline", help="four-class LSTM classifier baseline")
    _add_data(p)
    _add_agent(p)
    p.add_argument("--costs", help="comma-separated cost levels")
    p.add_argument("--base-epochs", type=int)
    p.add_argument("--base-lr", type=float)
    p.add_argument("--train-frac", type=float)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("gen-data", help="write a synthetic price CSV")
    _add_data(p)
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gradcheck", help="finite-difference check of the network gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--lstm-hidden", type=int, default=8)
    p.add_argument("--fc-hidden", type=int, default=8)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="recompute metrics from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--eval-from", type=float)
    p.add_argument("--figure", help="also render the run figure to this path")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (HoldQError, OSError, ValueError) as exc:
        print(f"holdq {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
