"""Command-line front end.

    sinkarima simulate --out-dir data --n 2000 --phi 0.5 --seed 7
    sinkarima fit      --input data/readings.csv --out-dir fit
    sinkarima forecast --input data/readings.csv --out-dir fc --horizon 25
    sinkarima clean    --input data/readings.csv --out-dir clean
    sinkarima detect   --input data/readings.csv --out-dir det
    sinkarima acf      --input data/readings.csv --out-dir diag

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import anomaly, arima, series, sink, synth
from .errors import DataError, NumericalError, SinkArimaError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str = ""
    input: Optional[str] = None
    out_dir: str = "."
    node: Optional[List[int]] = None
    channel: Optional[str] = None
    level: float = 0.95
    pmax: int = 15
    qmax: int = 35
    dmax: int = 2
    min_train: int = 200
    interval: float = sink.NOMINAL_INTERVAL
    tolerance: float = sink.SNAP_TOLERANCE
    segments: List[str] = field(default_factory=list)
    seed: int = 0
    horizon: int = 5
    model: Optional[str] = None
    refit_mode: str = "observed"
    max_lag: int = 40
    lag: int = 1
    # simulate
    n: int = 1000
    nodes: int = 1
    phi: List[float] = field(default_factory=list)
    theta: List[float] = field(default_factory=list)
    mean: float = 0.0
    variance: float = 1.0
    start_time: float = 0.0
    spikes: int = 0
    spike_index: List[int] = field(default_factory=list)
    spike_run: Optional[str] = None
    spike_sigma: float = 6.0
    spike_nodes: Optional[List[int]] = None

    def validate(self):
        if not 0 < self.level < 1:
            raise UsageError(f"--level must lie in (0, 1), got {self.level}")
        for name in ("pmax", "qmax", "dmax", "min_train", "spikes"):
            if getattr(self, name) < 0:
                raise UsageError(f"--{name.replace('_', '-')} must be non-negative")
        if self.dmax > series.D_MAX:
            raise UsageError(f"--dmax must be at most {series.D_MAX}")
        if not 1 <= self.horizon <= arima.MAX_HORIZON:
            raise UsageError(f"--horizon must lie in 1..{arima.MAX_HORIZON}")
        if not self.interval > 0:
            raise UsageError("--interval must be positive")
        if not 0 <= self.tolerance < 0.5:
            raise UsageError("--tolerance must lie in [0, 0.5)")
        if self.channel is not None and self.channel not in sink.CHANNELS:
            raise UsageError(f"--channel must be one of {', '.join(sink.CHANNELS)}")
        if self.refit_mode not in ("observed", "substitute", "drop"):
            raise UsageError("--refit-mode must be observed, substitute or drop")
        if self.n < 1 or self.nodes < 1:
            raise UsageError("--n and --nodes must be positive")
        try:
            for s in self.segments:
                sink.Segment.parse(s)
        except ValueError as exc:
            raise UsageError(str(exc))
        if self.command in ("fit", "forecast", "clean", "detect", "acf") and not self.input:
            raise UsageError(f"{self.command} needs --input")

    @property
    def bounds(self) -> arima.SelectionBounds:
        return arima.SelectionBounds(self.pmax, self.qmax, self.dmax)

    def detector(self) -> anomaly.DetectorConfig:
        return anomaly.DetectorConfig(level=self.level, bounds=self.bounds, min_train=self.min_train,
                                      refit_mode=self.refit_mode)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _float_list(text):
    return [float(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    shared = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    g = shared.add_argument_group("shared options")
    g.add_argument("--config", help="JSON file of option values; flags given here override it")
    g.add_argument("--input", help="readings CSV: node_id,timestamp,channel,value")
    g.add_argument("--out-dir", dest="out_dir", help="directory for output files (created if needed)")
    g.add_argument("--node", type=_int_list, help="comma-separated node ids to process (default: all)")
    g.add_argument("--channel", help="temperature or light (default: the only channel present)")
    g.add_argument("--level", type=float, help="confidence level of the anomaly interval (default 0.95)")
    g.add_argument("--pmax", type=int, help="largest AR order searched (default 15)")
    g.add_argument("--qmax", type=int, help="largest MA order searched (default 35)")
    g.add_argument("--dmax", type=int, help="largest differencing order tried (default 2)")
    g.add_argument("--min-train", dest="min_train", type=int,
                   help="samples needed to fit a model; also the training prefix length (default 200)")
    g.add_argument("--interval", type=float, help="nominal sampling period in seconds (default 2)")
    g.add_argument("--tolerance", type=float,
                   help="snap tolerance as a fraction of the interval (default 0.25)")
    g.add_argument("--segments", action="append",
                   help="label:start:end, 0-based inclusive grid indices; repeatable")
    g.add_argument("--seed", type=int, help="random seed for simulate (default 0)")
    g.add_argument("--horizon", type=int, help="forecast steps, at most 25 (default 5)")

    parser = _Parser(prog="sinkarima", description="ARIMA anomaly detection and repair for sensor streams.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("fit", parents=[shared], argument_default=argparse.SUPPRESS,
                   help="select and fit a model per node; write model, ACF, PACF and lag-plot tables")

    p = sub.add_parser("forecast", parents=[shared], argument_default=argparse.SUPPRESS,
                       help="forecast table step,point,std_err,lower,upper")
    p.add_argument("--model", help="model document to use instead of fitting")

    for name, text in (("clean", "detect anomalies and replace them with forecasts"),
                       ("detect", "like clean, but output values are left as reported")):
        p = sub.add_parser(name, parents=[shared], argument_default=argparse.SUPPRESS, help=text)
        p.add_argument("--refit-mode", dest="refit_mode",
                       help="data used to refit after 5 anomalies: observed, substitute or drop")

    p = sub.add_parser("acf", parents=[shared], argument_default=argparse.SUPPRESS,
                       help="ACF, PACF, lag-plot tables and a stationarity report")
    p.add_argument("--max-lag", dest="max_lag", type=int, help="largest lag tabulated (default 40)")
    p.add_argument("--lag", type=int, help="lag for the lag plot (default 1)")

    p = sub.add_parser("simulate", parents=[shared], argument_default=argparse.SUPPRESS,
                       help="write a synthetic readings CSV and a ground-truth sidecar")
    p.add_argument("--n", type=int, help="samples per node (default 1000)")
    p.add_argument("--nodes", type=int, help="number of nodes, ids 1..N (default 1)")
    p.add_argument("--phi", type=_float_list, help="AR coefficients, comma-separated")
    p.add_argument("--theta", type=_float_list, help="MA coefficients, comma-separated")
    p.add_argument("--mean", type=float, help="process mean (default 0)")
    p.add_argument("--variance", type=float, help="innovation variance (default 1)")
    p.add_argument("--start-time", dest="start_time", type=float, help="first timestamp (default 0)")
    p.add_argument("--spikes", type=int, help="number of isolated spikes at random positions after training")
    p.add_argument("--spike-index", dest="spike_index", type=_int_list,
                   help="comma-separated explicit spike positions")
    p.add_argument("--spike-run", dest="spike_run", help="start:length of a run of consecutive spikes")
    p.add_argument("--spike-sigma", dest="spike_sigma", type=float,
                   help="spike size in innovation standard deviations (default 6)")
    p.add_argument("--spike-nodes", dest="spike_nodes", type=_int_list,
                   help="nodes that receive spikes (default: all)")
    return parser


def resolve_config(argv) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    values = {}
    cfg_path = ns.pop("config", None)
    known = {f.name for f in fields(RunConfig)}
    if cfg_path:
        try:
            loaded = json.loads(Path(cfg_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {cfg_path}: {exc}")
        unknown = set(loaded) - known
        if unknown:
            raise UsageError(f"unknown config keys in {cfg_path}: {', '.join(sorted(unknown))}")
        values.update(loaded)
    values.update(ns)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# --- output helpers ---------------------------------------------------------

def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return repr(float(x))


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n"


# --- data selection ---------------------------------------------------------

def load_grids(cfg: RunConfig):
    path = Path(cfg.input)
    try:
        readings = sink.read_readings(path)
    except OSError as exc:
        raise DataError(f"cannot read input {path}: {exc.strerror or exc}") from None
    batch = select_batch(cfg, sink.ingest(readings))
    grids = {}
    for key, group in batch.groups.items():
        grids[key] = sink.regularize(group, cfg.interval, cfg.tolerance)
    return grids


def select_batch(cfg: RunConfig, batch: sink.IngestResult) -> sink.IngestResult:
    groups = batch.groups
    if cfg.node:
        groups = {k: v for k, v in groups.items() if k[0] in cfg.node}
    channels = sorted({k[1] for k in groups})
    channel = cfg.channel
    if channel is None:
        if len(channels) > 1:
            raise UsageError(f"input has channels {', '.join(channels)}; choose one with --channel")
        channel = channels[0] if channels else None
    groups = {k: v for k, v in groups.items() if k[1] == channel}
    if not groups:
        raise DataError("no readings left after node/channel selection")
    return sink.IngestResult(groups, [d for d in batch.duplicates if (d.node_id, d.channel) in groups])


def _stem(key, label=None) -> str:
    s = f"node{key[0]}_{key[1]}"
    return f"{s}_{label}" if label else s


def _pieces(cfg: RunConfig, key, grid):
    ts = grid.filled()
    if not cfg.segments:
        return [(_stem(key), ts)]
    segs = [sink.Segment.parse(s) for s in cfg.segments]
    return [(_stem(key, label), sub) for label, sub in sink.segment(ts, segs)]


def correlogram_rows(result: series.CorrelogramResult):
    return [(k, _num(c), _num(result.band)) for k, c in enumerate(result.coefficients)]


def write_diagnostic_tables(out: Path, stem: str, values, max_lag: int, lag: int) -> dict:
    last = min(max_lag, len(values) - 1)
    a = series.acf(values, last)
    pa = series.pacf(values, last)
    lp = series.lag_plot_pairs(values, lag)
    write_atomic(out / f"{stem}_acf.csv", csv_text(("lag", "acf", "band"), correlogram_rows(a)))
    write_atomic(out / f"{stem}_pacf.csv", csv_text(("lag", "pacf", "band"), correlogram_rows(pa)))
    write_atomic(out / f"{stem}_lagplot.csv",
                 csv_text(("x_t", f"x_t_plus_{lag}"), [(_num(u), _num(v)) for u, v in lp.pairs]))
    return {"lag_plot_lag": lag, "lag_plot_correlation": lp.correlation}


# --- commands ---------------------------------------------------------------

def cmd_fit(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    for key, grid in load_grids(cfg).items():
        for stem, ts in _pieces(cfg, key, grid):
            model = arima.select_model(ts, cfg.bounds, cfg.min_train)
            write_atomic(out / f"{stem}_model.json", json.dumps(model.to_document(), indent=2) + "\n")
            extra = write_diagnostic_tables(out, stem, ts.values, cfg.max_lag, cfg.lag)
            stat = series.assess_stationarity(ts.values)
            diag = {
                "order": list(model.order),
                "aic": model.aic,
                "n_train": model.n_train,
                "residual_whiteness": asdict(model.diagnostics),
                "stationarity": asdict(stat),
                **extra,
            }
            write_atomic(out / f"{stem}_diagnostics.json", _json(diag))
            print(f"{stem}: ARIMA{tuple(model.order)} aic={model.aic:.2f}")
    return EXIT_OK


def cmd_forecast(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    z = anomaly.critical_value(cfg.level)
    fixed = None
    if cfg.model:
        try:
            fixed = arima.load_model(cfg.model)
        except OSError as exc:
            raise DataError(f"cannot read model {cfg.model}: {exc.strerror or exc}") from None
        except (ValueError, KeyError) as exc:
            raise DataError(f"bad model document {cfg.model}: {exc}") from None
    for key, grid in load_grids(cfg).items():
        for stem, ts in _pieces(cfg, key, grid):
            model = fixed or arima.select_model(ts, cfg.bounds, cfg.min_train)
            fc = arima.forecast(model, ts, cfg.horizon)
            lower, upper = fc.bounds(z)
            rows = [(k + 1, _num(fc.points[k]), _num(fc.std_errors[k]), _num(lower[k]), _num(upper[k]))
                    for k in range(fc.horizon)]
            write_atomic(out / f"{stem}_forecast.csv",
                         csv_text(("step", "point", "std_err", "lower", "upper"), rows))
            print(f"{stem}: {fc.horizon}-step forecast from ARIMA{model.order}")
    return EXIT_OK


CLEAN_HEADER = ("node_id", "timestamp", "observed", "decision", "lower", "upper",
                "output_value", "forecast_step", "fault_flag")


def clean_rows(results, substitute: bool = True):
    rows = []
    for key in sorted(results):
        res = results[key]
        for v, t, flag in zip(res.verdicts, res.timestamps, res.fault_flags):
            value = v.output_value if substitute else v.observed
            rows.append((key[0], _num(t), _num(v.observed), v.decision, _num(v.interval.lower),
                         _num(v.interval.upper), _num(value), v.forecast_step, int(flag)))
    return rows


def cmd_clean(cfg: RunConfig, substitute: bool = True) -> int:
    out = Path(cfg.out_dir)
    path = Path(cfg.input)
    try:
        readings = sink.read_readings(path)
    except OSError as exc:
        raise DataError(f"cannot read input {path}: {exc.strerror or exc}") from None
    batch = select_batch(cfg, sink.ingest(readings))
    registry = sink.NodeRegistry(cfg.detector(), cfg.interval, cfg.tolerance)
    results = sink.run_pipeline(registry, batch)

    name = "cleaned.csv" if substitute else "detected.csv"
    write_atomic(out / name, csv_text(CLEAN_HEADER, clean_rows(results, substitute)))
    summary = {"duplicates": len(batch.duplicates), "nodes": {}}
    for key in sorted(results):
        res = results[key]
        state = registry.states.get(key)
        entry = {"channel": key[1], "status": res.status, **res.counts()}
        if res.message:
            entry["message"] = res.message
        if res.grid is not None:
            entry["off_grid"] = len(res.grid.off_grid)
            entry["collisions"] = len(res.grid.collisions)
        if state is not None:
            entry["fault_flag"] = state.fault_flagged
            entry["refits"] = state.refits
            entry["model"] = state.model.to_document()
        summary["nodes"][str(key[0])] = entry
        print(f"node {key[0]} {key[1]}: {res.status} " +
              " ".join(f"{k}={v}" for k, v in res.counts().items()) +
              (f" fault={int(state.fault_flagged)}" if state else ""))
    write_atomic(out / "summary.json", _json(summary))
    if all(r.status == "error" for r in results.values()):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_acf(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    for key, grid in load_grids(cfg).items():
        for stem, ts in _pieces(cfg, key, grid):
            extra = write_diagnostic_tables(out, stem, ts.values, cfg.max_lag, cfg.lag)
            stat = series.assess_stationarity(ts.values)
            try:
                d = series.select_d(ts, cfg.dmax)
            except NumericalError:
                d = None
            write_atomic(out / f"{stem}_stationarity.json",
                         _json({**asdict(stat), "selected_d": d, **extra}))
            print(f"{stem}: stationary={stat.stationary} decay_lag={stat.decay_lag} d={d}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    spec = synth.ProcessSpec(tuple(cfg.phi), tuple(cfg.theta), cfg.mean, cfg.variance, cfg.n)
    spec.validate()
    channel = cfg.channel or "temperature"
    readings, truth = [], []
    for node in range(1, cfg.nodes + 1):
        rng = np.random.default_rng([cfg.seed, node])
        x = synth.simulate_arma(spec, rng)
        if cfg.spike_nodes is None or node in cfg.spike_nodes:
            idx = list(cfg.spike_index)
            if cfg.spikes:
                idx += synth.spread_indices(rng, min(cfg.min_train, cfg.n), cfg.n, cfg.spikes)
            if cfg.spike_run:
                try:
                    start, length = (int(v) for v in cfg.spike_run.split(":"))
                except ValueError:
                    raise UsageError(f"--spike-run expects start:length, got {cfg.spike_run!r}")
                idx += list(range(start, start + length))
            plan = synth.SpikePlan(idx, cfg.spike_sigma, positive_only=True)
            x, spikes = synth.inject(x, plan, np.sqrt(cfg.variance))
            truth += [(node, s.index, _num(cfg.start_time + s.index * cfg.interval), _num(s.offset))
                      for s in spikes]
        times = cfg.start_time + cfg.interval * np.arange(cfg.n)
        readings += [sink.SensorReading(node, float(t), channel, float(v)) for t, v in zip(times, x)]
    buf = io.StringIO()
    sink.write_readings(readings, buf)
    write_atomic(out / "readings.csv", buf.getvalue())
    write_atomic(out / "ground_truth.csv", csv_text(("node_id", "index", "timestamp", "offset"), truth))
    print(f"wrote {len(readings)} readings, {len(truth)} injected anomalies to {out}")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "clean": cmd_clean,
    "detect": lambda cfg: cmd_clean(cfg, substitute=False),
    "acf": cmd_acf,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
    except UsageError as exc:
        print(f"sinkarima: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_atomic(out / f"effective_config_{cfg.command}.json", _json(asdict(cfg)))
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"sinkarima: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"sinkarima: data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"sinkarima: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SinkArimaError as exc:
        print(f"sinkarima: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
