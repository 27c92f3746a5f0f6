"""Command-line experiment runner.

    asyncomid run --algo aftrl --workers 4 --synthetic 100000,3000,30,60 --out run.csv
    asyncomid compare --algo comidl2 --eta 1e-3 --lambda 1e-4 --synthetic 16,1000,1,8 --b algo=l2trick
    asyncomid verify

Every run flag can also be given in a ``--config`` file of ``key = value``
lines (``#`` starts a comment); flags on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .data import Dataset, LibsvmFormatError, gen_synthetic, read_libsvm
from .metrics import RunRecord, instantaneous_regret, solve_w_star_cached
from .optimizers import ConfigError
from .sim import (ALGOS, DelaySchedule, SimConfig, SimResult, read_trace, run_simulated,
                  run_threaded, write_trace)

log = logging.getLogger("asyncomid")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CSV_HEADER = ["step", "epoch", "logloss_sum", "logloss_mean", "regret", "tx_values", "wall_ms"]

# option name -> (type, default); names double as config-file keys
RUN_OPTIONS = {
    "algo": (str, "comid"),
    "workers": (int, 1),
    "tau-max": (int, None),
    "delay": (str, "fixed"),
    "trace": (str, None),
    "eta": (float, 0.01),
    "lambda": (float, 0.0),
    "lambda1": (float, 0.0),
    "lambda2": (float, 0.0),
    "alpha": (float, 0.1),
    "beta": (float, 1.0),
    "epochs": (int, 1),
    "seed": (int, 0),
    "data": (str, None),
    "dim": (int, None),
    "synthetic": (str, None),
    "mode": (str, "sim"),
    "eval-every": (int, None),
    "out": (str, None),
    "metrics": (str, "logloss"),
    "trace-out": (str, None),
    "cache-dir": (str, None),
}
FLAG_OPTIONS = ("init-z-for-w1-ones",)


@dataclass
class ExperimentSpec:
    cfg: SimConfig
    data_path: Optional[str] = None
    synthetic: Optional[Tuple[int, int, int, int]] = None
    dim_override: Optional[int] = None
    out: Optional[str] = None
    mode: str = "sim"
    metrics: Tuple[str, ...] = ("logloss",)
    trace_out: Optional[str] = None
    cache_dir: Optional[str] = None

    def __post_init__(self):
        if (self.data_path is None) == (self.synthetic is None):
            raise ConfigError("give exactly one of --data or --synthetic")
        if self.mode not in ("sim", "threaded"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        unknown = set(self.metrics) - {"logloss", "regret"}
        if unknown:
            raise ConfigError(f"unknown metrics: {', '.join(sorted(unknown))}")
        if self.out:
            parent = os.path.dirname(os.path.abspath(self.out))
            if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
                raise ConfigError(f"output directory {parent} is not writable")

    @property
    def data_source(self):
        return ("file", os.path.abspath(self.data_path)) if self.data_path else ("synthetic", self.synthetic)

    def load_data(self) -> Dataset:
        if self.data_path:
            return read_libsvm(self.data_path, self.dim_override)
        dim, n, lo, hi = self.synthetic
        planted = np.random.default_rng(self.cfg.seed).standard_normal(dim)
        return gen_synthetic(dim, n, (lo, hi), self.cfg.seed, planted_w=planted)


def parse_config_file(path) -> Dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key = key.strip().replace("_", "-")
            if key not in RUN_OPTIONS and key not in FLAG_OPTIONS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = val.strip()
    return out


def _coerce(key: str, raw):
    if key in FLAG_OPTIONS:
        if isinstance(raw, bool):
            return raw
        if str(raw).lower() in ("1", "true", "yes", "on"):
            return True
        if str(raw).lower() in ("0", "false", "no", "off", ""):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    typ, _ = RUN_OPTIONS[key]
    if raw is None:
        return None
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None


def build_spec(values: Dict[str, object]) -> ExperimentSpec:
    """Turn merged option values (config file + flags) into an ExperimentSpec."""
    v = {k: _coerce(k, values.get(k, d)) for k, (_, d) in RUN_OPTIONS.items()}
    for k in FLAG_OPTIONS:
        v[k] = _coerce(k, values.get(k, False))
    if v["trace"]:
        delay = read_trace(v["trace"])
    elif v["tau-max"] is not None:
        if v["delay"] == "fixed":
            delay = DelaySchedule.fixed(v["tau-max"])
        elif v["delay"] == "random":
            delay = DelaySchedule.random_bounded(v["tau-max"], seed=v["seed"])
        else:
            raise ConfigError(f"unknown delay kind {v['delay']!r}")
    else:
        delay = None
    synthetic = None
    if v["synthetic"]:
        try:
            synthetic = tuple(int(float(p)) for p in v["synthetic"].split(","))
        except ValueError:
            raise ConfigError(f"--synthetic expects dim,n,lo,hi; got {v['synthetic']!r}") from None
        if len(synthetic) != 4:
            raise ConfigError(f"--synthetic expects dim,n,lo,hi; got {v['synthetic']!r}")
    cfg = SimConfig(algo=v["algo"], workers=v["workers"], eta=v["eta"], lam=v["lambda"],
                    lambda1=v["lambda1"], lambda2=v["lambda2"], alpha=v["alpha"], beta=v["beta"],
                    epochs=v["epochs"], seed=v["seed"], delay=delay, eval_every=v["eval-every"],
                    init_w1_ones=v["init-z-for-w1-ones"])
    metrics = tuple(m.strip() for m in v["metrics"].split(",") if m.strip())
    if "regret" in metrics:
        cfg = replace(cfg, record_iterates=True)
    cfg.validate()
    return ExperimentSpec(cfg, data_path=v["data"], synthetic=synthetic, dim_override=v["dim"],
                          out=v["out"], mode=v["mode"], metrics=metrics,
                          trace_out=v["trace-out"], cache_dir=v["cache-dir"])


def execute(spec: ExperimentSpec, data: Optional[Dataset] = None) -> Tuple[SimResult, Dataset]:
    data = data if data is not None else spec.load_data()
    runner = run_threaded if spec.mode == "threaded" else run_simulated
    result = runner(spec.cfg, data)
    if "regret" in spec.metrics:
        reg = spec.cfg.regularizer()
        if reg.l1:
            raise ConfigError("regret needs w*, which is only solved for L2 regularizers")
        base = os.path.dirname(os.path.abspath(spec.out)) if spec.out else os.getcwd()
        cache = spec.cache_dir or os.path.join(base, ".wstar-cache")
        w_star = solve_w_star_cached(data, reg, cache)
        cum = np.cumsum(instantaneous_regret(data, result.iterates[:-1], result.order, reg, w_star))
        result.records = [replace(r, regret=float(cum[r.step - 1])) for r in result.records]
    if spec.trace_out:
        write_trace(spec.trace_out, result.taus, result.tau_max)
    return result, data


def format_csv(records: List[RunRecord], n_samples: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.step, repr(r.step / n_samples), repr(r.logloss_dataset),
                    repr(r.logloss_dataset / n_samples),
                    "" if r.regret is None else repr(r.regret), r.tx_values, repr(r.wall_ms)])
    return buf.getvalue()


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(spec: ExperimentSpec) -> int:
    result, data = execute(spec)
    _emit(format_csv(result.records, len(data)), spec.out)
    return EXIT_OK


def cmd_compare(spec_a: ExperimentSpec, spec_b: ExperimentSpec) -> dict:
    """Run two specs on the same data and report their logloss gaps."""
    if spec_a.data_source != spec_b.data_source or spec_a.dim_override != spec_b.dim_override:
        raise ConfigError("compared runs must use the same data source")
    if spec_a.cfg.seed != spec_b.cfg.seed:
        raise ConfigError("compared runs must use the same seed")
    data = spec_a.load_data()
    ra, _ = execute(spec_a, data)
    rb, _ = execute(spec_b, data)
    by_step = {r.step: r for r in rb.records}
    rows = [(r.step, r.logloss_dataset, by_step[r.step].logloss_dataset,
             r.logloss_dataset - by_step[r.step].logloss_dataset)
            for r in ra.records if r.step in by_step]
    return {
        "rows": rows,
        "final_linf": float(np.abs(ra.weights - rb.weights).max()) if data.dim else 0.0,
        "tx_a": ra.tx_total,
        "tx_b": rb.tx_total,
        "tx_ratio": ra.tx_total / rb.tx_total if rb.tx_total else float("nan"),
    }


def _option_parser(parser: argparse.ArgumentParser, dest_prefix: str = "") -> None:
    for name, (typ, _) in RUN_OPTIONS.items():
        kwargs = {"type": typ, "default": None, "dest": dest_prefix + name.replace("-", "_")}
        if name == "algo":
            kwargs["choices"] = ALGOS
        elif name == "mode":
            kwargs["choices"] = ("sim", "threaded")
        elif name == "delay":
            kwargs["choices"] = ("fixed", "random")
        parser.add_argument(f"--{name}", **kwargs)
    parser.add_argument("--init-z-for-w1-ones", action="store_true", default=None,
                        dest=dest_prefix + "init_z_for_w1_ones",
                        help="start FTRL from w = (1, ..., 1) instead of 0")
    parser.add_argument("--config", help="file of 'key = value' lines")


def _merged(args, prefix: str = "") -> Dict[str, object]:
    values: Dict[str, object] = parse_config_file(args.config) if args.config else {}
    for name in list(RUN_OPTIONS) + list(FLAG_OPTIONS):
        val = getattr(args, prefix + name.replace("-", "_"), None)
        if val is not None:
            values[name] = val
    return values


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asyncomid", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _option_parser(sub.add_parser("run", help="run one experiment and write its CSV curve"))
    cmp_ = sub.add_parser("compare", help="run two experiments and report their logloss gaps")
    _option_parser(cmp_)
    cmp_.add_argument("--b", action="append", default=[], metavar="KEY=VALUE",
                      help="override for the second run (repeatable)")
    ver = sub.add_parser("verify", help="run the built-in property checks")
    ver.add_argument("--full", action="store_true", help="full-length checks (slower)")
    ver.add_argument("--perturb-ftrl", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(build_spec(_merged(args)))
        if args.command == "compare":
            values = _merged(args)
            values_b = dict(values)
            for item in args.b:
                key, sep, val = item.partition("=")
                key = key.strip().replace("_", "-")
                if not sep or (key not in RUN_OPTIONS and key not in FLAG_OPTIONS):
                    raise ConfigError(f"--b expects KEY=VALUE with a known key, got {item!r}")
                values_b[key] = val.strip()
            values_a = {k: v for k, v in values.items() if k not in ("out", "trace-out")}
            spec_a = build_spec(values_a)
            spec_b = build_spec({k: v for k, v in values_b.items() if k not in ("out", "trace-out")})
            report = cmd_compare(spec_a, spec_b)
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["step", "logloss_a", "logloss_b", "gap"])
            for row in report["rows"]:
                w.writerow([row[0]] + [repr(x) for x in row[1:]])
            _emit(buf.getvalue(), values.get("out"))
            summary = {k: report[k] for k in ("final_linf", "tx_a", "tx_b", "tx_ratio")}
            print(json.dumps(summary), file=sys.stderr if not values.get("out") else sys.stdout)
            return EXIT_OK
        from .verify import run_checks

        results = run_checks(perturb_ftrl=args.perturb_ftrl, quick=not args.full)
        for r in results:
            print(json.dumps({"check": r.name, "passed": r.passed, "value": r.value,
                              "threshold": r.threshold, "seconds": round(r.seconds, 3)}))
        return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL
    except (ConfigError, LibsvmFormatError, FileNotFoundError) as exc:
        print(f"asyncomid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
