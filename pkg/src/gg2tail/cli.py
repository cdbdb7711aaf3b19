"""Command-line front end.  Every run writes a CSV whose first line carries the canonical config.

Exit codes: 0 success, 2 configuration error, 3 numerical diagnostic.
"""
import argparse
import csv
import datetime
import io
import json
import math
import sys
from dataclasses import dataclass, field

from . import asymptotics, estimators, queue_core, rare_event, rw_ld
from .heavytail import format_service, parse_arrival, parse_service

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
HEADER = "# config: "

COMMANDS = {
    "estimate-tail": {"b": [5.0, 10.0, 20.0], "cycles": 1_000_000, "method": "regenerative",
                      "steps": 10_000_000, "burn_in": None},
    "decompose": {"b": 30.0, "delta": [0.2, 0.5, 0.8], "cycles": 1_000_000},
    "lower-bound": {"event": "D1", "b": [12.0, 24.0, 48.0], "trials": 100_000, "tau_cycles": 1_000_000},
    "is-hit": {"b": [20.0], "w": [0.0, 0.0], "paths": 100_000, "crude_crosscheck": False,
               "crude_paths": 10_000_000, "kappa0": None, "kappa1": None, "kappa2": None, "a": None},
    "ld-check": {"kind": None, "m": [1000, 10000], "x_mult": [1.0, 2.0, 3.0, 4.0, 5.0], "reps": 10_000},
    "asymptote": {"b": [5.0, 8.0, 12.0, 18.0, 25.0], "cycles": 1_000_000},
    "selftest": {},
}
COMMON = {"service": "pareto:alpha=3", "arrival": "exp", "seed": 42}


class ConfigError(ValueError):
    pass


def sci_int(text):
    """Integer flag accepting scientific notation such as 1e6."""
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not v.is_integer() or v < 0:
        raise argparse.ArgumentTypeError(f"not a nonnegative integer: {text!r}")
    return int(v)


def float_list(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def int_list(text):
    return [sci_int(x) for x in str(text).split(",") if x.strip()]


@dataclass
class ExperimentConfig:
    command: str
    service: str
    arrival: str
    seed: int
    params: dict = field(default_factory=dict)

    def normalized(self):
        try:
            svc = parse_service(self.service)
            parse_arrival(self.arrival, svc)
        except ValueError as e:
            raise ConfigError(str(e))
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        params = {k: _normalize(k, v) for k, v in self.params.items()}
        return ExperimentConfig(self.command, format_service(svc), self.arrival.strip(), int(self.seed), params)

    def canonical(self):
        d = {"command": self.command, "service": self.service, "arrival": self.arrival, "seed": self.seed}
        d.update(self.params)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        command = d.pop("command", None)
        common = {k: d.pop(k) for k in list(COMMON) if k in d}
        return command, common, d


def _normalize(key, v):
    if v is None or isinstance(v, bool):
        return v
    if key in ("cycles", "steps", "burn_in", "trials", "tau_cycles", "paths", "crude_paths", "reps"):
        return sci_int(v)
    if isinstance(v, str):
        return v
    if key == "m":
        return [sci_int(x) for x in v]
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return float(v)


def _parser():
    p = argparse.ArgumentParser(prog="gg2tail", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def common(sp):
        sp.add_argument("--service", help="e.g. pareto:alpha=3 or rv:alpha=2.5,slow=log")
        sp.add_argument("--arrival", help="exp | uniform | det")
        sp.add_argument("--seed", type=sci_int)
        sp.add_argument("--config", help="JSON config file, or a CSV written by this tool")
        sp.add_argument("--out", help="CSV output path (default stdout)")
        sp.add_argument("--threads", type=sci_int)
        sp.add_argument("--no-timestamp", action="store_true")
        return sp

    sp = common(sub.add_parser("estimate-tail", help="regenerative / time-average tail of W^(1)"))
    sp.add_argument("--b", type=float_list)
    sp.add_argument("--cycles", type=sci_int)
    sp.add_argument("--method", choices=["regenerative", "time-average", "both"])
    sp.add_argument("--steps", type=sci_int)
    sp.add_argument("--burn-in", type=sci_int)

    sp = common(sub.add_parser("decompose", help="split exceedance counts into B1 and B2"))
    sp.add_argument("--b", type=float)
    sp.add_argument("--delta", type=float_list, help="delta_minus,delta,delta_plus")
    sp.add_argument("--cycles", type=sci_int)

    sp = common(sub.add_parser("lower-bound", help="D1 / D2 / D3 lower-bound certificates"))
    sp.add_argument("--event", choices=["D1", "D2", "D3"])
    sp.add_argument("--b", type=float_list)
    sp.add_argument("--trials", type=sci_int)
    sp.add_argument("--tau-cycles", type=sci_int)

    sp = common(sub.add_parser("is-hit", help="importance-sampled P_w{tau_b^(2) < tau0}"))
    sp.add_argument("--b", type=float_list)
    sp.add_argument("--alpha", type=float, help="shortcut for --service pareto:alpha=ALPHA")
    sp.add_argument("--w", type=float_list, help="initial state w1,w2")
    sp.add_argument("--paths", type=sci_int)
    sp.add_argument("--crude-crosscheck", action="store_true", default=None)
    sp.add_argument("--crude-paths", type=sci_int)
    for k in ("kappa0", "kappa1", "kappa2", "a"):
        sp.add_argument(f"--{k}", type=float)

    sp = common(sub.add_parser("ld-check", help="uniform large-deviation bounds for walk maxima"))
    sp.add_argument("--kind", choices=["nagaev", "stable"])
    sp.add_argument("--m", type=int_list)
    sp.add_argument("--x-mult", type=float_list, help="levels as multiples of sqrt(m) or (c m)^(1/alpha)")
    sp.add_argument("--reps", type=sci_int)

    sp = common(sub.add_parser("asymptote", help="regenerative tail against the target shape"))
    sp.add_argument("--b", type=float_list)
    sp.add_argument("--cycles", type=sci_int)

    common(sub.add_parser("selftest", help="run the built-in example suite"))
    return p


def _load_config_file(path):
    with open(path) as fh:
        text = fh.read()
    if text.startswith(HEADER):
        text = text.splitlines()[0][len(HEADER):]
    try:
        return ExperimentConfig.from_json(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"cannot parse config {path}: {e}")


def build_config(ns):
    command = ns.command
    params = dict(COMMANDS[command])
    common = dict(COMMON)
    if ns.config:
        file_cmd, file_common, file_params = _load_config_file(ns.config)
        if file_cmd not in (None, command):
            raise ConfigError(f"config is for {file_cmd!r}, not {command!r}")
        unknown = set(file_params) - set(params)
        if unknown:
            raise ConfigError(f"unknown keys for {command}: {sorted(unknown)}")
        common.update(file_common)
        params.update(file_params)
    for k in COMMON:
        if getattr(ns, k, None) is not None:
            common[k] = getattr(ns, k)
    for k in params:
        v = getattr(ns, k, None)
        if v is not None:
            params[k] = v
    if command == "is-hit" and getattr(ns, "alpha", None) is not None:
        common["service"] = f"pareto:alpha={ns.alpha}"
    try:
        return ExperimentConfig(command, common["service"], common["arrival"], common["seed"], params).normalized()
    except (TypeError, ValueError, argparse.ArgumentTypeError) as e:
        raise ConfigError(str(e))


# ---------------------------------------------------------------- commands

def _models(cfg):
    svc = parse_service(cfg.service)
    return svc, parse_arrival(cfg.arrival, svc)


def run_estimate_tail(cfg, threads):
    svc, arr = _models(cfg)
    p = cfg.params
    maps = []
    if p["method"] in ("regenerative", "both"):
        maps.append(estimators.regenerative_tail(svc, arr, p["b"], p["cycles"], cfg.seed, threads))
    if p["method"] in ("time-average", "both"):
        maps.append(estimators.time_average_tail(svc, arr, p["b"], p["steps"], p["burn_in"], cfg.seed))
    return estimators.CSV_FIELDS, estimators.report_rows(maps)


def run_decompose(cfg, threads):
    svc, arr = _models(cfg)
    p = cfg.params
    if len(p["delta"]) != 3:
        raise ConfigError("--delta needs three values")
    d = estimators.decompose_cycle_counts(svc, arr, p["b"], tuple(p["delta"]), p["cycles"], cfg.seed, threads)
    fields = ["b", "b1_hat", "b2_hat", "tau0_mean", "point", "ratio", "n", "seed"]
    nums = (p["b"], d.b1_hat, d.b2_hat, d.tau0_mean, d.point, d.ratio)
    return fields, [[repr(float(v)) for v in nums] + [str(d.n_cycles), str(cfg.seed)]]


def run_lower_bound(cfg, threads):
    svc, arr = _models(cfg)
    p = cfg.params
    fn = {"D1": rare_event.lower_bound_D1, "D2": rare_event.lower_bound_D2,
          "D3": rare_event.lower_bound_D3}[p["event"]]
    rows = [rare_event.lower_bound_row(fn(svc, arr, b, p["trials"], cfg.seed, threads, p["tau_cycles"]))
            for b in p["b"]]
    rows.sort(key=lambda r: (float(r[0]), r[1]))
    return rare_event.CSV_FIELDS, rows


def run_is_hit(cfg, threads):
    svc, arr = _models(cfg)
    p = cfg.params
    if len(p["w"]) != 2:
        raise ConfigError("--w needs two values")
    w = queue_core.QueueState.of(*p["w"])
    rows = []
    for b in p["b"]:
        if not w.w2 < b * 0.25:
            raise ConfigError(f"initial w2 must be below b * delta_plus = {0.25 * b}")
        model = _is_model(svc, arr, b, p, cfg.seed)
        rep = model.hitting_probability(w, p["paths"], cfg.seed, threads)
        rows.append(rare_event.is_row(b, rep))
        if p["crude_crosscheck"]:
            crude, _ = rare_event.crude_hitting_probability(w, b, svc, arr, p["crude_paths"], cfg.seed + 1, threads)
            rows.append([repr(float(b)), "crude", repr(float(crude.point)), repr(float(crude.stderr)), "", "",
                             str(crude.seed)])
    rows.sort(key=lambda r: (float(r[0]), r[1]))
    return rare_event.CSV_FIELDS, rows


def _is_model(svc, arr, b, p, seed):
    if p["kappa0"] is None and p["kappa1"] is None:
        return rare_event.calibrate(svc, arr, b, seed=seed, a=p["a"]).model
    if p["kappa0"] is None or p["kappa1"] is None:
        raise ConfigError("give both --kappa0 and --kappa1, or neither")
    a = 0.5 if p["a"] is None else p["a"]
    c_delta = min(abs(rare_event.pilot_drift(svc, arr, b, seed=seed)), b / 2)
    params = rare_event.LyapunovParams(p["kappa0"], p["kappa1"], p["kappa2"] or 1.0, b, a, 0.25, c_delta)
    model = rare_event.LyapunovIS(svc, arr, params, validate=False)
    if p["kappa2"] is None:
        params = rare_event.LyapunovParams(p["kappa0"], p["kappa1"], 1.1 * rare_event.kappa2_sup(model, p["kappa0"]),
                                           b, a, 0.25, c_delta)
    return rare_event.LyapunovIS(svc, arr, params)


def run_ld_check(cfg, threads):
    svc, arr = _models(cfg)
    p = cfg.params
    spec = rw_ld.WalkSpec.create(svc, arr)
    kind = p["kind"] or ("nagaev" if svc.alpha > 2 else "stable")
    if kind == "nagaev":
        grid = [[k * math.sqrt(m) for k in p["x_mult"]] for m in p["m"]]
        _, rows = rw_ld.nagaev_bound_check(spec, p["m"], grid, p["reps"], cfg.seed, threads)
    else:
        rows = []
        for m in p["m"]:
            scale = (svc.slow.c * m) ** (1 / svc.alpha)
            _, r = rw_ld.stable_max_bound_check(spec, [m], [k * scale for k in p["x_mult"]], p["reps"],
                                                cfg.seed, threads)
            rows.extend(r)
    out = [r.csv() for r in rows]
    out.sort(key=lambda r: (r[0], int(r[1]), float(r[2])))
    return rw_ld.CSV_FIELDS, out


def run_asymptote(cfg, threads):
    svc, arr = _models(cfg)
    p = cfg.params
    reps = estimators.regenerative_tail(svc, arr, p["b"], p["cycles"], cfg.seed, threads)
    target = asymptotics.AsymptoteTarget.for_model(svc)
    return asymptotics.CSV_FIELDS, asymptotics.target_rows(target, reps)


def run_selftest(cfg, threads):
    from . import selftest

    results = selftest.run()
    rows = [[name, "pass" if ok else "fail", detail] for name, ok, detail in results]
    return ["check", "status", "detail"], rows


RUNNERS = {
    "estimate-tail": run_estimate_tail,
    "decompose": run_decompose,
    "lower-bound": run_lower_bound,
    "is-hit": run_is_hit,
    "ld-check": run_ld_check,
    "asymptote": run_asymptote,
    "selftest": run_selftest,
}


def render(cfg, fields, rows, timestamp=True):
    buf = io.StringIO()
    buf.write(HEADER + cfg.canonical() + "\n")
    if timestamp:
        buf.write(f"# generated: {datetime.datetime.now(datetime.timezone.utc).isoformat(timespec='seconds')}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    w.writerows(rows)
    return buf.getvalue()


def main(argv=None):
    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    try:
        cfg = build_config(ns)
        fields, rows = RUNNERS[cfg.command](cfg, ns.threads)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (queue_core.CycleCapExceeded, rare_event.NumericalDiagnostic) as e:
        print(f"numerical diagnostic: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    text = render(cfg, fields, rows, timestamp=not ns.no_timestamp)
    if ns.out:
        with open(ns.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if cfg.command == "selftest" and any(r[1] == "fail" for r in rows):
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
