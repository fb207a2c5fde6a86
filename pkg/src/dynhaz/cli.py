"""Command-line front end: simulate, fit, waic-grid, predict, bench.

Configuration merge order is defaults < JSON config file < explicit flags
(last writer wins); `--dump-config` prints the merged configuration and
exits. Exit codes: 0 success, 1 runtime error, 2 usage/configuration error.

Numerical outputs are always deterministic for a fixed seed (counter-based
substreams); `--deterministic` additionally omits timing metadata from
reports so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

THREAD_ENV = "DYNHAZ_THREADS"


def _apply_threads(n: int | None) -> None:
    """Cap worker threads. Must run before numpy is imported."""
    value = os.environ.get(THREAD_ENV) if n is None else str(n)
    if value:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, value)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_list(text, cast):
    return [cast(part) for part in str(text).split(",") if part != ""]


DEFAULTS = {
    "simulate": {"p": 1, "n": 2500, "j": 26, "width": 20.0, "pc": 0.1, "rw_sd": 0.5,
                 "baseline_offset": -11.0, "seed": 0, "out": "."},
    "fit": {"phi": 0.45, "k": 2000, "r": 2, "policy": "equidistant", "width": 20.0,
            "events": 30, "proposal": "linear-bayes", "seed": 0, "out": ".",
            "id_col": "id", "time_col": "time", "event_col": "event",
            "covariates": None, "center": None, "initial_variance": 100.0,
            "paths_out": None, "preset": None, "data": None},
    "waic-grid": {"phi_grid": "0.3,0.4,0.5,0.6,0.7,0.8,0.9",
                  "events_grid": "20,30,40,50", "test_fraction": 0.2, "k": 2000,
                  "r": 2, "seed": 0, "out": ".", "id_col": "id", "time_col": "time",
                  "event_col": "event", "covariates": None, "center": None,
                  "initial_variance": 100.0, "data": None},
    "predict": {"paths": None, "x": None, "times": None, "grid": None, "out": "."},
    "bench": {"p": 1, "n": 1000, "j": 26, "width": 20.0, "pc": 0.1, "k": 5000,
              "r": 2, "m": 20, "phi": 0.45, "seed": 0, "out": ".",
              "timing_n": None, "initial_variance": 100.0},
}


def _merge_config(command: str, args: argparse.Namespace) -> dict:
    from .errors import ConfigurationError

    merged = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                merged.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}")
    for key in merged:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
    merged["deterministic"] = bool(getattr(args, "deterministic", False))
    return merged


def _schema_from_config(cfg, header) -> "object":
    from .data import CsvSchema

    reserved = {cfg["id_col"], cfg["time_col"], cfg["event_col"]}
    if cfg["covariates"]:
        covs = tuple(_parse_list(cfg["covariates"], str))
    else:
        covs = tuple(c for c in header if c not in reserved)
    center = tuple(_parse_list(cfg["center"], str)) if cfg["center"] else ()
    return CsvSchema(id=cfg["id_col"], time=cfg["time_col"], event=cfg["event_col"],
                     covariates=covs, center=center)


def _load_dataset(cfg):
    from .data import parse_survival_csv
    from .errors import ConfigurationError

    if not cfg.get("data"):
        raise ConfigurationError("--data is required")
    with open(cfg["data"], encoding="utf-8") as fh:
        header = [c.strip() for c in fh.readline().strip().split(",")]
    schema = _schema_from_config(cfg, header)
    return parse_survival_csv(cfg["data"], schema), schema


def _build_partition(cfg, records):
    from .data import build_partition
    return build_partition(
        records, cfg["policy"],
        width=float(cfg["width"]) if cfg.get("width") is not None else None,
        events_per_interval=int(cfg["events"]) if cfg.get("events") is not None else None)


def cmd_simulate(cfg) -> int:
    from .sim import DgpConfig, simulate_dgp

    config = DgpConfig(covariate_dim=int(cfg["p"]), n_subjects=int(cfg["n"]),
                       n_intervals=int(cfg["j"]), interval_width=float(cfg["width"]),
                       censor_prop=float(cfg["pc"]), rw_sd=float(cfg["rw_sd"]),
                       baseline_offset=float(cfg["baseline_offset"]), seed=int(cfg["seed"]))
    records, truth = simulate_dgp(config)
    os.makedirs(cfg["out"], exist_ok=True)
    cov_names = [f"x{i + 1}" for i in range(config.covariate_dim)]
    _write_csv(os.path.join(cfg["out"], "dataset.csv"),
               ["id", "time", "event", *cov_names],
               ([r.id, r.time, r.event, *r.covariates.tolist()] for r in records))
    _write_json(os.path.join(cfg["out"], "truth.json"), truth.to_dict())
    print(f"wrote {config.n_subjects} records to {cfg['out']}/dataset.csv")
    return 0


def _fit_once(cfg, records):
    from .errors import Diagnostics
    from .data import expand_exposures
    from .model import DiscountPrior
    from .smoother import run_two_filter_smoother
    import numpy as np

    partition = _build_partition(cfg, records)
    diagnostics = Diagnostics()
    panel = expand_exposures(records, partition, diagnostics)
    dim = len(records[0].covariates) + 1
    prior = DiscountPrior(phi=float(cfg["phi"]), initial_mean=np.zeros(dim),
                          initial_variance=float(cfg["initial_variance"]))
    output = run_two_filter_smoother(panel, partition, prior,
                                     n_particles=int(cfg["k"]),
                                     replication=int(cfg["r"]),
                                     seed=int(cfg["seed"]),
                                     proposal=cfg["proposal"] if "proposal" in cfg else "linear-bayes",
                                     diagnostics=diagnostics)
    return output, partition, diagnostics


def _trajectory_rows(output, coef_names):
    from ._linalg import weighted_quantile
    import numpy as np

    for j, pset in enumerate(output.smoothing_sets, start=1):
        summary = output.summaries[j - 1]
        sd = np.sqrt(np.clip(np.diag(summary.cov), 0.0, None))
        for d, name in enumerate(coef_names):
            lo, hi = weighted_quantile(pset.particles[:, d], pset.weights, [0.025, 0.975])
            yield [j, output.cuts[j - 1], output.cuts[j], name,
                   float(summary.mean[d]), float(sd[d]), float(lo), float(hi)]


def cmd_fit(cfg) -> int:
    import numpy as np
    from .errors import ConfigurationError

    if cfg.get("preset") == "trace":
        cfg = {**cfg, "k": 10000, "policy": "equal-events", "events": 30, "phi": 0.5}
    elif cfg.get("preset"):
        raise ConfigurationError(f"unknown preset {cfg['preset']!r}")
    if not (0.0 < float(cfg["phi"]) < 1.0):
        raise ConfigurationError(f"phi must lie in (0,1), got {cfg['phi']}")

    records, schema = _load_dataset(cfg)
    started = time.time()
    cpu0 = time.process_time()
    output, partition, diagnostics = _fit_once(cfg, records)
    wall, cpu = time.time() - started, time.process_time() - cpu0

    os.makedirs(cfg["out"], exist_ok=True)
    coef_names = ["intercept", *schema.covariates]
    _write_csv(os.path.join(cfg["out"], "trajectory.csv"),
               ["interval", "t_lo", "t_hi", "coef", "mean", "sd", "q025", "q975"],
               _trajectory_rows(output, coef_names))

    report = {"config": {k: v for k, v in cfg.items() if k != "deterministic"},
              "n_records": len(records),
              "n_intervals": partition.n_intervals,
              "cuts": partition.cuts.tolist(),
              "diagnostics": diagnostics.to_dict()}
    if not cfg["deterministic"]:
        report["timing"] = {"wall_seconds": wall, "cpu_seconds": cpu}
    _write_json(os.path.join(cfg["out"], "diagnostics.json"), report)

    if cfg.get("paths_out"):
        np.savez(cfg["paths_out"], paths=output.paths,
                 path_log_weights=output.path_log_weights, cuts=output.cuts)
    print(f"fit {partition.n_intervals} intervals x {len(coef_names)} coefficients "
          f"-> {cfg['out']}/trajectory.csv")
    return 0


def cmd_waic_grid(cfg) -> int:
    import numpy as np
    from .errors import ConfigurationError
    from .rng import PHASE_SPLIT, stream
    from .evaluate import waic

    phis = _parse_list(cfg["phi_grid"], float)
    events_grid = _parse_list(cfg["events_grid"], int)
    if not phis or not events_grid:
        raise ConfigurationError("empty phi or events grid")
    frac = float(cfg["test_fraction"])
    if not (0.0 <= frac < 1.0):
        raise ConfigurationError("test fraction must lie in [0, 1)")

    records, _ = _load_dataset(cfg)
    rng = stream(int(cfg["seed"]), PHASE_SPLIT, 0)
    order = rng.permutation(len(records))
    n_test = int(round(frac * len(records)))
    test_records = [records[i] for i in order[:n_test]]
    train_records = [records[i] for i in order[n_test:]]

    table = np.zeros((len(phis), len(events_grid)))
    table_raw = np.zeros_like(table)
    for col, e_value in enumerate(events_grid):
        for row, phi in enumerate(phis):
            cell_cfg = {**cfg, "phi": phi, "policy": "equal-events", "events": e_value,
                        "width": None, "proposal": "linear-bayes"}
            output, partition, diag = _fit_once(cell_cfg, train_records)
            result = waic(test_records, output, partition, diag)
            table[row, col] = result.deviance
            table_raw[row, col] = result.raw
            print(f"phi={phi} E={e_value}: WAIC(deviance)={result.deviance:.1f}")

    os.makedirs(cfg["out"], exist_ok=True)
    header = ["phi", *[f"E={e}" for e in events_grid]]
    _write_csv(os.path.join(cfg["out"], "waic_grid.csv"), header,
               ([phi, *table[row].tolist()] for row, phi in enumerate(phis)))
    _write_csv(os.path.join(cfg["out"], "waic_grid_raw.csv"), header,
               ([phi, *table_raw[row].tolist()] for row, phi in enumerate(phis)))
    return 0


def cmd_predict(cfg) -> int:
    import numpy as np
    from .data import IntervalPartition
    from .errors import ConfigurationError
    from .evaluate import predict_survival

    if not cfg.get("paths"):
        raise ConfigurationError("--paths (an .npz from fit --paths-out) is required")
    if cfg.get("x") is None:
        raise ConfigurationError("--x covariate values are required")
    dump = np.load(cfg["paths"])

    class _Dump:
        paths = dump["paths"]
        path_log_weights = dump["path_log_weights"]
        cuts = dump["cuts"]

        def path_weights(self):
            w = np.exp(self.path_log_weights)
            return w / w.sum()

    partition = IntervalPartition(cuts=dump["cuts"], policy="custom")
    x_star = np.array(_parse_list(cfg["x"], float))
    if cfg.get("times"):
        times = _parse_list(cfg["times"], float)
    else:
        n_grid = int(cfg["grid"] or 50)
        times = np.linspace(0.0, float(dump["cuts"][-1]), n_grid).tolist()

    rows = [[t, predict_survival(_Dump(), partition, x_star, float(t))] for t in times]
    os.makedirs(cfg["out"], exist_ok=True)
    _write_csv(os.path.join(cfg["out"], "survival.csv"), ["t", "survival"], rows)
    print(f"wrote {len(rows)} survival probabilities to {cfg['out']}/survival.csv")
    return 0


def cmd_bench(cfg) -> int:
    import numpy as np
    from .data import build_partition, expand_exposures
    from .errors import ConfigurationError
    from .evaluate import ess
    from .model import DiscountPrior
    from .sim import DgpConfig, simulate_dgp
    from .smoother import BOOTSTRAP, LINEAR_BAYES, run_two_filter_smoother

    m_runs = int(cfg["m"])
    if m_runs < 2:
        raise ConfigurationError("bench needs M >= 2 replicates")

    def run_replicates(records, proposal, seeds):
        partition = build_partition(records, "equidistant", width=float(cfg["width"]))
        panel = expand_exposures(records, partition)
        dim = int(cfg["p"]) + 1
        prior = DiscountPrior(phi=float(cfg["phi"]), initial_mean=np.zeros(dim),
                              initial_variance=float(cfg["initial_variance"]))
        means, variances, cpu, wall = [], [], [], []
        for seed in seeds:
            w0, c0 = time.time(), time.process_time()
            out = run_two_filter_smoother(panel, partition, prior,
                                          n_particles=int(cfg["k"]),
                                          replication=int(cfg["r"]),
                                          seed=int(seed), proposal=proposal)
            cpu.append(time.process_time() - c0)
            wall.append(time.time() - w0)
            means.append([s.mean for s in out.summaries])
            variances.append([np.diag(s.cov) for s in out.summaries])
        return (np.array(means), np.array(variances), np.array(cpu), np.array(wall))

    dgp = DgpConfig(covariate_dim=int(cfg["p"]), n_subjects=int(cfg["n"]),
                    n_intervals=int(cfg["j"]), interval_width=float(cfg["width"]),
                    censor_prop=float(cfg["pc"]), seed=int(cfg["seed"]))
    records, _ = simulate_dgp(dgp)
    seeds = [int(cfg["seed"]) + 1 + i for i in range(m_runs)]

    reports = {}
    for label, proposal in (("linear_bayes", LINEAR_BAYES), ("bootstrap", BOOTSTRAP)):
        means, variances, cpu, wall = run_replicates(records, proposal, seeds)
        reports[label] = {"report": ess(means, variances, cpu_seconds=cpu),
                          "cpu": cpu, "wall": wall}
        print(f"{label}: mean cpu {cpu.mean():.2f}s over {m_runs} runs")

    os.makedirs(cfg["out"], exist_ok=True)
    payload = {label: entry["report"].to_dict() for label, entry in reports.items()}
    payload["config"] = {k: v for k, v in cfg.items() if k != "deterministic"}
    _write_json(os.path.join(cfg["out"], "ess_report.json"), payload)

    lb, bs = reports["linear_bayes"]["report"], reports["bootstrap"]["report"]
    coef_names = ["beta0", *[f"beta{i + 1}" for i in range(int(cfg["p"]))]]
    rows = []
    for j in range(lb.ess.shape[0]):
        for d, name in enumerate(coef_names):
            rows.append([j + 1, name, lb.ess_per_sec[j, d], bs.ess_per_sec[j, d],
                         lb.ess_per_sec[j, d] / bs.ess_per_sec[j, d]])
    _write_csv(os.path.join(cfg["out"], "ess_ratio.csv"),
               ["interval", "coef", "lb_ess_per_sec", "bootstrap_ess_per_sec", "ratio"],
               rows)

    timing_rows = [[int(cfg["n"]), int(cfg["p"]), int(cfg["j"]),
                    reports["linear_bayes"]["cpu"].mean() / 60.0,
                    reports["linear_bayes"]["wall"].mean() / 60.0]]
    if cfg.get("timing_n"):
        for n_value in _parse_list(cfg["timing_n"], int):
            if n_value == int(cfg["n"]):
                continue
            alt = DgpConfig(covariate_dim=int(cfg["p"]), n_subjects=n_value,
                            n_intervals=int(cfg["j"]), interval_width=float(cfg["width"]),
                            censor_prop=float(cfg["pc"]), seed=int(cfg["seed"]))
            alt_records, _ = simulate_dgp(alt)
            _, _, cpu, wall = run_replicates(alt_records, LINEAR_BAYES, seeds[:2])
            timing_rows.append([n_value, int(cfg["p"]), int(cfg["j"]),
                                cpu.mean() / 60.0, wall.mean() / 60.0])
    timing_rows.sort(key=lambda row: row[0])
    _write_csv(os.path.join(cfg["out"], "timings.csv"),
               ["n", "p", "j", "cpu_minutes", "wall_minutes"], timing_rows)
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--dump-config", action="store_true",
                        help="print the merged configuration and exit")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--deterministic", action="store_true",
                        help="omit timing metadata so reruns are byte-identical "
                             "(numerics are always seed-deterministic)")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"cap BLAS worker threads (or set {THREAD_ENV})")
    parser.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynhaz",
                                     description="dynamic piecewise exponential "
                                                 "hazard models via particle smoothing")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a dataset from the simulation DGP")
    p_sim.add_argument("--p", type=int, default=None, help="covariate count")
    p_sim.add_argument("--n", type=int, default=None, help="sample size")
    p_sim.add_argument("--j", type=int, default=None, help="interval count")
    p_sim.add_argument("--width", type=float, default=None)
    p_sim.add_argument("--pc", type=float, default=None, help="censoring proportion")
    p_sim.add_argument("--rw-sd", dest="rw_sd", type=float, default=None)
    p_sim.add_argument("--baseline-offset", dest="baseline_offset", type=float, default=None)
    _add_common(p_sim)

    p_fit = sub.add_parser("fit", help="fit the smoother to a survival CSV")
    p_fit.add_argument("--data", default=None, help="survival CSV path")
    p_fit.add_argument("--phi", type=float, default=None)
    p_fit.add_argument("--k", type=int, default=None, help="particle count")
    p_fit.add_argument("--r", type=int, default=None, help="smoothing replication factor")
    p_fit.add_argument("--policy", choices=["event-times", "equidistant", "equal-events"],
                       default=None)
    p_fit.add_argument("--width", type=float, default=None)
    p_fit.add_argument("--events", type=int, default=None, help="events per interval")
    p_fit.add_argument("--proposal", choices=["linear-bayes", "bootstrap"], default=None)
    p_fit.add_argument("--preset", choices=["trace"], default=None)
    p_fit.add_argument("--id-col", dest="id_col", default=None)
    p_fit.add_argument("--time-col", dest="time_col", default=None)
    p_fit.add_argument("--event-col", dest="event_col", default=None)
    p_fit.add_argument("--covariates", default=None, help="comma-separated column names")
    p_fit.add_argument("--center", default=None, help="columns to mean-center")
    p_fit.add_argument("--initial-variance", dest="initial_variance", type=float, default=None)
    p_fit.add_argument("--paths-out", dest="paths_out", default=None,
                       help="write the path particle dump (.npz)")
    _add_common(p_fit)

    p_grid = sub.add_parser("waic-grid", help="WAIC over a (phi, events) grid")
    p_grid.add_argument("--data", default=None)
    p_grid.add_argument("--phi-grid", dest="phi_grid", default=None)
    p_grid.add_argument("--events-grid", dest="events_grid", default=None)
    p_grid.add_argument("--test-fraction", dest="test_fraction", type=float, default=None)
    p_grid.add_argument("--k", type=int, default=None)
    p_grid.add_argument("--r", type=int, default=None)
    p_grid.add_argument("--id-col", dest="id_col", default=None)
    p_grid.add_argument("--time-col", dest="time_col", default=None)
    p_grid.add_argument("--event-col", dest="event_col", default=None)
    p_grid.add_argument("--covariates", default=None)
    p_grid.add_argument("--center", default=None)
    p_grid.add_argument("--initial-variance", dest="initial_variance", type=float, default=None)
    _add_common(p_grid)

    p_pred = sub.add_parser("predict", help="survival curve from a paths dump")
    p_pred.add_argument("--paths", default=None, help=".npz from fit --paths-out")
    p_pred.add_argument("--x", default=None, help="comma-separated covariate values")
    p_pred.add_argument("--times", default=None, help="comma-separated times")
    p_pred.add_argument("--grid", type=int, default=None, help="number of grid times")
    _add_common(p_pred)

    p_bench = sub.add_parser("bench", help="linear-Bayes vs bootstrap proposal benchmark")
    p_bench.add_argument("--p", type=int, default=None)
    p_bench.add_argument("--n", type=int, default=None)
    p_bench.add_argument("--j", type=int, default=None)
    p_bench.add_argument("--width", type=float, default=None)
    p_bench.add_argument("--pc", type=float, default=None)
    p_bench.add_argument("--k", type=int, default=None)
    p_bench.add_argument("--r", type=int, default=None)
    p_bench.add_argument("--m", type=int, default=None, help="replicates per method")
    p_bench.add_argument("--phi", type=float, default=None)
    p_bench.add_argument("--timing-n", dest="timing_n", default=None,
                         help="comma-separated sample sizes for the timing table")
    p_bench.add_argument("--initial-variance", dest="initial_variance", type=float, default=None)
    _add_common(p_bench)

    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "waic-grid": cmd_waic_grid,
    "predict": cmd_predict,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_threads(args.threads)

    from .errors import ConfigurationError, DynhazError, SchemaError

    try:
        cfg = _merge_config(args.command, args)
        if args.dump_config:
            print(json.dumps(cfg, indent=2, sort_keys=True))
            return 0
        return COMMANDS[args.command](cfg)
    except (ConfigurationError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DynhazError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
