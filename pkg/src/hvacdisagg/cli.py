"""Command line front end.

One config file, explicit subcommands, stable exit codes: 0 success,
1 validation or fit error, 2 I/O error. Output files are derived purely
from the inputs, never from the wall clock, so identical inputs give
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys

import numpy as np

from .building import bind_points, load_metadata
from .calibrate import fit_model, load_model, predict_cooling_ahu, \
    predict_cooling_vav, predict_heating, save_model
from .config import RunConfig, load_run_config, load_scenario_spec
from .energy import assemble
from .errors import ConfigError, DisaggError
from .faults import read_findings, run_all, write_findings
from .impact import build_report, estimate_all, format_report, prioritize, \
    write_report_csv
from .ingest import format_timestamp, read_points, read_reference_year, \
    read_trends, write_trends
from .synth import generate
from .timeseries import TimeSeries, Unit, rmse

COMMANDS = ("validate", "fit", "estimate", "detect", "report", "synth")


def _config(args) -> RunConfig:
    cfg = load_run_config(args.config)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output_dir=args.out)
    return cfg


def _load_building(cfg: RunConfig, strict: bool):
    graph = load_metadata(cfg.topology_path)
    points = read_points(cfg.points_path)
    binding = bind_points(graph, points)
    series, stats = read_trends(cfg.trends_path, binding, cfg.interval_s, strict)
    data = assemble(graph, binding, series)
    return graph, binding, series, stats, data


def _point_coverage(binding, series, data) -> list:
    """Non-gap fraction per bound point over the assembled frame."""
    by_point: dict = {}
    for slot, point_id in binding.bindings.items():
        if point_id in by_point:
            continue
        ts = series.get(slot)
        if ts is None:
            by_point[point_id] = 0.0
            continue
        stamps = ts.timestamps()
        in_frame = (stamps >= data.start) & (stamps < data.end)
        good = int(np.count_nonzero(~np.isnan(ts.values[in_frame])))
        by_point[point_id] = good / data.n_rows if data.n_rows else 0.0
    return sorted(by_point.items())


def cmd_validate(args) -> int:
    cfg = _config(args)
    cfg.check_inputs_exist()
    graph, binding, series, stats, data = _load_building(cfg, args.strict)

    print(f"building {graph.building_id}: "
          f"{len(graph.ahus)} AHU(s), {len(graph.vavs)} VAV(s)")
    print(f"points bound: {len(set(binding.bindings.values()))} "
          f"({len(binding.bindings)} slots); "
          f"unresolved slots: {len(binding.unresolved)}")
    for equip, role, fallback in binding.unresolved:
        print(f"  unresolved: {equip} {role.name} ({fallback})")
    print(f"trend rows: {stats.rows}, skipped: {stats.skipped}, "
          f"duplicates: {stats.duplicates}, unknown points: {stats.unknown_points}")
    print(f"frame: {data.n_rows} rows at {data.interval_s}s, "
          f"{format_timestamp(data.start)} .. {format_timestamp(data.end)}")

    gaps = [(pid, cov) for pid, cov in _point_coverage(binding, series, data)
            if cov < 0.99]
    if gaps:
        print("coverage warnings:")
        for pid, cov in gaps:
            print(f"  {pid}: {100.0 * cov:.1f}% of frame rows")
    else:
        print("coverage: all bound points above 99%")

    for msg in stats.messages:
        print(f"note: {msg}")
    for msg in binding.warnings + data.warnings:
        print(f"warning: {msg}")
    for equip, role, fallback in data.fallbacks_used:
        print(f"fallback: {equip} {role.name} <- {fallback}")
    print("validation passed")
    return 0


_DIAG_COLUMNS = ("sub-model", "n_train", "train RMSE", "train baseline",
                 "n_test", "test RMSE", "test baseline", "improvement")


def _diagnostics_table(model) -> str:
    rows = []
    for name, sub in sorted(model.submodels.items()):
        rows.append((
            name, str(sub.n_train),
            f"{sub.train_rmse:.6g}", f"{sub.baseline_train_rmse:.6g}",
            "-" if sub.n_test is None else str(sub.n_test),
            "-" if sub.test_rmse is None else f"{sub.test_rmse:.6g}",
            "-" if sub.baseline_test_rmse is None else f"{sub.baseline_test_rmse:.6g}",
            "-" if sub.improvement_pct is None else f"{sub.improvement_pct:.1f}%",
        ))
    widths = [max(len(_DIAG_COLUMNS[i]), *(len(r[i]) for r in rows))
              for i in range(len(_DIAG_COLUMNS))]
    lines = ["  ".join(c.ljust(widths[i]) for i, c in enumerate(_DIAG_COLUMNS)).rstrip(),
             "  ".join("-" * w for w in widths)]
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(r))).rstrip())
    return "\n".join(lines)


def cmd_fit(args) -> int:
    cfg = _config(args)
    _, _, _, _, data = _load_building(cfg, args.strict)
    model = fit_model(data, cfg.split_fraction, cfg.constants)
    save_model(model, cfg.model_path)

    print("coefficients: " + "  ".join(
        f"{name}={model[name]:.6g}" for name in sorted(model.coefficients)))
    train_s, train_e = model.train_window
    print(f"train window: {format_timestamp(train_s)} .. {format_timestamp(train_e)}")
    if model.test_window is not None:
        test_s, test_e = model.test_window
        print(f"test window:  {format_timestamp(test_s)} .. {format_timestamp(test_e)}")
        overlap = "disjoint" if train_e <= test_s or test_e <= train_s else "OVERLAPPING"
        print(f"train/test windows: {overlap}")
    else:
        print("test window:  none (all rows used for training)")
    print(_diagnostics_table(model))
    for msg in model.warnings:
        print(f"warning: {msg}")
    print(f"model written to {cfg.model_path}")
    return 0


def _write_comparison(path: str, data, estimated: np.ndarray,
                      measured: np.ndarray, mask: np.ndarray) -> None:
    ts = data.timestamps()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "estimated", "measured"])
        for i in range(data.n_rows):
            e, m = estimated[i], measured[i]
            if not mask[i] or np.isnan(e) or np.isnan(m):
                continue
            writer.writerow([format_timestamp(int(ts[i])), repr(float(e)),
                             repr(float(m))])


def cmd_estimate(args) -> int:
    cfg = _config(args)
    graph, _, _, _, data = _load_building(cfg, args.strict)
    model = load_model(cfg.model_path)
    os.makedirs(cfg.output_dir, exist_ok=True)
    k = model.constants.air_power_k
    deadband = model.constants.mode_deadband_f
    bid = graph.building_id

    def series(point_id, values):
        return TimeSeries(point_id=point_id, start=data.start,
                          interval_s=data.interval_s, unit=Unit.MMBTU_HR,
                          values=np.asarray(values, float))

    # raw physics powers per equipment; building-level scaling lives in the
    # comparison files, so these stay additive across equipment
    out_series = []
    for vav_id, power in data.vav_cooling_powers(k).items():
        out_series.append(series(f"{bid}.{vav_id}.CLG-POWER", power))
    for vav_id, power in data.vav_heating_powers(k).items():
        out_series.append(series(f"{bid}.{vav_id}.RH-POWER", power))
    for ahu_id, (cooling, heating) in data.ahu_powers(k, deadband).items():
        out_series.append(series(f"{bid}.{ahu_id}.CLG-POWER", cooling))
        out_series.append(series(f"{bid}.{ahu_id}.HTG-POWER", heating))
    for ahu_id, econ in data.economizer_terms(k).items():
        out_series.append(series(f"{bid}.{ahu_id}.ECON-POWER", econ))
    powers_path = os.path.join(cfg.output_dir, "equipment_powers.csv")
    write_trends(out_series, powers_path)
    print(f"per-equipment powers: {powers_path} ({len(out_series)} series)")

    # each sub-model is compared only where its balance applies, mirroring
    # the fit diagnostics: AHU cooling needs every AHU cooling or idle
    all_rows = np.ones(data.n_rows, dtype=bool)
    comparisons = [
        ("cooling_vav_comparison.csv", predict_cooling_vav(model, data),
         data.cooling_meter, all_rows),
        ("cooling_ahu_comparison.csv", predict_cooling_ahu(model, data),
         data.cooling_meter, data.cooling_rows(deadband)),
    ]
    if data.heating_meter is not None:
        comparisons.append(("heating_comparison.csv",
                            predict_heating(model, data), data.heating_meter,
                            data.heating_rows(deadband)))
    for name, estimated, measured, mask in comparisons:
        path = os.path.join(cfg.output_dir, name)
        _write_comparison(path, data, estimated, measured, mask)
        keep = mask & ~np.isnan(estimated) & ~np.isnan(measured)
        score = rmse(estimated[keep], measured[keep]) if keep.any() else float("nan")
        print(f"{name}: {int(keep.sum())} rows, rmse {score:.6g} MMBTU/hr")
    return 0


def cmd_detect(args) -> int:
    cfg = _config(args)
    _, _, _, _, data = _load_building(cfg, args.strict)
    result = run_all(data, cfg.thresholds)
    write_findings(result.findings, cfg.findings_path)

    os.makedirs(cfg.output_dir, exist_ok=True)
    log_path = os.path.join(cfg.output_dir, "inconclusive.log")
    with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
        for note in result.inconclusive:
            fh.write(f"rule {note.rule} {note.equipment}: {note.reason}\n")

    for w in result.warnings:
        print(f"warning: {w}")
    for f in result.findings:
        print(f"rule {f.rule} ({f.rule_name}) {f.equipment}: "
              f"statistic {f.statistic:.4g} vs threshold {f.threshold:.4g}, "
              f"{format_timestamp(f.window_start)} .. {format_timestamp(f.window_end)}")
    print(f"{len(result.findings)} finding(s), "
          f"{len(result.inconclusive)} inconclusive (see {log_path})")
    print(f"findings written to {cfg.findings_path}")
    return 0


IMPACTS_HEADER = ["rule", "equipment", "method", "window_start", "window_end",
                  "observed_mmbtu", "annual_mmbtu", "slope", "intercept", "r",
                  "notes"]


def _write_impacts(impacts, path: str) -> None:
    def cell(value):
        return "" if value is None else repr(float(value))

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(IMPACTS_HEADER)
        for est in impacts:
            f = est.finding
            writer.writerow([f.rule, f.equipment, est.method,
                             format_timestamp(f.window_start),
                             format_timestamp(f.window_end),
                             cell(est.observed_mmbtu), cell(est.annual_mmbtu),
                             cell(est.slope), cell(est.intercept), cell(est.r),
                             est.notes])


def cmd_report(args) -> int:
    cfg = _config(args)
    _, _, _, _, data = _load_building(cfg, args.strict)
    model = load_model(cfg.model_path)
    findings = read_findings(cfg.findings_path)
    reference = read_reference_year(cfg.reference_year_path)

    ordered = prioritize(estimate_all(findings, model, data, reference))
    os.makedirs(cfg.output_dir, exist_ok=True)
    impacts_path = os.path.join(cfg.output_dir, "impacts.csv")
    _write_impacts(ordered, impacts_path)
    rows = build_report(ordered)
    report_path = os.path.join(cfg.output_dir, "report.csv")
    write_report_csv(rows, report_path)

    sys.stdout.write(format_report(rows))
    skipped = [e for e in ordered if not e.estimable]
    for est in skipped:
        print(f"not estimable: rule {est.finding.rule} "
              f"{est.finding.equipment}: {est.notes}")
    print(f"report written to {report_path}; per-finding detail in {impacts_path}")
    return 0


def cmd_synth(args) -> int:
    if args.out is None:
        raise ConfigError("synth needs --out for the bundle directory")
    spec = load_scenario_spec(args.config, seed=args.seed)
    bundle = generate(spec, args.out)
    print(f"scenario bundle in {bundle.out_dir} "
          f"(seed {spec.seed}, {spec.n_ahus} AHU(s) x {spec.n_vavs_per_ahu} VAV(s), "
          f"{spec.duration_days} days, {len(spec.faults)} injection(s))")
    for path in (bundle.topology_path, bundle.points_path, bundle.trends_path,
                 bundle.reference_year_path, bundle.ground_truth_path,
                 bundle.truth_powers_path, bundle.run_config_path):
        print(f"  {path}")
    return 0


_HANDLERS = {
    "validate": cmd_validate,
    "fit": cmd_fit,
    "estimate": cmd_estimate,
    "detect": cmd_detect,
    "report": cmd_report,
    "synth": cmd_synth,
}

_HELP = {
    "validate": "check topology, point binding, and trend coverage",
    "fit": "calibrate the meter models and write the model file",
    "estimate": "write per-equipment power series and meter comparisons",
    "detect": "run the fault rules and write the findings file",
    "report": "rank findings by annual energy waste",
    "synth": "generate a synthetic scenario bundle",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="run config (or scenario spec for synth)")
    common.add_argument("--out", default=None,
                        help="override output directory (bundle dir for synth)")
    common.add_argument("--strict", action="store_true",
                        help="fail on malformed trend rows instead of skipping")
    common.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed (synth only)")

    parser = argparse.ArgumentParser(
        prog="hvacdisagg",
        description="meter disaggregation and fault detection for HVAC trend data")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=_HELP[name])
        sp.set_defaults(func=_HANDLERS[name])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DisaggError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
