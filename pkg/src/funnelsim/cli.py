"""Scenario-driven command line: run simulations, audit feasibility,
compare controllers, sweep parameters, and verify funnel constants.

Exit codes: 0 clean run, 1 config/usage error, 2 funnel violation,
3 singularity or finite-escape abort.  Reports are written on every
path except config errors.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, Scenario, apply_override, parse_scenario
from .errchain import check_feasibility
from .funnels import default_grid, verify_funnel
from .sim import integrate_closed_loop, monitor_trajectory, rms_error

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FUNNEL = 2
EXIT_ABORT = 3

_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Plot a run CSV: tracking error against the funnel, and the input."""
import sys

import matplotlib.pyplot as plt
import numpy as np

path = sys.argv[1] if len(sys.argv) > 1 else {csv_name!r}
data = np.genfromtxt(path, delimiter=",", names=True)

fig, (ax_err, ax_u) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
ax_err.plot(data["t"], data["e"], label="e")
ax_err.plot(data["t"], data["psi"], "k--", label="psi")
ax_err.plot(data["t"], -data["psi"], "k--")
ax_err.set_ylabel("tracking error")
ax_err.legend(loc="upper right")
ax_u.plot(data["t"], data["u"], label="u")
ax_u.set_xlabel("t")
ax_u.set_ylabel("input")
ax_u.legend(loc="upper right")
fig.tight_layout()
out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=150)
print(f"wrote {{out}}")
'''


def _exit_code_from_events(events):
    kinds = {ev.kind for ev in events}
    if kinds & {"gain_singularity", "stage_singularity", "finite_escape", "step_underflow"}:
        return EXIT_ABORT
    if "funnel_violation" in kinds:
        return EXIT_FUNNEL
    return EXIT_OK


def _compliance(scenario: Scenario, controller, feas):
    chain = getattr(controller, "chain", None)
    return {
        "k_ok": (chain.meets_gain_bound(scenario.funnel.alpha) if chain is not None else None),
        "N_surjective": controller.gains.surjective,
        "init_feasible": feas.feasible,
    }


def _print_warnings(scenario: Scenario, controller, feas):
    comp = _compliance(scenario, controller, feas)
    if comp["k_ok"] is False:
        k = controller.chain.k
        print(
            f"warning: k={k:g} below the gain bound alpha+2={scenario.funnel.alpha + 2:g}; "
            "running anyway",
            file=sys.stderr,
        )
    if not comp["N_surjective"]:
        print("note: gain surjection 'neg_identity' is not onto the reals", file=sys.stderr)
    if not feas.feasible:
        worst = int(np.argmin(feas.margins))
        print(
            f"warning: initial data infeasible at stage {worst + 1} "
            f"(margin {feas.margins[worst]:.3g}); running anyway",
            file=sys.stderr,
        )


def _run_one(scenario: Scenario, label, controller):
    chain = scenario.chain_for(controller)
    feas = check_feasibility(
        scenario.integrator.t0, scenario.initial_error_stack(), scenario.funnel, chain
    )
    started = time.perf_counter()
    log = integrate_closed_loop(
        scenario.plant,
        controller,
        scenario.reference,
        scenario.funnel,
        scenario.integrator,
        scenario.x0,
        chain=chain,
    )
    runtime = time.perf_counter() - started
    monitor = monitor_trajectory(log, scenario.funnel, chain) if log.t.size else None
    code = _exit_code_from_events(log.events)
    summary = {
        "label": label,
        "exit_code": code,
        "completed": log.completed,
        "n_samples": int(log.t.size),
        "runtime_s": runtime,
        "rms_error": rms_error(log) if log.t.size else math.nan,
        "min_funnel_margin": monitor.min_funnel_margin if monitor else math.nan,
        "max_gain": monitor.max_gain if monitor else math.nan,
        "sup_u": monitor.sup_u if monitor else math.nan,
        "max_w": float(np.max(log.w)) if log.t.size else math.nan,
    }
    return log, feas, monitor, summary, code


def _write_report(path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def _emit_run_artifacts(out_dir: Path, stem, log):
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    log.to_csv(csv_path)
    events_path = out_dir / f"{stem}_events.json"
    _write_report(events_path, log.events_payload())
    plot_path = out_dir / f"plot_{stem}.py"
    plot_path.write_text(_PLOT_TEMPLATE.format(csv_name=csv_path.name))
    return {"csv": str(csv_path), "events": str(events_path), "plot": str(plot_path)}


def _load_effective(args) -> Scenario:
    path = Path(args.config)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    raw = copy.deepcopy(raw)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        apply_override(raw, key, value)
    if getattr(args, "dt", None) is not None:
        apply_override(raw, "integrator.dt", repr(args.dt))
    return parse_scenario(raw)


def _out_dir(args, scenario: Scenario):
    if args.out_dir:
        return Path(args.out_dir)
    return Path(scenario.out.get("dir", "out"))


def _stem(args, scenario: Scenario):
    return scenario.out.get("stem", Path(args.config).stem)


def cmd_simulate(args):
    scenario = _load_effective(args)
    if len(scenario.controllers) != 1:
        raise ConfigError("simulate: config must define exactly one controller")
    label, controller = scenario.controllers[0]
    chain = scenario.chain_for(controller)
    feas = check_feasibility(
        scenario.integrator.t0, scenario.initial_error_stack(), scenario.funnel, chain
    )
    _print_warnings(scenario, controller, feas)
    log, feas, monitor, summary, code = _run_one(scenario, label, controller)
    out_dir = _out_dir(args, scenario)
    stem = _stem(args, scenario)
    artifacts = _emit_run_artifacts(out_dir, stem, log)
    report = {
        "config": scenario.raw,
        "feasibility": feas.to_dict(),
        "theorem_compliance": _compliance(scenario, controller, feas),
        "events": log.events_payload(),
        "monitor": monitor.to_dict() if monitor else None,
        "summary": summary,
        "artifacts": artifacts,
    }
    report_path = out_dir / f"{stem}_report.json"
    _write_report(report_path, report)
    print(
        f"{stem}: exit {code}  samples {summary['n_samples']}  "
        f"min margin {summary['min_funnel_margin']:.4g}  sup|u| {summary['sup_u']:.4g}  "
        f"report {report_path}"
    )
    return code


def cmd_check_feasibility(args):
    scenario = _load_effective(args)
    controller = scenario.controller
    chain = scenario.chain_for(controller)
    feas = check_feasibility(
        scenario.integrator.t0, scenario.initial_error_stack(), scenario.funnel, chain
    )
    payload = {
        "feasibility": feas.to_dict(),
        "theorem_compliance": _compliance(scenario, controller, feas),
    }
    print(json.dumps(payload, indent=2))
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_report(out_dir / f"{_stem(args, scenario)}_feasibility.json", payload)
    return EXIT_OK if feas.feasible else EXIT_FUNNEL


def cmd_compare(args):
    scenario = _load_effective(args)
    if len(scenario.controllers) < 2:
        raise ConfigError("compare: config must define at least two controllers")
    jobs = max(1, args.jobs)

    def run(pair):
        label, controller = pair
        return _run_one(scenario, label, controller)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, scenario.controllers))
    else:
        results = [run(pair) for pair in scenario.controllers]

    out_dir = _out_dir(args, scenario)
    stem = _stem(args, scenario)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    per_controller = {}
    for (label, _), (log, feas, monitor, summary, code) in zip(scenario.controllers, results):
        _emit_run_artifacts(out_dir, f"{stem}_{label}", log)
        rows.append(summary)
        per_controller[label] = {
            "feasibility": feas.to_dict(),
            "events": log.events_payload(),
            "monitor": monitor.to_dict() if monitor else None,
            "summary": summary,
        }

    combined = out_dir / f"{stem}_compare.csv"
    logs = [res[0] for res in results]
    base = logs[0]
    with open(combined, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t", "psi"]
        for label, _ in scenario.controllers:
            header += [f"{label}_e", f"{label}_u", f"{label}_gain"]
        writer.writerow(header)
        end = min((log.t[-1] for log in logs if log.t.size), default=0.0)
        mask = base.t <= end + 1e-12
        for i in np.nonzero(mask)[0]:
            row = [base.t[i], base.psi[i]]
            for log in logs:
                ei = np.interp(base.t[i], log.t, log.e[:, 0])
                ui = np.interp(base.t[i], log.t, log.u[:, 0])
                gi = np.interp(base.t[i], log.t, log.gain)
                row += [ei, ui, gi]
            writer.writerow([repr(float(v)) for v in row])

    report = {
        "config": scenario.raw,
        "controllers": per_controller,
        "artifacts": {"combined_csv": str(combined)},
    }
    _write_report(out_dir / f"{stem}_compare.json", report)

    cols = ("label", "exit_code", "min_funnel_margin", "sup_u", "max_gain", "rms_error")
    print("  ".join(f"{c:>18}" for c in cols))
    for summary in rows:
        print(
            "  ".join(
                f"{summary[c]:>18.6g}" if isinstance(summary[c], float) else f"{summary[c]!s:>18}"
                for c in cols
            )
        )
    return max(res[4] for res in results)


_SWEEPABLE = {
    "k": "controller.k",
    "dt": "integrator.dt",
    "funnel.c": "funnel.c",
}


def _sweep_target(name):
    if name in _SWEEPABLE:
        return _SWEEPABLE[name]
    if name.startswith("initial_state."):
        component = name.split(".", 1)[1]
        if component in ("z", "s", "z_dot", "s_dot"):
            return name
    raise ConfigError(
        f"sweep: unknown parameter {name!r}; choose k, dt, funnel.c, or initial_state.<component>"
    )


def cmd_sweep(args):
    target = _sweep_target(args.param)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"sweep: bad --values list ({exc})") from exc
    if not values:
        raise ConfigError("sweep: --values must list at least one number")
    scenario0 = _load_effective(args)
    if len(scenario0.controllers) != 1:
        raise ConfigError("sweep: config must define exactly one controller")
    if target == "controller.k" and scenario0.raw["controller"].get("controller") != "new_fc":
        raise ConfigError("sweep: parameter 'k' applies to the new_fc controller only")

    def run(value):
        raw = copy.deepcopy(scenario0.raw)
        apply_override(raw, target, repr(value))
        scenario = parse_scenario(raw)
        label, controller = scenario.controllers[0]
        log, feas, monitor, summary, code = _run_one(scenario, label, controller)
        return value, log, feas, summary, code

    jobs = max(1, args.jobs)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, values))
    else:
        results = [run(v) for v in values]

    base_log = results[0][1]
    out_dir = _out_dir(args, scenario0)
    out_dir.mkdir(parents=True, exist_ok=True)
    sweep_path = out_dir / f"{_stem(args, scenario0)}_sweep.csv"
    fields = (
        "value",
        "exit_code",
        "init_feasible",
        "min_stage_margin",
        "min_funnel_margin",
        "max_gain",
        "sup_u",
        "rms_error",
        "sup_diff_norm_e",
    )
    with open(sweep_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([args.param if f == "value" else f for f in fields])
        for value, log, feas, summary, code in results:
            if log.t.size and base_log.t.size:
                end = min(log.t[-1], base_log.t[-1])
                mask = base_log.t <= end + 1e-12
                interp = np.interp(base_log.t[mask], log.t, log.norm_e)
                sup_diff = float(np.max(np.abs(interp - base_log.norm_e[mask])))
            else:
                sup_diff = math.nan
            row = [
                value,
                code,
                int(feas.feasible),
                min(feas.margins),
                summary["min_funnel_margin"],
                summary["max_gain"],
                summary["sup_u"],
                summary["rms_error"],
                sup_diff,
            ]
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
            print(
                f"{args.param}={value:g}: exit {code}  feasible {bool(feas.feasible)}  "
                f"min margin {summary['min_funnel_margin']:.4g}  sup_diff {sup_diff:.3g}"
            )
    print(f"sweep table: {sweep_path}")
    return max(res[4] for res in results)


def cmd_verify_funnel(args):
    scenario = _load_effective(args)
    grid = default_grid(scenario.integrator.t_end, scenario.integrator.t0)
    report = verify_funnel(scenario.funnel, grid, tol=1e-9)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.ok else EXIT_FUNNEL


def build_parser():
    parser = argparse.ArgumentParser(
        prog="funnelsim",
        description="Funnel-control scenario runner and verification tool",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, jobs=False):
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out-dir", default=None, help="directory for artifacts")
        p.add_argument("--dt", type=float, default=None, help="override integrator.dt")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override a config entry (dotted path), e.g. controller.k=4",
        )
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="parallel worker threads")

    common(sub.add_parser("simulate", help="run one scenario"))
    common(sub.add_parser("check-feasibility", help="audit the initial data without simulating"))
    common(sub.add_parser("compare", help="run every controller in the config"), jobs=True)
    sweep = sub.add_parser("sweep", help="rerun a scenario over a parameter list")
    common(sweep, jobs=True)
    sweep.add_argument("--param", required=True, help="k, dt, funnel.c, or initial_state.<comp>")
    sweep.add_argument("--values", required=True, help="comma-separated numbers")
    common(sub.add_parser("verify-funnel", help="check the funnel decay inequality on a grid"))
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "check-feasibility": cmd_check_feasibility,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "verify-funnel": cmd_verify_funnel,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
