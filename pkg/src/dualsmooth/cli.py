"""Command-line scenario runner.

Subcommands: ``simulate``, ``smooth-finite``, ``smooth-grid``, ``smooth-lg``,
``verify``, ``plot-data`` and ``run`` (scenario files). Numbers are written
with 17 significant digits so reruns with the same seed produce byte-identical
artifacts; tolerance-aware comparisons belong to the verification layer, not
to file diffs. The environment variable ``DUALSMOOTH_LOG`` (error|info|debug)
controls verbosity.

Exit codes: 0 success, 1 input/validation error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import finite, gaussian, grid, oracles, simulate, verify
from .errors import DualsmoothError, MalformedInput
from .models import (
    CtmcModel,
    DiffusionModel1D,
    GaussianModel,
    ObservationPath,
    load_model,
    load_observations,
    model_from_dict,
    save_observations,
)

log = logging.getLogger("dualsmooth")

_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FMT % float(x)


def _configure_logging() -> None:
    level_name = os.environ.get("DUALSMOOTH_LOG", "error").lower()
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(level_name)
    if level is None:
        raise MalformedInput(f"DUALSMOOTH_LOG must be error|info|debug, got {level_name!r}")
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# artifact writers


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_finite_csv(path, result: finite.FiniteSmootherResult) -> None:
    sol = result.solution
    rows = []
    for k, t in enumerate(sol.timegrid):
        for i in range(sol.pi.shape[1]):
            rows.append(
                (_fmt(t), str(i + 1), _fmt(sol.mu[k, i]), _fmt(sol.lam[k, i]), _fmt(sol.pi[k, i]))
            )
    _write_rows(path, ("t", "state", "mu", "lambda", "pi"), rows)


def write_grid_csv(path, result: grid.GridSmootherResult) -> None:
    sol = result.solution
    rows = []
    for k, t in enumerate(sol.timegrid):
        for j, x in enumerate(sol.x):
            rows.append(
                (
                    _fmt(t),
                    _fmt(x),
                    _fmt(sol.mu[k, j]),
                    _fmt(sol.lam[k, j]),
                    _fmt(sol.pi[k, j]),
                    _fmt(sol.u[k, j]),
                )
            )
    _write_rows(path, ("t", "x", "mu", "lambda", "pi", "u"), rows)


def write_lg_csv(path, sol: gaussian.MeeSolution) -> None:
    d = sol.m.shape[1]
    p = sol.u.shape[1]
    header = (
        ["t"]
        + [f"mean[{i + 1}]" for i in range(d)]
        + [f"u[{j + 1}]" for j in range(p)]
        + [f"Vdiag[{i + 1}]" for i in range(d)]
    )
    rows = []
    for k, t in enumerate(sol.timegrid):
        row = [_fmt(t)]
        row += [_fmt(v) for v in sol.m[k]]
        row += [_fmt(v) for v in sol.u[k]]
        row += [_fmt(sol.V[k, i, i]) for i in range(d)]
        rows.append(row)
    _write_rows(path, header, rows)


def _write_summary(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _summary_path(out_csv: str, override: str | None) -> str:
    if override:
        return override
    stem, _ = os.path.splitext(out_csv)
    return stem + ".summary.json"


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args) -> int:
    model = load_model(args.model)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state_payload, obs = _simulate_for_model(model, args.T, args.N, args.seed, args.zero_noise)
    save_observations(obs, out_dir / "obs.json")
    with open(out_dir / "state.json", "w") as fh:
        json.dump(state_payload, fh)
    log.info("wrote %s and %s", out_dir / "obs.json", out_dir / "state.json")
    return 0


def _simulate_for_model(model, T: float, N: int, seed: int, zero_noise: bool):
    """Hidden path with key=seed, observation noise with key=seed+1."""
    if isinstance(model, CtmcModel):
        path = simulate.simulate_ctmc(model, T, seed)
        obs = simulate.simulate_observations(path, model.h, N, seed + 1, zero_noise=zero_noise)
        payload = {"kind": "ctmc", "T": T, "times": path.times.tolist(), "states": path.states.tolist()}
        return payload, obs
    if isinstance(model, DiffusionModel1D):
        path = simulate.simulate_diffusion(model, T, N, seed)
        obs = simulate.simulate_observations(path, model.h, N, seed + 1, zero_noise=zero_noise)
        payload = {
            "kind": "diffusion1d",
            "T": T,
            "times": path.times.tolist(),
            "values": path.values.tolist(),
            "n_reflections": path.n_reflections,
        }
        return payload, obs
    if isinstance(model, GaussianModel):
        path = simulate.simulate_gaussian(model, T, N, seed)
        obs = simulate.simulate_observations(path, model.H, N, seed + 1, zero_noise=zero_noise)
        payload = {"kind": "gaussian", "T": T, "times": path.times.tolist(), "values": path.values.tolist()}
        return payload, obs
    raise MalformedInput(f"cannot simulate model of type {type(model).__name__}")


def _cmd_smooth_finite(args) -> int:
    model = load_model(args.model)
    if not isinstance(model, CtmcModel):
        raise MalformedInput("smooth-finite expects a finite-state model")
    obs = load_observations(args.obs)
    result = finite.solve(model, obs, substeps=args.substeps or 1)
    write_finite_csv(args.out, result)
    _write_summary(
        _summary_path(args.out, args.summary),
        {
            "logC": result.solution.logC,
            "J_opt": result.J_opt,
            "route_equivalence_linf": result.route_equivalence_linf,
        },
    )
    return 0


def _cmd_smooth_grid(args) -> int:
    model = load_model(args.model)
    if not isinstance(model, DiffusionModel1D):
        raise MalformedInput("smooth-grid expects a 1-D diffusion model")
    if args.grid_n:
        model = DiffusionModel1D(
            a=model._specs["a"],
            sigma=model._specs["sigma"],
            h=model._specs["h"],
            nu0=model._specs["nu0"],
            x_min=model.x_min,
            x_max=model.x_max,
            n=args.grid_n,
        )
    obs = load_observations(args.obs)
    result = grid.solve(model, obs, substeps=args.substeps)
    write_grid_csv(args.out, result)
    _write_summary(
        _summary_path(args.out, args.summary),
        {
            "logC": result.solution.logC,
            "hjb_residual_max": result.hjb_residual_max,
            "route_equivalence_linf": result.route_equivalence_linf,
            "mass_drift": result.mass_drift,
        },
    )
    return 0


def _cmd_smooth_lg(args) -> int:
    model = load_model(args.model)
    if not isinstance(model, GaussianModel):
        raise MalformedInput("smooth-lg expects a linear-Gaussian model")
    obs = load_observations(args.obs)
    sol = gaussian.solve_min_energy(model, obs)
    means, _ = oracles.kalman_rts(model, obs)
    write_lg_csv(args.out, sol)
    _write_summary(
        _summary_path(args.out, args.summary),
        {
            "J_opt": sol.J,
            "rts_mean_error": float(np.max(np.abs(sol.m - means))),
        },
    )
    return 0


def _cmd_verify(args) -> int:
    thresholds = verify.load_default_thresholds()
    if args.threshold_file:
        with open(args.threshold_file) as fh:
            thresholds.update(json.load(fh))
    results = verify.run_all(thresholds)
    report = verify.report_dict(results)
    out_dir = Path(args.out_dir) if args.out_dir else None
    text = json.dumps(report, indent=1, sort_keys=True)
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(text + "\n")
    else:
        print(text)
    for r in results:
        log.info("%-28s %-5s value=%.6g threshold=%.6g", r.name, "pass" if r.passed else "FAIL", r.value, r.threshold)
    return 0 if report["all_passed"] else 2


_PLOT_LAYOUTS = {
    ("t", "state", "mu", "lambda", "pi"): ("state", ("mu", "lambda", "pi")),
    ("t", "x", "mu", "lambda", "pi", "u"): ("x", ("mu", "lambda", "pi", "u")),
}


def _cmd_plot_data(args) -> int:
    with open(args.infile, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise MalformedInput("input CSV has no header") from None
        rows = list(reader)
    out_rows = []
    if header in _PLOT_LAYOUTS:
        key_col, fields = _PLOT_LAYOUTS[header]
        key_idx = header.index(key_col)
        for row in rows:
            if len(row) != len(header):
                raise MalformedInput(f"row with {len(row)} fields does not match header")
            for f in fields:
                out_rows.append((f, row[0], row[key_idx], row[header.index(f)]))
    elif header[:1] == ("t",) and any(c.startswith("mean[") for c in header):
        for row in rows:
            if len(row) != len(header):
                raise MalformedInput(f"row with {len(row)} fields does not match header")
            for j, col in enumerate(header[1:], start=1):
                name, _, comp = col.partition("[")
                out_rows.append((name, row[0], comp.rstrip("]"), row[j]))
    else:
        raise MalformedInput(f"unrecognized solution header {header}")
    _write_rows(args.out, ("series", "t", "x_or_state", "value"), out_rows)
    return 0


# ---------------------------------------------------------------------------
# scenario runner


def run_scenario(scenario_path, out_dir) -> int:
    """Simulate, smooth and verify one scenario file; returns the exit code."""
    with open(scenario_path) as fh:
        scenario = json.load(fh)
    base = Path(scenario_path).parent
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    kind = scenario.get("kind")
    if kind not in ("finite", "grid", "lg"):
        raise MalformedInput(f"scenario kind must be finite|grid|lg, got {kind!r}")
    if "model" in scenario:
        model = model_from_dict(scenario["model"])
    elif "model_file" in scenario:
        ref = base / scenario["model_file"]
        if not ref.exists():
            raise MalformedInput(f"referenced model file {ref} does not exist")
        model = load_model(ref)
    else:
        raise MalformedInput("scenario needs 'model' or 'model_file'")
    T = float(scenario.get("T", 1.0))
    N = int(scenario.get("N", 1000))
    seed = int(scenario.get("seed", 0))
    options = scenario.get("options", {})
    substeps = options.get("substeps")
    if substeps is not None and int(substeps) < 1:
        raise MalformedInput("options.substeps must be >= 1")
    grid_n = options.get("grid_n")
    if grid_n is not None and int(grid_n) < 8:
        raise MalformedInput("options.grid_n must be >= 8")
    if T <= 0 or N < 1:
        raise MalformedInput("scenario needs T > 0 and N >= 1")

    state_payload, obs = _simulate_for_model(model, T, N, seed, bool(scenario.get("zero_noise", False)))
    save_observations(obs, out_dir / "obs.json")
    with open(out_dir / "state.json", "w") as fh:
        json.dump(state_payload, fh)

    sol_csv = out_dir / "sol.csv"
    if kind == "finite":
        result = finite.solve(model, obs, substeps=int(substeps) if substeps else 1)
        write_finite_csv(sol_csv, result)
        summary = {
            "logC": result.solution.logC,
            "J_opt": result.J_opt,
            "route_equivalence_linf": result.route_equivalence_linf,
        }
    elif kind == "grid":
        if grid_n:
            model = DiffusionModel1D(
                a=model._specs["a"],
                sigma=model._specs["sigma"],
                h=model._specs["h"],
                nu0=model._specs["nu0"],
                x_min=model.x_min,
                x_max=model.x_max,
                n=int(grid_n),
            )
        result = grid.solve(model, obs, substeps=int(substeps) if substeps else None)
        write_grid_csv(sol_csv, result)
        summary = {
            "logC": result.solution.logC,
            "hjb_residual_max": result.hjb_residual_max,
            "route_equivalence_linf": result.route_equivalence_linf,
            "mass_drift": result.mass_drift,
        }
    else:
        sol = gaussian.solve_min_energy(model, obs)
        means, _ = oracles.kalman_rts(model, obs)
        write_lg_csv(sol_csv, sol)
        summary = {"J_opt": sol.J, "rts_mean_error": float(np.max(np.abs(sol.m - means)))}

    _write_summary(out_dir / "summary.json", summary)

    failed = []
    for name, bound in scenario.get("thresholds", {}).items():
        if name not in summary:
            raise MalformedInput(f"threshold {name!r} does not name a summary field of kind {kind!r}")
        if not summary[name] <= float(bound):
            failed.append((name, summary[name], bound))
    if failed:
        for name, value, bound in failed:
            print(f"verification failed: {name} = {value:.6g} > {bound:.6g}", file=sys.stderr)
        return 2
    return 0


def _cmd_run(args) -> int:
    return run_scenario(args.scenario, args.out_dir or Path(args.scenario).stem + "-out")


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualsmooth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a hidden path and observations from a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zero-noise", action="store_true")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=_cmd_simulate)

    for name, fn, extra in (
        ("smooth-finite", _cmd_smooth_finite, ("substeps",)),
        ("smooth-grid", _cmd_smooth_grid, ("substeps", "grid_n")),
        ("smooth-lg", _cmd_smooth_lg, ()),
    ):
        p = sub.add_parser(name, help=f"{name} --model m.json --obs z.json --out sol.csv")
        p.add_argument("--model", required=True)
        p.add_argument("--obs", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--summary", default=None)
        if "substeps" in extra:
            p.add_argument("--substeps", type=int, default=None)
        if "grid_n" in extra:
            p.add_argument("--grid-n", dest="grid_n", type=int, default=None)
        p.set_defaults(func=fn)

    p = sub.add_parser("verify", help="run the oracle-backed verification suite")
    p.add_argument("--threshold-file", default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("plot-data", help="flatten a solution CSV into long plot format")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot_data)

    p = sub.add_parser("run", help="execute a scenario file end to end")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=_cmd_run)
    return parser


def main(argv=None) -> int:
    try:
        _configure_logging()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (DualsmoothError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
