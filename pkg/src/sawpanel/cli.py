"""Command line interface: fit real panels or run simulation batches."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .dgp import DgpSpec, default_options, run_monte_carlo
from .errors import SawError
from .panel import ColumnSchema, load_panel
from .pipeline import PanelFit, PipelineOptions, fit_panel


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sawpanel",
        description="Structural-break estimation for balanced panels "
        "(structure adapted wavelets + segment refit).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a long-format CSV panel")
    fit.add_argument("--input", required=True, help="CSV file (unit,time,y,x1..xP[,z1..zQ])")
    fit.add_argument("--schema", help="JSON file mapping column roles")
    fit.add_argument("--instruments", choices=["self", "two-stage"], default="self")
    fit.add_argument("--time-effects", choices=["unit", "between"], default="unit")
    fit.add_argument("--variance-case", type=int, choices=[1, 2, 3, 4], default=4)
    fit.add_argument("--lambda", dest="lam", type=float, default=None,
                     help="override the universal threshold (>= 0)")
    fit.add_argument("--common-jumps", action="store_true",
                     help="restrict all regressors to the union of detected jumps")
    fit.add_argument("--out", default=".", help="output directory")
    fit.add_argument("--plot", action="store_true", help="write an SVG per regressor")

    sim = sub.add_parser("simulate", help="run a Monte Carlo batch with known truth")
    sim.add_argument("--dgp", type=int, choices=range(1, 7), required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--T", dest="t_periods", type=int, required=True)
    sim.add_argument("--reps", type=int, default=100)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--jumps", type=int, default=None,
                     help="jump count for single-regressor designs (default 3)")
    sim.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    sim.add_argument("--instruments", choices=["self", "two-stage"], default=None)
    sim.add_argument("--variance-case", type=int, choices=[1, 2, 3, 4], default=4)
    sim.add_argument("--out", default=".", help="output directory")
    return parser


def _json_ready(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_ready) + "\n")


def _write_fit_artifacts(result: PanelFit, outdir: Path, plot: bool) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    fit = result.saw_fit
    _write_json(
        outdir / "saw_fit.json",
        {
            "lambda": fit.lam,
            "kappa": fit.kappa,
            "v_hat": fit.v_hat,
            "t_diff": result.dp.t_diff,
            "t_orig_diff": result.dp.t_orig_diff,
            "width": result.dp.width,
            "gamma_hat": fit.gamma_hat,
            "gamma_raw": fit.gamma_raw,
        },
    )
    _write_json(outdir / "jumps.json", result.report.to_dict())
    _write_json(outdir / "post_saw.json", result.post.to_dict())

    rows = result.post.segment_table()
    tests = {(rec.regressor + 1, rec.index): rec for rec in result.post.tests}
    with (outdir / "report.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["regressor", "segment", "start", "end", "start_label", "end_label",
             "coef", "se", "z", "p_value"]
        )
        for row in rows:
            rec = tests.get((row["regressor"], row["segment"]))
            writer.writerow(
                [
                    row["regressor"], row["segment"], row["start"], row["end"],
                    row.get("start_label", row["start"]),
                    row.get("end_label", row["end"]),
                    f"{row['coef']:.8g}", f"{row['se']:.8g}",
                    f"{rec.z:.6g}" if rec else "",
                    f"{rec.p_value:.6g}" if rec else "",
                ]
            )
    if plot:
        _write_plots(result, outdir)


def _write_plots(result: PanelFit, outdir: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t_orig = result.panel.t
    path = result.post.beta_path()
    p_count = result.panel.n_regressors
    for p in range(p_count):
        fig, (left, right) = plt.subplots(1, 2, figsize=(10, 3.5), sharey=True)
        # SAW path: slope estimate for periods 2..T (real range of the padded grid)
        t_axis = np.arange(2, t_orig + 1)
        left.step(t_axis, result.saw_fit.gamma_hat[: t_orig - 1, p], where="mid")
        left.set_title(f"SAW path, regressor {p + 1}")
        left.set_xlabel("period")
        right.step(np.arange(1, t_orig + 1), path[:, p], where="mid", color="tab:red")
        for tau in result.report.locations[p]:
            right.axvline(tau + 0.5, color="grey", lw=0.8, ls=":")
        right.set_title("post-SAW segments")
        right.set_xlabel("period")
        fig.tight_layout()
        fig.savefig(outdir / f"fit_regressor_{p + 1}.svg")
        plt.close(fig)


def _cmd_fit(args) -> int:
    schema = None
    if args.schema:
        schema = ColumnSchema.from_dict(json.loads(Path(args.schema).read_text()))
    options = PipelineOptions(
        instruments=args.instruments.replace("-", "_"),
        time_effects=args.time_effects,
        variance_case=args.variance_case,
        lam=args.lam,
        common_jumps=args.common_jumps,
    )
    panel = load_panel(args.input, schema)
    result = fit_panel(panel, options)
    _write_fit_artifacts(result, Path(args.out), args.plot)
    for p in range(result.panel.n_regressors):
        locs = ", ".join(str(v) for v in result.report.locations[p]) or "none"
        print(f"regressor {p + 1}: {result.report.counts[p]} jump(s) at {locs}")
    return 0


def _cmd_simulate(args) -> int:
    spec = DgpSpec(dgp=args.dgp, n=args.n, t=args.t_periods, seed=args.seed, jumps=args.jumps)
    if args.instruments is None:
        options = default_options(spec)
        if args.variance_case != options.variance_case:
            options = PipelineOptions(
                instruments=options.instruments, variance_case=args.variance_case
            )
    else:
        options = PipelineOptions(
            instruments=args.instruments.replace("-", "_"), variance_case=args.variance_case
        )
    result = run_monte_carlo(spec, args.reps, options=options, threads=max(1, args.threads))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    row = result.table_row()
    with (outdir / "mc_table.csv").open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(row))
        writer.writeheader()
        writer.writerow(row)
    lines = [f"dgp={spec.dgp} T={spec.t} n={spec.n} reps={args.reps} failed={result.n_failed}"]
    for key, (mean, sd) in result.aggregates().items():
        lines.append(f"  {key:>12}: {mean:.4f} ({sd:.4f})")
    summary = "\n".join(lines) + "\n"
    (outdir / "mc_summary.txt").write_text(summary)
    _write_json(
        outdir / "mc_summary.json",
        {
            "spec": {"dgp": spec.dgp, "n": spec.n, "T": spec.t, "seed": spec.seed,
                     "reps": args.reps},
            "failed": result.n_failed,
            "aggregates": {k: {"mean": m, "sd": s} for k, (m, s) in result.aggregates().items()},
        },
    )
    print(summary, end="")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SAW_LOG", "WARNING").upper())
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "lam", None) is not None and args.lam < 0:
        parser.error("--lambda must be >= 0")
    try:
        if args.command == "fit":
            return _cmd_fit(args)
        return _cmd_simulate(args)
    except SawError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
