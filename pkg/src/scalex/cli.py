"""Command-line interface: ``scalex <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical
failure. Options may also come from ``--config FILE`` (``key = value`` lines
named after the long flags); explicit flags win. ``SCALEX_THREADS`` is the
fallback for ``--threads``.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import io
import json
import os
import sys
from dataclasses import replace
from typing import Sequence

import numpy as np

from scalex import approaches, curves, flops, frontier, synth
from scalex.data_model import (
    FrontierPoint,
    ModelShape,
    ParametricParams,
    fit_to_dict,
    fmt,
    load_final_points,
    load_fit,
    load_runs,
    save_final_points,
    save_fit,
    save_runs,
)
from scalex.errors import DataError, NumericalError
from scalex.fitting import DEFAULT_DELTA, default_grid, reduced_grid

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        hint = ""
        if "unrecognized arguments" in message or "invalid choice" in message:
            known = [s for a in self._actions for s in a.option_strings]
            for action in self._actions:
                if isinstance(action, argparse._SubParsersAction):
                    known += list(action.choices)
            words = message.split(":", 1)[-1].replace("'", " ").split()
            for w in words:
                close = difflib.get_close_matches(w.split("=")[0], known, n=1)
                if close:
                    hint = f" (did you mean {close[0]}?)"
                    break
        raise UsageError(f"{self.prog}: error: {message}{hint}")


# ------------------------------------------------------------------ output


def format_table(header: Sequence[str], rows: Sequence[Sequence], as_csv: bool = False) -> str:
    cells = [[c if isinstance(c, str) else _num(c, as_csv) for c in row] for row in rows]
    if as_csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(cells)
        return buf.getvalue()
    widths = [max(len(str(h)), *(len(r[i]) for r in cells)) if cells else len(str(h)) for i, h in enumerate(header)]
    lines = ["  ".join(str(h).rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(lines) + "\n"


def _num(x, as_csv: bool) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return fmt(x) if as_csv else f"{x:.6g}"


def flops_report(shape: ModelShape, tokens: float | None, n_params: float | None, as_csv: bool) -> str:
    br = flops.forward_flops(shape)
    rows = [(name, value) for name, value in br.rows()]
    if tokens is not None:
        rows.append((f"train_flops({tokens:g} tokens)", flops.train_flops(shape, tokens)))
    if n_params is not None:
        rows.append(("ratio_include_embeddings", flops.flop_ratio(shape, n_params, flops.INCLUDE_EMBEDDINGS)))
        rows.append(("ratio_exclude_embeddings", flops.flop_ratio(shape, n_params, flops.EXCLUDE_EMBEDDINGS)))
    return format_table(["term", "flops"], rows, as_csv)


def envelope_table(env: Sequence[FrontierPoint]) -> str:
    rows = [(p.flops, p.n_params, p.tokens, p.loss, p.run_id or "") for p in env]
    return format_table(["flops", "n_params", "tokens", "loss", "run_id"], rows, as_csv=True)


def prediction_table(preds: Sequence[frontier.Prediction], as_csv: bool) -> str:
    rows = [(p.flops, p.n_opt, p.d_opt, p.loss_hat, p.extrapolated) for p in preds]
    return format_table(["flops", "n_opt", "d_opt", "loss_hat", "extrapolated"], rows, as_csv)


def budget_rows_table(rows: Sequence[frontier.BudgetRow], as_csv: bool) -> str:
    body = [(r.n_params, r.flops, r.reference_units, r.tokens, r.tokens_independent, r.extrapolated) for r in rows]
    return format_table(
        ["n_params", "flops", "reference_units", "tokens_6nd", "tokens_independent", "extrapolated"], body, as_csv
    )


def bootstrap_table(summary: dict, as_csv: bool) -> str:
    rows = [(k, s.point, s.p10, s.p90, s.n_resamples, s.n_failed) for k, s in summary.items()]
    return format_table(["exponent", "point", "p10", "p90", "n_resamples", "n_failed"], rows, as_csv)


# ------------------------------------------------------------------ parser


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _segment(text: str) -> tuple[int, int]:
    try:
        k, m = (int(t) for t in text.split("/"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected K/M, e.g. 1/3, got {text!r}") from None
    return k, m


def _add_shape(p):
    g = p.add_argument_group("model shape")
    g.add_argument("--layers", type=int, required=True)
    g.add_argument("--dmodel", type=int, required=True)
    g.add_argument("--ffw", type=int, required=True)
    g.add_argument("--heads", type=int, required=True)
    g.add_argument("--kv", type=int, required=True, help="per-head key/value size")
    g.add_argument("--seq", type=int, default=2048)
    g.add_argument("--vocab", type=int, default=32000)


def _add_fit_options(p, grid_default: str):
    p.add_argument("--n-grid", type=int, default=curves.DEFAULT_N_GRID, help="approach 1: envelope grid size")
    p.add_argument("--window", type=int, default=curves.DEFAULT_WINDOW, help="approach 1: smoothing window (1 = off)")
    p.add_argument(
        "--keep-boundary-sizes", action="store_true", help="approach 1: keep envelope points won by the extreme sizes"
    )
    p.add_argument("--rtol", type=float, default=approaches.BUDGET_RTOL, help="approach 2: budget grouping tolerance")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="approach 3: Huber delta")
    p.add_argument("--grid", choices=["full", "reduced"], default=grid_default, help="approach 3: initialisation grid")


def _add_common(p):
    p.add_argument("--config", help="key=value file supplying defaults for any flag")
    p.add_argument("--threads", type=int, default=None, help="parallelism cap (env SCALEX_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scalex", description="Compute-optimal scaling estimates from loss-curve data.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("flops", help="FLOPs breakdown of a transformer shape")
    _add_shape(p)
    p.add_argument("--tokens", type=float, help="also report training FLOPs for this many tokens")
    p.add_argument("--n-params", type=float, help="also report the ratio to 6ND for this parameter count")
    p.add_argument("--csv", action="store_true")
    _add_common(p)

    p = sub.add_parser("params", help="parameter count of a transformer shape")
    _add_shape(p)
    p.add_argument("--embeddings", choices=["tied", "untied"], default="tied")
    _add_common(p)

    def runs_input(p):
        p.add_argument("--input", required=True, help="runs CSV or JSON")
        p.add_argument("--format", choices=["csv", "json"])
        p.add_argument("--n-grid", type=int, default=curves.DEFAULT_N_GRID)
        p.add_argument("--window", type=int, default=curves.DEFAULT_WINDOW, help="smoothing window (1 = off)")

    p = sub.add_parser("envelope", help="extract the loss-minimal envelope from runs")
    runs_input(p)
    p.add_argument("--out", help="CSV path (default stdout)")
    _add_common(p)

    p = sub.add_parser("fit", help="fit a scaling frontier")
    p.add_argument("--approach", choices=["1", "2", "3"], required=True)
    p.add_argument("--input", required=True, help="runs file (approach 1) or final-points CSV (2, 3)")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--out", help="fit JSON path (default stdout)")
    _add_fit_options(p, grid_default="full")
    p.add_argument("--frontier-segment", type=_segment, help="approach 1: fit only slice K of M, e.g. 3/3")
    _add_common(p)

    p = sub.add_parser("predict", help="optimal allocation for a budget or model size")
    p.add_argument("--fit", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--flops", type=_floats, help="comma-separated budgets")
    g.add_argument("--params", type=_floats, help="comma-separated model sizes")
    p.add_argument("--csv", action="store_true")
    _add_common(p)

    p = sub.add_parser("table", help="compute-optimal budget table for model sizes")
    p.add_argument("--fit", required=True)
    p.add_argument("--sizes", type=_floats, required=True, help="comma-separated parameter counts")
    p.add_argument("--csv", action="store_true")
    _add_common(p)

    p = sub.add_parser("bootstrap", help="percentile intervals for the exponents")
    p.add_argument("--approach", choices=["1", "2", "3"], required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--n", type=int, default=100, help="number of resamples")
    p.add_argument("--frac", type=float, default=0.8, help="fraction of records per resample")
    p.add_argument("--seed", type=int, required=True)
    _add_fit_options(p, grid_default="reduced")
    p.add_argument("--out", help="write the full-data fit with intervals as JSON")
    p.add_argument("--csv", action="store_true")
    _add_common(p)

    p = sub.add_parser("synth", help="generate synthetic runs or isoFLOP final points")
    p.add_argument("--kind", choices=["runs", "isoflop"], required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, default=0.0, help="log-normal loss noise")
    for name, default in REFERENCE_DEFAULTS.items():
        p.add_argument(f"--{name}", type=float, default=default)
    p.add_argument("--sizes", type=_floats, help="runs: model sizes (default 15 log-spaced in [1e7, 1e10])")
    p.add_argument("--n-points", type=int, default=100)
    p.add_argument("--penalty", type=float, default=0.01, help="runs: schedule-mismatch penalty")
    p.add_argument("--budgets", type=_floats, help="isoflop: budgets (default 9 log-spaced in [6e18, 3e21])")
    p.add_argument("--sizes-per-budget", type=int, default=7)
    p.add_argument("--span", type=float, default=synth.DEFAULT_SPAN_DECADES, help="isoflop: decades of N per budget")
    _add_common(p)

    p = sub.add_parser("plotdata", help="per-run curves and envelope as flops,loss,run_id CSV")
    runs_input(p)
    p.add_argument("--out", required=True)
    _add_common(p)
    return parser


REFERENCE_DEFAULTS = {
    "E": synth.REFERENCE_PARAMS.E,
    "A": synth.REFERENCE_PARAMS.A,
    "B": synth.REFERENCE_PARAMS.B,
    "alpha": synth.REFERENCE_PARAMS.alpha,
    "beta": synth.REFERENCE_PARAMS.beta,
}


def read_config(path) -> dict[str, str]:
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise DataError(f"{path}: line {i}: expected key=value")
                key, value = (s.strip() for s in line.split("=", 1))
                out[key.lstrip("-").replace("-", "_")] = value
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    return out


def _config_path(argv: list[str]) -> str | None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    return known.config


def _check_flags(subparser: argparse.ArgumentParser, argv: list[str]) -> None:
    # report misspelt flags before argparse complains about missing required ones
    known = [o for a in subparser._actions for o in a.option_strings]
    for word in argv:
        flag = word.split("=", 1)[0]
        if flag.startswith("--") and flag != "--" and flag not in known:
            close = difflib.get_close_matches(flag, known, n=1)
            hint = f" (did you mean {close[0]}?)" if close else ""
            raise UsageError(f"{subparser.prog}: error: unrecognized argument {flag}{hint}")


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv`` with values from ``--config`` installed as subcommand defaults."""
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((w for w in argv if w in subparsers.choices), None)
    if command is None:
        return parser.parse_args(argv)
    subparser = subparsers.choices[command]
    _check_flags(subparser, argv)
    path = _config_path(argv)
    if not path:
        return parser.parse_args(argv)
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, value in read_config(path).items():
        if key not in actions:
            close = difflib.get_close_matches(key, list(actions), n=1)
            raise UsageError(f"unknown config key {key!r}" + (f" (did you mean {close[0]}?)" if close else ""))
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = value
        action.required = False
    for group in subparser._mutually_exclusive_groups:
        if any(a.dest in defaults for a in group._group_actions):
            group.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("SCALEX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"SCALEX_THREADS must be an integer, got {env!r}") from None
    return 1


def _shape(args) -> ModelShape:
    return ModelShape(args.layers, args.dmodel, args.ffw, args.kv, args.heads, args.vocab, args.seq)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands


def _fit_kwargs(args, threads: int) -> dict:
    if args.approach == "1":
        return {
            "n_grid": args.n_grid,
            "smooth_window": args.window,
            "segment": getattr(args, "frontier_segment", None),
            "drop_boundary_sizes": not args.keep_boundary_sizes,
        }
    if args.approach == "2":
        return {"rtol": args.rtol}
    return {"grid": default_grid() if args.grid == "full" else reduced_grid(), "delta": args.delta, "threads": threads}


def _load_data(args):
    if args.approach == "1":
        return load_runs(args.input, args.format)
    return load_final_points(args.input)


def run_command(args) -> None:
    threads = _threads(args)
    cmd = args.command
    if cmd == "flops":
        sys.stdout.write(flops_report(_shape(args), args.tokens, args.n_params, args.csv))
    elif cmd == "params":
        sys.stdout.write(f"{flops.count_params(_shape(args), args.embeddings)}\n")
    elif cmd == "envelope":
        runs = [curves.smooth_run(r, args.window) for r in load_runs(args.input, args.format)]
        _emit(envelope_table(curves.extract_envelope(runs, n_grid=args.n_grid)), args.out)
    elif cmd == "plotdata":
        runs = [curves.smooth_run(r, args.window) for r in load_runs(args.input, args.format)]
        curves.write_plotdata(args.out, runs, curves.extract_envelope(runs, n_grid=args.n_grid))
    elif cmd == "fit":
        fit = approaches.fit_approach(args.approach, _load_data(args), **_fit_kwargs(args, threads))
        if args.out:
            save_fit(fit, args.out)
        else:
            sys.stdout.write(json.dumps(fit_to_dict(fit), indent=2) + "\n")
    elif cmd == "predict":
        fit = load_fit(args.fit)
        budgets = args.flops if args.flops is not None else [frontier.flops_for_size(fit, n) for n in args.params]
        sys.stdout.write(prediction_table([frontier.predict_opt(fit, c) for c in budgets], args.csv))
    elif cmd == "table":
        fit = load_fit(args.fit)
        sys.stdout.write(budget_rows_table(frontier.budget_table(fit, args.sizes), args.csv))
    elif cmd == "bootstrap":
        data = _load_data(args)
        kwargs = _fit_kwargs(args, 1)
        summary = frontier.bootstrap(data, args.approach, args.n, args.frac, args.seed, threads=threads, **kwargs)
        sys.stdout.write(bootstrap_table(summary, args.csv))
        if args.out:
            fit = approaches.fit_approach(args.approach, data, **kwargs)
            save_fit(replace(fit, intervals=summary), args.out)
    elif cmd == "synth":
        params = ParametricParams(args.E, args.A, args.B, args.alpha, args.beta)
        if args.kind == "runs":
            sizes = args.sizes or np.geomspace(1e7, 1e10, 15)
            runs = synth.gen_envelope_suite(
                params, sizes, n_points=args.n_points, cycle_mismatch_penalty=args.penalty,
                rng_seed=args.seed, log_noise_sigma=args.sigma,
            )
            save_runs(runs, args.out)
        else:
            budgets = args.budgets or np.geomspace(6e18, 3e21, 9)
            pts = synth.gen_isoflop_suite(
                params, budgets, args.sizes_per_budget, rng_seed=args.seed,
                log_noise_sigma=args.sigma, span_decades=args.span,
            )
            save_final_points(pts, args.out)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        run_command(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head)
        sys.stderr.close()
        return EXIT_OK
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"scalex: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError) as exc:
        print(f"scalex: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
