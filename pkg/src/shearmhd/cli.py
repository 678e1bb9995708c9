"""Command-line front end.

Exit codes: 0 success, 2 configuration error (including an instability
window the lattice cannot resolve), 3 numerical failure, 4 failed check.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, config_to_dict, parse_config
from .diagnostics import write_reports_csv
from .experiments import (run_inflation, run_linear_decay, run_nonlinear, run_smalldata,
                          run_symbol_check, sample_indices, smalldata_fields,
                          sweep_threshold)
from .linear_ode import StiffnessError, WindowOffGridError
from .nonlinear_solver import (BlowUpError, CFLCollapseError, SimState, load_checkpoint,
                               save_checkpoint)
from .svg import write_line_plot

log = logging.getLogger("shearmhd")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ASSERTION = 0, 2, 3, 4

SUBCOMMANDS = {
    "linear-mode": ("linear-decay", ["linear-decay"], "per-mode linear decay of the resistive system"),
    "nonlinear": ("nonlinear", [], "nonlinear run from random data or a checkpoint"),
    "inflation": ("inflation", [], "linear norm inflation without resistivity"),
    "small-data": ("small-data", [], "small-data stability verdict"),
    "threshold-sweep": ("threshold-sweep", ["sweep"], "empirical stability threshold sweep"),
    "symbol-check": ("symbol-check", [], "multiplier and symbol bound checks"),
}


class NumericalFailure(Exception):
    def __init__(self, message, summary=None, files=None):
        super().__init__(message)
        self.summary = summary or {}
        self.files = files or []


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shearmhd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, aliases, helptext) in SUBCOMMANDS.items():
        p = sub.add_parser(name, aliases=aliases, help=helptext)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides experiment.seed)")
        p.add_argument("--threads", type=int, help="worker threads (overrides experiment.threads)")
        p.add_argument("--quiet", action="store_true", help="suppress progress messages")
        p.set_defaults(experiment=SUBCOMMANDS[name][0])
    return parser


def load_config(args):
    raw = {}
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {args.config}: {exc.strerror}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
    raw = dict(raw)
    nested = raw.get("experiment")
    if isinstance(nested, dict):
        nested = dict(nested)
        nested.pop("name", None)
        raw["experiment"] = nested
        raw["experiment.name"] = args.experiment
    else:
        raw["experiment"] = args.experiment
        raw.pop("experiment.name", None)
    for flag, key in (("seed", "experiment.seed"), ("threads", "experiment.threads")):
        value = getattr(args, flag)
        if value is not None:
            raw.pop(key, None)
            if isinstance(raw.get("experiment"), dict):
                raw["experiment"].pop(key.split(".")[1], None)
            raw[key] = value
    if args.out is not None:
        raw.pop("output.dir", None)
        if isinstance(raw.get("output"), dict):
            raw["output"] = {k: v for k, v in raw["output"].items() if k != "dir"}
        raw["output.dir"] = str(args.out)
    return parse_config(json.dumps(raw))


def _plot_reports(path, reports, title, log_y):
    t = [r.t for r in reports]
    series = {name: [getattr(r, name) for r in reports]
              for name in ("hn_p1", "hn_p2", "lf_p1", "lf_p2", "avg_b_norm")}
    write_line_plot(path, t, series, title=title, ylabel="norm", log_y=log_y)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_linear(cfg, out):
    res = run_linear_decay(cfg)
    write_reports_csv(out / "report.csv", res.reports)
    _plot_reports(out / "norms.svg", res.reports, "linear decay", cfg.log_scale)
    summary = {"n_modes": res.n_modes, "n_steps": res.n_steps, "sup_ratio": res.sup_ratio,
               "decay_bound": res.decay_bound, "decay_rate": res.decay_rate,
               "min_rate": res.min_rate, "fit_window": list(res.fit_window),
               "bounded": res.bounded, "decays": res.decays}
    checks = res.bounded and (res.decays or cfg.params.mu == 0.0)
    return summary, ["report.csv", "norms.svg"], checks


def run_infl(cfg, out):
    res = run_inflation(cfg)
    env = res.envelope
    write_reports_csv(out / "report.csv", res.reports)
    _plot_reports(out / "norms.svg", res.reports, "norm inflation", cfg.log_scale)
    rows = [(repr(float(t)), repr(float(a)), repr(float(b)), repr(env.lower_rate * t),
             repr(env.lower_rate_hn1 * t), repr(1.0 + t * t))
            for t, a, b in zip(env.t, env.norm_hn / env.p_in_norm, env.norm_hn1 / env.p_in_norm)]
    _write_rows(out / "envelope.csv",
                ["t", "ratio_hn", "ratio_hn1", "lower_hn", "lower_hn1", "upper_hn"], rows)
    summary = {"n_modes": res.n_modes, "n_steps": res.n_steps, "t_start": env.t_start,
               "final_ratio": float(env.ratio[-1]), "lower_rate": env.lower_rate,
               "lower_rate_hn1": env.lower_rate_hn1, "growth_rate": env.growth_rate,
               "growth_rate_hn1": env.growth_rate_hn1, "lower_ok": env.lower_ok,
               "upper_ok": env.upper_ok, "lower_hn1_ok": env.lower_hn1_ok, **env.details}
    return summary, ["report.csv", "norms.svg", "envelope.csv"], env.success


def run_small(cfg, out):
    res = run_smalldata(cfg)
    reports = [res.reports[i] for i in sample_indices(res.times, cfg.sample_interval)]
    write_reports_csv(out / "report.csv", reports)
    _plot_reports(out / "norms.svg", reports, "small data", cfg.log_scale)
    summary = {"eps": res.eps, "mu": res.mu, "stable": res.stable, "criterion": res.criterion,
               "sup_norm_ratio": res.sup_norm_ratio, "c_stab": cfg.c_stab,
               "t_reached": res.t_reached, "n_steps": res.n_steps,
               "integrals": res.integrals, "scaled_integrals": res.scaled_integrals,
               "average_row_factor_max_deviation": res.avg_row_factor_max_dev,
               "solver_error": res.error}
    return summary, ["report.csv", "norms.svg"], res.stable


def run_nl(cfg, out):
    if cfg.resume:
        state = load_checkpoint(cfg.resume)
        if state.t >= cfg.t_end:
            raise ConfigError("output.resume", f"checkpoint time {state.t} is past t_end")
    else:
        c1, c2 = smalldata_fields(cfg.grid, cfg.params, cfg.amplitude, cfg.seed)
        state = SimState.from_arrays(c1, c2, 0.0, cfg.params, cfg.grid)
    final, times, hn, reports, _, error = run_nonlinear(state, cfg)
    kept = [reports[i] for i in sample_indices(times, cfg.sample_interval)]
    write_reports_csv(out / "report.csv", kept)
    _plot_reports(out / "norms.svg", kept, "nonlinear run", cfg.log_scale)
    files = ["report.csv", "norms.svg"]
    ckpt = Path(cfg.checkpoint) if cfg.checkpoint else out / "final.cmhd"
    save_checkpoint(ckpt, final)
    files.append(str(ckpt.name if ckpt.parent == out else ckpt))
    summary = {"t_start": float(times[0]), "t_reached": float(times[-1]),
               "n_steps": int(times.size - 1), "hn_initial": float(hn[0]),
               "hn_max": float(np.max(hn)), "hn_final": float(hn[-1]), "solver_error": error}
    if error:
        raise NumericalFailure(error, summary, files)
    return summary, files, True


def run_sweep(cfg, out):
    res = sweep_threshold(cfg)
    rows = [(repr(v.mu), repr(v.eps), "stable" if v.stable else f"unstable({v.criterion})",
             repr(v.sup_norm_ratio), repr(v.t_end)) for v in res.verdicts]
    _write_rows(out / "sweep.csv", ["mu", "eps", "verdict", "sup_norm_ratio", "t_end"], rows)
    (out / "summary.json").write_text(json.dumps(_jsonable(
        {**res.summary(), "mu_values": res.mu_values, "eps_star": res.eps_star,
         "conclusive": res.conclusive, "brackets": res.brackets}), indent=2))
    ok = [i for i, c in enumerate(res.conclusive) if c]
    if ok:
        write_line_plot(out / "norms.svg", [res.mu_values[i] for i in ok],
                        {"eps_star": [res.eps_star[i] for i in ok]},
                        title="threshold sweep", xlabel="mu", ylabel="eps*", log_y=True)
    summary = {**res.summary(), "n_probes": len(res.verdicts)}
    files = ["sweep.csv", "summary.json"] + (["norms.svg"] if ok else [])
    return summary, files, True


def run_symbols(cfg, out):
    res = run_symbol_check(cfg)
    rows = [(repr(t), repr(v), k, repr(xi))
            for t, v, (k, xi) in zip(res.times, res.damping_sup, res.damping_argmax)]
    _write_rows(out / "symbols.csv", ["t", "t_times_sup", "k_argmax", "xi_argmax"], rows)
    summary = _jsonable(dataclasses.asdict(res))
    summary["success"] = res.success
    return summary, ["symbols.csv"], res.success


RUNNERS = {
    "linear-decay": run_linear,
    "inflation": run_infl,
    "small-data": run_small,
    "nonlinear": run_nl,
    "threshold-sweep": run_sweep,
    "symbol-check": run_symbols,
}


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat()


def dispatch(cfg, out: Path, config_path=None):
    """Run ``cfg``, write outputs into ``out`` and finish with ``manifest.json``."""
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"tool": "shearmhd", "version": __version__,
                "config_path": str(config_path) if config_path else None,
                "config": config_to_dict(cfg), "output_dir": str(out),
                "experiment": cfg.experiment, "start_time": _now()}
    code, category, summary, files, message = EXIT_OK, "ok", {}, [], ""
    try:
        summary, files, ok = RUNNERS[cfg.experiment](cfg, out)
        if not ok:
            code, category, message = EXIT_ASSERTION, "assertion", "experiment checks failed"
    except WindowOffGridError as exc:
        code, category, message = EXIT_CONFIG, "config-infeasible", str(exc)
        summary = {"required_len_y": exc.required_len_y, "required_n_ky": exc.required_n_ky}
    except ConfigError as exc:
        code, category, message = EXIT_CONFIG, "config", str(exc)
    except NumericalFailure as exc:
        code, category, message = EXIT_NUMERICAL, "numerical", str(exc)
        summary, files = exc.summary, exc.files
    except (StiffnessError, CFLCollapseError, BlowUpError, FloatingPointError,
            OverflowError) as exc:
        code, category, message = EXIT_NUMERICAL, "numerical", str(exc)
    manifest.update({"end_time": _now(), "exit_code": code, "category": category,
                     "message": message, "files": files, "results": _jsonable(summary)})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return code, manifest


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    out = Path(cfg.output_dir)
    log.info("running %s -> %s", cfg.experiment, out)
    code, manifest = dispatch(cfg, out, args.config)
    if code == EXIT_OK:
        log.info("done: %s", json.dumps(manifest["results"], default=str)[:400])
    else:
        log.error("%s: %s", manifest["category"], manifest["message"])
    return code


if __name__ == "__main__":
    sys.exit(main())
