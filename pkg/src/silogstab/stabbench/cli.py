"""``stabbench`` command line.

Exit codes: 0 success, 2 configuration error, 3 failed check,
4 NaN observed while ``--halt-on-nan --strict`` is set.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .. import fp32lab
from ..headnet import InitScheme
from ..losskit import LossConfig
from ..optimkit import LrSchedule
from .audit import audit_config
from .gradcheck import run_gradient_check
from .report import _json_safe, emit_report
from .runners import (
    DEFAULT_SIGMA_GRID,
    DEFAULT_EPS_GRID,
    ConfigError,
    SqrtDivergenceConfig,
    SweepConfig,
    VarianceNanConfig,
    run_sqrt_divergence,
    run_sweep,
    run_variance_nan_table,
)

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_NAN = 0, 2, 3, 4

SQRT_PRESETS = {
    # loss choice and learning-rate schedule per preset
    "plain": (False, LrSchedule.constant(1e-3)),
    "sqrt": (True, LrSchedule.constant(1e-3)),
    "sqrt-step": (True, LrSchedule.step(1e-3, 0.1, 100)),
}


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _formats(args) -> list[str]:
    fmts = []
    for item in args.format or ["csv", "json"]:
        fmts.extend(x for x in item.split(",") if x)
    bad = set(fmts) - {"csv", "json", "svg"}
    if bad:
        raise ConfigError(f"unknown format(s): {sorted(bad)}")
    return fmts


def _emit(report, args):
    if args.out:
        for p in emit_report(report, args.out, _formats(args)):
            print(f"wrote {p}", file=sys.stderr)


def _print_json(obj):
    print(json.dumps(_json_safe(obj), indent=2, sort_keys=True))


def cmd_probe_floats(args) -> int:
    fi = fp32lab.finfo()
    probes = {
        "finfo": str(fi),
        "eps_times_tiny": float(fi.eps * fi.tiny),
        "smallest_subnormal": float(fi.smallest_subnormal),
        "parse": {t: float(fp32lab.parse_decimal_to_f32(t)) for t in ("7.1e-46", "7.0e-46", "1e-24", "1e-40")},
        "sigmoid": {str(z): float(fp32lab.sigmoid32(z)) for z in (-88, -89, 0)},
        "log_of_sigmoid_-89": float(fp32lab.log32_shifted(fp32lab.sigmoid32(-89))),
    }
    _print_json(probes)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "probe-floats.json").write_text(json.dumps(_json_safe(probes), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_sim_sqrt(args) -> int:
    data = _load_config(args.config)
    sqrt, sched = SQRT_PRESETS[args.preset]
    data.setdefault("loss", LossConfig(sqrt_wrap=sqrt).to_dict())
    data.setdefault("schedule", sched.to_dict())
    cfg = SqrtDivergenceConfig.from_dict(data)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.halt_on_nan:
        cfg = replace(cfg, halt_on_nan=True)
    if args.resample_per_iter:
        cfg = replace(cfg, resample_per_iter=True)
    report = run_sqrt_divergence(cfg)
    _print_json({"manifest": report.manifest, "summary": report.summary})
    _emit(report, args)
    if args.halt_on_nan and args.strict and report.nan_events:
        return EXIT_NAN
    return EXIT_OK


def _sweep(args, runner: str, defaults: dict) -> int:
    data = {**defaults, **_load_config(args.config)}
    if args.full_scale:
        data["replicas"] = 1000
    if args.replicas is not None:
        data["replicas"] = args.replicas
    if args.seed is not None:
        data["seed"] = args.seed
    if args.workers is not None:
        data["workers"] = args.workers
    cfg = SweepConfig.from_dict(data)
    report = run_sweep(cfg, runner=runner)
    _print_json(report.to_json())
    _emit(report, args)
    if args.halt_on_nan and args.strict and any(report.column("nan_count")):
        return EXIT_NAN
    return EXIT_OK


def cmd_sim_gradscale(args) -> int:
    return _sweep(args, "sim-gradscale", {"sigma_grid": list(DEFAULT_SIGMA_GRID), "eps_grid": [0.0]})


def cmd_sim_eps(args) -> int:
    return _sweep(args, "sim-eps", {"sigma_grid": list(DEFAULT_SIGMA_GRID), "eps_grid": list(DEFAULT_EPS_GRID) + ["7.0e-46"]})


def cmd_sim_variance_nan(args) -> int:
    data = _load_config(args.config)
    if args.replicas is not None:
        data["trials"] = args.replicas
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = VarianceNanConfig.from_dict(data)
    report = run_variance_nan_table(cfg)
    _print_json(report.to_json())
    _emit(report, args)
    if args.halt_on_nan and args.strict and any(report.column("nan_biased")):
        return EXIT_NAN
    return EXIT_OK


def cmd_grad_check(args) -> int:
    data = _load_config(args.config)
    trials = args.replicas if args.replicas is not None else data.get("trials", 50)
    seed = args.seed if args.seed is not None else data.get("seed", 0)
    if trials < 1:
        raise ConfigError("grad-check needs at least one trial")
    res = run_gradient_check(trials=trials, seed=seed, tolerance=data.get("tolerance", 1e-4))
    _print_json(res.to_dict())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "grad-check.json").write_text(json.dumps(_json_safe(res.to_dict()), indent=2) + "\n")
    return EXIT_OK if res.passed else EXIT_CHECK


def cmd_audit(args) -> int:
    data = _load_config(args.config)
    loss = LossConfig.from_dict(data.get("loss", {}))
    init = InitScheme.from_dict(data.get("init", {"kind": "normal", "sigma_w": 0.5}))
    findings = audit_config(loss, init, data.get("phase", "late"), data.get("n_in", 128), data.get("k", 3))
    _print_json({"findings": [f.to_dict() for f in findings]})
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "audit.json").write_text(json.dumps([f.to_dict() for f in findings], indent=2) + "\n")
    if args.strict and any(f.severity == "fail" for f in findings):
        return EXIT_CHECK
    return EXIT_OK


COMMANDS = {
    "probe-floats": (cmd_probe_floats, "print binary32 limits and the sigmoid/log boundary values"),
    "sim-sqrt": (cmd_sim_sqrt, "train the sigmoid head and trace loss / NaN events"),
    "sim-gradscale": (cmd_sim_gradscale, "gradient variance and NaN fraction versus sigma_w"),
    "sim-eps": (cmd_sim_eps, "gradient-scale sweep over epsilon and sigma_w"),
    "sim-variance-nan": (cmd_sim_variance_nan, "NaN counts of the var-style loss versus valid-pixel rate"),
    "grad-check": (cmd_grad_check, "finite-difference check of the head gradients"),
    "audit": (cmd_audit, "check a loss/init configuration against the stability guidelines"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file mirroring the runner's config fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--replicas", type=int, help="replicas (sweeps) or trials (variance-nan, grad-check)")
    common.add_argument("--format", action="append", help="csv, json, svg; repeat or comma-separate")
    common.add_argument("--halt-on-nan", action="store_true")
    common.add_argument("--strict", action="store_true", help="turn NaNs / failed findings into a nonzero exit")
    common.add_argument("--workers", type=int, help="parallel replica workers")
    common.add_argument("--full-scale", action="store_true", help="use 1000 replicas")
    common.add_argument("--resample-per-iter", action="store_true", help="draw a fresh batch every iteration")

    parser = argparse.ArgumentParser(prog="stabbench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (fn, help_) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_)
        if name == "sim-sqrt":
            p.add_argument("--preset", choices=sorted(SQRT_PRESETS), default="plain")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"stabbench: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
