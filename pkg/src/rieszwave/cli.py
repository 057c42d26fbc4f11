"""Command-line front end.

    rieszwave presets
    rieszwave study    --preset paper_h05_estimator --out results
    rieszwave simulate --config run.cfg --replicate 3
    rieszwave noise | qvar | estimate  (same flags)

Config files are flat ``key = value`` lists; ``#`` starts a comment and list
values are comma separated.  Keys and defaults:

    study          (required) noise_validate | linear_qv | qv_convergence |
                   remainder_rate | estimator | holder
    hurst          (required) in [0.5, 1)
    f_kind         one_plus_sin      (constant | affine | one_plus_sin)
    f_args         empty             (c for constant, a,b for affine)
    f_theta        1.0
    n_sim          128
    n_obs_levels   empty
    eps_levels     empty
    replicates     100
    seed           0
    backend        exact             (exact | aggregate | aggregate:r)
    constant_mode  derived_normalization  (or paper_lemma)

Exit codes: 0 success, 1 configuration or file problem, 2 numerical failure.
Output goes to --out, else $RIESZWAVE_OUT, else ./results.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .experiments import PRESETS, ConfigError, ExperimentConfig, Study, StudyReport, run_study
from .kernels import ConstantMode
from .noise import DiamondLatticeSpec, NoiseError, RngStream, sample_diamonds
from .qvar import DegenerateDiffusion, estimate_theta, qvar_report
from .wave_sim import DiffusionKind, DiffusionSpec, NumericalBlowup, march, restrict, simulate_pair

OUT_ENV = "RIESZWAVE_OUT"

DEFAULTS = {
    "f_kind": "one_plus_sin",
    "f_args": "",
    "f_theta": "1.0",
    "n_sim": "128",
    "n_obs_levels": "",
    "eps_levels": "",
    "replicates": "100",
    "seed": "0",
    "backend": "exact",
    "constant_mode": "derived_normalization",
}
KEYS = ("study", "hurst") + tuple(DEFAULTS)


class ExistsError(FileExistsError):
    pass


def _ints(text: str) -> List[int]:
    text = text.strip().strip("[]")
    return [int(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _floats(text: str) -> List[float]:
    text = text.strip().strip("[]")
    return [float(t) for t in text.split(",") if t.strip()]


def config_from_mapping(raw: Dict[str, str]) -> ExperimentConfig:
    for key in raw:
        if key not in KEYS:
            raise ConfigError("unknown key", key)
    for key in ("study", "hurst"):
        if key not in raw:
            raise ConfigError("missing required key", key)
    vals = {**DEFAULTS, **raw}

    def conv(key, fn):
        try:
            return fn(vals[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"cannot parse {vals[key]!r} ({exc})", key) from None

    study = conv("study", lambda s: Study(s.strip()))
    hurst = conv("hurst", float)
    try:
        F = DiffusionSpec(DiffusionKind(vals["f_kind"].strip()), conv("f_args", _floats),
                          conv("f_theta", float))
    except ValueError as exc:
        raise ConfigError(str(exc), "f_kind") from None
    mode = conv("constant_mode", ConstantMode.parse)
    return ExperimentConfig(study, hurst, F, conv("n_sim", int), conv("n_obs_levels", _ints),
                            conv("eps_levels", _ints), conv("replicates", int), conv("seed", int),
                            vals["backend"].strip(), mode)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}", "config")
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key", key)
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key", key)
        raw[key] = value.strip()
    return config_from_mapping(raw)


# ---------------------------------------------------------------------------
# Artifact writing
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _header(config: ExperimentConfig) -> str:
    return (f"# artifact_version={__version__} "
            f"config={json.dumps(config.to_dict(), sort_keys=True, separators=(',', ':'))}")


def _csv(config: ExperimentConfig, columns: Sequence[str], rows) -> str:
    lines = [_header(config), ",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def report_artifacts(report: StudyReport, stem: str) -> Dict[str, str]:
    cols = ("level", "mean", "sd", "mc_se", "l1_err", "l2_err")
    out = {f"{stem}.json": report.to_json(),
           f"{stem}_levels.csv": _csv(report.config, cols,
                                      [[row[c] for c in cols] for row in report.levels])}
    for name in sorted(report.plots):
        columns, rows = report.plots[name]
        out[f"{stem}_{name}.csv"] = _csv(report.config, columns, rows)
    return out


def write_artifacts(outdir: Path, files: Dict[str, str], overwrite: bool) -> List[Path]:
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [outdir / name for name in files]
    clash = [p for p in paths if p.exists()]
    if clash and not overwrite:
        raise ExistsError(f"{clash[0]} exists (pass --overwrite to replace)")
    for p, text in zip(paths, files.values()):
        with open(p, "w", newline="\n") as fh:
            fh.write(text)
    return paths


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _resolve(args) -> tuple:
    if args.preset and args.config:
        raise ConfigError("give either --preset or --config, not both", "config")
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}", "preset")
        config, stem = PRESETS[args.preset], args.preset
    elif args.config:
        config, stem = parse_config(args.config), Path(args.config).stem
    else:
        raise ConfigError("one of --preset or --config is required", "config")
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "replicates", None) is not None:
        config = replace(config, replicates=args.replicates)
    return config, stem


def _noise(config: ExperimentConfig, rep: int):
    backend = "exact" if config.backend == "exact" else "aggregate"
    return sample_diamonds(DiamondLatticeSpec(config.n_sim), config.hurst,
                           RngStream(config.seed, rep), backend, config.refinement or 32)


def _dumped(config: ExperimentConfig, writer) -> str:
    """Text a path-based CSV writer produces, behind the config header."""
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "x.csv"
        writer(p)
        return _header(config) + "\n" + p.read_text()


def cmd_study(args, config, stem):
    report = run_study(config, workers=args.workers)
    for row in report.levels:
        print(f"{row['level']}: mean={row['mean']:.6g} sd={row['sd']:.3g} "
              f"mc_se={row['mc_se']:.3g} l1={row['l1_err']:.4g} l2={row['l2_err']:.4g}")
    for name, fit in sorted(report.rate_fits.items()):
        slope = fit.get("slope")
        s = "undefined" if slope is None else f"{slope:.4f}"
        print(f"fit {name}: slope={s} target={fit.get('target')} pass={fit.get('pass')}")
    return report_artifacts(report, stem)


def cmd_noise(args, config, stem):
    field = _noise(config, args.replicate)
    print(f"noise: {config.n_sim} x {config.n_sim} lattice, H={config.hurst.h}, "
          f"replicate {args.replicate}")
    return {f"{stem}_noise_r{args.replicate}.csv": _dumped(config, field.to_csv)}


def cmd_simulate(args, config, stem):
    v, V = simulate_pair(_noise(config, args.replicate), config.diffusion)
    print(f"simulate: v({config.n_sim},{config.n_sim})={v(config.n_sim, config.n_sim)!r} "
          f"V({config.n_sim},{config.n_sim})={V(config.n_sim, config.n_sim)!r}")
    return {f"{stem}_v_r{args.replicate}.csv": _dumped(config, v.to_csv),
            f"{stem}_V_r{args.replicate}.csv": _dumped(config, V.to_csv)}


def _levels(config):
    return config.n_obs_levels or (config.n_sim,)


def cmd_qvar(args, config, stem):
    v = march(_noise(config, args.replicate), config.diffusion)
    rows = []
    for n in _levels(config):
        rep = qvar_report(restrict(v, n), config.diffusion, config.hurst, config.constant_mode)
        target = config.diffusion.theta ** 2 * rep.limit_constant * rep.riemann_F2
        print(f"N={n}: Q_N={rep.q_value:.6g} limit={target:.6g}")
        rows.append([n, rep.q_value, rep.riemann_F2, rep.limit_constant, target])
    cols = ("N", "q_value", "riemann_F2", "limit_constant", "limit")
    return {f"{stem}_qvar_r{args.replicate}.csv": _csv(config, cols, rows)}


def cmd_estimate(args, config, stem):
    v = march(_noise(config, args.replicate), config.diffusion)
    rows = []
    for n in _levels(config):
        est = estimate_theta(restrict(v, n), config.diffusion, config.hurst, config.constant_mode)
        print(f"N={n}: theta_hat={est.theta_hat:.6g} (theta={config.diffusion.theta})")
        rows.append([n, est.theta_hat, est.inputs.q_value, est.inputs.riemann_F2])
    cols = ("N", "theta_hat", "q_value", "riemann_F2")
    return {f"{stem}_estimate_r{args.replicate}.csv": _csv(config, cols, rows)}


def cmd_presets(args):
    for name in sorted(PRESETS):
        c = PRESETS[name]
        lv = c.n_obs_levels or c.eps_levels
        print(f"{name}: study={c.study.value} H={c.hurst.h} F={c.diffusion.describe()} "
              f"theta={c.diffusion.theta} n_sim={c.n_sim} levels={list(lv)} "
              f"replicates={c.replicates} seed={c.seed}")
    return 0


COMMANDS = {"study": cmd_study, "noise": cmd_noise, "simulate": cmd_simulate,
            "qvar": cmd_qvar, "estimate": cmd_estimate}

# main artifact of each command, checked before any work is done
PRIMARY = {
    "study": lambda stem, a: f"{stem}.json",
    "noise": lambda stem, a: f"{stem}_noise_r{a.replicate}.csv",
    "simulate": lambda stem, a: f"{stem}_v_r{a.replicate}.csv",
    "qvar": lambda stem, a: f"{stem}_qvar_r{a.replicate}.csv",
    "estimate": lambda stem, a: f"{stem}_estimate_r{a.replicate}.csv",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rieszwave", description="Stochastic wave equation experiments")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("presets", help="list shipped preset configs")
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key=value config file")
        s.add_argument("--preset", help="name of a shipped preset")
        s.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--overwrite", action="store_true", help="replace existing artifacts")
        if name == "study":
            s.add_argument("--replicates", type=int, help="override the replicate count")
            s.add_argument("--workers", type=int, default=1)
        else:
            s.add_argument("--replicate", type=int, default=0, help="replicate index (stream id)")
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        return cmd_presets(args)
    try:
        config, stem = _resolve(args)
        outdir = Path(args.out or os.environ.get(OUT_ENV) or "results")
        first = outdir / PRIMARY[args.command](stem, args)
        if first.exists() and not args.overwrite:
            raise ExistsError(f"{first} exists (pass --overwrite to replace)")
        files = COMMANDS[args.command](args, config, stem)
        for p in write_artifacts(outdir, files, args.overwrite):
            print(f"wrote {p}")
    except (ConfigError, ExistsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalBlowup, NoiseError, DegenerateDiffusion, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
