"""Command line front end: ``trocarnav run|sweep|genpath|serve``.

Settings come from defaults, then an optional flat ``key = value`` config
file (``--config``), then command-line flags. Relative output paths are
placed under ``$TROCARNAV_OUT`` when that variable is set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields, replace

from . import netlink, paths
from .plant import Plant
from .scenarios import (
    SCENARIOS,
    RunConfig,
    ScenarioAborted,
    build_scene,
    gain_sweep,
    simulate,
    write_sweep,
)
from .tasks import Gains

OUT_ENV = "TROCARNAV_OUT"

GAIN_KEYS = [f.name for f in fields(Gains)]
RUN_KEYS = {
    "scenario": str,
    "tool_file": str,
    "path_file": str,
    "wall_file": str,
    "max_steps": int,
    "stop_fraction": float,
    "duration": float,
    "seed": int,
    "noise_t": float,
    "noise_r": float,
    "output": str,
    "transport": str,
    "s_handoff": float,
    "d0": float,
}


def read_config(path: str) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{n}: expected key = value, got {raw.strip()!r}")
            key = key.strip().replace("-", "_")
            if key not in RUN_KEYS and key not in GAIN_KEYS:
                raise ValueError(f"{path}:{n}: unknown key {key!r}")
            out[key] = value.strip()
    return out


def out_path(p: str | None) -> str | None:
    if p is None:
        return None
    base = os.environ.get(OUT_ENV)
    if base and not os.path.isabs(p):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, p)
    return p


def build_run_config(settings: dict) -> RunConfig:
    """RunConfig from merged string/typed settings."""
    kw = {}
    for key, typ in RUN_KEYS.items():
        if settings.get(key) is not None:
            kw[key] = typ(settings[key])
    noise = (kw.pop("noise_t", 0.0), kw.pop("noise_r", 0.0))
    cfg = RunConfig(**kw, noise=noise)
    gain_kw = {k: float(settings[k]) for k in GAIN_KEYS if settings.get(k) is not None}
    if gain_kw:
        cfg = replace(cfg, gains=replace(cfg.resolved_gains, **gain_kw))
    return replace(cfg, output=out_path(cfg.output))


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--scenario", choices=SCENARIOS)
    for key, typ in RUN_KEYS.items():
        if key == "scenario":
            continue
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ)
    g = p.add_argument_group("gains")
    for key in GAIN_KEYS:
        g.add_argument("--" + key.replace("_", "-"), dest=key, type=float)


def _settings(args) -> dict:
    merged = read_config(args.config) if args.config else {}
    for key in list(RUN_KEYS) + GAIN_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    return merged


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def cmd_run(args) -> int:
    cfg = build_run_config(_settings(args))
    try:
        _, summary = simulate(cfg)
        status = 0
    except ScenarioAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        summary, status = exc.summary, 2
    text = json.dumps(summary.to_dict(), indent=2, allow_nan=True)
    if args.summary:
        with open(out_path(args.summary), "w") as fh:
            fh.write(text + "\n")
    print(text)
    return status


def cmd_sweep(args) -> int:
    settings = _settings(args)
    settings.setdefault("scenario", "pf-only")
    base = build_run_config(settings)
    rows = gain_sweep(base, _floats(args.beta_primes), _floats(args.gamma_cs) if args.gamma_cs else None, args.workers)
    out = out_path(args.table)
    write_sweep(rows, out if out else sys.stdout)
    return 0


def cmd_genpath(args) -> int:
    params = {}
    for item in args.param or []:
        k, sep, v = item.partition("=")
        if not sep:
            raise SystemExit(f"--param expects key=value, got {item!r}")
        params[k.strip()] = float(v)
    out = out_path(args.output)
    curve = paths.write_reference_path(args.kind, out if out else sys.stdout, **params)
    print(f"{args.kind}: {len(curve)} points, length {curve.length:.6f} mm", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    cfg = build_run_config(_settings(args))
    scene, _, _ = build_scene(cfg)
    g = cfg.resolved_gains
    plant = Plant(scene.w_T_e, g.T_e, cfg.noise, cfg.seed)
    print(f"serving {cfg.scenario} plant on {args.endpoint}", file=sys.stderr)
    steps = netlink.serve_plant(args.endpoint, plant, scene.w_T_r, max_sessions=args.max_sessions, timeout=args.timeout)
    print(f"done: {steps} plant steps", file=sys.stderr)
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trocarnav", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run one scenario and write its CSV log")
    _add_run_flags(p)
    p.add_argument("--summary", help="also write the JSON summary here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="pf-only gain sweep")
    _add_run_flags(p)
    p.add_argument("--beta-primes", default="-4,-8,-12,-16")
    p.add_argument("--gamma-cs", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--table", help="CSV table path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("genpath", help="write an analytic reference path")
    p.add_argument("kind", choices=sorted(paths.GENERATORS))
    p.add_argument("--param", action="append", help="generator parameter key=value (repeatable)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_genpath)

    p = sub.add_parser("serve", help="serve a simulated plant over TCP")
    _add_run_flags(p)
    p.add_argument("--endpoint", default="127.0.0.1:5555")
    p.add_argument("--max-sessions", type=int, default=None)
    p.add_argument("--timeout", type=float, default=netlink.READ_TIMEOUT)
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
