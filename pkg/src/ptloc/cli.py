"""Command-line front end.

Each subcommand writes ``<out>/<name>.csv`` and a ``<name>.json`` sidecar
carrying the config hash.  Exit codes: 0 success, 1 invariant failure,
2 usage or config error, 3 numerical-domain error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import classical as cl
from .errors import InvalidInputError, NumericalDomainError, PtlocError
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    bump_radial_state,
    hegerfeldt_leakage,
    kijowski_arrival_scan,
    temporal_spread_report,
    verify_suite,
)
from .state import _atomic_write, load_state, nw_density, radial_from_function, save_state

__all__ = ["main", "parse_config_text", "read_config", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("verify", "classical-check", "nw-density", "heg-leakage", "time-povm", "kijowski-arrival", "state-io")


class UsageError(Exception):
    pass


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise InvalidInputError(f"{source}:{lineno}: empty key")
        values[key] = value
    return values


def read_config(path: str | None, overrides=()) -> ExperimentConfig:
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values = parse_config_text(fh.read(), path)
        except OSError as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc.strerror}") from None
    for item in overrides:
        if "=" not in item:
            raise InvalidInputError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    return ExperimentConfig.from_mapping(values)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ptloc", description="Relativistic localization experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="flat key = value config file")
        p.add_argument("--out", metavar="DIR", default="ptloc-out", help="output directory")
        p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides")
        p.add_argument("--threads", type=int, default=1, metavar="N")
    return parser


# ---------------------------------------------------------------------------
# subcommands


def _checks_report(name: str) -> ExperimentReport:
    return ExperimentReport(name, columns=("check", "residual", "tolerance", "passed"))


def cmd_verify(cfg: ExperimentConfig, out: str):
    return verify_suite(cfg)


def cmd_classical_check(cfg: ExperimentConfig, out: str):
    rep = _checks_report("classical-check")
    rng = np.random.default_rng(cfg.seed)
    u = np.array([math.sqrt(1.13), 0.3, 0.2, 0.0])
    worst = {"qq": 0.0, "qp": 0.0, "jq": 0.0}
    restr, slope = 0.0, 0.0
    for _ in range(20):
        pt = cl.random_on_shell_point(rng, cfg.mass)
        res = cl.bracket_residuals(pt, u, 0.3)
        worst = {k: max(worst[k], res[k]) for k in worst}
        closed = cl.restricted_instantaneous(pt, u, 0.5)
        surf = cl.SurfaceFunction.instantaneous(u, 0.5).generic()
        for mu in range(4):
            restr = max(restr, abs(cl.restrict_classical(cl.position_observable(mu), surf, pt) - closed[mu]))
        if pt.p[3] > 0.05:
            t1 = cl.restrict_classical(cl.position_observable(0), cl.SurfaceFunction.fixed_z(1.0), pt)
            t2 = cl.restrict_classical(cl.position_observable(0), cl.SurfaceFunction.fixed_z(2.0), pt)
            slope = max(slope, abs((t2 - t1) - pt.p[0] / pt.p[3]))
    for k, v in worst.items():
        rep.add(f"poisson_{k}", v, cfg.tol_pb, v < cfg.tol_pb)
    rep.add("restriction_root_vs_closed", restr, 1e-10, restr < 1e-10)
    rep.add("fixed_z_slope", slope, 1e-10, slope < 1e-10)
    return rep


def cmd_nw_density(cfg: ExperimentConfig, out: str):
    state = cfg.gaussian()
    rep = ExperimentReport("nw-density", columns=("t", "x", "density"))
    centroid = {}
    for t in (float(v) for v in cfg.nw_times.split(",")):
        xs, dens = nw_density(state, t)
        iy, iz = (int(np.argmin(np.abs(a))) for a in xs[1:])
        for x, d in zip(xs[0], dens[:, iy, iz]):
            rep.add(t, float(x), float(d))
        dx3 = np.prod([a[1] - a[0] for a in xs])
        centroid[str(t)] = [float(np.sum(dens * np.expand_dims(a, tuple(k for k in range(3) if k != j))) * dx3) for j, a in enumerate(xs)]
    rep.metadata["centroid"] = centroid
    return rep


def cmd_heg_leakage(cfg: ExperimentConfig, out: str):
    return hegerfeldt_leakage(cfg)


def cmd_time_povm(cfg: ExperimentConfig, out: str):
    from .povm import time_distribution, time_uncertainty

    grid = cfg.radial_grid()
    if cfg.time_state == "bump":
        state = bump_radial_state(grid, float(cfg.heg_radii.split(",")[0]), cfg.xi)
    else:
        c = np.array([cfg.center_x, cfg.center_y, cfg.center_z])

        def gauss(r, th, ph):
            p = (r * np.sin(th) * np.cos(ph), r * np.sin(th) * np.sin(ph), r * np.cos(th))
            return np.exp(-sum((a - b) ** 2 for a, b in zip(p, c)) / (4 * cfg.sigma**2))

        state = radial_from_function(grid, gauss, cfg.xi)
    dist = time_distribution(state)
    mean, dt = time_uncertainty(state)
    rep = ExperimentReport("time-povm", columns=("t", "density"))
    for t, p in zip(dist.t, dist.density):
        rep.add(float(t), float(p))
    rep.metadata.update({"defect": dist.defect, "mean_t": mean, "delta_t": dt, "grid": dist.meta})
    rep.metadata["spread"] = temporal_spread_report(cfg).metadata if cfg.time_state == "bump" else None
    return rep


def cmd_kijowski_arrival(cfg: ExperimentConfig, out: str):
    return kijowski_arrival_scan(cfg)


def cmd_state_io(cfg: ExperimentConfig, out: str):
    state = cfg.gaussian()
    path = os.path.join(out, "state.ptl")
    desc = save_state(state, path, extra={"config_hash": cfg.hash()})
    back = load_state(path)
    rep = _checks_report("state-io")
    diff = float(np.max(np.abs(back.psi - state.psi)))
    rep.add("round_trip_max_abs", diff, 1e-300, diff == 0.0)
    rep.add("norm2", abs(back.norm2() - state.norm2()), 1e-300, back.norm2() == state.norm2())
    rep.metadata.update({"state_file": "state.ptl", "sha256": desc["sha256"]})
    return rep


HANDLERS = {
    "verify": cmd_verify,
    "classical-check": cmd_classical_check,
    "nw-density": cmd_nw_density,
    "heg-leakage": cmd_heg_leakage,
    "time-povm": cmd_time_povm,
    "kijowski-arrival": cmd_kijowski_arrival,
    "state-io": cmd_state_io,
}


def _diagnostic(code: int, kind: str, message: str, **extra):
    payload = {"status": "error" if code else "ok", "exit_code": code, "error": kind, "message": message}
    payload.update(extra)
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _diagnostic(EXIT_USAGE, "UsageError", str(exc))
        return EXIT_USAGE
    try:
        cfg = read_config(args.config, args.overrides)
        if args.threads < 1:
            raise InvalidInputError("--threads must be at least 1")
    except InvalidInputError as exc:
        _diagnostic(EXIT_USAGE, type(exc).__name__, str(exc))
        return EXIT_USAGE
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(args.threads)
    t0 = time.perf_counter()
    try:
        os.makedirs(args.out, exist_ok=True)
        report = HANDLERS[args.command](cfg, args.out)
    except InvalidInputError as exc:
        _diagnostic(EXIT_USAGE, type(exc).__name__, str(exc))
        return EXIT_USAGE
    except (NumericalDomainError, PtlocError) as exc:
        _diagnostic(EXIT_NUMERIC, type(exc).__name__, str(exc), command=args.command)
        return EXIT_NUMERIC
    report.metadata["runtime_s"] = time.perf_counter() - t0
    report.metadata["threads"] = args.threads
    report.metadata["command"] = args.command
    name = args.command
    csv_path = os.path.join(args.out, f"{name}.csv")
    _atomic_write(csv_path, report.to_csv().encode())
    _atomic_write(os.path.join(args.out, f"{name}.json"), report.to_json(cfg).encode())
    failed = [r[0] for r in report.rows if "passed" in report.columns and not r[report.columns.index("passed")]]
    if failed:
        _diagnostic(EXIT_FAIL, "InvariantFailure", f"{len(failed)} check(s) failed", failed=failed)
        return EXIT_FAIL
    return EXIT_OK


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
