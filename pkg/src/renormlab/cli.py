"""``renormlab`` command line.

Exit codes: 0 success, 1 result truncated at the precision floor or orbit
budget, 2 invalid input.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import blaschke, experiments, output
from . import pairs as P
from .blaschke import ConstructionError, PrecisionFloorError
from .circlemap import CircleMapLift, make_family, parse_family_spec
from .contfrac import ContinuedFraction, ContinuedFractionError, DomainError, parse_target

EXIT_OK, EXIT_TRUNCATED, EXIT_INVALID = 0, 1, 2

COMMANDS = ("model", "tune", "renorm", "universality", "convergence", "delta", "julia")

RENORM_COLUMNS_HELP = """\
renorm CSV columns (after a '# config: {...}' line):
  level        renormalization level k (pair of closest returns q_k, q_{k+1})
  height       height of the level-k pair ('inf' if eta has a fixed point)
  len_eta      |I_eta| in the coordinate of the starting map
  len_xi       |I_xi| in the coordinate of the starting map
  ratio        |eta(0)/xi(0)| of the level-k pair
  xi0          signed xi(0) in the coordinate of the starting map
  c0_distance  c0 distance to the level k-1 pair (empty at level 0)
A truncated table ends with a '# truncated: ...' line.
universality CSV: level, ratio_<i> per family, discrepancy, c0_distance.
convergence CSV: level, c0_distance."""


@dataclass
class RunConfig:
    """Everything that determines a run's output. Thread count is not part
    of it: outputs do not depend on it."""

    command: str
    family: str | None = None
    families: list[str] = field(default_factory=list)
    n: int | None = None
    theta: float | None = None
    a: float = 0.0
    target: str | None = None
    depth: int | None = None
    tol: float = 1e-12
    cert_tol: float = experiments.CERT_TOL
    max_orbit: int = 2 * 10**6
    allow_mixed: bool = False
    window: list[float] = field(default_factory=lambda: [-2.0, 2.0, -2.0, 2.0])
    resolution: list[int] = field(default_factory=lambda: [800, 800])
    max_iter: int = 1000
    r_in: float = 1e-6
    r_out: float = 1e6
    out: str | None = None
    csv: str | None = None
    seed: int = 0

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


DEFAULT_DEPTH = {"renorm": 10, "universality": 12, "convergence": 12, "delta": 16, "tune": None}


def _parse_window(text: str) -> list[float]:
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("window is xmin,xmax,ymin,ymax")
    return vals


def _parse_res(text: str) -> list[int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("resolution is WIDTHxHEIGHT")
    return [int(parts[0]), int(parts[1])]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="renormlab",
        description="Renormalization experiments for critical circle maps.",
        epilog=RENORM_COLUMNS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON RunConfig; explicit flags override it")
    common.add_argument("--threads", type=int, help="worker threads (default: RENORMLAB_THREADS or all cores)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file ('-' or omitted: stdout)")
    common.add_argument("--max-orbit", dest="max_orbit", type=int)
    common.add_argument("--cert-tol", dest="cert_tol", type=float, help="bracket agreement for certified levels")

    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(
            name, parents=[common], help=help_text, epilog=RENORM_COLUMNS_HELP,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )

    p = add("model", "build B_n and report its invariants")
    p.add_argument("--n", type=int)

    p = add("tune", "find theta with a prescribed rotation number")
    p.add_argument("--n", type=int)
    p.add_argument("--a", type=float)
    p.add_argument("--target")
    p.add_argument("--tol", type=float, help="width of the final theta bracket")
    p.add_argument("--depth", type=int, help="consult at most this many target terms")

    for name, help_text in (("renorm", "renormalization orbit as CSV"),):
        p = add(name, help_text)
        p.add_argument("--family", help="e.g. rigid:rho=0.618 or blaschke:n=3 (tuned to --target)")
        p.add_argument("--n", type=int)
        p.add_argument("--a", type=float)
        p.add_argument("--theta", type=float)
        p.add_argument("--target")
        p.add_argument("--depth", type=int)
        p.add_argument("--tol", type=float)

    for name, help_text in (
        ("universality", "compare scaling ratios across families"),
        ("convergence", "c0 distances between renormalizations of two maps"),
    ):
        p = add(name, help_text)
        p.add_argument("--families", nargs="+")
        p.add_argument("--target")
        p.add_argument("--depth", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--csv", help="also write the per-level table here")
        if name == "universality":
            p.add_argument("--allow-mixed", dest="allow_mixed", action="store_true", default=None,
                           help="admit different critical exponents (negative control)")

    p = add("delta", "parameter-scaling ratios of periodic parameters")
    p.add_argument("--n", type=int)
    p.add_argument("--a", type=float)
    p.add_argument("--target")
    p.add_argument("--depth", type=int)

    p = add("julia", "basin raster of the model map as P6 plus a JSON sidecar")
    p.add_argument("--n", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--target", help="tune theta to this target when --theta is absent")
    p.add_argument("--tol", type=float)
    p.add_argument("--window", type=_parse_window)
    p.add_argument("--res", dest="resolution", type=_parse_res)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--r-in", dest="r_in", type=float)
    p.add_argument("--r-out", dest="r_out", type=float)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    data: dict = {"command": args.command}
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DomainError(f"cannot read config {args.config}: {exc}") from None
        loaded.pop("command", None)
        data.update(loaded)
    known = {f.name for f in fields(RunConfig)}
    for key, val in vars(args).items():
        if key in known and key != "command" and val is not None:
            data[key] = val
    cfg = RunConfig.from_json(data)
    if cfg.depth is None:
        cfg.depth = DEFAULT_DEPTH.get(cfg.command)
    return cfg


# -- map resolution -------------------------------------------------------------


def _target(cfg: RunConfig) -> ContinuedFraction | None:
    return parse_target(cfg.target) if cfg.target else None


def resolve_map(spec: str, cfg: RunConfig) -> CircleMapLift:
    """Instantiate a family spec; Blaschke families without ``theta`` are
    tuned to the target and rigid rotations without ``rho`` take its value."""
    name, params = parse_family_spec(spec)
    target = _target(cfg)
    if name in ("blaschke", "blaschke-precomposed") and "theta" not in params:
        if target is None:
            raise DomainError(f"{spec}: give theta or a --target to tune to")
        if "n" not in params:
            raise DomainError(f"{spec}: missing n")
        res = blaschke.tune_theta(int(params["n"]), target, cfg.tol, a=float(params.get("a", 0.0)), max_orbit=cfg.max_orbit)
        return res.map
    if name == "rigid" and "rho" not in params:
        if target is None:
            raise DomainError(f"{spec}: give rho or a --target")
        params["rho"] = target.value()
    try:
        return make_family(name, **params)
    except TypeError as exc:
        raise DomainError(f"{spec}: {exc}") from None


def _single_map(cfg: RunConfig) -> CircleMapLift:
    if cfg.family:
        return resolve_map(cfg.family, cfg)
    if cfg.n is None:
        raise DomainError("give --family or --n")
    spec = "blaschke-precomposed" if cfg.a else "blaschke"
    params = [f"n={cfg.n}"]
    if cfg.a:
        params.append(f"a={cfg.a!r}")
    if cfg.theta is not None:
        params.append(f"theta={cfg.theta!r}")
    return resolve_map(spec + ":" + ",".join(params), cfg)


def _require(cfg: RunConfig, *names):
    missing = [n for n in names if getattr(cfg, n) in (None, [], "")]
    if missing:
        raise DomainError(f"{cfg.command} needs --{', --'.join(m.replace('_', '-') for m in missing)}")


# -- commands -------------------------------------------------------------------


def cmd_model(cfg: RunConfig, threads: int | None) -> int:
    _require(cfg, "n")
    B = blaschke.build(cfg.n)
    inv = blaschke.exact_invariants(B)
    body = {
        "model": B.to_json(),
        "invariants": inv,
        "derivative_constant": blaschke.derivative_constant(B),
        "circle_symmetry_residual": blaschke.circle_symmetry_residual(B, seed=cfg.seed),
    }
    output.write_json(cfg.out, output.report("model", cfg.to_json(), body))
    return EXIT_OK if all(inv.values()) else EXIT_INVALID


def cmd_tune(cfg: RunConfig, threads: int | None) -> int:
    _require(cfg, "n", "target")
    target = _target(cfg)
    res = blaschke.tune_theta(cfg.n, target, cfg.tol, depth=cfg.depth, a=cfg.a, max_orbit=cfg.max_orbit)
    body = dict(res.to_json())
    body["target_value"] = target.value()
    body["achieved_error"] = abs(res.achieved.rho - target.value())
    output.write_json(cfg.out, output.report("tune", cfg.to_json(), body))
    return EXIT_OK if res.certified else EXIT_TRUNCATED


def cmd_renorm(cfg: RunConfig, threads: int | None) -> int:
    fmap = _single_map(cfg)
    depth = cfg.depth
    if depth < 1:
        raise DomainError("depth must be >= 1")
    cert = experiments.certify_returns(fmap, depth + 1, cfg.cert_tol, cfg.max_orbit)
    notes = []
    levels = min(depth, cert.depth)
    if levels < 1:
        raise DomainError(f"no certified renormalization level: {cert.reason}")
    orbit = P.renorm_orbit(P.from_circle_map(fmap, 0, analysis=cert.analysis), levels)
    for k in range(1, len(orbit.records)):
        orbit.records[k].c0_distance = P.c0_distance(orbit.pairs[k - 1], orbit.pairs[k])
    if len(orbit.records) < depth:
        reason = orbit.reason or cert.reason
        notes.append(f"truncated: {len(orbit.records)} of {depth} levels certified; {reason}")
        print(f"warning: {notes[-1]}", file=sys.stderr)
    text = output.csv_text(P.RenormRecord.CSV_COLUMNS, [r.csv_row() for r in orbit.records], cfg.to_json(), notes)
    output.write_text(cfg.out, text)
    return EXIT_OK


def _families(cfg: RunConfig) -> list[CircleMapLift]:
    _require(cfg, "families")
    return [resolve_map(spec, cfg) for spec in cfg.families]


def cmd_universality(cfg: RunConfig, threads: int | None) -> int:
    maps = _families(cfg)
    rep = experiments.universality_compare(
        maps, cfg.depth, cfg.cert_tol, cfg.max_orbit, cfg.allow_mixed, _target(cfg), threads
    )
    output.write_json(cfg.out, output.report("universality", cfg.to_json(), rep.to_json()))
    if cfg.csv:
        cols = ["level"] + [f"ratio_{i}" for i in range(len(maps))] + ["discrepancy", "c0_distance"]
        rows = []
        for m in range(len(rep.discrepancy)):
            dist = rep.c0_distances[m + 1] if m + 1 < len(rep.c0_distances) else ""
            rows.append([m + 1] + [repr(r[m]) for r in rep.ratios] + [repr(rep.discrepancy[m]), repr(dist) if dist != "" else ""])
        notes = [f"truncated: {rep.reason}"] if rep.truncated else []
        output.write_text(cfg.csv, output.csv_text(cols, rows, cfg.to_json(), notes))
    return EXIT_TRUNCATED if rep.truncated else EXIT_OK


def cmd_convergence(cfg: RunConfig, threads: int | None) -> int:
    maps = _families(cfg)
    if len(maps) != 2:
        raise DomainError("convergence compares exactly two families")
    rep = experiments.renorm_convergence(maps[0], maps[1], cfg.depth, cfg.cert_tol, cfg.max_orbit, threads)
    output.write_json(cfg.out, output.report("convergence", cfg.to_json(), rep.to_json()))
    if cfg.csv:
        rows = [[k, repr(d)] for k, d in enumerate(rep.distances)]
        notes = [f"truncated: {rep.reason}"] if rep.truncated else []
        output.write_text(cfg.csv, output.csv_text(["level", "c0_distance"], rows, cfg.to_json(), notes))
    return EXIT_TRUNCATED if rep.truncated else EXIT_OK


def cmd_delta(cfg: RunConfig, threads: int | None) -> int:
    _require(cfg, "n", "target")
    target = _target(cfg)
    theta_star = blaschke.tune_theta(cfg.n, target, cfg.tol, a=cfg.a, max_orbit=cfg.max_orbit).theta
    rep = experiments.delta_estimate(
        cfg.n, target, cfg.depth, cfg.a, min(cfg.max_orbit, 10**6), theta_star=theta_star, threads=threads
    )
    output.write_json(cfg.out, output.report("delta", cfg.to_json(), rep.to_json()))
    return EXIT_TRUNCATED if rep.truncated else EXIT_OK


def cmd_julia(cfg: RunConfig, threads: int | None) -> int:
    _require(cfg, "n")
    if cfg.theta is None:
        _require(cfg, "target")
    if cfg.theta is not None:
        B = blaschke.build(cfg.n).rotated(cfg.theta)
    else:
        B = blaschke.tune_theta(cfg.n, _target(cfg), cfg.tol, max_orbit=cfg.max_orbit).map.B
    raster = experiments.julia_raster(
        B, tuple(cfg.window), tuple(cfg.resolution), cfg.max_iter, cfg.r_in, cfg.r_out, threads
    )
    path = cfg.out or "julia.ppm"
    sidecar = output.write_raster(path, raster, cfg.to_json())
    summary = {"image": str(path), "sidecar": str(sidecar), **raster.sidecar()}
    output.write_json(None, output.report("julia", cfg.to_json(), summary))
    return EXIT_OK


HANDLERS = {
    "model": cmd_model,
    "tune": cmd_tune,
    "renorm": cmd_renorm,
    "universality": cmd_universality,
    "convergence": cmd_convergence,
    "delta": cmd_delta,
    "julia": cmd_julia,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        cfg = resolve_config(args)
        threads = args.threads if args.threads is not None else experiments.default_threads()
        if threads < 1:
            raise DomainError("--threads must be >= 1")
        return HANDLERS[cfg.command](cfg, threads)
    except (P.CertificationError, PrecisionFloorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRUNCATED
    except (ContinuedFractionError, ConstructionError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
