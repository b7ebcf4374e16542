"""Command-line front end.

    svlm theory cconst --dr 0.75 --ds 0.75
    svlm theory kernel|gamma [--config cfg.json]
    svlm simulate paths --config cfg.json [--n ... --R ... --seed ...]
    svlm limit sample --config cfg.json
    svlm verify <check>|all --config cfg.json

Exit codes: 0 success, 1 failed check, 2 usage error, 3 invalid config.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path


from . import __version__
from .errors import ConfigError, SVLMError
from .grid import RegimeKind, classify_regime, grid_from_spec, reference_grid
from .io import dumps, ensemble_csv, metadata, moments_summary
from .kernel import plan_for_grid, plan_from_horizon
from .limit import apply_scaling, build_sampler, sample_limit
from .simulate import DEFAULT_TIME_GRID, Dist, normalize_ensemble, simulate_paths
from .streams import default_workers
from .theory import KernelKind, c_const, gamma_asymptotic, gamma_h, kernel_matrix
from .verify import CHECKS

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3

# checks that make sense in each regime
APPLICABLE = {
    RegimeKind.LONG: ("gamma", "partial_sums", "polygonal", "fclt", "selfsim", "moments"),
    RegimeKind.BOUNDARY: ("gamma", "partial_sums", "polygonal", "fclt", "moments"),
    RegimeKind.SHORT: ("polygonal", "fclt"),
}
# fields a check accepts from its params section
CHECK_FIELDS = {
    "gamma": ("h_list",),
    "partial_sums": ("t", "u", "n_list", "monotone_over"),
    "polygonal": ("n", "t", "u", "min_graded_n"),
    "fclt": ("n", "R", "dist", "time_grid", "horizon", "test_fn", "rel_tol"),
    "selfsim": ("a_list", "time_grid", "mc_a", "R", "mc_times"),
    "moments": ("n_list", "dyadic_depth", "n_ref"),
}
SEEDED = ("fclt", "selfsim")


@dataclass
class ExperimentConfig:
    """Validated experiment configuration; ``raw`` is echoed verbatim into outputs."""

    grid: dict
    seed: int
    output: str = "svlm_out"
    checks: list = field(default_factory=lambda: list(CHECKS))
    params: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    limit: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict, require_seed: bool = True) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        if require_seed and doc.get("seed") is None:
            raise ConfigError("config field 'seed' is required (no wall-clock seeding)")
        seed = doc.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError("config field 'seed' must be a non-negative integer")
        grid = doc.get("grid", "reference")
        unknown = set(doc.get("checks", [])) - set(CHECKS)
        if unknown:
            raise ConfigError(f"config field 'checks' names unknown checks {sorted(unknown)}")
        unknown = set(doc.get("params", {})) - set(CHECKS)
        if unknown:
            raise ConfigError(f"config field 'params' has unknown sections {sorted(unknown)}")
        cfg = cls(
            grid=grid,
            seed=seed,
            output=doc.get("output", "svlm_out"),
            checks=list(doc.get("checks", list(CHECKS))),
            params=copy.deepcopy(doc.get("params", {})),
            simulate=dict(doc.get("simulate", {})),
            limit=dict(doc.get("limit", {})),
            raw=copy.deepcopy(doc),
        )
        cfg.build_grid()
        return cfg

    def build_grid(self):
        if self.grid == "reference":
            return reference_grid()
        if not isinstance(self.grid, dict):
            raise ConfigError("config field 'grid' must be an object or \"reference\"")
        try:
            return grid_from_spec(self.grid)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config field 'grid' is invalid: {exc}") from exc


def load_config(path, require_seed=True) -> ExperimentConfig:
    if path is None:
        doc = {"grid": "reference"}
    else:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(doc, require_seed)


def _floats(text):
    return [float(x) for x in text.split(",") if x]


def _ints(text):
    return [int(float(x)) for x in text.split(",") if x]


def _overrides(args) -> dict:
    """Flag values that were actually given, keyed by config field name."""
    keys = {"n": "n", "R": "R", "dist": "dist", "horizon": "horizon", "time_grid": "time_grid",
            "h_list": "h_list", "a_list": "a_list", "n_list": "n_list", "t": "t", "u": "u",
            "kernel": "kernel", "scale": "scale", "dyadic_depth": "dyadic_depth"}
    return {k: getattr(args, a) for a, k in keys.items() if getattr(args, a, None) is not None}


def _apply_common(cfg: ExperimentConfig, args):
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.raw["seed"] = args.seed
    if getattr(args, "output", None) is not None:
        cfg.output = args.output


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    return path


def _echo(cfg: ExperimentConfig) -> dict:
    """Config as echoed in outputs; output location and pool size are not part of it."""
    return {k: v for k, v in cfg.raw.items() if k not in ("output", "workers")}


def _meta(cfg: ExperimentConfig, **extra) -> dict:
    m = metadata(_echo(cfg), cfg.seed)
    m["wallclock"].update(extra)
    return m


# ---------------------------------------------------------------- theory


def cmd_theory(args) -> int:
    if args.what == "cconst":
        if args.dr is None or args.ds is None:
            raise ConfigError("cconst needs --dr and --ds")
        print(repr(c_const(args.dr, args.ds)))
        return EXIT_OK
    cfg = load_config(args.config, require_seed=False)
    grid = cfg.build_grid()
    if args.what == "gamma":
        h_list = args.h_list or [0, 1, 10, 100, 1000, 10**4, 10**5]
        lines = ["site_r,site_s,h,gamma,asymptotic"]
        for i in range(grid.m):
            for j in range(grid.m):
                for h in h_list:
                    g = gamma_h(grid, i, j, int(h))
                    try:
                        asy = format(float(gamma_asymptotic(grid, i, j, int(h))), ".17g")
                    except SVLMError:
                        asy = ""
                    lines.append(f"{i},{j},{int(h)},{g:.17g},{asy}")
        text = "\n".join(lines) + "\n"
    else:
        times = args.time_grid or [0.2, 0.4, 0.6, 0.8, 1.0]
        kind = KernelKind(args.kernel.upper()) if args.kernel else KernelKind.V_LONG
        horizon = args.horizon
        km = kernel_matrix(grid, times, kind, n=args.n, horizon=horizon)
        text = km.to_json() + "\n" if args.format == "json" else km.to_csv()
    if args.output:
        _write(Path(args.output), f"theory_{args.what}.{'json' if args.format == 'json' and args.what == 'kernel' else 'csv'}", text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, require_seed=args.seed is None)
    _apply_common(cfg, args)
    p = {**cfg.simulate, **_overrides(args)}
    cfg.raw["simulate"] = p
    grid = cfg.build_grid()
    n, R = int(p.get("n", 1024)), int(p.get("R", 100))
    dist = Dist(p.get("dist", "gaussian"))
    times = p.get("time_grid", list(DEFAULT_TIME_GRID))
    trunc = plan_from_horizon(grid, int(p["horizon"])) if p.get("horizon") else plan_for_grid(grid)
    ens = simulate_paths(grid, n, R, dist, cfg.seed, trunc, times, args.workers)
    if p.get("normalize", True):
        ens = normalize_ensemble(ens)
    meta = _meta(cfg)
    meta["ensemble"] = ens.metadata()
    out = Path(cfg.output)
    csv_meta = {k: v for k, v in meta.items() if k != "wallclock"}
    _write(out, "paths.csv", ensemble_csv(ens.values, list(range(grid.m)), ens.time_grid, csv_meta))
    summary = {"metadata": meta, "moments": moments_summary(ens.values, list(range(grid.m)), ens.time_grid)}
    _write(out, "paths_summary.json", dumps(summary) + "\n")
    print(f"wrote {R} replications to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- limit


def cmd_limit(args) -> int:
    cfg = load_config(args.config, require_seed=args.seed is None)
    _apply_common(cfg, args)
    p = {**cfg.limit, **_overrides(args)}
    cfg.raw["limit"] = p
    grid = cfg.build_grid()
    kind = KernelKind(str(p.get("kernel", "V_LONG")).upper())
    times = p.get("time_grid", [0.2, 0.4, 0.6, 0.8, 1.0])
    kw = {}
    if kind in (KernelKind.EXACT_N, KernelKind.LONGRUN):
        kw = {"n": p.get("n"), "horizon": p.get("horizon")}
        if kind is KernelKind.LONGRUN:
            kw.pop("n")
    sampler = build_sampler(kind, grid, times, **kw)
    draws = sample_limit(sampler, int(p.get("R", 1000)), cfg.seed)
    if p.get("scale") is not None:
        draws = apply_scaling(draws, grid, float(p["scale"]))
    meta = _meta(cfg)
    meta["draws"] = draws.metadata()
    meta["draws"]["jitter_used"] = sampler.jitter_used
    out = Path(cfg.output)
    csv_meta = {k: v for k, v in meta.items() if k != "wallclock"}
    _write(out, "limit.csv", ensemble_csv(draws.values, draws.sites, draws.times, csv_meta))
    _write(out, "limit_summary.json",
           dumps({"metadata": meta, "moments": moments_summary(draws.values, draws.sites, draws.times)}) + "\n")
    print(f"wrote {draws.values.shape[0]} draws to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- verify


def check_arguments(cfg: ExperimentConfig, name: str, overrides: dict, workers):
    """Keyword arguments for one check from its params section and the flags."""
    base = dict(cfg.params.get(name, {}))
    base.update({k: v for k, v in overrides.items() if k in CHECK_FIELDS[name]})
    bad = set(base) - set(CHECK_FIELDS[name])
    if bad:
        raise ConfigError(f"params.{name} has unknown fields {sorted(bad)}")
    kw = dict(base)
    if name in SEEDED:
        kw["seed"] = cfg.seed
    if name == "fclt":
        kw["workers"] = workers
    return base, kw


def _run_one(grid, name, kw):
    if name == "fclt":
        dists = kw.get("dist", ["gaussian"])
        dists = [dists] if isinstance(dists, str) else list(dists)
        return [CHECKS[name](grid, **{**kw, "dist": d}) for d in dists]
    return [CHECKS[name](grid, **kw)]


def cmd_verify(args) -> int:
    cfg = load_config(args.config, require_seed=args.seed is None)
    _apply_common(cfg, args)
    grid = cfg.build_grid()
    regime = classify_regime(grid).kind
    if args.check == "all":
        names = [c for c in sorted(cfg.checks) if c in APPLICABLE[regime]]
    else:
        if args.check not in CHECKS:
            raise ConfigError(f"unknown check {args.check!r}; choose from {sorted(CHECKS)} or 'all'")
        names = [args.check]
    overrides = _overrides(args)
    jobs = []
    for name in names:
        base, kw = check_arguments(cfg, name, overrides, args.workers)
        cfg.raw.setdefault("params", {})[name] = base
        jobs.append((name, kw))
    workers = args.workers or default_workers()
    if workers == 1 or len(jobs) == 1:
        results = [_run_one(grid, n, kw) for n, kw in jobs]
    else:
        with ThreadPoolExecutor(min(workers, len(jobs))) as pool:
            results = list(pool.map(lambda job: _run_one(grid, *job), jobs))
    reports = [r for group in results for r in group]
    out = Path(cfg.output)
    runtimes = {}
    ok = True
    for rep in reports:
        tag = rep.check_name if rep.check_name != "fclt" else f"fclt_{rep.config['dist']}"
        runtimes[tag] = rep.runtime
        ok &= rep.passed
        doc = {"metadata": _meta(cfg, runtime=rep.runtime), "report": rep.to_dict()}
        _write(out, f"verify_{tag}.json", dumps(doc) + "\n")
        print(rep.table())
    skipped = sorted(set(cfg.checks) - set(names)) if args.check == "all" else []
    if args.check == "all":
        doc = {
            "metadata": _meta(cfg, runtimes=runtimes),
            "regime": regime.value,
            "skipped": skipped,
            "results": {
                (r.check_name if r.check_name != "fclt" else f"fclt_{r.config['dist']}"): r.passed
                for r in reports
            },
            "pass": ok,
        }
        _write(out, "verify_all.json", dumps(doc) + "\n")
    print(f"{'PASS' if ok else 'FAIL'}: {sum(r.passed for r in reports)}/{len(reports)} reports passed"
          + (f"; skipped for {regime.value} regime: {', '.join(skipped)}" if skipped else ""))
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------- parser


def _add_common(p, seeded=True):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--output", help="output directory (overrides config)")
    p.add_argument("--workers", type=int, help="worker pool size (default: SVLM_WORKERS or CPU count)")
    if seeded:
        p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--R", type=int)
    p.add_argument("--horizon", type=int, help="truncation horizon J")
    p.add_argument("--time-grid", dest="time_grid", type=_floats, help="comma-separated times")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svlm", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    th = sub.add_parser("theory", help="tabulate closed forms")
    th.add_argument("what", choices=["kernel", "gamma", "cconst"])
    th.add_argument("--dr", type=float)
    th.add_argument("--ds", type=float)
    th.add_argument("--kernel", help="V_LONG, WIENER, LONGRUN, FBM or EXACT_N")
    th.add_argument("--h-list", dest="h_list", type=_ints)
    th.add_argument("--format", choices=["csv", "json"], default="csv")
    _add_common(th, seeded=False)

    si = sub.add_parser("simulate", help="simulate polygonal partial-sum ensembles")
    si.add_argument("what", choices=["paths"])
    si.add_argument("--dist", choices=[d.value for d in Dist])
    _add_common(si)

    li = sub.add_parser("limit", help="sample limit Gaussian processes")
    li.add_argument("what", choices=["sample"])
    li.add_argument("--kernel", help="V_LONG, WIENER, LONGRUN, FBM or EXACT_N")
    li.add_argument("--scale", type=float, help="apply the operator scaling with this a")
    _add_common(li)

    ve = sub.add_parser("verify", help="run verification checks")
    ve.add_argument("check", choices=sorted(CHECKS) + ["all"])
    ve.add_argument("--dist", choices=[d.value for d in Dist])
    ve.add_argument("--h-list", dest="h_list", type=_ints)
    ve.add_argument("--a-list", dest="a_list", type=_floats)
    ve.add_argument("--n-list", dest="n_list", type=_ints)
    ve.add_argument("--t", type=float)
    ve.add_argument("--u", type=float)
    ve.add_argument("--dyadic-depth", dest="dyadic_depth", type=int)
    _add_common(ve)
    return parser


COMMANDS = {"theory": cmd_theory, "simulate": cmd_simulate, "limit": cmd_limit, "verify": cmd_verify}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SVLMError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
