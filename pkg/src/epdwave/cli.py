"""Command line interface: ``epdwave <subcommand> ...``.

Exit status is 0 on success, 1 when the input or the arguments are invalid
and 2 when the computation itself fails.  Failures print a single JSON line
``{"error": "validation" | "runtime", "type": ..., "message": ...}`` on
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger("epdwave")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class ValidationError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; route it through our validation path
    def error(self, message):
        raise ValidationError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def _level(text: str):
    if text in ("auto", "data"):
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, 'auto' or 'data', got {text!r}") from None


def _radius(text: str):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def _norm(text: str) -> float:
    return math.inf if text in ("inf", "infinity") else float(text)


# ------------------------------------------------------------------ commands

def cmd_sample(args) -> None:
    from .homology import write_point_cloud
    from .samplers import SamplerSpec, sample_cloud

    spec = SamplerSpec.from_variance(args.noise_var, shape=args.shape, n=args.n, seed=args.seed,
                                     major_radius=args.major_radius, minor_radius=args.minor_radius,
                                     radius=args.radius)
    if args.count == 1 and not args.out.endswith(os.sep) and not os.path.isdir(args.out):
        write_point_cloud(sample_cloud(spec, args.start), args.out)
        return
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.start, args.start + args.count):
        write_point_cloud(sample_cloud(spec, i), os.path.join(args.out, f"cloud_{i:05d}.csv"))


def _inputs(path: str, suffixes=(".csv",)) -> list[str]:
    if os.path.isdir(path):
        files = sorted(os.path.join(path, f) for f in os.listdir(path) if f.endswith(suffixes))
        if not files:
            raise ValidationError(f"no {'/'.join(suffixes)} files in {path}")
        return files
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file or directory: {path}")
    return [path]


def cmd_ph(args) -> None:
    from .homology import read_point_cloud, rips_persistence
    from .measures import write_diagram

    files = _inputs(args.input)
    single = len(files) == 1 and not os.path.isdir(args.input)
    if not single:
        os.makedirs(args.out, exist_ok=True)
    for f in files:
        dgm = rips_persistence(read_point_cloud(f), args.t_max)[args.dim]
        if single:
            write_diagram(dgm, args.out)
        else:
            stem = os.path.splitext(os.path.basename(f))[0]
            write_diagram(dgm, os.path.join(args.out, f"{stem}_h{args.dim}.csv"))


def cmd_estimate(args) -> None:
    from .measures import read_diagrams
    from .wavelet import HaarDensityEstimator

    diagrams = read_diagrams(args.input)
    est = HaarDensityEstimator(K=args.K, J=args.J, R=args.R, tau=args.tau, p=args.p,
                               threshold_scale=args.threshold_scale).fit(diagrams)
    est.to_json(args.out)
    print(json.dumps({"N": est.n_samples_, "K": est.K_, "J": est.J_, "R": est.geometry_.R,
                      "nnz_details": est.n_nonzero_details_, "truncated_mass": est.truncated_mass_}))


def cmd_density_grid(args) -> None:
    from .wavelet import HaarDensityEstimator

    est = HaarDensityEstimator.from_json(args.estimator)
    if not 1 <= args.level <= 12:
        raise ValidationError("level must lie in 1..12")
    u, v, val = est.density_grid(args.level)
    with open(args.out, "w") as fh:
        fh.write("u,v,value\n")
        for row in zip(u.tolist(), v.tolist(), val.tolist()):
            fh.write(",".join(repr(x) for x in row) + "\n")


def cmd_ot(args) -> None:
    from .measures import read_diagram
    from .transport import ot_distance

    mu, nu = read_diagram(args.a), read_diagram(args.b)
    q = args.p if args.q is None else args.q
    value, plan = ot_distance(mu, nu, args.p, q)
    if args.plan:
        plan.to_csv(args.plan)
    print(repr(value))


def cmd_bound(args) -> None:
    from .geometry import DomainGeometry
    from .measures import read_diagram
    from .transport import multiscale_upper_bound

    mu, nu = read_diagram(args.a), read_diagram(args.b)
    if args.R == "auto":
        geom = DomainGeometry.fit(np.concatenate([mu.births, nu.births]), np.concatenate([mu.deaths, nu.deaths]))
    else:
        geom = DomainGeometry(args.R)
    print(repr(multiscale_upper_bound(mu, nu, geom, args.J, args.p)))


_CONVERGE_KEYS = ("M", "Ns", "ps", "taus", "replicates", "seed", "K", "J", "R", "q",
                  "threshold_scale", "homology_dimension", "resolution", "out_dir")
_SAMPLER_KEYS = ("shape", "n", "noise_var", "sampler_seed", "major_radius", "minor_radius", "radius")


def build_config(args):
    """Merge the optional JSON config file with the command line (flags win)."""
    from .experiments import ExperimentConfig
    from .samplers import SamplerSpec

    data: dict = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValidationError("config file must hold a JSON object")
    sampler = dict(data.pop("sampler", {}) or {})
    for key in _SAMPLER_KEYS:
        if key in data:
            sampler[key] = data.pop(key)
    flags = vars(args)
    for key in _CONVERGE_KEYS:
        if flags.get(key) is not None:
            data[key] = flags[key]
    for key in _SAMPLER_KEYS:
        if flags.get(key) is not None:
            sampler[key] = flags[key]
    if "noise_var" in sampler:
        sampler["noise_sd"] = math.sqrt(float(sampler.pop("noise_var")))
    seed = data.get("seed", 0)
    sampler["seed"] = sampler.pop("sampler_seed", sampler.get("seed", seed))
    try:
        spec = SamplerSpec(**sampler)
        return ExperimentConfig(sampler=spec, **data)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None


def cmd_converge(args) -> None:
    from .experiments import binning_report, compute_pool, fit_all, run_convergence, write_outputs

    config = build_config(args)
    out_dir = config.out_dir or "converge_out"
    log.info("computing %d diagrams", config.M)
    pool = compute_pool(config.sampler, config.M, config.homology_dimension)
    records = run_convergence(config, pool, progress=lambda N, r: log.info("N=%d replicate=%d done", N, r))
    binning = binning_report(pool, config)
    paths = write_outputs(records, replace(config, out_dir=out_dir), out_dir, binning)
    print(json.dumps({"records": paths["records.csv"], "fits": fit_all(records), "binning": binning}))


def cmd_fit(args) -> None:
    from .experiments import MODELS, fit_rate, read_records

    records = read_records(args.records)
    ps = sorted({r.p for r in records}) if args.p is None else [args.p]
    out = []
    for p in ps:
        taus = sorted({r.tau for r in records if r.p == p}) if args.tau is None else [args.tau]
        for tau in taus:
            for model in (MODELS if args.model == "both" else (args.model,)):
                a, b, res = fit_rate(records, model, p, tau)
                out.append({"p": p, "tau": tau, "model": model, "a": a, "b": b, "residual": res})
    text = json.dumps(out, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="epdwave", description="Haar wavelet estimation of expected persistence diagrams.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="sample noisy point clouds")
    p.add_argument("--shape", choices=("torus", "double_torus", "circle"), default="torus", help="surface to sample")
    p.add_argument("--n", type=int, default=200, help="points per cloud")
    p.add_argument("--noise-var", type=float, default=0.5, help="variance of the Gaussian noise per coordinate")
    p.add_argument("--seed", type=int, default=0, help="base seed; cloud i uses substream i")
    p.add_argument("--count", type=int, default=1, help="number of clouds; more than one writes a directory")
    p.add_argument("--start", type=int, default=0, help="index of the first cloud")
    p.add_argument("--major-radius", type=float, default=2.0, help="torus centre-circle radius")
    p.add_argument("--minor-radius", type=float, default=0.5, help="torus tube radius")
    p.add_argument("--radius", type=float, default=1.0, help="circle radius")
    p.add_argument("--out", required=True, help="output CSV file, or directory when --count > 1")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("ph", help="Vietoris-Rips persistence diagrams of point clouds")
    p.add_argument("input", help="point-cloud CSV or a directory of them")
    p.add_argument("--dim", type=int, choices=(0, 1), default=1, help="homology degree")
    p.add_argument("--t-max", type=float, default=None, help="filtration cut-off (default: largest distance)")
    p.add_argument("--out", required=True, help="diagram CSV, or directory for several inputs")
    p.set_defaults(func=cmd_ph)

    p = sub.add_parser("estimate", help="fit a (thresholded) Haar estimator to diagrams")
    p.add_argument("--in", dest="input", required=True, help="diagram file or directory of diagrams")
    p.add_argument("--K", type=_level, default="auto", help="last strip: integer, 'auto' (ceil log2 N) or 'data'")
    p.add_argument("--J", type=_level, default="auto", help="detail depth: integer or 'auto' (ceil log2 N)")
    p.add_argument("--R", type=_radius, default="auto", help="support scale or 'auto'")
    p.add_argument("--tau", type=float, default=0.0, help="hard threshold parameter")
    p.add_argument("--p", type=float, default=2.0, help="transport exponent in the threshold")
    p.add_argument("--threshold-scale", type=float, default=1.0, help="prefactor of the threshold")
    p.add_argument("--out", required=True, help="estimator JSON")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("density-grid", help="export the estimated density on a dyadic grid")
    p.add_argument("estimator", help="estimator JSON written by 'estimate'")
    p.add_argument("--level", type=int, default=6, help="grid level; the grid has 4**level squares")
    p.add_argument("--out", required=True, help="CSV with columns u,v,value")
    p.set_defaults(func=cmd_density_grid)

    p = sub.add_parser("ot", help="optimal partial transport distance between two diagrams")
    p.add_argument("a", help="first diagram file")
    p.add_argument("b", help="second diagram file")
    p.add_argument("--p", type=float, default=2.0, help="transport exponent")
    p.add_argument("--q", type=_norm, default=None, help="ground norm (default: p); 'inf' allowed")
    p.add_argument("--plan", default=None, help="optional CSV dump of the optimal plan")
    p.set_defaults(func=cmd_ot)

    p = sub.add_parser("bound", help="multiscale upper bound on OT_p**p")
    p.add_argument("a", help="first diagram file")
    p.add_argument("b", help="second diagram file")
    p.add_argument("--J", type=int, default=6, help="number of refinement levels")
    p.add_argument("--p", type=float, default=2.0, help="transport exponent")
    p.add_argument("--R", type=_radius, default="auto", help="support scale or 'auto'")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("converge", help="run the convergence experiment")
    p.add_argument("--config", default=None, help="JSON file with any of the flags below; flags override it")
    p.add_argument("--shape", choices=("torus", "double_torus", "circle"), default=None, help="surface (default torus)")
    p.add_argument("--n", type=int, default=None, help="points per cloud (default 200)")
    p.add_argument("--noise-var", dest="noise_var", type=float, default=None, help="noise variance (default 0.5)")
    p.add_argument("--major-radius", dest="major_radius", type=float, default=None, help="torus centre-circle radius")
    p.add_argument("--minor-radius", dest="minor_radius", type=float, default=None, help="torus tube radius")
    p.add_argument("--M", type=int, default=None, help="reference pool size (default 2000)")
    p.add_argument("--Ns", type=_int_list, default=None, help="comma separated sample sizes")
    p.add_argument("--p", dest="ps", type=_float_list, default=None, help="comma separated transport exponents")
    p.add_argument("--tau", dest="taus", type=_float_list, default=None, help="comma separated thresholds")
    p.add_argument("--replicates", type=int, default=None, help="replicates per N (default 10)")
    p.add_argument("--seed", type=int, default=None, help="seed of the subset draws and, unless --sampler-seed, the clouds")
    p.add_argument("--sampler-seed", dest="sampler_seed", type=int, default=None, help="seed of the point clouds")
    p.add_argument("--K", type=_level, default=None, help="strip policy (default 'data')")
    p.add_argument("--J", type=_level, default=None, help="detail depth (default 'auto')")
    p.add_argument("--R", type=_radius, default=None, help="support scale (default: fitted to the pool)")
    p.add_argument("--q", type=_norm, default=None, help="ground norm (default: p)")
    p.add_argument("--threshold-scale", dest="threshold_scale", type=float, default=None, help="threshold prefactor")
    p.add_argument("--dim", dest="homology_dimension", type=int, choices=(0, 1), default=None, help="homology degree")
    p.add_argument("--resolution", type=int, default=None, help="bin level for discretisation (default 9)")
    p.add_argument("--out-dir", dest="out_dir", default=None, help="output directory (default converge_out)")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("fit", help="fit convergence models to a record CSV")
    p.add_argument("records", help="records.csv written by 'converge'")
    p.add_argument("--model", choices=("power", "power_log", "both"), default="both", help="model function")
    p.add_argument("--p", type=float, default=None, help="restrict to one p")
    p.add_argument("--tau", type=float, default=None, help="restrict to one tau")
    p.add_argument("--out", default=None, help="optional JSON output file")
    p.set_defaults(func=cmd_fit)
    return parser


def _fail(kind: str, exc: BaseException) -> None:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": msg}) + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ValidationError as exc:
        _fail("validation", exc)
        return EXIT_VALIDATION
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, FileNotFoundError, IsADirectoryError, KeyError) as exc:
        _fail("validation", exc)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime failure
        _fail("runtime", exc)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
