"""Convergence experiments: estimation error of Haar estimators as the sample grows.

A pool of ``M`` diagrams is computed once from sampled point clouds.  Its
empirical mean stands in for the expected persistence diagram.  For every
sample size ``N`` and replicate, ``N`` diagrams are drawn from the pool
without replacement, the Haar estimator is fitted and thresholded for every
``tau``, and its transport error to the reference is recorded.

Estimates and the reference are both moved to the centres of the bins of a
fixed resolution before the transport problem is solved (see
:func:`epdwave.wavelet.bin_measure`).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .geometry import DomainGeometry
from .homology import rips_persistence
from .measures import PersistenceMeasure, empirical_mean
from .samplers import SamplerSpec, sample_cloud
from .transport import ot_signed
from .wavelet import HaarDensityEstimator, bin_measure, binning_cost

RECORD_COLUMNS = ("p", "tau", "N", "replicate", "error", "nnz_coeffs")
MODELS = ("power", "power_log")


log = logging.getLogger(__name__)


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    """Everything that determines a convergence run.

    ``seed`` drives the subset draws; the point clouds use ``sampler.seed``.
    ``q`` is the ground norm, ``None`` meaning ``q = p``.  ``resolution`` is
    the bin level used to discretise estimates and the reference.
    """

    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    M: int = 2000
    Ns: tuple = (10, 20, 35, 60, 100, 160, 200)
    ps: tuple = (2.0,)
    taus: tuple = (0.0,)
    replicates: int = 10
    seed: int = 0
    K: object = "data"
    J: object = "auto"
    R: object = "auto"
    q: Optional[float] = None
    threshold_scale: float = 1.0
    homology_dimension: int = 1
    resolution: int = 9
    out_dir: Optional[str] = None

    def __post_init__(self):
        self.Ns = tuple(int(n) for n in self.Ns)
        self.ps = tuple(float(p) for p in self.ps)
        self.taus = tuple(float(t) for t in self.taus)
        if isinstance(self.sampler, dict):
            self.sampler = SamplerSpec(**self.sampler)
        self.validate()

    def validate(self) -> None:
        if not self.Ns or min(self.Ns) < 1:
            raise ValueError("Ns must be a nonempty list of positive sample sizes")
        if max(self.Ns) > self.M:
            raise ValueError(f"max(Ns) = {max(self.Ns)} exceeds the pool size M = {self.M}")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not self.ps or min(self.ps) < 1:
            raise ValueError("every p must be >= 1")
        if not self.taus or min(self.taus) < 0:
            raise ValueError("every tau must be >= 0")
        if self.homology_dimension not in (0, 1):
            raise ValueError("homology_dimension must be 0 or 1")
        if not 1 <= self.resolution <= 20:
            raise ValueError("resolution must lie in 1..20")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["Ns"], d["ps"], d["taus"] = list(self.Ns), list(self.ps), list(self.taus)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class ConvergenceRecord:
    p: float
    tau: float
    N: int
    replicate: int
    error: float
    nnz_coeffs: int
    seconds: float = 0.0


def compute_pool(spec: SamplerSpec, M: int, homology_dimension: int = 1, progress=None) -> list[PersistenceMeasure]:
    """Diagrams of the clouds ``0 .. M-1`` of ``spec``."""
    out = []
    for i in range(M):
        out.append(rips_persistence(sample_cloud(spec, i))[homology_dimension])
        if progress is not None:
            progress(i + 1, M)
    return out


def subset_rng(seed: int, N: int, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(N, replicate))))


def draw_subset(M: int, N: int, seed: int, replicate: int) -> np.ndarray:
    """Indices of ``N`` distinct pool diagrams for one replicate."""
    return np.sort(subset_rng(seed, N, replicate).choice(M, size=N, replace=False))


def pool_geometry(pool: Sequence[PersistenceMeasure], R="auto") -> DomainGeometry:
    if isinstance(R, DomainGeometry):
        return R
    if R != "auto":
        return DomainGeometry(float(R))
    b = np.concatenate([d.births for d in pool]) if pool else np.empty(0)
    t = np.concatenate([d.deaths for d in pool]) if pool else np.empty(0)
    return DomainGeometry.fit(b, t)


def run_convergence(config: ExperimentConfig, pool: Optional[Sequence[PersistenceMeasure]] = None, progress=None) -> list[ConvergenceRecord]:
    """Run the experiment; ``pool`` may pass precomputed diagrams of the ``M`` clouds.

    Records come out ordered by ``(N, replicate, p, tau)``.
    """
    config.validate()
    if pool is None:
        pool = compute_pool(config.sampler, config.M, config.homology_dimension)
    elif len(pool) < config.M:
        raise ValueError(f"pool holds {len(pool)} diagrams, config needs M = {config.M}")
    pool = list(pool[: config.M])
    geom = pool_geometry(pool, config.R)
    reference = bin_measure(empirical_mean(pool), geom, config.resolution)

    records = []
    for N in config.Ns:
        for r in range(config.replicates):
            try:
                records += _one_replicate(config, pool, geom, reference, N, r)
            except Exception as exc:  # noqa: BLE001 - re-raised with context
                raise ExperimentError(f"N={N} replicate={r}: {type(exc).__name__}: {exc}") from exc
            if progress is not None:
                progress(N, r)
    return records


def binning_report(pool: Sequence[PersistenceMeasure], config: ExperimentConfig) -> list[dict]:
    """Transport cost of binning the reference, one entry per ``p``.

    ``OT_p`` is a metric, so ``cost ** (1/p)`` bounds how far binning the
    reference moves every reported ``error ** (1/p)``.
    """
    pool = list(pool[: config.M])
    geom = pool_geometry(pool, config.R)
    mean = empirical_mean(pool)
    out = []
    for p in config.ps:
        q = p if config.q is None else config.q
        cost = binning_cost(mean, geom, config.resolution, p, q)
        out.append({"p": p, "q": q, "resolution": config.resolution, "R": geom.R,
                    "reference_binning_cost": cost, "reference_binning_bound": cost ** (1.0 / p)})
    return out


def _one_replicate(config, pool, geom, reference, N, r):
    idx = draw_subset(config.M, N, config.seed, r)
    t0 = time.perf_counter()
    base = HaarDensityEstimator(K=config.K, J=config.J, R=geom, tau=0.0,
                                threshold_scale=config.threshold_scale).fit([pool[i] for i in idx])
    fit_seconds = time.perf_counter() - t0
    out = []
    for p in config.ps:
        q = p if config.q is None else config.q
        for tau in config.taus:
            t0 = time.perf_counter()
            est = base.threshold(tau, p)
            plus, minus = est.discretize(config.resolution, signed=True)
            err = ot_signed(plus, minus, reference, p, q) ** p
            out.append(ConvergenceRecord(p, tau, N, r, err, est.n_nonzero_details_,
                                         fit_seconds + time.perf_counter() - t0))
    return out


def mean_errors(records: Sequence[ConvergenceRecord], p: Optional[float] = None, tau: Optional[float] = None):
    """Mean error per ``N`` as sorted arrays ``(Ns, means)``."""
    sel = [r for r in records if (p is None or r.p == p) and (tau is None or r.tau == tau)]
    if not sel:
        raise ValueError("no records match the requested (p, tau)")
    Ns = sorted({r.N for r in sel})
    means = [float(np.mean([r.error for r in sel if r.N == n])) for n in Ns]
    return np.array(Ns, dtype=float), np.array(means)


def fit_rate(records, model: str = "power", p: Optional[float] = None, tau: Optional[float] = None):
    """Fit ``a * N**-b`` (``power``) or ``a * N**-b * log2(N)`` (``power_log``) to mean errors.

    ``records`` is a sequence of :class:`ConvergenceRecord` or of ``(N, error)``
    pairs.  The fit is least squares in log space; returns ``(a, b, residual)``
    with ``residual`` the RMS of the log residuals.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}")
    if records and not isinstance(records[0], ConvergenceRecord):
        arr = np.asarray(records, dtype=float)
        Ns = np.unique(arr[:, 0])
        y = np.array([arr[arr[:, 0] == n, 1].mean() for n in Ns])
    else:
        Ns, y = mean_errors(records, p, tau)
    if Ns.size < 3:
        raise ValueError("need at least 3 distinct N values")
    if np.any(y <= 0):
        raise ValueError("mean errors must be positive")
    target = np.log(y)
    if model == "power_log":
        if np.any(Ns < 2):
            raise ValueError("power_log needs N >= 2")
        target = target - np.log(np.log2(Ns))
    A = np.column_stack([np.ones_like(Ns), -np.log(Ns)])
    coef, *_ = np.linalg.lstsq(A, target, rcond=None)
    resid = target - A @ coef
    return float(math.exp(coef[0])), float(coef[1]), float(math.sqrt(np.mean(resid ** 2)))


def fit_all(records: Sequence[ConvergenceRecord]) -> list[dict]:
    out = []
    for p in sorted({r.p for r in records}):
        for tau in sorted({r.tau for r in records if r.p == p}):
            for model in MODELS:
                try:
                    a, b, res = fit_rate(records, model, p, tau)
                except ValueError as exc:
                    log.warning("no %s fit for p=%g tau=%g: %s", model, p, tau, exc)
                    continue
                out.append({"p": p, "tau": tau, "model": model, "a": a, "b": b, "residual": res})
    return out


def write_records(records: Sequence[ConvergenceRecord], path) -> None:
    """Record CSV; wall-clock times are kept out so reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([repr(r.p), repr(r.tau), r.N, r.replicate, repr(float(r.error)), r.nnz_coeffs])


def write_timings(records: Sequence[ConvergenceRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("p", "tau", "N", "replicate", "seconds"))
        for r in records:
            w.writerow([repr(r.p), repr(r.tau), r.N, r.replicate, f"{r.seconds:.6f}"])


def read_records(path) -> list[ConvergenceRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = set(RECORD_COLUMNS) - set(rows[0] if rows else RECORD_COLUMNS)
    if missing:
        raise ValueError(f"record file lacks columns {sorted(missing)}")
    return [
        ConvergenceRecord(float(r["p"]), float(r["tau"]), int(r["N"]), int(r["replicate"]),
                          float(r["error"]), int(r["nnz_coeffs"]), float(r.get("seconds") or 0.0))
        for r in rows
    ]


def write_outputs(records, config: ExperimentConfig, out_dir, binning: Optional[list] = None) -> dict:
    """Write ``records.csv``, ``timings.csv``, ``fits.json``, ``config.json`` and,
    when given, ``binning.json``; return the paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    names = ("records.csv", "timings.csv", "fits.json", "config.json") + (("binning.json",) if binning is not None else ())
    paths = {name: os.path.join(out_dir, name) for name in names}
    if binning is not None:
        with open(paths["binning.json"], "w") as fh:
            json.dump(binning, fh, indent=2)
    write_records(records, paths["records.csv"])
    write_timings(records, paths["timings.csv"])
    with open(paths["fits.json"], "w") as fh:
        json.dump(fit_all(records), fh, indent=2)
    with open(paths["config.json"], "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)
    return paths
