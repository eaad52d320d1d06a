"""Monte Carlo estimators of the nodal-component constant.

Planar constants are normalized by R**2 (not by the disk area pi R**2);
torus constants by n.  Literature values quoted per unit area differ from
the planar numbers here by a factor pi.

Every trial t of a run uses the derived seed ``derive_seed(base_seed, t)``,
and aggregation always runs over trials in index order, so results do not
depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from nodallab.lattice import in_S, spectral_measure_mu_n
from nodallab.measures import (
    SpectralMeasure,
    cilleruelo,
    fourier_coefficient,
    mix,
    uniform_circle,
    weak_star_distance,
)
from nodallab.synthesis import (
    DEFAULT_H,
    default_torus_grid,
    derive_seed,
    sample_planar,
    sample_torus,
)
from nodallab.topology import count_components, count_flips, count_wrapping

log = logging.getLogger(__name__)

GROWTH_LABEL = "Cilleruelo growth: suggestive only, not a verification"


class EstimationError(RuntimeError):
    """A trial failed; ``partial`` holds the records completed before it."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial or []


@dataclass
class TrialRecord:
    trial: int
    seed: int
    compact: int
    boundary: int
    pos_domains: int
    neg_domains: int
    flips: Optional[int] = None
    wrapping: Optional[int] = None

    def to_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        return json.dumps(d)


@dataclass
class EstimateResult:
    c_hat: float
    stderr: float
    trials: int
    base_seed: int
    measure_label: str
    boundary_rate: float = 0.0
    R: Optional[float] = None
    h: Optional[float] = None
    n: Optional[int] = None
    N: Optional[int] = None
    records: list = field(default_factory=list, repr=False)

    @property
    def domain(self) -> str:
        return "torus" if self.n is not None else "planar"

    @property
    def scale(self) -> float:
        """R**2 (planar) or n (torus): the divisor of the raw counts."""
        return float(self.n) if self.n is not None else float(self.R) ** 2

    @property
    def mean_count(self) -> float:
        return self.c_hat * self.scale

    @property
    def count_stderr(self) -> float:
        return self.stderr * self.scale

    def per_trial(self) -> np.ndarray:
        return np.array([r.compact for r in self.records], dtype=float) / self.scale

    def summary(self) -> dict:
        d = {
            "domain": self.domain,
            "c_hat": self.c_hat,
            "stderr": self.stderr,
            "trials": self.trials,
            "base_seed": self.base_seed,
            "measure_label": self.measure_label,
            "normalization": "per n" if self.n is not None else "per R^2",
        }
        if self.n is not None:
            d.update(n=self.n, N=self.N)
            wr = [r.wrapping for r in self.records if r.wrapping is not None]
            if wr:
                d["mean_wrapping_components"] = float(np.mean(wr))
        else:
            d.update(R=self.R, h=self.h, boundary_rate=self.boundary_rate,
                     boundary_components="excluded from c_hat, reported in boundary_rate")
        fl = [r.flips for r in self.records if r.flips is not None]
        if fl:
            d["mean_flips"] = float(np.mean(fl))
        return d


def _aggregate(records, scale: float):
    x = np.array([r.compact for r in records], dtype=float) / scale
    # fixed summation order (trial index) keeps results bit-reproducible
    c_hat = float(math.fsum(x) / len(x))
    stderr = float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else float("nan")
    return c_hat, stderr


def _planar_trial(args) -> TrialRecord:
    m, R, h, trial, seed, with_flips = args
    s = sample_planar(m, R, h, seed=seed, with_gradient=with_flips)
    c = count_components(s)
    flips = count_flips(s) if with_flips else None
    return TrialRecord(trial, seed, c.compact_zero_components, c.boundary_zero_components,
                       c.positive_domains, c.negative_domains, flips)


def _torus_trial(args) -> TrialRecord:
    n, N, trial, seed, wrapping = args
    s = sample_torus(n, N, seed=seed)
    c = count_components(s)
    w = count_wrapping(s) if wrapping else None
    return TrialRecord(trial, seed, c.compact_zero_components, 0,
                       c.positive_domains, c.negative_domains, wrapping=w)


def _run(task: Callable, jobs: list, workers: int, on_record=None) -> list:
    records = []
    try:
        if workers <= 1:
            for job in jobs:
                rec = task(job)
                records.append(rec)
                if on_record:
                    on_record(rec)
        else:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                for rec in ex.map(task, jobs, chunksize=max(1, len(jobs) // (4 * workers))):
                    records.append(rec)
                    if on_record:
                        on_record(rec)
    except Exception as exc:  # keep what finished
        raise EstimationError(f"trial {len(records)} failed: {exc}", records) from exc
    return records


def estimate_cns_planar(m: SpectralMeasure, R: float, h: float = DEFAULT_H, trials: int = 200,
                        base_seed: int = 0, *, workers: int = 1, with_flips: bool = False,
                        on_record=None) -> EstimateResult:
    """c_hat = mean over trials of (compact zero components in B(0, R)) / R**2."""
    if trials < 2:
        raise ValueError("need at least 2 trials")
    jobs = [(m, R, h, t, derive_seed(base_seed, t), with_flips) for t in range(trials)]
    records = _run(_planar_trial, jobs, workers, on_record)
    c_hat, stderr = _aggregate(records, R * R)
    boundary_rate = math.fsum(r.boundary for r in records) / len(records) / R
    return EstimateResult(c_hat, stderr, trials, base_seed, m.label, boundary_rate,
                          R=float(R), h=float(h), records=records)


def estimate_cns_torus(n: int, N: Optional[int] = None, trials: int = 200, base_seed: int = 0, *,
                       workers: int = 1, wrapping: bool = False, on_record=None) -> EstimateResult:
    """c_hat = mean over trials of (all nodal components of f_n) / n."""
    if not in_S(n):
        raise ValueError(f"{n} is not a sum of two squares")
    if trials < 2:
        raise ValueError("need at least 2 trials")
    N = default_torus_grid(n) if N is None else int(N)
    jobs = [(n, N, t, derive_seed(base_seed, t), wrapping) for t in range(trials)]
    records = _run(_torus_trial, jobs, workers, on_record)
    c_hat, stderr = _aggregate(records, float(n))
    return EstimateResult(c_hat, stderr, trials, base_seed, f"mu_n:{n}", 0.0,
                          n=int(n), N=N, records=records)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    parameter: str
    points: list
    fit: Optional[dict] = None
    report: dict = field(default_factory=dict)
    label: str = ""

    @property
    def params(self) -> list:
        return [p for p, _ in self.points]

    @property
    def c_hats(self) -> np.ndarray:
        return np.array([e.c_hat for _, e in self.points])

    @property
    def stderrs(self) -> np.ndarray:
        return np.array([e.stderr for _, e in self.points])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.parameter, "c_hat", "stderr", "trials"])
        for p, e in self.points:
            w.writerow([repr(float(p)), repr(e.c_hat), repr(e.stderr), e.trials])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "parameter": self.parameter,
            "label": self.label,
            "points": [{"param": float(p), **e.summary()} for p, e in self.points],
            "fit": self.fit,
            "report": self.report,
        }


def _check_increasing(xs, name):
    xs = list(xs)
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValueError(f"{name} must be strictly increasing")
    return xs


def fit_quadratic_linear(R, counts, count_err) -> dict:
    """Least squares E[N] = c R^2 + b R; residuals in units of stderr."""
    R = np.asarray(R, float)
    y = np.asarray(counts, float)
    A = np.column_stack([R ** 2, R])
    (c, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([c, b])
    err = np.asarray(count_err, float)
    # stderr of c from the per-point count errors (ordinary least squares)
    cov = np.linalg.pinv(A.T @ A) @ A.T @ np.diag(err ** 2) @ A @ np.linalg.pinv(A.T @ A)
    return {
        "c": float(c),
        "b": float(b),
        "c_stderr": float(math.sqrt(max(cov[0, 0], 0.0))),
        "b_stderr": float(math.sqrt(max(cov[1, 1], 0.0))),
        "residuals": resid.tolist(),
        "residual_in_stderr": (np.abs(resid) / np.where(err > 0, err, np.inf)).tolist(),
    }


def sweep_R(m: SpectralMeasure, R_list: Sequence[float], h: float = DEFAULT_H, trials: int = 100,
            base_seed: int = 0, *, workers: int = 1) -> SweepResult:
    """Estimates at several R with the fit E[N] = c R^2 + b R."""
    R_list = _check_increasing(R_list, "R_list")
    if len(R_list) < 3:
        raise ValueError("sweep_R needs at least 3 radii")
    pts = [(R, estimate_cns_planar(m, R, h, trials, base_seed, workers=workers)) for R in R_list]
    fit = fit_quadratic_linear(R_list, [e.mean_count for _, e in pts],
                               [e.count_stderr for _, e in pts])
    return SweepResult("R", pts, fit, label=m.label)


def _jump_report(ts, est) -> dict:
    c = np.array([e.c_hat for e in est])
    s = np.array([e.stderr for e in est])
    jumps = np.abs(np.diff(c))
    comb = np.sqrt(s[1:] ** 2 + s[:-1] ** 2)
    rng = float(c.max() - c.min())
    bound = np.maximum(3 * comb, 0.1 * rng)
    return {
        "t": list(map(float, ts)),
        "jumps": jumps.tolist(),
        "combined_stderr": comb.tolist(),
        "jump_bound": bound.tolist(),
        "path_range": rng,
        "continuous": bool(np.all(jumps <= bound)),
    }


def continuity_path(a: SpectralMeasure, b: SpectralMeasure, t_list: Sequence[float], R: float,
                    h: float = DEFAULT_H, trials: int = 100, base_seed: int = 0, *,
                    workers: int = 1) -> SweepResult:
    """Estimates along the segment mix(a, b, t); every t reuses the same seeds."""
    t_list = _check_increasing(t_list, "t_list")
    if t_list[0] < 0 or t_list[-1] > 1:
        raise ValueError("t values must lie in [0, 1]")
    pts = [(t, estimate_cns_planar(mix(a, b, t), R, h, trials, base_seed, workers=workers))
           for t in t_list]
    return SweepResult("t", pts, report=_jump_report(t_list, [e for _, e in pts]),
                       label=f"mix({a.label},{b.label},t)")


def coverage_report(c_hats: Sequence[float], c_end: float, max_adjacent: float) -> dict:
    """Largest gap left uncovered in [0, c_end] by the sorted estimates."""
    vals = np.sort(np.clip(np.asarray(c_hats, float), 0.0, None))
    grid = np.concatenate([[0.0], vals[vals <= c_end], [c_end]])
    max_gap = float(np.max(np.diff(grid))) if len(grid) > 1 else 0.0
    return {
        "min_c_hat": float(vals.min()),
        "end_c_hat": float(c_end),
        "max_gap": max_gap,
        "max_adjacent_diff": float(max_adjacent),
        "covered": bool(max_gap <= 2 * max_adjacent),
    }


def interval_sweep(t_list: Sequence[float], R: float, h: float = DEFAULT_H, trials: int = 100,
                   base_seed: int = 0, *, num_atoms: int = 64, workers: int = 1) -> SweepResult:
    """continuity_path from the Cilleruelo measure to the uniform measure,
    with the coverage of [0, c_hat(1)] reported."""
    sw = continuity_path(cilleruelo(), uniform_circle(num_atoms), t_list, R, h, trials,
                         base_seed, workers=workers)
    c = sw.c_hats
    max_adj = float(np.max(np.abs(np.diff(c)))) if len(c) > 1 else 0.0
    sw.report.update(coverage_report(c, float(c[-1]), max_adj))
    return sw


def fourier_dependence_scan(pairs, R: float, h: float = DEFAULT_H, trials: int = 100,
                            base_seed: int = 0, *, harmonics: Sequence[int] = (4,),
                            workers: int = 1) -> list[dict]:
    """Compare c_hat for pairs of measures sharing their low Fourier
    coefficients.  Differences beyond 3 combined stderr are flagged only."""
    report = []
    for a, b in pairs:
        try:
            mismatch = max(abs(fourier_coefficient(a, k) - fourier_coefficient(b, k))
                           for k in harmonics)
        except ValueError as exc:
            log.warning("skipping pair %s/%s: %s", a.label, b.label, exc)
            continue
        if mismatch > 1e-9:
            log.warning("skipping pair %s/%s: coefficients differ by %.3g", a.label, b.label, mismatch)
            continue
        ea = estimate_cns_planar(a, R, h, trials, base_seed, workers=workers)
        eb = estimate_cns_planar(b, R, h, trials, base_seed, workers=workers)
        diff = abs(ea.c_hat - eb.c_hat)
        comb = math.hypot(ea.stderr, eb.stderr)
        report.append({
            "a": a.label, "b": b.label,
            "c_hat_a": ea.c_hat, "c_hat_b": eb.c_hat,
            "difference": diff, "combined_stderr": comb,
            "flagged": bool(diff > 3 * comb),
        })
    return report


def cilleruelo_growth_fit(n_list: Sequence[int], N_rule: Optional[Callable[[int], int]] = None,
                          trials: int = 50, base_seed: int = 0, *,
                          target: Optional[SpectralMeasure] = None, max_distance: float = 0.2,
                          workers: int = 1, label: str = GROWTH_LABEL) -> SweepResult:
    """Log-log fit of the mean torus component count against n.

    By default every n must have mu_n within ``max_distance`` of the
    Cilleruelo measure (4 harmonics); pass another ``target`` for control
    runs.  The exponent is reported with a 95% confidence interval.
    """
    n_list = _check_increasing(n_list, "n_list")
    if len(n_list) < 3:
        raise ValueError("insufficient points for fit")
    target = cilleruelo() if target is None else target
    for n in n_list:
        if not in_S(n):
            raise ValueError(f"{n} is not a sum of two squares")
        d = weak_star_distance(spectral_measure_mu_n(n), target, 4)
        if d > max_distance:
            raise ValueError(f"mu_{n} is at distance {d:.3g} > {max_distance} from {target.label}")
    N_rule = N_rule or default_torus_grid
    pts = [(n, estimate_cns_torus(n, N_rule(n), trials, base_seed, workers=workers)) for n in n_list]
    means = np.array([e.mean_count for _, e in pts])
    fit = None
    if np.all(means > 0):
        lr = stats.linregress(np.log(n_list), np.log(means))
        tq = stats.t.ppf(0.975, len(n_list) - 2) if len(n_list) > 2 else float("nan")
        fit = {
            "exponent": float(lr.slope),
            "intercept": float(lr.intercept),
            "exponent_stderr": float(lr.stderr),
            "exponent_ci95": [float(lr.slope - tq * lr.stderr), float(lr.slope + tq * lr.stderr)],
        }
    return SweepResult("n", pts, fit, report={"target": target.label}, label=label)
