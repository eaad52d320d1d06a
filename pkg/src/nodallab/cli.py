"""Command-line front end: ``nodallab estimate|torus|sweep|lattice``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from nodallab import __version__
from nodallab.estimation import (
    GROWTH_LABEL,
    EstimationError,
    cilleruelo_growth_fit,
    continuity_path,
    estimate_cns_planar,
    estimate_cns_torus,
    fourier_dependence_scan,
    interval_sweep,
    sweep_R,
)
from nodallab.lattice import (
    in_S,
    r2,
    search_by_angular_target,
    search_csv,
    spectral_measure_mu_n,
    sum_two_squares_reps,
)
from nodallab.measures import (
    MeasureError,
    SpectralMeasure,
    cilleruelo,
    fourier_coefficient,
    mix,
    pair_measure,
    symmetric_octet,
    tilted_cilleruelo,
    uniform_circle,
)
from nodallab.synthesis import DEFAULT_H, default_torus_grid

log = logging.getLogger("nodallab")

OUT_ENV = "NODALLAB_OUT"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# measure specs


def _split_args(body: str) -> list[str]:
    parts, depth, cur = [], 0, ""
    for ch in body:
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    parts.append(cur)
    return [p.strip() for p in parts]


def parse_measure(text: str) -> SpectralMeasure:
    """Measure from its command-line name.

    Accepted: ``cilleruelo``, ``tilted-cilleruelo``, ``uniform<k>``,
    ``pair``, ``mu_n:<n>``, ``mix(<a>,<b>,<t>)`` and ``file:<path>``
    (JSON with ``label`` and ``atoms``).
    """
    s = text.strip()
    try:
        if s == "cilleruelo":
            return cilleruelo()
        if s == "tilted-cilleruelo":
            return tilted_cilleruelo()
        if s == "pair":
            return pair_measure()
        if m := re.fullmatch(r"uniform(\d+)", s):
            return uniform_circle(int(m.group(1)))
        if m := re.fullmatch(r"mu_n:(\d+)", s):
            return spectral_measure_mu_n(int(m.group(1)))
        if s.startswith("mix(") and s.endswith(")"):
            args = _split_args(s[4:-1])
            if len(args) != 3:
                raise ConfigError(f"mix needs three arguments: {text}")
            return mix(parse_measure(args[0]), parse_measure(args[1]), float(args[2]))
        if s.startswith("file:"):
            with open(s[5:]) as fh:
                return SpectralMeasure.from_dict(json.load(fh))
    except (MeasureError, OSError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad measure {text!r}: {exc}") from exc
    raise ConfigError(f"unknown measure {text!r}")


def _floats(text: str) -> list[float]:
    """'0,0.1,...,1' style lists; '...' continues the first step."""
    items = [t.strip() for t in text.split(",") if t.strip()]
    if "..." in items:
        k = items.index("...")
        if k < 2 or k != len(items) - 2:
            raise ConfigError(f"bad range {text!r}")
        a, b, end = float(items[0]), float(items[1]), float(items[-1])
        step = b - a
        count = int(round((end - a) / step))
        return [round(a + i * step, 12) for i in range(count + 1)]
    try:
        return [float(t) for t in items]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


# ---------------------------------------------------------------------------
# run bookkeeping


class Run:
    """Output directory with a manifest, a trial log and a run log."""

    def __init__(self, name: str, config: dict, out: Path):
        self.name = name
        self.config = config
        self.out = out
        out.mkdir(parents=True, exist_ok=True)
        self.manifest_path = out / "manifest.json"
        self.manifest = {
            "experiment": name,
            "config": config,
            "base_seed": config.get("seed"),
            "version": __version__,
            "start": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "end": None,
            "outputs": [],
        }
        self._write_manifest()
        self._trial_fh = None
        self._log_handler = logging.FileHandler(out / "run.log", mode="w")
        self._log_handler.setFormatter(logging.Formatter("%(message)s"))
        logging.getLogger("nodallab").addHandler(self._log_handler)
        logging.getLogger("nodallab").setLevel(logging.INFO)

    def _write_manifest(self):
        self.manifest_path.write_text(json.dumps(self.manifest, indent=2) + "\n")

    def path(self, name: str) -> Path:
        p = self.out / name
        if str(p) not in self.manifest["outputs"]:
            self.manifest["outputs"].append(str(p))
        return p

    def trial_logger(self, name: str = "trials.jsonl"):
        fh = open(self.path(name), "w")

        def write(rec):
            fh.write(rec.to_json() + "\n")
            fh.flush()

        return fh, write

    def write_json(self, name: str, obj) -> None:
        self.path(name).write_text(json.dumps(obj, indent=2) + "\n")

    def finish(self, status: str = "ok"):
        self.manifest["end"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.manifest["status"] = status
        self._write_manifest()
        logging.getLogger("nodallab").removeHandler(self._log_handler)
        self._log_handler.close()


def _out_dir(args, default_name: str) -> Path:
    if args.out:
        return Path(args.out)
    root = os.environ.get(OUT_ENV, "nodallab-runs")
    return Path(root) / default_name


def _safe(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", s)


def _config(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys}


# ---------------------------------------------------------------------------
# commands


def cmd_estimate(args) -> int:
    m = parse_measure(args.measure)
    if args.R < 1 or args.trials < 2 or not 0 < args.h <= 0.1:
        raise ConfigError("need R >= 1, trials >= 2, 0 < h <= 0.1")
    cfg = _config(args, ["measure", "R", "h", "trials", "seed", "workers", "flips"])
    run = Run("estimate", cfg, _out_dir(args, f"estimate-{_safe(m.label)}-R{args.R:g}-seed{args.seed}"))
    if m.is_collinear():
        log.info("warning=collinear-support measure=%s", m.label)
    fh, write = run.trial_logger()
    try:
        est = estimate_cns_planar(m, args.R, args.h, args.trials, args.seed, workers=args.workers,
                                  with_flips=args.flips, on_record=write)
    except EstimationError:
        fh.close()
        run.finish("failed")
        raise
    fh.close()
    summary = est.summary()
    run.write_json("summary.json", summary)
    log.info("boundary_rate=%r boundary_components=excluded", est.boundary_rate)
    run.finish()
    print(f"c_hat = {est.c_hat:.6g} +- {est.stderr:.3g}  (per R^2, compact components only, "
          f"R={args.R:g}, trials={args.trials})")
    return 0


def cmd_torus(args) -> int:
    if args.n < 1 or not in_S(args.n):
        raise ConfigError(f"{args.n} is not a sum of two squares")
    if args.trials < 2:
        raise ConfigError("need trials >= 2")
    N = args.N or default_torus_grid(args.n)
    cfg = _config(args, ["n", "trials", "seed", "workers"])
    cfg["N"] = N
    cfg["r2"] = r2(args.n)
    run = Run("torus", cfg, _out_dir(args, f"torus-n{args.n}-seed{args.seed}"))
    fh, write = run.trial_logger()
    try:
        est = estimate_cns_torus(args.n, N, args.trials, args.seed, workers=args.workers,
                                 wrapping=not args.no_wrapping, on_record=write)
    except (EstimationError, ValueError):
        fh.close()
        run.finish("failed")
        raise
    fh.close()
    summary = est.summary()
    summary["r2"] = r2(args.n)
    wr = summary.get("mean_wrapping_components")
    if wr is not None:
        summary["note"] = "c_hat counts all components, including ones wrapping the torus"
        log.info("wrapping_components_mean=%r total_components_mean=%r", wr, est.mean_count)
    run.write_json("summary.json", summary)
    run.finish()
    print(f"n={args.n} r2={r2(args.n)} N={N}: c_hat = {est.c_hat:.6g} +- {est.stderr:.3g} (per n)")
    if wr is not None:
        print(f"mean wrapping components per trial: {wr:.4g}")
    return 0


def _default_fourier_pairs():
    a = symmetric_octet(math.pi / 8)
    b = mix(symmetric_octet(math.pi / 16), symmetric_octet(3 * math.pi / 16), 0.5)
    return [(uniform_circle(64), uniform_circle(128)), (a, b)]


def _pick_spread(ns: list[int], k: int) -> list[int]:
    ns = sorted(set(ns))
    if len(ns) <= k:
        return ns
    targets = np.geomspace(ns[0], ns[-1], k)
    out = []
    for t in targets:
        best = min((n for n in ns if n not in out), key=lambda n: abs(math.log(n / t)))
        out.append(best)
    return sorted(out)


def cmd_sweep(args) -> int:
    kind = args.kind
    cfg = _config(args, ["kind", "measure", "a", "b", "t", "R", "h", "trials", "seed", "workers",
                         "target", "nmax", "points", "pairs"])
    if kind == "R":
        m = parse_measure(args.measure)
        R_list = _floats(args.R)
        if len(R_list) < 3:
            raise ConfigError("sweep --kind R needs at least three radii")
        run = Run("sweep-R", cfg, _out_dir(args, f"sweep-R-{_safe(m.label)}-seed{args.seed}"))
        res = sweep_R(m, R_list, args.h, args.trials, args.seed, workers=args.workers)
    elif kind in ("continuity", "interval"):
        ts = _floats(args.t)
        R = _floats(args.R)[0]
        if kind == "continuity":
            a, b = parse_measure(args.a), parse_measure(args.b)
            run = Run("sweep-continuity", cfg, _out_dir(args, f"sweep-continuity-seed{args.seed}"))
            res = continuity_path(a, b, ts, R, args.h, args.trials, args.seed, workers=args.workers)
        else:
            run = Run("sweep-interval", cfg, _out_dir(args, f"sweep-interval-seed{args.seed}"))
            res = interval_sweep(ts, R, args.h, args.trials, args.seed, workers=args.workers)
    elif kind == "fourier":
        R = _floats(args.R)[0]
        if args.pairs:
            pairs = []
            for item in args.pairs.split(";"):
                left, sep, right = item.partition("|")
                if not sep:
                    raise ConfigError("pairs are written a|b;c|d")
                pairs.append((parse_measure(left), parse_measure(right)))
        else:
            pairs = _default_fourier_pairs()
        run = Run("sweep-fourier", cfg, _out_dir(args, f"sweep-fourier-seed{args.seed}"))
        report = fourier_dependence_scan(pairs, R, args.h, args.trials, args.seed, workers=args.workers)
        run.write_json("summary.json", {"pairs": report})
        run.finish()
        for row in report:
            flag = "FLAGGED" if row["flagged"] else "ok"
            print(f"{row['a']} vs {row['b']}: |diff| = {row['difference']:.4g} "
                  f"(3 sigma = {3 * row['combined_stderr']:.4g}) {flag}")
        return 0
    elif kind == "growth":
        target = parse_measure(args.target)
        found = search_by_angular_target(target, args.nmax, 4, top_k=args.nmax)
        ns = [n for n, d in found if d <= 0.2 and n > 2]
        n_list = _pick_spread(ns, args.points)
        if len(n_list) < 3:
            raise ConfigError("insufficient points for fit")
        run = Run("sweep-growth", cfg, _out_dir(args, f"sweep-growth-{_safe(target.label)}-seed{args.seed}"))
        res = cilleruelo_growth_fit(n_list, None, args.trials, args.seed, target=target,
                                    workers=args.workers)
    else:  # argparse restricts the choices
        raise ConfigError(f"unknown sweep kind {kind}")

    run.path("sweep.csv").write_text(res.to_csv())
    run.write_json("summary.json", res.summary())
    run.finish()
    sys.stdout.write(res.to_csv())
    if res.fit:
        print("fit: " + json.dumps(res.fit))
    if res.report:
        print("report: " + json.dumps(res.report))
    if kind == "growth":
        print(GROWTH_LABEL)
    return 0


def cmd_lattice(args) -> int:
    if args.n is None and args.search is None:
        raise ConfigError("give --n or --search")
    if args.n is not None:
        if args.n < 1:
            raise ConfigError("n must be >= 1")
        reps = sum_two_squares_reps(args.n)
        print(f"n={args.n} r2={len(reps)}")
        for p in reps.points:
            print(f"{p[0]} {p[1]}")
        if reps.points:
            mu = spectral_measure_mu_n(args.n)
            for k in range(0, args.harmonics + 1, 4):
                c = fourier_coefficient(mu, k)
                print(f"mu_hat({k}) = {c.real:.12g}")
    if args.search is not None:
        if args.nmax < 1 or args.top < 1:
            raise ConfigError("need nmax >= 1 and top >= 1")
        target = parse_measure(args.search)
        res = search_by_angular_target(target, args.nmax, args.harmonics, args.top)
        sys.stdout.write(search_csv(res))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="nodallab", description=__doc__, formatter_class=fmt)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0, help="base seed; trial t uses a seed derived from (seed, t)")
        sp.add_argument("--trials", type=int, default=200, help="number of independent trials")
        sp.add_argument("--workers", type=int, default=1, help="worker processes")
        sp.add_argument("--out", default=None,
                        help=f"output directory (default: ${OUT_ENV} or ./nodallab-runs, plus a run name)")
        sp.add_argument("--config", default=None, help="JSON file of option values; unknown keys are rejected")

    e = sub.add_parser("estimate", help="planar estimate of c_NS for one measure", formatter_class=fmt)
    e.add_argument("--measure", default="uniform64",
                   help="cilleruelo | tilted-cilleruelo | uniform<k> | pair | mu_n:<n> | mix(a,b,t) | file:<path>")
    e.add_argument("--R", type=float, default=30.0, help="radius of the counting disk")
    e.add_argument("--h", type=float, default=DEFAULT_H, help="grid step")
    e.add_argument("--flips", action="store_true", default=False, help="also count flips")
    common(e)
    e.set_defaults(func=cmd_estimate)

    t = sub.add_parser("torus", help="arithmetic random wave estimate for one n", formatter_class=fmt)
    t.add_argument("--n", type=int, required=True, help="eigenvalue index, a sum of two squares")
    t.add_argument("--N", type=int, default=None, help="grid size (default: fast length >= 8 sqrt(n))")
    t.add_argument("--no-wrapping", action="store_true", default=False,
                   help="skip the count of components wrapping the torus")
    common(t)
    t.set_defaults(func=cmd_torus)

    s = sub.add_parser("sweep", help="R, continuity, interval, fourier or growth sweeps", formatter_class=fmt)
    s.add_argument("--kind", choices=["R", "continuity", "interval", "fourier", "growth"], required=True)
    s.add_argument("--measure", default="uniform64", help="measure for --kind R")
    s.add_argument("--a", default="cilleruelo", help="path start for --kind continuity")
    s.add_argument("--b", default="uniform64", help="path end for --kind continuity")
    s.add_argument("--t", default="0,0.05,0.1,0.2,0.4,0.7,1", help="mixing parameters (a,b,...,end allowed)")
    s.add_argument("--R", default="30", help="radius, or comma list of radii for --kind R")
    s.add_argument("--h", type=float, default=DEFAULT_H, help="grid step")
    s.add_argument("--target", default="cilleruelo", help="angular target for --kind growth")
    s.add_argument("--nmax", type=int, default=5000, help="largest n searched for --kind growth")
    s.add_argument("--points", type=int, default=5, help="number of n values for --kind growth")
    s.add_argument("--pairs", default=None, help="measure pairs a|b;c|d for --kind fourier")
    common(s)
    s.set_defaults(func=cmd_sweep, trials=100)

    la = sub.add_parser("lattice", help="lattice points, r2(n), mu_n and searches", formatter_class=fmt)
    la.add_argument("--n", type=int, default=None, help="list the representations of n")
    la.add_argument("--search", default=None, help="target measure for a search over n <= nmax")
    la.add_argument("--nmax", type=int, default=1000, help="search range")
    la.add_argument("--top", type=int, default=10, help="results to keep")
    la.add_argument("--harmonics", type=int, default=8, help="Fourier cutoff for distances and tables")
    la.set_defaults(func=cmd_lattice)
    return p


def _apply_config_file(parser, args, argv):
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        data = json.load(fh)
    known = set(vars(args)) - {"func", "command", "config"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    # command-line flags win over the file
    sub_defaults = {k: v for k, v in data.items()}
    ns = vars(args)
    explicit = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for k, v in sub_defaults.items():
        if k not in explicit:
            ns[k] = v
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args = _apply_config_file(parser, args, argv)
        return args.func(args)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
