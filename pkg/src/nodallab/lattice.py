"""Lattice points on the circles |lambda|^2 = n and their angular measures."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from nodallab.measures import MeasureError, SpectralMeasure, weak_star_distance


@dataclass(frozen=True)
class LatticeSolutionSet:
    n: int
    points: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.points)

    @property
    def r2(self) -> int:
        return len(self.points)


@lru_cache(maxsize=65536)
def sum_two_squares_reps(n: int) -> LatticeSolutionSet:
    """All integer pairs (a, b) with a^2 + b^2 = n, sorted by angle."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be a positive integer")
    found = set()
    for a in range(math.isqrt(n) + 1):
        rest = n - a * a
        b = math.isqrt(rest)
        if b * b != rest:
            continue
        for x, y in ((a, b), (b, a)):
            for sx in (1, -1):
                for sy in (1, -1):
                    found.add((sx * x, sy * y))
    pts = sorted(found, key=lambda p: math.atan2(p[1], p[0]) % (2 * math.pi))
    return LatticeSolutionSet(n, tuple(pts))


def r2(n: int) -> int:
    return len(sum_two_squares_reps(n))


def in_S(n: int) -> bool:
    return r2(n) > 0


def spectral_measure_mu_n(n: int) -> SpectralMeasure:
    """Equal-weight atoms at lambda / sqrt(n) over the lattice circle."""
    reps = sum_two_squares_reps(n)
    if not reps.points:
        raise MeasureError(f"empty eigenspace: {n} is not a sum of two squares")
    pts = np.array(reps.points, dtype=float) / math.sqrt(n)
    w = np.full(len(pts), 1.0 / len(pts))
    return SpectralMeasure(pts, w, f"mu_n:{n}")


def search_by_angular_target(target: SpectralMeasure, n_max: int, max_harmonic: int = 4,
                             top_k: int = 10) -> list[tuple[int, float]]:
    """The top_k n <= n_max in S whose mu_n is closest to ``target``.

    Ties in distance are broken by the smaller n.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    scored = []
    for n in range(1, n_max + 1):
        if not in_S(n):
            continue
        scored.append((weak_star_distance(spectral_measure_mu_n(n), target, max_harmonic), n))
    scored.sort()
    return [(n, d) for d, n in scored[:top_k]]


def search_csv(results: list[tuple[int, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "r2", "distance"])
    for n, d in results:
        w.writerow([n, r2(n), repr(float(d))])
    return buf.getvalue()
