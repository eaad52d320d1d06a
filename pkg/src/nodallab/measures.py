"""Finite atomic spectral measures on the closed unit disk.

Atoms are stored in Cartesian coordinates.  A measure is immutable once
built, so the same instance can be handed to any number of trial workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ATOM_TOL = 1e-12
WEIGHT_TOL = 1e-12
CIRCLE_TOL = 1e-9


class MeasureError(ValueError):
    """Raised for invalid measures or for angular operations on
    measures that do not live on the unit circle."""


def _merge_atoms(points: np.ndarray, weights: np.ndarray, tol: float = ATOM_TOL):
    # first occurrence wins the coordinates; weights accumulate
    kept_pts: list[np.ndarray] = []
    kept_w: list[float] = []
    for p, w in zip(points, weights):
        for k, q in enumerate(kept_pts):
            if abs(p[0] - q[0]) <= tol and abs(p[1] - q[1]) <= tol:
                kept_w[k] += float(w)
                break
        else:
            kept_pts.append(np.array(p, dtype=float))
            kept_w.append(float(w))
    return np.array(kept_pts, dtype=float).reshape(-1, 2), np.array(kept_w, dtype=float)


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Probability measure sum_j w_j delta_{p_j} with p_j in the unit disk."""

    points: np.ndarray
    weights: np.ndarray
    label: str = field(default="")

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.shape[0] != w.shape[0] or pts.shape[0] == 0:
            raise MeasureError("points and weights must be non-empty and of equal length")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(w)):
            raise MeasureError("non-finite atom data")
        if np.any(w <= 0):
            raise MeasureError("atom weights must be positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise MeasureError(f"weights sum to {w.sum()!r}, not 1")
        if np.any(np.hypot(pts[:, 0], pts[:, 1]) > 1.0 + ATOM_TOL):
            raise MeasureError("atoms must lie in the closed unit disk")
        if len(pts) > 1:
            d = np.abs(pts[:, None, :] - pts[None, :, :]).max(axis=-1)
            np.fill_diagonal(d, np.inf)
            if d.min() <= ATOM_TOL:
                raise MeasureError("duplicate atoms; merge them first")
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, points, weights, label: str = "") -> "SpectralMeasure":
        """Build a measure, merging coincident atoms."""
        pts, w = _merge_atoms(np.asarray(points, float).reshape(-1, 2),
                              np.asarray(weights, float).reshape(-1))
        return cls(pts, w, label)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(self.points[:, 1], self.points[:, 0])

    def is_angular(self, tol: float = CIRCLE_TOL) -> bool:
        r = np.hypot(self.points[:, 0], self.points[:, 1])
        return bool(np.all(np.abs(r - 1.0) <= tol))

    def is_collinear(self, tol: float = 1e-12) -> bool:
        """True when all atoms lie on one line through the origin, in which
        case the field has a degenerate gradient distribution."""
        p = self.points
        nz = p[np.hypot(p[:, 0], p[:, 1]) > tol]
        if len(nz) == 0:
            return True
        d = nz[0] / np.hypot(*nz[0])
        cross = nz[:, 0] * d[1] - nz[:, 1] * d[0]
        return bool(np.all(np.abs(cross) <= tol))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "atoms": [{"x": float(x), "y": float(y), "w": float(w)}
                      for (x, y), w in zip(self.points, self.weights)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralMeasure":
        atoms = d["atoms"]
        pts = [(a["x"], a["y"]) for a in atoms]
        w = [a["w"] for a in atoms]
        return cls(np.array(pts, float), np.array(w, float), d.get("label", ""))

    @classmethod
    def from_json(cls, text: str) -> "SpectralMeasure":
        return cls.from_dict(json.loads(text))

    def __repr__(self) -> str:
        return f"SpectralMeasure(label={self.label!r}, atoms={len(self)})"


def _on_circle(angles: Sequence[float], label: str) -> SpectralMeasure:
    angles = np.asarray(angles, dtype=float)
    pts = np.column_stack([np.cos(angles), np.sin(angles)])
    # exact axis coordinates, so that lattice-built measures compare exactly
    pts[np.abs(pts) < 1e-15] = 0.0
    w = np.full(len(angles), 1.0 / len(angles))
    return SpectralMeasure(pts, w, label)


def cilleruelo() -> SpectralMeasure:
    """Four equal atoms at angles k*pi/2."""
    pts = np.array([(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)])
    return SpectralMeasure(pts, np.full(4, 0.25), "cilleruelo")


def tilted_cilleruelo() -> SpectralMeasure:
    """Four equal atoms at angles pi/4 + k*pi/2."""
    s = math.sqrt(0.5)
    pts = np.array([(s, s), (-s, s), (-s, -s), (s, -s)])
    return SpectralMeasure(pts, np.full(4, 0.25), "tilted-cilleruelo")


def uniform_circle(num_atoms: int = 64) -> SpectralMeasure:
    """Equally spaced discretization of the uniform measure on the circle."""
    if num_atoms < 8 or num_atoms % 4:
        raise MeasureError("uniform_circle needs num_atoms >= 8 and divisible by 4")
    return _on_circle(2 * np.pi * np.arange(num_atoms) / num_atoms, f"uniform{num_atoms}")


def pair_measure() -> SpectralMeasure:
    """The degenerate symmetric pair {+e1, -e1}."""
    return SpectralMeasure(np.array([(1.0, 0.0), (-1.0, 0.0)]), np.array([0.5, 0.5]), "pair")


def circle_measure(angles: Iterable[float], weights: Iterable[float] | None = None,
                   label: str = "") -> SpectralMeasure:
    angles = np.asarray(list(angles), dtype=float)
    pts = np.column_stack([np.cos(angles), np.sin(angles)])
    pts[np.abs(pts) < 1e-15] = 0.0
    if weights is None:
        weights = np.full(len(angles), 1.0 / len(angles))
    return SpectralMeasure.from_atoms(pts, np.asarray(list(weights), float), label)


def mix(a: SpectralMeasure, b: SpectralMeasure, t: float) -> SpectralMeasure:
    """Convex combination (1 - t) a + t b, with coincident atoms merged."""
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise MeasureError("mixing parameter must lie in [0, 1]")
    label = f"mix({a.label},{b.label},{t!r})"
    if t == 0.0:
        return SpectralMeasure(a.points.copy(), a.weights.copy(), label)
    if t == 1.0:
        return SpectralMeasure(b.points.copy(), b.weights.copy(), label)
    pts = np.vstack([a.points, b.points])
    w = np.concatenate([(1.0 - t) * a.weights, t * b.weights])
    pts, w = _merge_atoms(pts, w)
    # a tiny t can underflow a weight to exactly 0; such atoms carry no mass
    pts, w = pts[w > 0], w[w > 0]
    # merging can leave the sum a few ulps off 1
    w = w / w.sum()
    return SpectralMeasure(pts, w, label)


def fourier_coefficient(m: SpectralMeasure, k: int) -> complex:
    """Return sum_j w_j exp(-i k theta_j) for an angular measure."""
    if not m.is_angular():
        raise MeasureError("not an angular measure")
    return complex(np.sum(m.weights * np.exp(-1j * k * m.angles)))


def _has_image(points, weights, image, tol):
    d = np.abs(image[:, None, :] - points[None, :, :]).max(axis=-1)
    j = d.argmin(axis=1)
    ok = d[np.arange(len(image)), j] <= tol
    ok &= np.abs(weights[j] - weights) <= max(tol, WEIGHT_TOL)
    return bool(np.all(ok))


def is_symmetric(m: SpectralMeasure, tol: float = 1e-12) -> bool:
    """Invariance under rotation by pi/2 and under (x1, x2) -> (x1, -x2)."""
    p, w = m.points, m.weights
    rot = np.column_stack([-p[:, 1], p[:, 0]])
    conj = np.column_stack([p[:, 0], -p[:, 1]])
    return _has_image(p, w, rot, tol) and _has_image(p, w, conj, tol)


def weak_star_distance(a: SpectralMeasure, b: SpectralMeasure, max_harmonic: int) -> float:
    """max_{1 <= |k| <= K} |a^(k) - b^(k)|, a proxy for weak-* closeness."""
    if max_harmonic < 1:
        raise ValueError("max_harmonic must be positive")
    if not (a.is_angular() and b.is_angular()):
        raise MeasureError("not an angular measure")
    ks = np.concatenate([np.arange(1, max_harmonic + 1), -np.arange(1, max_harmonic + 1)])
    fa = np.exp(-1j * np.outer(ks, a.angles)) @ a.weights
    fb = np.exp(-1j * np.outer(ks, b.angles)) @ b.weights
    return float(np.max(np.abs(fa - fb)))


def symmetric_octet(alpha: float) -> SpectralMeasure:
    """Equal atoms at +-alpha + k pi/2; its fourth Fourier coefficient is
    cos(4 alpha).  Degenerates to four atoms at alpha = 0 or pi/4."""
    angles = [s * alpha + k * np.pi / 2 for k in range(4) for s in (1, -1)]
    return circle_measure(angles, label=f"octet({alpha!r})")
