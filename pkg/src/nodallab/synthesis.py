"""Sampling centred stationary Gaussian fields with atomic spectral measures.

Every field produced here is a finite trigonometric sum

    f(x) = Re sum_j c_j exp(2 pi i <lambda_j, x>),

so besides the sampled grid we keep (lambda_j, c_j) and can evaluate f
exactly anywhere.  The counting code relies on this to resolve saddle
cells, and the flip counter to refine simultaneous zeros.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.fft

from nodallab.lattice import in_S, sum_two_squares_reps
from nodallab.measures import SpectralMeasure

TWO_PI = 2.0 * np.pi
DEFAULT_H = 0.05
MAX_H = 0.1
_EVAL_CHUNK = 1 << 16


class SynthesisError(ValueError):
    """Invalid measure, seed or resolution for field synthesis."""


def derive_seed(base_seed: int, index: int) -> int:
    """Deterministic 64-bit seed for trial ``index`` of a run."""
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(eq=False)
class FieldSample:
    """One realization of a field on a grid.

    ``values[i, j]`` is the field at ``(x1[i], x2[j])``.  For planar windows
    the nodes are ``k * h`` for ``|k| <= R / h``; on the torus they are
    ``(i / N, j / N)``.
    """

    domain_kind: str
    values: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    seed: Optional[int] = None
    measure_label: str = ""
    R: Optional[float] = None
    h: Optional[float] = None
    N: Optional[int] = None
    grad1: Optional[np.ndarray] = None
    grad2: Optional[np.ndarray] = None
    freqs: Optional[np.ndarray] = None
    coeffs: Optional[np.ndarray] = None
    evaluator: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = field(default=None, repr=False)
    flags: tuple = ()

    @property
    def shape(self):
        return self.values.shape

    @property
    def periodic(self) -> bool:
        return self.domain_kind == "torus"

    def evaluate(self, x1, x2, deriv: tuple[int, int] = (0, 0)) -> np.ndarray:
        """Exact value (or partial derivative of order ``deriv``) at points."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if self.freqs is None:
            if self.evaluator is None or deriv != (0, 0):
                raise SynthesisError("sample carries no exact evaluator")
            return np.asarray(self.evaluator(x1, x2), dtype=float)
        return eval_trig_sum(self.freqs, self.coeffs, x1, x2, deriv)


def eval_trig_sum(freqs: np.ndarray, coeffs: np.ndarray, x1, x2,
                  deriv: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Re sum_j c_j (2 pi i l1)^a (2 pi i l2)^b exp(2 pi i <l_j, x>)."""
    x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
    shape = x1.shape
    x1 = x1.ravel()
    x2 = x2.ravel()
    c = np.asarray(coeffs, dtype=complex).copy()
    a, b = deriv
    if a:
        c = c * (2j * np.pi * freqs[:, 0]) ** a
    if b:
        c = c * (2j * np.pi * freqs[:, 1]) ** b
    cr, ci = np.ascontiguousarray(c.real), np.ascontiguousarray(c.imag)
    out = np.empty(x1.shape, dtype=float)
    for s in range(0, len(x1), _EVAL_CHUNK):
        sl = slice(s, s + _EVAL_CHUNK)
        phase = TWO_PI * (np.outer(x1[sl], freqs[:, 0]) + np.outer(x2[sl], freqs[:, 1]))
        out[sl] = np.cos(phase) @ cr - np.sin(phase) @ ci
    return out.reshape(shape)


def planar_coefficients(m: SpectralMeasure, seed: int) -> np.ndarray:
    """Complex c_j = sqrt(w_j) (xi_j - i eta_j) with xi, eta iid N(0, 1).

    Then Re(c_j e^{i t}) = sqrt(w_j)(xi_j cos t + eta_j sin t).
    """
    rng = np.random.default_rng(int(seed))
    g = rng.standard_normal((2, len(m)))
    return np.sqrt(m.weights) * (g[0] - 1j * g[1])


def _separable_grid(freqs, coeffs, x1, x2):
    # Re sum_j c_j e^{2 pi i l1 x1} e^{2 pi i l2 x2} as two real matrix products
    p = np.exp(2j * np.pi * np.outer(x1, freqs[:, 0])) * coeffs
    q = np.exp(2j * np.pi * np.outer(x2, freqs[:, 1]))
    # contiguous copies keep the products on the BLAS path
    pr, pi = np.ascontiguousarray(p.real), np.ascontiguousarray(p.imag)
    qr, qi = np.ascontiguousarray(q.real.T), np.ascontiguousarray(q.imag.T)
    out = pr @ qr
    out -= pi @ qi
    return out


def planar_grid(R: float, h: float) -> np.ndarray:
    K = int(round(R / h))
    if abs(K * h - R) > 1e-9 * max(1.0, R):
        raise SynthesisError(f"R={R} is not a multiple of h={h}")
    return np.arange(-K, K + 1) * h


def planar_from_coefficients(freqs, coeffs, R: float, h: float, *, with_gradient: bool = False,
                             seed: Optional[int] = None, label: str = "") -> FieldSample:
    """Evaluate a given trigonometric sum on the window [-R, R]^2."""
    freqs = np.asarray(freqs, dtype=float).reshape(-1, 2)
    coeffs = np.asarray(coeffs, dtype=complex)
    x = planar_grid(R, h)
    values = _separable_grid(freqs, coeffs, x, x)
    g1 = g2 = None
    if with_gradient:
        g1 = _separable_grid(freqs, coeffs * (2j * np.pi * freqs[:, 0]), x, x)
        g2 = _separable_grid(freqs, coeffs * (2j * np.pi * freqs[:, 1]), x, x)
    return FieldSample("planar", values, x, x.copy(), seed=seed, measure_label=label,
                       R=float(R), h=float(h), grad1=g1, grad2=g2, freqs=freqs, coeffs=coeffs)


def sample_planar(m: SpectralMeasure, R: float, h: float = DEFAULT_H, seed: int = 0,
                  with_gradient: bool = False) -> FieldSample:
    """Sample the stationary field with spectral measure ``m`` on [-R, R]^2.

    The covariance of the result is exactly sum_j w_j cos(2 pi <lambda_j, x>).
    """
    if not isinstance(m, SpectralMeasure):
        raise SynthesisError("expected a SpectralMeasure")
    if not (0 < h <= MAX_H + 1e-15):
        raise SynthesisError(f"grid step h={h} must lie in (0, {MAX_H}]")
    if R < 1:
        raise SynthesisError("window radius must be >= 1")
    coeffs = planar_coefficients(m, seed)
    s = planar_from_coefficients(m.points, coeffs, R, h, with_gradient=with_gradient,
                                 seed=int(seed), label=m.label)
    if m.is_collinear():
        s.flags = ("collinear-support",)
    return s


def torus_min_grid(n: int) -> int:
    return 8 * math.isqrt(n - 1) + 8 if n > 0 else 8  # 8 * ceil(sqrt(n))


def default_torus_grid(n: int) -> int:
    """Smallest fast FFT length >= 8 sqrt(n)."""
    return scipy.fft.next_fast_len(torus_min_grid(n), real=False)


def torus_coefficients(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Frequencies and coefficients a_lambda over the full lattice circle.

    One complex Gaussian per antipodal pair, a_{-lambda} = conj(a_lambda),
    scaled so that E f(x)^2 = 1.
    """
    pts = np.array(sum_two_squares_reps(n).points, dtype=np.int64)
    r = len(pts)
    half = (pts[:, 0] > 0) | ((pts[:, 0] == 0) & (pts[:, 1] > 0))
    rep = pts[half]
    rng = np.random.default_rng(int(seed))
    g = rng.standard_normal((2, len(rep)))
    a = (g[0] + 1j * g[1]) / math.sqrt(2.0 * r)
    freqs = np.vstack([rep, -rep])
    coeffs = np.concatenate([a, np.conj(a)])
    return freqs, coeffs


def sample_torus(n: int, N: Optional[int] = None, seed: int = 0,
                 with_gradient: bool = False) -> FieldSample:
    """Random toral eigenfunction f_n on the N x N grid of [0, 1)^2."""
    n = int(n)
    if n < 1 or not in_S(n):
        raise SynthesisError(f"{n} is not a sum of two squares")
    if N is None:
        N = default_torus_grid(n)
    N = int(N)
    if N < torus_min_grid(n):
        raise SynthesisError(f"grid size N={N} below 8*ceil(sqrt(n))={torus_min_grid(n)}")
    freqs, coeffs = torus_coefficients(n, seed)
    if np.abs(freqs).max() >= N // 2:
        raise SynthesisError("grid too coarse for the frequencies")

    def on_grid(c):
        F = np.zeros((N, N), dtype=complex)
        F[freqs[:, 0] % N, freqs[:, 1] % N] = c
        z = scipy.fft.ifft2(F, norm="forward")
        scale = max(np.abs(z.real).max(), 1e-300)
        if np.abs(z.imag).max() >= 1e-9 * scale:
            raise SynthesisError("inverse transform is not real")
        return np.ascontiguousarray(z.real)

    values = on_grid(coeffs)
    g1 = g2 = None
    if with_gradient:
        g1 = on_grid(coeffs * (2j * np.pi * freqs[:, 0]))
        g2 = on_grid(coeffs * (2j * np.pi * freqs[:, 1]))
    x = np.arange(N) / N
    return FieldSample("torus", values, x, x.copy(), seed=int(seed), measure_label=f"mu_n:{n}",
                       N=N, grad1=g1, grad2=g2, freqs=freqs.astype(float), coeffs=coeffs)


def covariance_theoretical(m: SpectralMeasure, x: Sequence[float]) -> float:
    """r(x) = sum_j w_j cos(2 pi <lambda_j, x>)."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(m.weights * np.cos(TWO_PI * (m.points @ x))))


@dataclass
class CovarianceProbe:
    lags: list
    theoretical: list
    empirical: list
    stderr: list
    num_samples: int


def covariance_probe(m: SpectralMeasure, lags, num_samples: int, seed: int = 0,
                     base: Sequence[float] = (0.0, 0.0)) -> CovarianceProbe:
    """Monte Carlo estimate of E[f(base) f(base + lag)] over independent seeds."""
    if num_samples < 100:
        raise ValueError("num_samples must be >= 100")
    lags = [tuple(map(float, lag)) for lag in lags]
    base = np.asarray(base, dtype=float)
    pts = np.array([base] + [base + np.array(l) for l in lags])
    prods = np.empty((num_samples, len(lags)))
    for s in range(num_samples):
        c = planar_coefficients(m, derive_seed(seed, s))
        v = eval_trig_sum(m.points, c, pts[:, 0], pts[:, 1])
        prods[s] = v[0] * v[1:]
    return CovarianceProbe(
        lags=lags,
        theoretical=[covariance_theoretical(m, l) for l in lags],
        empirical=prods.mean(axis=0).tolist(),
        stderr=(prods.std(axis=0, ddof=1) / math.sqrt(num_samples)).tolist(),
        num_samples=num_samples,
    )


def write_field(path, sample: FieldSample) -> None:
    """Dump ``values`` as a JSON header line followed by little-endian float64."""
    header = {
        "domain_kind": sample.domain_kind,
        "shape": list(sample.values.shape),
        "R": sample.R,
        "h": sample.h,
        "N": sample.N,
        "seed": sample.seed,
        "measure_label": sample.measure_label,
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(np.ascontiguousarray(sample.values, dtype="<f8").tobytes())


def read_field(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        data = np.frombuffer(fh.read(), dtype="<f8")
    return header, data.reshape(header["shape"])
