import numpy as np
import pytest

from nodallab.lattice import spectral_measure_mu_n
from nodallab.measures import cilleruelo, mix, pair_measure, uniform_circle
from nodallab.synthesis import (
    SynthesisError,
    covariance_probe,
    covariance_theoretical,
    default_torus_grid,
    derive_seed,
    read_field,
    sample_planar,
    sample_torus,
    write_field,
)
from nodallab.topology import count_components, count_wrapping


def test_pair_field_is_constant_along_x2():
    s = sample_planar(pair_measure(), 2, 0.05, seed=11)
    assert np.allclose(s.values, s.values[:, :1], atol=1e-12)
    assert "collinear-support" in s.flags


def test_unit_variance_at_every_node():
    m = uniform_circle(64)
    vals = np.array([sample_planar(m, 1, 0.1, seed=derive_seed(5, k)).values for k in range(2000)])
    var = (vals ** 2).mean(axis=0)
    se = (vals ** 2).std(axis=0, ddof=1) / np.sqrt(len(vals))
    assert np.all(np.abs(var - 1) <= 5 * se)


def test_cilleruelo_field_is_additive():
    s = sample_planar(cilleruelo(), 5, 0.05, seed=3)
    rng = np.random.default_rng(0)
    n = s.values.shape[0]
    for _ in range(200):
        i, i2, j, j2 = rng.integers(0, n, 4)
        v = s.values
        assert abs(v[i, j] + v[i2, j2] - v[i, j2] - v[i2, j]) < 1e-9


def test_bad_configuration_rejected():
    with pytest.raises(SynthesisError):
        sample_planar(uniform_circle(64), 5, 0.2)
    with pytest.raises(SynthesisError):
        sample_planar(uniform_circle(64), 0.5, 0.05)
    with pytest.raises(SynthesisError):
        sample_planar("uniform64", 5, 0.05)
    with pytest.raises(SynthesisError):
        sample_torus(3)
    with pytest.raises(SynthesisError):
        sample_torus(25, N=32)


def test_planar_determinism():
    m = mix(cilleruelo(), uniform_circle(64), 0.2)
    a = sample_planar(m, 4, 0.05, seed=99, with_gradient=True)
    b = sample_planar(m, 4, 0.05, seed=99, with_gradient=True)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.grad1, b.grad1) and np.array_equal(a.grad2, b.grad2)


@pytest.mark.parametrize("seed", [1, 2, 3])
@pytest.mark.parametrize("m", [cilleruelo(), uniform_circle(64), spectral_measure_mu_n(65)],
                         ids=lambda m: m.label)
def test_gradients_match_central_differences(m, seed):
    h = 0.05
    s = sample_planar(m, 3, h, seed=seed, with_gradient=True)
    v = s.values
    d1 = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2 * h)
    d2 = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * h)
    bound = 10 * h * h * (2 * np.pi) ** 2 * np.max(np.sum(m.points ** 2, axis=1))
    assert np.max(np.abs(d1 - s.grad1[1:-1, 1:-1])) <= bound
    assert np.max(np.abs(d2 - s.grad2[1:-1, 1:-1])) <= bound
    # and the exact evaluator agrees with the grids
    assert np.allclose(s.evaluate(s.x1[7], s.x2[:5], (1, 0)), s.grad1[7, :5], atol=1e-10)


def test_torus_mean_is_zero_and_grid_is_real():
    for n in (1, 5, 25, 65):
        s = sample_torus(n, seed=4)
        assert abs(s.values.mean()) < 1e-12
        assert np.all(np.isfinite(s.values))


def test_torus_doubling_grid_keeps_values():
    a = sample_torus(25, 40, seed=7)
    b = sample_torus(25, 80, seed=7)
    assert np.max(np.abs(a.values - b.values[::2, ::2])) < 1e-9


def test_torus_grid_matches_exact_sum():
    s = sample_torus(65, seed=8)
    i = np.arange(0, s.N, 7)
    assert np.allclose(s.evaluate(s.x1[i], s.x2[i]), s.values[i, i], atol=1e-10)


def test_torus_unit_variance():
    vals = np.array([sample_torus(25, seed=derive_seed(1, k)).values[::5, ::5] for k in range(2000)])
    var = (vals ** 2).mean(axis=0)
    se = (vals ** 2).std(axis=0, ddof=1) / np.sqrt(len(vals))
    assert np.all(np.abs(var - 1) <= 5 * se)


def test_default_torus_grid():
    assert default_torus_grid(25) >= 40
    assert default_torus_grid(26) >= 48


def test_n1_components_all_wrap():
    for seed in range(10):
        s = sample_torus(1, seed=seed)
        c = count_components(s)
        assert c.compact_zero_components > 0
        assert count_wrapping(s) == c.compact_zero_components


def test_covariance_theoretical_examples(u64):
    for m in (cilleruelo(), u64, pair_measure()):
        assert covariance_theoretical(m, (0, 0)) == pytest.approx(1, abs=1e-14)
    assert covariance_theoretical(cilleruelo(), (1, 0)) == pytest.approx(1, abs=1e-14)
    assert covariance_theoretical(cilleruelo(), (0.5, 0)) == pytest.approx(0, abs=1e-14)


def test_covariance_probe_examples():
    n = 1000
    p = covariance_probe(cilleruelo(), [(0, 0), (0.5, 0)], n, seed=3)
    assert abs(p.empirical[0] - 1) <= 5 * np.sqrt(2) / np.sqrt(n)
    assert abs(p.empirical[1] - p.theoretical[1]) <= 5 * p.stderr[1]
    q = covariance_probe(pair_measure(), [(0, 0), (0, 0.37), (0, 3.1)], n, seed=4)
    assert q.empirical[1] == pytest.approx(q.empirical[0], rel=1e-12)
    assert q.empirical[2] == pytest.approx(q.empirical[0], rel=1e-12)
    with pytest.raises(ValueError):
        covariance_probe(cilleruelo(), [(0, 0)], 50)


def test_stationarity_of_probe(u64):
    lags = [(0.3, 0.1), (0.7, -0.4)]
    a = covariance_probe(u64, lags, 1500, seed=10, base=(0, 0))
    b = covariance_probe(u64, lags, 1500, seed=11, base=(13.2, -7.7))
    for k in range(len(lags)):
        comb = np.hypot(a.stderr[k], b.stderr[k])
        assert abs(a.empirical[k] - b.empirical[k]) <= 5 * comb


def test_binary_dump_round_trip(tmp_path):
    s = sample_planar(uniform_circle(64), 2, 0.1, seed=5)
    path = tmp_path / "f.bin"
    write_field(path, s)
    header, data = read_field(path)
    assert header["seed"] == 5 and header["domain_kind"] == "planar" and header["h"] == 0.1
    assert np.array_equal(data, s.values)
    raw = path.read_bytes()
    body = raw[raw.index(b"\n") + 1:]
    assert len(body) == 8 * s.values.size
    assert np.frombuffer(body[:8], "<f8")[0] == s.values[0, 0]
