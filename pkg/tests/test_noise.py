import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from burstmap.geometry import ConfigurationError
from burstmap.noise import (
    Distribution,
    NoiseSpec,
    RayEvent,
    RayProcess,
    apply_ray,
    apply_rays,
    direct_ray_t1,
    error_prob_3us,
    occupancy_counts,
    occupancy_distribution,
    ray_distances,
    sample_arrivals,
    sample_baseline_params,
    uniform_params,
)

T1 = 200e-6


def line_params(n=41):
    # Qubits along a row of the index grid; index step 2 is sqrt(2) spacings.
    return uniform_params([(0, 2 * i) for i in range(n)])


def test_direct_profile_endpoints_exact():
    assert direct_ray_t1(0.0, 3.0, 0.01, T1) == 0.01 * T1
    assert direct_ray_t1(3.0, 3.0, 0.01, T1) == T1
    assert direct_ray_t1(7.5, 3.0, 0.01, T1) == T1


def test_direct_profile_midpoint_oracle():
    # Hand evaluation: endpoint error probabilities, averaged, then inverted.
    p0 = 1 - math.exp(-3e-6 / (0.01 * 200e-6))
    p1 = 1 - math.exp(-3e-6 / 200e-6)
    expected = -3e-6 / math.log(1 - (p0 + p1) / 2)
    assert direct_ray_t1(1.5, 3.0, 0.01, T1) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("f_t1", [0.1, 0.01, 0.001])
def test_direct_profile_linear_in_error(f_t1):
    r = 4.0
    d = np.linspace(0, r, 11)
    p = error_prob_3us(direct_ray_t1(d, r, f_t1, T1))
    line = p[0] + (p[-1] - p[0]) * d / r
    assert np.max(np.abs(p - line)) < 1e-12


@given(st.floats(0.05, 5), st.floats(1e-3, 1), st.floats(0, 6), st.floats(0, 6))
def test_direct_profile_monotone(r, f, a, b):
    lo, hi = sorted((a, b))
    assert direct_ray_t1(lo, r, f, T1) <= direct_ray_t1(hi, r, f, T1) * (1 + 1e-12)


def test_ray_membership_is_strict():
    params = line_params()
    edge = float(ray_distances(params, (0, 0))[1])  # next qubit sits exactly at r_CRE
    ray = RayEvent("direct", (0, 0), r_cre=edge)
    out = apply_ray(params, ray, 0.0)
    assert out.t1[0] == 0.01 * T1
    assert out.t1[1] == T1


def test_ray_outside_window_is_noop():
    params = line_params()
    ray = RayEvent("direct", (0, 0), 3.0, t_start=1.0, t_offline=0.05)
    assert apply_ray(params, ray, 0.5) is params
    assert apply_ray(params, ray, 1.05) is params
    assert apply_ray(params, ray, 1.0).t1[0] < T1


def test_scrambling_uniform_ks():
    params = uniform_params([(r, c) for r in range(0, 200, 2) for c in range(0, 200, 2)])
    ray = RayEvent("scrambling", (100, 100), r_cre=200.0, scramble_seed=3)
    ratio = apply_ray(params, ray, 0.0).t1 / T1
    assert len(ratio) == 10_000
    assert stats.kstest(ratio, stats.uniform(loc=0.01, scale=0.99).cdf).pvalue > 0.01


def test_scrambling_deterministic_in_seed():
    params = line_params()
    a = apply_ray(params, RayEvent("scrambling", (0, 20), 10.0, scramble_seed=5), 0.0).t1
    b = apply_ray(params, RayEvent("scrambling", (0, 20), 10.0, scramble_seed=5), 0.0).t1
    c = apply_ray(params, RayEvent("scrambling", (0, 20), 10.0, scramble_seed=6), 0.0).t1
    assert np.array_equal(a, b) and not np.array_equal(a, c)


rays = st.builds(
    RayEvent,
    model=st.sampled_from(["direct", "scrambling"]),
    center=st.tuples(st.integers(0, 0), st.integers(0, 80)),
    r_cre=st.floats(0.5, 8),
    f_t1=st.floats(1e-3, 1),
    scramble_seed=st.integers(0, 100),
)


@given(rays, rays)
def test_ray_composition_commutes_and_is_idempotent(a, b):
    params = line_params()
    ab = apply_rays(params, [a, b], 0.0).t1
    ba = apply_rays(params, [b, a], 0.0).t1
    aa = apply_rays(params, [a, a], 0.0).t1
    assert np.array_equal(ab, ba)
    assert np.array_equal(aa, apply_ray(params, a, 0.0).t1)
    assert np.all(ab <= params.t1)


def test_lognormal_mean():
    rng = np.random.default_rng(11)
    spec = NoiseSpec()
    qubits = [(0, i) for i in range(100_000)]
    params = sample_baseline_params(rng, spec, qubits)
    m, s = spec.p_mr.mean, spec.p_mr.std
    assert abs(params.p_mr.mean() - m) < 3 * s / math.sqrt(len(qubits))
    assert np.all(params.t2 <= 2 * params.t1)
    assert np.all(params.t1 > 0)


def test_poisson_count():
    proc = RayProcess(gamma=1000.0, n_q=1, t_offline=1e-3)
    n = len(sample_arrivals(proc, 1.0, np.random.default_rng(2)))
    assert abs(n - 1000) < 3 * math.sqrt(1000)


def test_arrival_sites_and_order():
    proc = RayProcess(gamma=50.0, n_q=2, t_offline=1e-3)
    sites = [(0, 0), (2, 4)]
    arr = sample_arrivals(proc, 1.0, np.random.default_rng(0), sites)
    assert all(a.center in sites for a in arr)
    assert [a.time for a in arr] == sorted(a.time for a in arr)


@pytest.mark.parametrize("lam", [0.0, 0.01, 1.0, 7.5])
def test_occupancy_sums_to_one(lam):
    pmf, tail = occupancy_distribution(RayProcess.from_gamma_toffline(lam, 615, 0.05), 12)
    assert abs(pmf.sum() + tail - 1) < 1e-12


def test_occupancy_counts():
    from burstmap.noise import Arrival
    arr = [Arrival(0.0, None), Arrival(0.5, None), Arrival(0.55, None)]
    assert occupancy_counts(arr, 0.1, [0.05, 0.3, 0.56, 0.7]).tolist() == [1, 0, 2, 0]


def test_invalid_inputs():
    with pytest.raises(ConfigurationError):
        RayEvent("direct", (0, 0), 0.0)
    with pytest.raises(ConfigurationError):
        RayEvent("direct", (0, 0), 1.0, f_t1=1.5)
    with pytest.raises(ConfigurationError):
        Distribution(-1.0, 0.1)
    with pytest.raises(ValueError):
        RayEvent("sideways", (0, 0), 1.0)
