import math

import numpy as np
import pytest

from lqgrate.loop import simulate
from lqgrate.sensor import loop_directed_info_bits
from lqgrate.validation import (
    capacity_gap_bound,
    empirical_conditional_entropy,
    gap_report,
    gaussian_majorant_mi,
    gaussian_rdf,
    output_entropy,
    scalar_ecdq_gap,
    uniform_gaussian_channel_mi,
)


def test_rdf_hand_values():
    assert gaussian_rdf([[1.0]], 1.0) == 0.0
    assert gaussian_rdf([[1.0]], 0.25) == pytest.approx(1.0)
    assert gaussian_rdf(np.diag([2.0, 1.0]), 1.0) == pytest.approx(1.5)
    assert gaussian_rdf(np.diag([2.0, 1.0]), 3.0) == 0.0
    # water level above the small eigenvalue: only the large mode is coded
    assert gaussian_rdf(np.diag([4.0, 0.1]), 1.1) == pytest.approx(0.5 * math.log2(4.0))
    with pytest.raises(ValueError):
        gaussian_rdf([[1.0]], 0.0)


def test_rdf_is_rotation_invariant_and_monotone():
    R = np.array([[math.cos(0.3), -math.sin(0.3)], [math.sin(0.3), math.cos(0.3)]])
    cov = R @ np.diag([3.0, 0.5]) @ R.T
    assert gaussian_rdf(cov, 0.7) == pytest.approx(gaussian_rdf(np.diag([3.0, 0.5]), 0.7))
    values = [gaussian_rdf(cov, D) for D in np.linspace(0.05, 4.0, 30)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_constants():
    assert capacity_gap_bound(1) == pytest.approx(0.754, abs=1e-3)
    assert capacity_gap_bound(1) == pytest.approx(0.7546, abs=1e-4)
    assert capacity_gap_bound(2) == pytest.approx(1.5093, abs=1e-4)
    assert capacity_gap_bound(1) + 1 == pytest.approx(1.7546, abs=1e-4)
    assert scalar_ecdq_gap() == pytest.approx(1.254, abs=1e-3)
    with pytest.raises(ValueError):
        capacity_gap_bound(0)


def test_output_entropy_limits():
    # pure uniform noise and pure Gaussian limits; the edge smoothing costs O(sigma/delta)
    assert output_entropy(1e-16, 2.0) == pytest.approx(1.0, abs=1e-7)
    s2 = 400.0
    assert output_entropy(s2, 1e-3) == pytest.approx(0.5 * math.log2(2 * math.pi * math.e * s2), abs=1e-6)


@pytest.mark.parametrize("sigma, delta", [(1e-4, 2.0), (0.7, 1.3), (3.0, 0.5)])
def test_output_entropy_against_mpmath(sigma, delta):
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 30
    s, d = mp.mpf(sigma), mp.mpf(delta)

    def f(y):
        return (mp.ncdf((d / 2 - y) / s) - mp.ncdf((-d / 2 - y) / s)) / d

    def g(y):
        v = f(y)
        return -v * mp.log(v, 2) if v > 0 else mp.mpf(0)

    knots = sorted({0, max(0, d / 2 - 12 * s), d / 2, d / 2 + 12 * s, d / 2 + 40 * s})
    h = 2 * mp.quad(g, knots)
    assert output_entropy(sigma**2, delta) == pytest.approx(float(h), abs=1e-6)


def test_channel_mi_brackets():
    delta = 2.0
    assert uniform_gaussian_channel_mi(1e-16, delta) == pytest.approx(0.0, abs=1e-6)
    mi = uniform_gaussian_channel_mi(delta**2 / 12, delta)
    assert gaussian_rdf([[delta**2 / 12]], delta**2 / 12) < mi < capacity_gap_bound(1)
    grid = np.geomspace(0.01, 100, 25)
    values = [uniform_gaussian_channel_mi(s2, delta) for s2 in grid]
    assert all(a < b for a, b in zip(values, values[1:]))
    for s2, v in zip(grid, values):
        assert v < gaussian_majorant_mi(s2, delta)
        assert v - gaussian_rdf([[s2]], delta**2 / 12) < capacity_gap_bound(1)


def test_entropy_identity_monte_carlo():
    sigma2, delta = 2.0, 1.7
    est, se = empirical_conditional_entropy(sigma2, delta, 200_000, seed=4)
    assert abs(est - uniform_gaussian_channel_mi(sigma2, delta)) < max(0.01, 4 * se)


def test_chain_on_the_scalar_loop(scalar_design):
    s = simulate(scalar_design, 100_000, 2)
    report = gap_report(scalar_design.theta_cov, scalar_design.sensor.Delta, s.entropy_bits)
    assert report.cap_bound_bits == capacity_gap_bound(1)
    assert s.entropy_bits < report.rdf_bits + report.cap_bound_bits + 0.02
    assert loop_directed_info_bits(scalar_design.sensor) >= report.rdf_bits - 1e-3
    assert report.D == pytest.approx(float(scalar_design.sensor.V[0, 0]))
    assert len(report.lines()) == 5
