import math

import numpy as np
import pytest

from lqgrate.errors import ParseError, ZeroRank
from lqgrate.lqr import PlantModel, min_cost, solve_dare
from lqgrate.sdp import solve_di
from lqgrate.sensor import (
    _steady_kalman,
    factor_snr,
    format_number,
    kalman_residual,
    loop_directed_info_bits,
    open_loop_sensor,
    parse_sections,
    read_design,
    realize_or_open_loop,
    realize_sensor,
    steady_kalman,
    write_design,
)


def test_factor_hand_cases():
    C, V = factor_snr(np.diag([3.0, 0.0]))
    np.testing.assert_allclose(C, [[1.0, 0.0]])
    np.testing.assert_allclose(V, [[1 / 3]])
    assert math.sqrt(12 * V[0, 0]) == pytest.approx(2.0)
    C, V = factor_snr(np.eye(2))
    np.testing.assert_allclose(np.abs(C), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(V, np.eye(2))
    with pytest.raises(ZeroRank):
        factor_snr(np.zeros((2, 2)))


def test_realization_invariants(design2, model2):
    sol, s = design2.sol, design2.sensor
    Vinv = np.linalg.inv(s.V)
    np.testing.assert_allclose(s.C.T @ Vinv @ s.C, sol.snr, atol=1e-7)
    np.testing.assert_allclose(s.C @ s.C.T, np.eye(s.r), atol=1e-9)
    np.testing.assert_allclose(s.Delta**2 / 12, np.diag(s.V), rtol=1e-12)
    assert kalman_residual(model2.A, model2.W, s.C, s.V, s.P_pred) < 1e-9
    assert np.linalg.norm(s.P_filt - sol.P_opt) < 1e-5
    assert loop_directed_info_bits(s) == pytest.approx(sol.di_bits, abs=1e-8)


def test_zero_rank_budget():
    model = PlantModel.scalar(0.5)
    cert = solve_dare(model)
    with pytest.raises(ZeroRank):
        realize_sensor(solve_di(model, cert, 1e3 * min_cost(model, cert)))


def test_open_loop_fallback():
    model = PlantModel.scalar(0.5)
    cert = solve_dare(model)
    sol = solve_di(model, cert, 1e3 * min_cost(model, cert))
    s = realize_or_open_loop(sol)
    assert s.r == 0 and s.L.shape == (1, 0) and s.innovation_cov.shape == (0, 0)
    # prediction only: P = a^2 P + 1
    assert s.P_pred[0, 0] == pytest.approx(4 / 3, rel=1e-10)
    assert open_loop_sensor(sol).P_filt[0, 0] == pytest.approx(4 / 3, rel=1e-10)


@pytest.mark.parametrize("a, P_expected, L_expected", [(0.0, 1.0, 0.5), (1.0, (1 + math.sqrt(5)) / 2, None)])
def test_scalar_kalman(a, P_expected, L_expected):
    L, P_pred, P_filt = steady_kalman(PlantModel.scalar(a), [[1.0]], [[1.0]])
    assert P_pred[0, 0] == pytest.approx(P_expected, abs=1e-10)
    if L_expected is not None:
        assert L[0, 0] == pytest.approx(L_expected)
        assert P_filt[0, 0] == pytest.approx(0.5)


def test_no_measurement_fallback():
    A = np.array([[0.5]])
    L, P_pred, _ = _steady_kalman(A, np.eye(1), np.zeros((0, 1)), np.zeros((0, 0)))
    assert L.shape == (1, 0)
    assert P_pred[0, 0] == pytest.approx(1 / (1 - 0.25))


def test_design_file_round_trip(design2, tmp_path):
    path = tmp_path / "design.txt"
    text = write_design(design2.sensor, design2.cert.K, path, {"gamma": 1.5})
    assert text.startswith("# gamma = 1.5")
    sensor, K = read_design(path)
    np.testing.assert_allclose(sensor.C, design2.sensor.C, rtol=1e-11)
    np.testing.assert_allclose(sensor.Delta, design2.sensor.Delta, rtol=1e-11)
    np.testing.assert_allclose(K, design2.cert.K, rtol=1e-11)


def test_format_number():
    assert format_number(-0.0) == "0"
    assert format_number(1.61803398874989) == "1.61803398875"
    assert format_number(1e-20) == "1e-20"


def test_parse_errors_name_the_line():
    with pytest.raises(ParseError, match="missing section R"):
        parse_sections("A\n1\n", ("A", "R"))
    with pytest.raises(ParseError, match=r"f:3: section A: row has 1 entries, expected 2"):
        parse_sections("A\n1 2\n3\n", ("A",), "f")
    with pytest.raises(ParseError, match=r"f:2: section A: cannot parse"):
        parse_sections("A\n1 x\n", ("A",), "f")
    with pytest.raises(ParseError, match="data before any section"):
        parse_sections("1 2\nA\n1\n", ("A",), "f")
    with pytest.raises(ParseError, match="duplicate"):
        parse_sections("A\n1\nA\n2\n", ("A",), "f")
    starts = {}
    blocks = parse_sections("# c\nA  # comment\n1 2\n\nB\n3\n", ("A", "B"), "f", starts)
    assert starts == {"A": 2, "B": 5}
    np.testing.assert_array_equal(blocks["A"], [[1, 2]])
