import numpy as np
import pytest

from lqgrate import kernel
from lqgrate.loop import LoopDesign, run_reference, run_trial
from lqgrate.lqr import PlantModel, min_cost, solve_dare

ARRAYS = ("cost", "bits", "ideal", "escape_steps", "escape_cells", "sum_x", "sum_xx", "sum_u", "sum_uu", "u")

needs_compiled = pytest.mark.skipif("compiled" not in kernel.BACKENDS, reason="extension not built")


def three_state_design():
    A = np.array([[1.2, 0.3, 0.0], [0.0, 0.9, 0.4], [0.1, 0.0, 1.05]])
    model = PlantModel(A, np.eye(3), np.diag([1.0, 0.5, 2.0]), np.eye(3), np.eye(3), np.eye(3))
    return LoopDesign.synthesize(model, 1.3 * min_cost(model, solve_dare(model)), seed=3)


def test_backend_selection():
    assert kernel.BACKEND in kernel.BACKENDS
    with pytest.raises(ValueError):
        kernel.use_backend("fortran")
    previous = kernel.BACKEND
    kernel.use_backend("python")
    assert kernel.run_trial is kernel.BACKENDS["python"]
    kernel.use_backend(previous)


@needs_compiled
@pytest.mark.parametrize("which", ["two_state", "scalar", "three_state", "coarse"])
def test_backends_bit_identical(which, design2, scalar_design):
    design = {
        "two_state": lambda: design2,
        "scalar": lambda: scalar_design,
        "three_state": three_state_design,
        "coarse": lambda: design2.with_sensor(design2.sensor.scaled(10.0)),
    }[which]()
    a = run_trial(design, 3000, trial=1, burn=200, record_u=True, backend="compiled")
    b = run_trial(design, 3000, trial=1, burn=200, record_u=True, backend="python")
    for key in ARRAYS:
        np.testing.assert_array_equal(a[key], b[key], err_msg=key)
    if which == "coarse":
        assert len(a["escape_steps"]) > 0


def test_three_state_design_has_two_channels():
    assert three_state_design().sensor.r >= 2


@pytest.mark.parametrize("coarse", [False, True])
def test_kernel_lengths_match_real_codebooks(design2, coarse):
    design = design2.with_sensor(design2.sensor.scaled(10.0)) if coarse else design2
    us, _, _, lengths = run_reference(design, 1500)
    out = run_trial(design, 1500, burn=0, record_u=True)
    np.testing.assert_array_equal(out["bits"], lengths)
    np.testing.assert_array_equal(out["u"], us)


def test_falls_back_without_extension(monkeypatch):
    import importlib
    import sys

    import lqgrate

    monkeypatch.setitem(sys.modules, "lqgrate._kernel", None)
    monkeypatch.delattr(lqgrate, "_kernel", raising=False)
    fresh = importlib.reload(kernel)
    try:
        assert fresh.BACKEND == "python"
        assert set(fresh.BACKENDS) == {"python"}
    finally:
        monkeypatch.undo()
        importlib.reload(kernel)
    assert kernel.BACKEND == ("compiled" if "compiled" in kernel.BACKENDS else "python")
