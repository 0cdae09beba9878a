"""Backend selection for the closed-loop trial kernel.

The compiled extension is used when it imports, otherwise the pure-Python
loop. :func:`use_backend` switches explicitly.
"""

from __future__ import annotations

from . import _kernel_py

try:
    from . import _kernel as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _kernel_py.run_trial}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled.run_trial

BACKEND = "compiled" if _compiled is not None else "python"
run_trial = BACKENDS[BACKEND]


def use_backend(name: str) -> None:
    global BACKEND, run_trial
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} is not available; have {sorted(BACKENDS)}")
    BACKEND = name
    run_trial = BACKENDS[name]


def get_run_trial(name: str | None = None):
    return BACKENDS[name or BACKEND]
