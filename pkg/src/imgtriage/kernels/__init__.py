"""Distance kernels: compiled fast path with a pure-numpy fallback.

The scan-kernel backend is picked once at import: the Cython extension if it
built, otherwise numpy.  ``IMGTRIAGE_KERNELS=numpy|cython`` forces a choice
(forcing ``cython`` raises if the extension is missing).  Both backends share
one contract: float32 inputs, float64 accumulation, ties to the lowest index.

``assign_points`` is always the BLAS-backed implementation: batch assignment
is a matrix-multiply problem, and benchmarks/bench_kernels.py shows dgemm
beating the compiled scalar loop by an order of magnitude at production
shapes.  The compiled backend earns its keep on the per-query scans
(``sqdist_all`` / ``sqdist_gather``), where fused loops without temporaries
win by 4-6x.
"""

from __future__ import annotations

import os

from imgtriage.kernels import _distnp

_FORCED = os.environ.get("IMGTRIAGE_KERNELS", "").strip().lower()
if _FORCED not in ("", "numpy", "cython"):
    raise ValueError(f"IMGTRIAGE_KERNELS must be 'numpy' or 'cython', got {_FORCED!r}")

if _FORCED == "numpy":
    _impl = _distnp
    BACKEND = "numpy"
else:
    try:
        from imgtriage.kernels import _distc as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _FORCED == "cython":
            raise
        _impl = _distnp
        BACKEND = "numpy"

assign_points = _distnp.assign_points
sqdist_all = _impl.sqdist_all
sqdist_gather = _impl.sqdist_gather


def available_backends() -> dict[str, object]:
    """Importable kernel modules keyed by name (for tests and benchmarks)."""
    out: dict[str, object] = {"numpy": _distnp}
    try:
        from imgtriage.kernels import _distc

        out["cython"] = _distc
    except ImportError:
        pass
    return out
