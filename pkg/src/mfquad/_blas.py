"""Kernel selection for the system OpenBLAS used by SuiteSparse.

SuiteSparse links the system OpenBLAS, whose AVX-512 kernels return wrong
R factors from SPQR on some Xeons. The AVX2 kernels are correct. The
variable is read when the library is loaded, which can happen as a side
effect of importing scipy, so this runs first in the package.
"""
from __future__ import annotations

import os
import platform


def pin_openblas_kernels() -> None:
    if "OPENBLAS_CORETYPE" in os.environ or platform.machine() not in ("x86_64", "AMD64"):
        return
    try:
        with open("/proc/cpuinfo") as fh:
            flags = next((ln for ln in fh if ln.startswith("flags")), "")
    except OSError:
        return
    if " avx2" in flags and " avx512f" in flags:
        os.environ["OPENBLAS_CORETYPE"] = "Haswell"
