"""Apply the RFADEX_THREADS cap before numpy (and its BLAS) is loaded.

Importing this module only has an effect in processes that have not yet
imported numpy; the CLI imports it first for exactly that reason.
"""

import os

_BLAS_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def apply_thread_cap() -> None:
    cap = os.environ.get("RFADEX_THREADS")
    if not cap:
        return
    for var in _BLAS_VARS:
        os.environ.setdefault(var, cap)


apply_thread_cap()
