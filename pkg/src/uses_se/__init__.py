"""uses-se - Unconstrained speech enhancement and separation."""

import os

__version__ = "0.1.0"

ENV_NUM_THREADS = "USES_NUM_THREADS"

# Thread caps must be exported before numpy initializes its BLAS backend.
_threads = os.environ.get(ENV_NUM_THREADS)
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)
