"""Ultrasound beamforming laboratory: simulation, DAS and aperture-emulating networks."""

import os as _os

# BLAS reads its thread count when numpy is first imported
_threads = _os.environ.get("USBF_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMBA_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
