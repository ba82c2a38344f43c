import os
import sys

# HOLONOMY_THREADS caps the BLAS/OpenMP pools; it must be set before numpy loads.
_cap = os.environ.get("HOLONOMY_THREADS", "")
if _cap.isdigit() and int(_cap) > 0:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = _cap

from .cli import main  # noqa: E402

sys.exit(main())
