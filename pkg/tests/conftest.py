"""Pin BLAS/OpenMP to one thread before numpy loads anywhere.

Keeps timing-sensitive tests honest on one core and removes the only source
of run-to-run nondeterminism in the numeric stack.
"""

import os

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(var, "1")
