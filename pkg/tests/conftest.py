import os

# Two-ish desk cores: threaded BLAS on top of concurrent request workers only
# thrashes. Must be set before numpy loads.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
