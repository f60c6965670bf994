import os

# Pin BLAS threading before numpy loads anywhere: bit-identical replays are
# part of the contract and reductions must use a fixed order.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")
