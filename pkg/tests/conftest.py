import os

# Pin BLAS/OMP threading before numpy loads anywhere: the bit-exact
# reproducibility contracts are stated for single-threaded execution.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(0)
