import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moxi import _kernels_py, kernels
from moxi.shapley import deletion_weights, shapley_weights

compiled = pytest.importorskip("moxi._kernels_cy")


def _table(m, seed):
    return np.random.Generator(np.random.PCG64(seed)).normal(size=1 << m)


def test_backend_reports_compiled_when_built():
    assert kernels.BACKEND in ("cython", "python")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_all_shapley_backends_agree(m, seed):
    t = _table(m, seed)
    w = shapley_weights(m - 1)
    np.testing.assert_allclose(compiled.all_shapley(t, m, w), _kernels_py.all_shapley(t, m, w), rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.integers(0, 2**32 - 1), st.data())
def test_block_and_deletion_sums_agree(m, seed, data):
    t = _table(m, seed)
    i = data.draw(st.integers(0, m - 1))
    j = data.draw(st.integers(0, m - 1).filter(lambda x: x != i))
    block = (1 << i) | (1 << j)
    others = ((1 << m) - 1) & ~block
    w = shapley_weights(m - 2)
    a = compiled.block_marginal_sum(t, others, block, w)
    b = _kernels_py.block_marginal_sum(t, others, block, w)
    assert a == pytest.approx(b, abs=1e-12)
    dw = deletion_weights(m)
    a = compiled.deletion_marginal_sum(t, (1 << m) - 1, i, dw)
    b = _kernels_py.deletion_marginal_sum(t, (1 << m) - 1, i, dw)
    assert a == pytest.approx(b, abs=1e-12)


def test_popcounts_agree():
    np.testing.assert_array_equal(np.asarray(compiled.popcounts(10)), np.asarray(_kernels_py.popcounts(10)))
    assert list(_kernels_py.popcounts(3)) == [0, 1, 1, 2, 1, 2, 2, 3]


def test_env_var_forces_fallback():
    import os
    import subprocess
    import sys

    env = dict(os.environ, MOXI_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from moxi import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
