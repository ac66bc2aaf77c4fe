import contextlib
import time

import numpy as np
import pytest

from spadsim import _kernels_py


def _available_backends():
    backends = [_kernels_py]
    try:
        from spadsim import _kernels

        backends.append(_kernels)
    except ImportError:
        pass
    return backends


@pytest.fixture(params=_available_backends(), ids=lambda m: m.backend_name())
def backend(request):
    return request.param


@pytest.fixture
def all_backends():
    return _available_backends()


def grid_coords(n):
    """Row/col arrays giving n pixels distinct counter-based RNG streams."""
    idx = np.arange(n, dtype=np.uint64)
    return idx >> np.uint64(16), idx & np.uint64(0xFFFF)


def assert_histogram_close(counts, pmf, z=4.0, min_expected=10.0):
    """Empirical counts vs a PMF: per-bin z-test where the normal
    approximation holds, sparse bins merged into one tail group."""
    n = counts.size
    pmf = np.clip(np.asarray(pmf, dtype=float), 0.0, 1.0)
    observed = np.bincount(counts, minlength=pmf.size).astype(float)
    if observed.size > pmf.size:  # counts beyond the modeled support
        assert observed[pmf.size :].sum() == 0
        observed = observed[: pmf.size]
    expected = pmf * n
    dense = expected >= min_expected
    se = np.sqrt(expected[dense] * (1 - pmf[dense]))
    assert np.all(np.abs(observed[dense] - expected[dense]) <= z * se)
    sparse_obs = observed[~dense].sum()
    sparse_exp = expected[~dense].sum()
    assert abs(sparse_obs - sparse_exp) <= z * np.sqrt(sparse_exp) + z


@contextlib.contextmanager
def criterion(name: str, budget_s: float):
    """Times a release criterion and prints one pass/fail line."""
    start = time.perf_counter()
    info = {}
    try:
        yield info
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    elapsed = time.perf_counter() - start
    detail = f"  {info['detail']}" if "detail" in info else ""
    print(f"[PASS] {name} ({elapsed:.2f}s < {budget_s:.0f}s){detail}")
    assert elapsed < budget_s, f"{name} exceeded its {budget_s}s runtime budget"
