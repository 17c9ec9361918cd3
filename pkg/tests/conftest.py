"""Shared builders for the test suite."""

import numpy as np

from betacp.data import ObservedTensor


def random_tensor(dims, density, seed, lo=0.1, hi=2.0):
    """Strictly positive sparse tensor with distinct (i, j, k) triples.

    Values are uniform on [lo, hi); keeping lo > 0 makes the instances
    safe for every divergence branch, including the log-based ones.
    """
    rng = np.random.default_rng(seed)
    total = dims[0] * dims[1] * dims[2]
    count = max(1, int(round(density * total)))
    lin = np.sort(rng.permutation(total)[:count])
    ii = lin // (dims[1] * dims[2])
    rem = lin % (dims[1] * dims[2])
    return ObservedTensor(dims, ii, rem // dims[2], rem % dims[2],
                          rng.uniform(lo, hi, count))


def model_params(model):
    """The six parameter arrays in update order."""
    return (model.U, model.S, model.T, model.a, model.b, model.c)


def assert_valid_params(model):
    for arr in model_params(model):
        assert np.isfinite(arr).all(), "non-finite model parameter"
        assert (arr >= 0).all(), "negative model parameter"
