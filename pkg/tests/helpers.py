"""Shared test utilities: the finite-difference gradient oracle.

The oracle only ever runs forward passes, so it stays independent of the
backward implementations it checks. Analytic gradients are produced by the
float32 ops; the FD quotient evaluates the same graph with the leaf data
upcast to float64 (oracle-side upcast only), which keeps the oracle noise
far below the comparison tolerance at eps=1e-3.
"""

from contextlib import contextmanager

import numpy as np

EPS = 1e-3
RTOL = 1e-3
ATOL = 1e-6


@contextmanager
def _float64_leaves(tensors):
    saved = [t.data for t in tensors]
    for t in tensors:
        t.data = t.data.astype(np.float64)
    try:
        yield
    finally:
        for t, d in zip(tensors, saved):
            t.data = d


def numeric_grad(f, t, all_leaves=None, eps=EPS):
    """Central finite differences of the scalar function f() w.r.t. t.data.

    all_leaves lists every leaf tensor feeding f (defaults to just t); their
    data is temporarily upcast to float64 while the quotient is evaluated.
    """
    leaves = list(all_leaves) if all_leaves is not None else [t]
    if t not in leaves:
        leaves.append(t)
    with _float64_leaves(leaves):
        flat = t.data.reshape(-1)
        g = np.empty(flat.size, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f())
            flat[i] = orig - eps
            fm = float(f())
            flat[i] = orig
            g[i] = (fp - fm) / (2.0 * eps)
    return g.reshape(t.data.shape)


def assert_grads_match(analytic, numeric, rtol=RTOL, atol=ATOL):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    err = np.abs(analytic - numeric)
    bound = rtol * np.maximum(np.abs(analytic), np.abs(numeric)) + atol
    worst = np.argmax(err - bound)
    assert np.all(err <= bound), (
        f"gradient mismatch: analytic={analytic.reshape(-1)[worst]:.6g} "
        f"numeric={numeric.reshape(-1)[worst]:.6g} at flat index {worst}"
    )


def check_gradients(build_loss, tensors, cases=20, rng=None, fill=None):
    """Run `cases` randomized FD checks of build_loss() against the oracle.

    build_loss() must return a scalar Tensor built from `tensors`. `fill`
    (optional) refills tensor data per case; the default draws from
    [0.2, 1.5], positive and away from relu/abs kinks.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    for _ in range(cases):
        for t in tensors:
            if fill is not None:
                fill(rng, t)
            else:
                t.data[...] = rng.uniform(0.2, 1.5, size=t.data.shape).astype(np.float32)
            t.zero_grad()
        build_loss().backward()
        analytic = [np.array(t.grad, dtype=np.float64) for t in tensors]
        for t, a in zip(tensors, analytic):
            n = numeric_grad(lambda: build_loss().data, t, all_leaves=tensors)
            assert_grads_match(a, n)
