"""Shared test helpers: finite-difference checks and naive oracles."""

import numpy as np
import pytest


def central_difference(fn, x, step=1e-4):
    """Central finite differences of a scalar function over an array."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + step
        hi = fn()
        xf[i] = orig - step
        lo = fn()
        xf[i] = orig
        flat[i] = (hi - lo) / (2.0 * step)
    return grad


def assert_grad_close(analytic, numeric, rel_tol=1e-3, abs_floor=1e-6):
    """Relative agreement with an absolute floor for near-zero entries."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    err = np.abs(analytic - numeric)
    bad = err > rel_tol * denom + abs_floor
    assert not bad.any(), (
        f"gradient mismatch at {np.argwhere(bad)[:5]}: "
        f"analytic {analytic[bad][:5]} vs numeric {numeric[bad][:5]}"
    )


def naive_dilated_conv(x, w, b, dilation):
    """Triple-loop reference convolution with symmetric zero padding."""
    cout, cin, kw = w.shape
    t_len = x.shape[1]
    pad = dilation * (kw - 1) // 2
    out = np.zeros((cout, t_len))
    for o in range(cout):
        for t in range(t_len):
            acc = b[o]
            for i in range(cin):
                for k in range(kw):
                    src = t + k * dilation - pad
                    if 0 <= src < t_len:
                        acc += w[o, i, k] * x[i, src]
            out[o, t] = acc
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
