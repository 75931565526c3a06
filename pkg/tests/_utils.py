"""Shared helpers: the finite-difference gradient oracle and error metrics."""

import numpy as np


def fd_gradient(f, x, h):
    """Central finite differences of scalar f() w.r.t. the array x (in place).

    f must recompute the forward pass from x's current contents; x is
    restored afterwards.  This is the independent oracle the autodiff
    gradients are checked against.
    """
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_error(a, b):
    """Relative error between two gradient arrays, scale-normalized."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()), 1e-12)
    return np.linalg.norm((a - b).ravel()) / denom


def fd_step(dtype):
    return 1e-3 if np.dtype(dtype) == np.float32 else 1e-6


def fd_tol(dtype):
    return 1e-3 if np.dtype(dtype) == np.float32 else 1e-6


def check_grads(build, arrays, dtype, step=None, tol=None):
    """Autodiff gradients of build(tensors) vs the finite-difference oracle.

    The gradients under test are computed at `dtype`; the oracle evaluates
    the same forward map at float64 so its only error is the fd truncation
    of the pinned step.
    """
    from wavegen.tensor import Tensor

    ts = {k: Tensor(v.astype(dtype), requires_grad=True) for k, v in arrays.items()}
    build(ts).backward()
    os = {k: Tensor(v.astype(np.float64)) for k, v in arrays.items()}
    h = step if step is not None else fd_step(dtype)
    bound = tol if tol is not None else fd_tol(dtype)
    for k in arrays:
        want = fd_gradient(lambda: build(os).item(), os[k].data, h)
        err = rel_error(ts[k].grad.data, want)
        assert err < bound, f"gradient of {k!r} off: rel error {err:.3g} (dtype {np.dtype(dtype).name})"
