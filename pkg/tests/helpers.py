"""Shared test oracles: finite-difference gradient checks over parameters."""

import numpy as np


def fd_check_params(loss_fn, params, h=1e-5):
    """Max relative error between backward() gradients and central differences.

    ``loss_fn`` is a zero-argument callable returning a scalar autodiff
    tensor built from ``params``; parameters are perturbed in place for
    the numeric side. Relative error is |a - n| / max(1, |a|).
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = loss_fn().item()
            flat[i] = orig - h
            lo = loss_fn().item()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * h)
            worst = max(worst, abs(a_flat[i] - numeric) / max(1.0, abs(a_flat[i])))
    return worst
