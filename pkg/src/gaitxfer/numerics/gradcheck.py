"""Central-difference gradient verification.

Runs the forward/backward pass once for the analytic gradients, then
perturbs every parameter element by +/-eps and re-evaluates the loss.
Meant for 64-bit tensors; 32-bit round-off swamps the eps**2 truncation
term and will report spurious errors.
"""

from __future__ import annotations

import numpy as np


class GradCheckError(ValueError):
    """Non-finite value met while checking gradients."""


def grad_check(computation, params, eps=1e-5):
    """Max over all parameter elements of the relative analytic/numeric gap.

    computation: zero-argument callable returning a scalar Tensor built
    from the given parameters (must be deterministic across calls).
    params: name -> Tensor map (each with requires_grad=True).
    Relative error per element: |a - n| / max(1, |a|, |n|).
    """
    for name, p in params.items():
        p.grad = None
    out = computation()
    if not np.isfinite(out.data).all():
        raise GradCheckError("forward pass produced a non-finite loss")
    out.backward()
    analytic = {}
    for name, p in params.items():
        if p.grad is None:
            analytic[name] = np.zeros_like(p.data)
        else:
            if not np.isfinite(p.grad).all():
                raise GradCheckError(f"non-finite analytic gradient for {name!r}")
            analytic[name] = p.grad.copy()
        p.grad = None  # leave the tensors as we found them

    max_err = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = computation().data.item()
            flat[i] = orig - eps
            f_minus = computation().data.item()
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise GradCheckError(f"non-finite loss while perturbing {name!r}[{i}]")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = a_flat[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > max_err:
                max_err = err
    return max_err
