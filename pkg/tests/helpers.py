"""Shared test utilities: central finite-difference gradient checking."""

import numpy as np
import torch


def finite_diff_check(loss_fn, tensors, rng, n_checks=20, step=1e-5, rtol=1e-4, atol=1e-6):
    """Compare autograd gradients of loss_fn() against central differences.

    ``loss_fn`` recomputes the scalar loss from scratch on every call;
    ``tensors`` are the leaf tensors (parameters or inputs, requires_grad set)
    to perturb. Checks ``n_checks`` uniformly sampled scalar slots: relative
    error <= rtol where the gradient is meaningful, absolute agreement <= atol
    where both sides are ~0.
    """
    threads = torch.get_num_threads()
    torch.set_num_threads(1)  # fixed reduction order for clean central differences
    try:
        return _finite_diff_check(loss_fn, tensors, rng, n_checks, step, rtol, atol)
    finally:
        torch.set_num_threads(threads)


def _finite_diff_check(loss_fn, tensors, rng, n_checks, step, rtol, atol):
    loss = loss_fn()
    grads = torch.autograd.grad(loss, tensors)
    sizes = [t.numel() for t in tensors]
    total = sum(sizes)
    picks = rng.choice(total, size=min(n_checks, total), replace=False)
    bounds = np.cumsum([0] + sizes)
    checked = 0
    for flat_idx in picks:
        which = int(np.searchsorted(bounds, flat_idx, side="right") - 1)
        offset = int(flat_idx - bounds[which])
        tensor, grad = tensors[which], grads[which]
        with torch.no_grad():
            tensor.view(-1)[offset] += step
            loss_plus = float(loss_fn().item())
            tensor.view(-1)[offset] -= 2 * step
            loss_minus = float(loss_fn().item())
            tensor.view(-1)[offset] += step
        numeric = (loss_plus - loss_minus) / (2.0 * step)
        analytic = float(grad.view(-1)[offset].item())
        scale = max(abs(analytic), abs(numeric))
        if scale < atol:
            assert abs(analytic - numeric) <= atol, (
                f"near-zero gradient mismatch at slot {flat_idx}: "
                f"analytic {analytic:.3e} vs numeric {numeric:.3e}"
            )
        else:
            rel = abs(analytic - numeric) / scale
            assert rel <= rtol, (
                f"gradient mismatch at slot {flat_idx}: analytic {analytic:.6e} "
                f"numeric {numeric:.6e} rel {rel:.3e}"
            )
        checked += 1
    return checked
